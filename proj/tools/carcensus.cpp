// Command-line pipeline: synthetic data generation, ingestion, calibration,
// featurization, training, prediction, evaluation, the sedan/pickup
// heuristic, and GPS grid planning. Subcommands never mutate their inputs;
// outputs go to explicitly named paths and are written atomically.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "carcensus/calibration.hpp"
#include "carcensus/catalog.hpp"
#include "carcensus/detection.hpp"
#include "carcensus/features.hpp"
#include "carcensus/geo.hpp"
#include "carcensus/model_io.hpp"
#include "carcensus/pipeline.hpp"
#include "carcensus/regions.hpp"
#include "carcensus/synth.hpp"
#include "carcensus/util.hpp"

namespace {

constexpr const char* kVersion = "carcensus 1.0.0";

struct CommonDataArgs {
  std::string catalog_path;
  std::string regions_path;
  std::string acs_path;
  std::string votes_path;
};

void add_data_options(CLI::App* cmd, CommonDataArgs& args, bool need_catalog = true) {
  if (need_catalog) {
    cmd->add_option("--catalog", args.catalog_path, "catalog.csv path")->required();
  }
  cmd->add_option("--regions", args.regions_path, "regions.csv path")->required();
  cmd->add_option("--acs", args.acs_path, "acs.csv path")->required();
  cmd->add_option("--votes", args.votes_path, "votes.csv path")->required();
}

int run_ingest(const CommonDataArgs& data, const std::string& detections_path,
               const std::string& out_path) {
  const carcensus::Catalog catalog = carcensus::parse_catalog(data.catalog_path);
  const std::vector<carcensus::Region> regions =
      carcensus::parse_regions(data.regions_path, data.acs_path, data.votes_path);
  const std::vector<carcensus::SplitAssignment> split = carcensus::split_by_county(regions);

  size_t train = 0;
  for (const auto& s : split) {
    if (s.side == carcensus::SplitSide::kTrain) ++train;
  }

  nlohmann::ordered_json j;
  j["catalog_categories"] = catalog.size();
  j["regions"] = regions.size();
  j["train_regions"] = train;
  j["test_regions"] = regions.size() - train;
  size_t with_income = 0, with_race = 0, with_education = 0, with_votes = 0;
  for (const auto& r : regions) {
    if (r.income_median) ++with_income;
    if (r.race_shares) ++with_race;
    if (r.edu_shares) ++with_education;
    if (r.obama_votes) ++with_votes;
  }
  j["regions_with_income"] = with_income;
  j["regions_with_race"] = with_race;
  j["regions_with_education"] = with_education;
  j["regions_with_votes"] = with_votes;

  if (!detections_path.empty()) {
    const auto detections = carcensus::read_detections_jsonl(detections_path);
    for (const auto& d : detections) {
      bool found = false;
      for (const auto& r : regions) {
        if (r.region_id == d.region_id) {
          found = true;
          break;
        }
      }
      if (!found) {
        throw carcensus::ValidationError("detections reference unknown region_id \"" +
                                         d.region_id + "\"");
      }
      for (const auto& h : d.class_hypotheses) catalog.at(h.category_id);
    }
    j["detections"] = detections.size();
  }

  const std::string text = j.dump(2) + "\n";
  if (out_path.empty()) std::cout << text;
  else carcensus::write_text_file_atomic(out_path, text);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Vehicle-census demographic estimation pipeline"};
  app.set_version_flag("--version", std::string(kVersion) + " (feature layout " +
                                        std::string(carcensus::kFeatureLayoutVersion) +
                                        ", model format " +
                                        std::string(carcensus::kModelFormatVersion) + ")");
  app.require_subcommand(1);
  carcensus::ProtocolDefaults defaults;

  // --- ingest ---------------------------------------------------------------
  auto* ingest = app.add_subcommand("ingest", "Validate catalog, regions, and ground truth files");
  CommonDataArgs ingest_data;
  std::string ingest_detections, ingest_out;
  add_data_options(ingest, ingest_data);
  ingest->add_option("--detections", ingest_detections, "detections.jsonl to validate");
  ingest->add_option("--out", ingest_out, "summary JSON path (stdout when omitted)");

  // --- calibrate ------------------------------------------------------------
  auto* calibrate = app.add_subcommand(
      "calibrate", "Fit the score-to-probability map from detections and truth boxes");
  std::string cal_detections, cal_truths, cal_prior, cal_out, cal_fit_prior_out;
  double cal_iou = defaults.iou_min;
  bool cal_use_adjusted = false;
  calibrate->add_option("--detections", cal_detections, "detections.jsonl")->required();
  calibrate->add_option("--truths", cal_truths, "truths.jsonl")->required();
  calibrate->add_option("--prior", cal_prior, "prior.json to apply before ranking");
  calibrate->add_flag("--use-adjusted", cal_use_adjusted, "rank by prior-adjusted scores");
  calibrate->add_option("--iou-min", cal_iou, "IoU required for a correct detection");
  calibrate->add_option("--out", cal_out, "calibration.json output path")->required();
  calibrate->add_option("--fit-prior", cal_fit_prior_out,
                        "also fit a location-size prior from the truths and write it here");

  // --- featurize --------------------------------------------------------------
  auto* featurize = app.add_subcommand("featurize", "Aggregate detections into region features");
  CommonDataArgs feat_data;
  std::string feat_detections, feat_prior, feat_calibration, feat_out, feat_skipped;
  carcensus::FeaturizeOptions feat_options;
  add_data_options(featurize, feat_data);
  featurize->add_option("--detections", feat_detections, "detections.jsonl")->required();
  featurize->add_option("--prior", feat_prior, "prior.json to apply");
  featurize->add_option("--calibration", feat_calibration, "calibration.json for probabilities");
  featurize->add_option("--threshold", feat_options.threshold, "detection score threshold");
  featurize->add_flag("--use-adjusted", feat_options.use_adjusted,
                      "threshold prior-adjusted scores (requires --prior)");
  featurize->add_flag("--weighted", feat_options.probability_weighted,
                      "probability-weighted counting instead of top-1 hard counts");
  featurize->add_option("--min-population", feat_options.min_population, "eligibility floor");
  featurize->add_option("--min-cars", feat_options.min_cars, "eligibility floor");
  featurize->add_option("--out", feat_out, "features.csv output path")->required();
  featurize->add_option("--skipped", feat_skipped, "skipped.csv output path");

  // --- train ------------------------------------------------------------------
  auto* train = app.add_subcommand("train", "Fit a model on the train-side counties");
  CommonDataArgs train_data;
  std::string train_features, train_target = "income", train_out, train_split_override;
  std::vector<double> train_grid = carcensus::default_lambda_grid();
  int train_folds = defaults.folds;
  uint64_t train_seed = 0;
  add_data_options(train, train_data, /*need_catalog=*/false);
  train->add_option("--features", train_features, "features.csv")->required();
  train->add_option("--target", train_target, "income | vote_share | race | education");
  train->add_option("--lambda-grid", train_grid, "regularization grid")->delimiter(',');
  train->add_option("--folds", train_folds, "cross-validation folds");
  train->add_option("--seed", train_seed, "fold-shuffle seed");
  train->add_option("--override-split", train_split_override,
                    "split CSV (region_id,side) replacing the county-derived split");
  train->add_option("--out", train_out, "model.json output path")->required();

  // --- predict ----------------------------------------------------------------
  auto* predict = app.add_subcommand("predict", "Apply a trained model to feature rows");
  std::string pred_model, pred_features, pred_out;
  predict->add_option("--model", pred_model, "model.json")->required();
  predict->add_option("--features", pred_features, "features.csv")->required();
  predict->add_option("--out", pred_out, "predictions.csv output path")->required();

  // --- evaluate ---------------------------------------------------------------
  auto* evaluate = app.add_subcommand("evaluate", "Score predictions against ground truth");
  CommonDataArgs eval_data;
  std::string eval_predictions, eval_side = "test", eval_out, eval_split_override;
  std::string eval_choropleth, eval_choropleth_component;
  add_data_options(evaluate, eval_data, /*need_catalog=*/false);
  evaluate->add_option("--predictions", eval_predictions, "predictions.csv")->required();
  evaluate->add_option("--side", eval_side, "train | test | all");
  evaluate->add_option("--override-split", eval_split_override,
                       "split CSV (region_id,side) replacing the county-derived split");
  evaluate->add_option("--out", eval_out, "report.json output path")->required();
  evaluate->add_option("--choropleth", eval_choropleth, "choropleth.csv output path");
  evaluate->add_option("--choropleth-component", eval_choropleth_component,
                       "component to map (default: first predicted component)");

  // --- heuristic ----------------------------------------------------------------
  auto* heuristic = app.add_subcommand(
      "heuristic", "Sedan/pickup counts vs two-party outcomes across cities");
  CommonDataArgs heur_data;
  std::string heur_detections, heur_prior, heur_out;
  carcensus::HeuristicOptions heur_options;
  add_data_options(heuristic, heur_data);
  heuristic->add_option("--detections", heur_detections, "detections.jsonl")->required();
  heuristic->add_option("--prior", heur_prior, "prior.json to apply");
  heuristic->add_flag("--use-adjusted", heur_options.use_adjusted,
                      "threshold prior-adjusted scores (requires --prior)");
  heuristic->add_option("--threshold", heur_options.threshold, "detection score threshold");
  heuristic->add_option("--out", heur_out, "heuristic JSON output path")->required();

  // --- sample-grid ----------------------------------------------------------------
  auto* sample_grid = app.add_subcommand("sample-grid", "Plan GPS acquisition points");
  double grid_lat = 0, grid_lon = 0, grid_side = 20000, grid_spacing = 25,
         grid_max_dist = 12.5;
  unsigned grid_threads = 1;
  std::string grid_roads, grid_out;
  sample_grid->add_option("--center-lat", grid_lat, "grid center latitude")->required();
  sample_grid->add_option("--center-lon", grid_lon, "grid center longitude")->required();
  sample_grid->add_option("--side-m", grid_side, "grid side length in meters");
  sample_grid->add_option("--spacing-m", grid_spacing, "point spacing in meters");
  sample_grid->add_option("--roads", grid_roads, "roads.csv for the road-distance filter");
  sample_grid->add_option("--max-road-dist", grid_max_dist, "keep points within this distance");
  sample_grid->add_option("--threads", grid_threads, "concurrent road-oracle calls");
  sample_grid->add_option("--out", grid_out, "points.csv output path")->required();

  // --- synth -----------------------------------------------------------------------
  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset with known models");
  std::string synth_spec_path, synth_out_dir;
  synth->add_option("--spec", synth_spec_path, "spec.json")->required();
  synth->add_option("--out-dir", synth_out_dir, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\nRun with --help for usage.\n";
    return 2;
  }

  try {
    if (*ingest) {
      return run_ingest(ingest_data, ingest_detections, ingest_out);
    }

    if (*calibrate) {
      auto detections = carcensus::read_detections_jsonl(cal_detections);
      const auto truths = carcensus::read_truths_jsonl(cal_truths);
      std::optional<carcensus::LocationSizePrior> prior;
      if (!cal_prior.empty()) prior = carcensus::read_prior_json(cal_prior);
      if (cal_use_adjusted && !prior) {
        throw carcensus::ValidationError("--use-adjusted requires --prior");
      }
      if (!cal_fit_prior_out.empty()) {
        const auto fitted = carcensus::fit_prior(truths, 860.0, 573.0);
        carcensus::write_text_file_atomic(cal_fit_prior_out, carcensus::prior_to_json(fitted));
      }
      if (prior) {
        for (auto& d : detections) d = carcensus::apply_prior(d, *prior).detection;
      }
      std::stable_sort(detections.begin(), detections.end(),
                       [&](const carcensus::Detection& a, const carcensus::Detection& b) {
                         return a.score(cal_use_adjusted) > b.score(cal_use_adjusted);
                       });
      const std::vector<int> labels = carcensus::match_greedy(detections, truths, cal_iou);
      std::vector<double> scores;
      scores.reserve(detections.size());
      for (const auto& d : detections) scores.push_back(d.score(cal_use_adjusted));
      const carcensus::IsotonicMap map = carcensus::fit_isotonic(scores, labels);
      carcensus::write_text_file_atomic(cal_out, carcensus::calibration_to_json(map));
      std::cout << "calibration knots: " << map.knots.size()
                << "\naverage precision: "
                << carcensus::format_double(carcensus::average_precision(labels, truths.size()))
                << "\n";
      return 0;
    }

    if (*featurize) {
      const auto catalog = carcensus::parse_catalog(feat_data.catalog_path);
      const auto regions =
          carcensus::parse_regions(feat_data.regions_path, feat_data.acs_path, feat_data.votes_path);
      const auto detections = carcensus::read_detections_jsonl(feat_detections);
      std::optional<carcensus::LocationSizePrior> prior;
      if (!feat_prior.empty()) {
        prior = carcensus::read_prior_json(feat_prior);
        feat_options.prior = &*prior;
      }
      std::optional<carcensus::IsotonicMap> calibration;
      if (!feat_calibration.empty()) {
        calibration = carcensus::read_calibration_json(feat_calibration);
        feat_options.calibration = &*calibration;
      }
      const carcensus::FeaturizeResult result =
          carcensus::run_featurize(catalog, regions, detections, feat_options);
      carcensus::write_text_file_atomic(feat_out, carcensus::features_to_csv(result.rows));
      if (!feat_skipped.empty()) {
        carcensus::write_text_file_atomic(feat_skipped, carcensus::skipped_to_csv(result.skipped));
      }
      std::cout << "featurized regions: " << result.rows.size()
                << "\nskipped regions: " << result.skipped.size() << "\n";
      return 0;
    }

    if (*train) {
      const auto regions =
          carcensus::parse_regions(train_data.regions_path, train_data.acs_path,
                                   train_data.votes_path);
      const auto features = carcensus::read_features_csv(train_features);
      carcensus::TrainOptions options;
      const auto target = carcensus::target_from_string(train_target);
      if (!target) {
        throw carcensus::ValidationError("unknown target \"" + train_target +
                                         "\" (expected income, vote_share, race, or education)");
      }
      options.target = *target;
      options.lambda_grid = train_grid;
      options.folds = train_folds;
      options.seed = train_seed;
      std::unordered_map<std::string, carcensus::SplitSide> override_map;
      if (!train_split_override.empty()) {
        override_map = carcensus::read_split_csv(train_split_override);
        options.split_override = &override_map;
      }
      const carcensus::TrainedModel model = carcensus::run_train(features, regions, options);
      carcensus::write_text_file_atomic(train_out, carcensus::model_to_json(model));
      std::cout << "trained " << model.target << " model\n";
      return 0;
    }

    if (*predict) {
      const auto model = carcensus::read_model_json(pred_model);
      const auto features = carcensus::read_features_csv(pred_features);
      const auto predictions = carcensus::run_predict(model, features);
      carcensus::write_text_file_atomic(pred_out, carcensus::predictions_to_csv(predictions));
      std::cout << "predicted " << predictions.size() << " rows\n";
      return 0;
    }

    if (*evaluate) {
      const auto regions = carcensus::parse_regions(eval_data.regions_path, eval_data.acs_path,
                                                    eval_data.votes_path);
      const auto predictions = carcensus::read_predictions_csv(eval_predictions);
      const auto side = carcensus::eval_side_from_string(eval_side);
      if (!side) {
        throw carcensus::ValidationError("unknown side \"" + eval_side +
                                         "\" (expected train, test, or all)");
      }
      std::unordered_map<std::string, carcensus::SplitSide> override_map;
      const std::unordered_map<std::string, carcensus::SplitSide>* override_ptr = nullptr;
      if (!eval_split_override.empty()) {
        override_map = carcensus::read_split_csv(eval_split_override);
        override_ptr = &override_map;
      }
      const auto reports = carcensus::run_evaluate(predictions, regions, *side, override_ptr);
      carcensus::write_text_file_atomic(eval_out, carcensus::reports_to_json(reports, defaults));
      if (!eval_choropleth.empty()) {
        std::string component = eval_choropleth_component;
        if (component.empty()) component = predictions.front().component;
        carcensus::write_text_file_atomic(eval_choropleth,
                                          carcensus::choropleth_to_csv(predictions, component));
      }
      for (const auto& r : reports) {
        std::cout << r.target << ": n=" << r.n << " r=" << carcensus::format_double(r.pearson_r)
                  << " mae=" << carcensus::format_double(r.mae) << "\n";
      }
      return 0;
    }

    if (*heuristic) {
      const auto catalog = carcensus::parse_catalog(heur_data.catalog_path);
      const auto regions = carcensus::parse_regions(heur_data.regions_path, heur_data.acs_path,
                                                    heur_data.votes_path);
      const auto detections = carcensus::read_detections_jsonl(heur_detections);
      std::optional<carcensus::LocationSizePrior> prior;
      if (!heur_prior.empty()) {
        prior = carcensus::read_prior_json(heur_prior);
        heur_options.prior = &*prior;
      }
      if (heur_options.use_adjusted && !prior) {
        throw carcensus::ValidationError("--use-adjusted requires --prior");
      }
      const auto result = carcensus::run_heuristic(catalog, regions, detections, heur_options);
      if (!result.conditionals.p_democrat_given_more_sedans) {
        throw carcensus::ValidationError(
            "heuristic: no counted city has more sedans than pickups; the Democrat conditional "
            "is undefined");
      }
      if (!result.conditionals.p_republican_given_more_pickups) {
        throw carcensus::ValidationError(
            "heuristic: no counted city has more pickups than sedans; the Republican conditional "
            "is undefined");
      }
      carcensus::write_text_file_atomic(heur_out, carcensus::heuristic_to_json(result, defaults));
      std::cout << "cities counted: " << result.conditionals.cities_counted << "\n";
      return 0;
    }

    if (*sample_grid) {
      const carcensus::GpsPoint center{grid_lat, grid_lon};
      std::vector<carcensus::GpsPoint> points =
          carcensus::generate_grid(center, grid_side, grid_spacing);
      size_t failures = 0;
      if (!grid_roads.empty()) {
        const carcensus::PolylineRoadOracle oracle(carcensus::read_roads_csv(grid_roads));
        carcensus::RoadFilterOutcome outcome =
            carcensus::filter_near_road(points, oracle, grid_max_dist, grid_threads);
        failures = outcome.failures.size();
        for (const auto& f : outcome.failures) {
          std::cerr << "road oracle failed for point " << f.index << ": " << f.message << "\n";
        }
        points = std::move(outcome.kept);
      }
      carcensus::write_text_file_atomic(grid_out, carcensus::points_to_csv(points));
      std::cout << "points written: " << points.size() << "\n";
      return failures == 0 ? 0 : 1;
    }

    if (*synth) {
      const carcensus::SynthSpec spec = carcensus::read_synth_spec(synth_spec_path);
      const carcensus::SynthSummary summary = carcensus::generate_dataset(spec, synth_out_dir);
      std::cout << "regions: " << summary.regions << "\neligible regions: "
                << summary.eligible_regions << "\ndetections above threshold: "
                << summary.detections << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
