#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "carcensus/analytics.hpp"
#include "carcensus/calibration.hpp"
#include "carcensus/catalog.hpp"
#include "carcensus/detection.hpp"
#include "carcensus/estimator.hpp"
#include "carcensus/features.hpp"
#include "carcensus/model_io.hpp"
#include "carcensus/regions.hpp"
#include "carcensus/util.hpp"

namespace carcensus {

// Protocol constants used as defaults throughout the pipeline and echoed
// into every report for provenance.
struct ProtocolDefaults {
  double detection_threshold = -2.3;
  int folds = 5;
  uint64_t min_population = 500;
  uint64_t min_cars = 50;
  double iou_min = 0.5;
  int top_k = 20;
};

inline std::vector<double> default_lambda_grid() {
  return {1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3};
}

inline nlohmann::ordered_json protocol_config_json(const ProtocolDefaults& p = {}) {
  nlohmann::ordered_json j;
  j["detection_threshold"] = p.detection_threshold;
  j["folds"] = p.folds;
  j["min_population"] = p.min_population;
  j["min_cars"] = p.min_cars;
  j["iou_min"] = p.iou_min;
  j["top_k"] = p.top_k;
  return j;
}

// ---------------------------------------------------------------------------
// Targets

enum class Target { kIncome, kVoteShare, kRace, kEducation };

inline std::optional<Target> target_from_string(std::string_view s) {
  if (s == "income") return Target::kIncome;
  if (s == "vote_share") return Target::kVoteShare;
  if (s == "race") return Target::kRace;
  if (s == "education") return Target::kEducation;
  return std::nullopt;
}

inline std::string_view target_name(Target t) {
  switch (t) {
    case Target::kIncome: return "income";
    case Target::kVoteShare: return "vote_share";
    case Target::kRace: return "race";
    case Target::kEducation: return "education";
  }
  return "income";
}

inline bool target_is_compositional(Target t) {
  return t == Target::kRace || t == Target::kEducation;
}

// Component labels as they appear in predictions.csv and report.json.
inline std::vector<std::string> target_components(Target t) {
  switch (t) {
    case Target::kIncome: return {"income"};
    case Target::kVoteShare: return {"vote_share"};
    case Target::kRace: {
      std::vector<std::string> out;
      for (auto name : kRaceClassNames) out.push_back("race_" + std::string(name));
      return out;
    }
    case Target::kEducation: {
      std::vector<std::string> out;
      for (auto name : kEducationClassNames) out.push_back("education_" + std::string(name));
      return out;
    }
  }
  return {};
}

// Ground truth for a single report component; absent when the region lacks it.
inline std::optional<double> component_ground_truth(const Region& r, std::string_view component) {
  if (component == "income") {
    return r.income_median;
  }
  if (component == "vote_share") {
    return r.vote_share();
  }
  if (component.starts_with("race_")) {
    if (!r.race_shares) return std::nullopt;
    const std::string_view cls = component.substr(5);
    for (size_t k = 0; k < kRaceClassNames.size(); ++k) {
      if (kRaceClassNames[k] == cls) return (*r.race_shares)[k];
    }
    throw ValidationError("unknown race component \"" + std::string(component) + "\"");
  }
  if (component.starts_with("education_")) {
    if (!r.edu_shares) return std::nullopt;
    const std::string_view cls = component.substr(10);
    for (size_t k = 0; k < kEducationClassNames.size(); ++k) {
      if (kEducationClassNames[k] == cls) return (*r.edu_shares)[k];
    }
    throw ValidationError("unknown education component \"" + std::string(component) + "\"");
  }
  throw ValidationError("unknown report component \"" + std::string(component) + "\"");
}

// ---------------------------------------------------------------------------
// Featurize

struct FeaturizeOptions {
  double threshold = -2.3;
  bool use_adjusted = false;  // threshold on prior-adjusted scores
  bool probability_weighted = false;
  uint64_t min_population = 500;
  uint64_t min_cars = 50;
  const LocationSizePrior* prior = nullptr;
  const IsotonicMap* calibration = nullptr;
};

struct SkippedRegion {
  std::string region_id;
  std::string reason;
};

struct FeaturizeResult {
  std::vector<FeatureRow> rows;          // region roster order
  std::vector<SkippedRegion> skipped;
  size_t prior_clamped = 0;  // detections clamped to the prior's support
};

inline FeaturizeResult run_featurize(const Catalog& catalog, const std::vector<Region>& regions,
                                     const std::vector<Detection>& detections,
                                     const FeaturizeOptions& options) {
  if (options.use_adjusted && options.prior == nullptr) {
    throw ValidationError("featurize: thresholding on adjusted scores requires a prior");
  }

  std::unordered_map<std::string, std::vector<size_t>> dets_by_region;
  std::unordered_map<std::string, const Region*> region_index;
  for (const Region& r : regions) region_index[r.region_id] = &r;
  for (size_t i = 0; i < detections.size(); ++i) {
    if (!region_index.count(detections[i].region_id)) {
      throw ValidationError("detections reference unknown region_id \"" +
                            detections[i].region_id + "\"");
    }
    dets_by_region[detections[i].region_id].push_back(i);
  }

  FeaturizeResult result;
  for (const Region& region : regions) {
    auto it = dets_by_region.find(region.region_id);
    if (it == dets_by_region.end() || it->second.empty()) {
      result.skipped.push_back({region.region_id, "no_detections"});
      continue;
    }

    RegionCensus census;
    census.region_id = region.region_id;
    std::vector<std::string> image_ids;
    for (size_t idx : it->second) {
      Detection d = detections[idx];
      image_ids.push_back(d.image_id);
      if (options.prior) {
        PriorApplication applied = apply_prior(d, *options.prior);
        d = std::move(applied.detection);
        if (applied.clamped) ++result.prior_clamped;
      }
      if (d.score(options.use_adjusted) < options.threshold) continue;
      if (options.calibration) d.calibrated_prob = options.calibration->calibrate(d.raw_score);
      census.detections.push_back(std::move(d));
    }
    std::sort(image_ids.begin(), image_ids.end());
    image_ids.erase(std::unique(image_ids.begin(), image_ids.end()), image_ids.end());
    census.image_count = image_ids.size();

    if (region.population < options.min_population) {
      result.skipped.push_back({region.region_id, "below_min_population"});
      continue;
    }
    if (census.detections.empty()) {
      result.skipped.push_back({region.region_id, "no_detections_above_threshold"});
      continue;
    }
    if (census.detections.size() < options.min_cars) {
      result.skipped.push_back({region.region_id, "below_min_cars"});
      continue;
    }

    FeatureRow row;
    row.region_id = region.region_id;
    row.values = aggregate_features(census, catalog, options.probability_weighted);
    result.rows.push_back(std::move(row));
  }
  return result;
}

inline std::string skipped_to_csv(const std::vector<SkippedRegion>& skipped) {
  std::string out = "region_id,reason\n";
  for (const SkippedRegion& s : skipped) {
    out += s.region_id;
    out += ',';
    out += s.reason;
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Train

struct TrainOptions {
  Target target = Target::kIncome;
  std::vector<double> lambda_grid = default_lambda_grid();
  int folds = 5;
  uint64_t seed = 0;
  // Optional split override (region_id -> side); when absent the split is
  // derived from county initials.
  const std::unordered_map<std::string, SplitSide>* split_override = nullptr;
};

inline SplitSide side_for_region(const Region& r,
                                 const std::unordered_map<std::string, SplitSide>* override_map) {
  if (override_map) {
    auto it = override_map->find(r.region_id);
    if (it == override_map->end()) {
      throw ValidationError("split override missing region_id \"" + r.region_id + "\"");
    }
    return it->second;
  }
  return county_side(r.county);
}

inline TrainedModel run_train(const std::vector<FeatureRow>& features,
                              const std::vector<Region>& regions, const TrainOptions& options) {
  std::unordered_map<std::string, const Region*> region_index;
  for (const Region& r : regions) region_index[r.region_id] = &r;

  std::vector<const FeatureRow*> train_rows;
  std::vector<std::vector<double>> targets;  // per kept row, 1 or K values
  const size_t k = target_components(options.target).size();

  for (const FeatureRow& row : features) {
    auto it = region_index.find(row.region_id);
    if (it == region_index.end()) {
      throw ValidationError("features reference unknown region_id \"" + row.region_id + "\"");
    }
    const Region& region = *it->second;
    if (side_for_region(region, options.split_override) != SplitSide::kTrain) continue;

    std::vector<double> target_values;
    switch (options.target) {
      case Target::kIncome:
        if (!region.income_median) continue;
        target_values = {*region.income_median};
        break;
      case Target::kVoteShare: {
        const auto share = region.vote_share();
        if (!share) continue;
        target_values = {*share};
        break;
      }
      case Target::kRace:
        if (!region.race_shares) continue;
        target_values.assign(region.race_shares->begin(), region.race_shares->end());
        break;
      case Target::kEducation:
        if (!region.edu_shares) continue;
        target_values.assign(region.edu_shares->begin(), region.edu_shares->end());
        break;
    }
    train_rows.push_back(&row);
    targets.push_back(std::move(target_values));
  }

  if (train_rows.empty()) {
    throw ValidationError("no training regions: the train split has no region with target \"" +
                          std::string(target_name(options.target)) + "\"");
  }

  Matrix x(train_rows.size(), kFeatureCount);
  for (size_t i = 0; i < train_rows.size(); ++i) {
    for (size_t j = 0; j < kFeatureCount; ++j) x(i, j) = train_rows[i]->values[j];
  }

  TrainedModel out;
  out.target = target_name(options.target);
  if (target_is_compositional(options.target)) {
    Matrix y(train_rows.size(), k);
    for (size_t i = 0; i < targets.size(); ++i) {
      for (size_t c = 0; c < k; ++c) y(i, c) = targets[i][c];
    }
    CvSoftmaxResult cv = cv_train_softmax(x, y, options.lambda_grid, options.folds, options.seed,
                                          target_components(options.target));
    out.model = std::move(cv.model);
  } else {
    std::vector<double> y(targets.size());
    for (size_t i = 0; i < targets.size(); ++i) y[i] = targets[i][0];
    CvRidgeResult cv = cv_train_ridge(x, y, options.lambda_grid, options.folds, options.seed);
    out.model = std::move(cv.model);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Predict

struct PredictionRow {
  std::string region_id;
  std::string component;
  double value = 0;
};

inline std::vector<PredictionRow> run_predict(const TrainedModel& model,
                                              const std::vector<FeatureRow>& features) {
  if (model.feature_layout != kFeatureLayoutVersion) {
    throw ValidationError("model was trained against feature layout \"" + model.feature_layout +
                          "\"; this build expects \"" + std::string(kFeatureLayoutVersion) + "\"");
  }
  std::vector<PredictionRow> out;
  for (const FeatureRow& row : features) {
    if (model.is_ridge()) {
      out.push_back({row.region_id, model.target, model.ridge().predict(row.values)});
    } else {
      const SoftmaxModel& s = model.softmax();
      const std::vector<double> p = s.predict(row.values);
      for (size_t cl = 0; cl < p.size(); ++cl) {
        out.push_back({row.region_id, s.class_labels[cl], p[cl]});
      }
    }
  }
  return out;
}

inline const std::vector<std::string>& predictions_csv_header() {
  static const std::vector<std::string> header = {"region_id", "target", "predicted_value"};
  return header;
}

inline std::string predictions_to_csv(const std::vector<PredictionRow>& rows) {
  std::string out = join_csv(predictions_csv_header());
  out += '\n';
  for (const PredictionRow& r : rows) {
    out += r.region_id;
    out += ',';
    out += r.component;
    out += ',';
    out += format_double(r.value);
    out += '\n';
  }
  return out;
}

inline std::vector<PredictionRow> read_predictions_csv(const std::filesystem::path& path) {
  const CsvTable table = read_csv(path, predictions_csv_header());
  std::vector<PredictionRow> rows;
  for (const CsvRow& row : table.rows) {
    auto v = parse_double(row.fields[2]);
    if (!v) throw row_error(table, row, "malformed predicted_value");
    rows.push_back({row.fields[0], row.fields[1], *v});
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Evaluate

enum class EvalSide { kTrain, kTest, kAll };

inline std::optional<EvalSide> eval_side_from_string(std::string_view s) {
  if (s == "train") return EvalSide::kTrain;
  if (s == "test") return EvalSide::kTest;
  if (s == "all") return EvalSide::kAll;
  return std::nullopt;
}

// One report per distinct predicted component, in first-appearance order.
// Regions are filtered to the requested split side; regions lacking the
// component's ground truth are skipped.
inline std::vector<EvalReport> run_evaluate(
    const std::vector<PredictionRow>& predictions, const std::vector<Region>& regions,
    EvalSide side,
    const std::unordered_map<std::string, SplitSide>* split_override = nullptr) {
  std::unordered_map<std::string, const Region*> region_index;
  for (const Region& r : regions) region_index[r.region_id] = &r;

  std::vector<std::string> component_order;
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> series;
  for (const PredictionRow& row : predictions) {
    auto it = region_index.find(row.region_id);
    if (it == region_index.end()) {
      throw ValidationError("predictions reference unknown region_id \"" + row.region_id + "\"");
    }
    const Region& region = *it->second;
    if (side != EvalSide::kAll) {
      const SplitSide s = side_for_region(region, split_override);
      if ((side == EvalSide::kTrain) != (s == SplitSide::kTrain)) continue;
    }
    const std::optional<double> actual = component_ground_truth(region, row.component);
    if (!actual) continue;
    if (!series.count(row.component)) component_order.push_back(row.component);
    auto& [pred, act] = series[row.component];
    pred.push_back(row.value);
    act.push_back(*actual);
  }

  std::vector<EvalReport> reports;
  for (const std::string& component : component_order) {
    const auto& [pred, act] = series[component];
    if (pred.size() < 3) {
      throw ValidationError("evaluate: fewer than 3 regions with ground truth for \"" + component +
                            "\"");
    }
    EvalReport report;
    report.target = component;
    report.n = pred.size();
    const PearsonResult pr = pearson(pred, act);
    report.pearson_r = pr.r;
    report.p_value = pr.p_value;
    report.mae = mean_absolute_error(pred, act);
    if (component == "vote_share") report.accuracy = precinct_accuracy(pred, act);
    reports.push_back(std::move(report));
  }
  if (reports.empty()) {
    throw ValidationError("evaluate: no predictions matched a region with ground truth");
  }
  return reports;
}

inline std::string reports_to_json(const std::vector<EvalReport>& reports,
                                   const ProtocolDefaults& defaults = {}) {
  nlohmann::ordered_json j;
  j["config"] = protocol_config_json(defaults);
  auto arr = nlohmann::ordered_json::array();
  for (const EvalReport& r : reports) {
    nlohmann::ordered_json e;
    e["target"] = r.target;
    e["n"] = r.n;
    e["pearson_r"] = r.pearson_r;
    e["p_value"] = r.p_value;
    e["mae"] = r.mae;
    if (r.accuracy) e["accuracy"] = *r.accuracy;
    arr.push_back(std::move(e));
  }
  j["reports"] = std::move(arr);
  return j.dump(2) + "\n";
}

// choropleth.csv: one value per region for external map rendering.
inline std::string choropleth_to_csv(const std::vector<PredictionRow>& predictions,
                                     std::string_view component) {
  std::string out = "region_id,value\n";
  for (const PredictionRow& r : predictions) {
    if (r.component != component) continue;
    out += r.region_id;
    out += ',';
    out += format_double(r.value);
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Sedan/pickup heuristic

struct HeuristicOptions {
  double threshold = -2.3;
  bool use_adjusted = false;
  const LocationSizePrior* prior = nullptr;
};

struct HeuristicResult {
  std::vector<CityTally> tallies;
  SedanTruckConditionals conditionals;
  size_t cities_without_votes = 0;
};

inline HeuristicResult run_heuristic(const Catalog& catalog, const std::vector<Region>& regions,
                                     const std::vector<Detection>& detections,
                                     const HeuristicOptions& options) {
  std::unordered_map<std::string, CityTally> tally_by_region;
  std::vector<std::string> order;
  HeuristicResult result;
  for (const Region& r : regions) {
    if (r.kind != RegionKind::kCity) continue;
    if (!r.obama_votes || !r.mccain_votes) {
      ++result.cities_without_votes;
      continue;
    }
    CityTally t;
    t.city_id = r.region_id;
    t.obama_votes = *r.obama_votes;
    t.mccain_votes = *r.mccain_votes;
    tally_by_region.emplace(r.region_id, t);
    order.push_back(r.region_id);
  }
  if (order.empty()) throw ValidationError("heuristic: no city regions with vote counts");

  for (const Detection& det : detections) {
    auto it = tally_by_region.find(det.region_id);
    if (it == tally_by_region.end()) continue;
    Detection d = det;
    if (options.prior) d = apply_prior(d, *options.prior).detection;
    if (d.score(options.use_adjusted) < options.threshold) continue;
    const VehicleCategory& cat = catalog.at(resolve_category(d));
    if (cat.body_type == kBodySedanIndex) {
      ++it->second.sedans;
    } else if (std::find(kPickupBodyIndices.begin(), kPickupBodyIndices.end(), cat.body_type) !=
               kPickupBodyIndices.end()) {
      ++it->second.pickups;
    }
  }

  for (const std::string& id : order) result.tallies.push_back(tally_by_region[id]);
  result.conditionals = sedan_truck_conditionals(result.tallies);
  return result;
}

inline std::string heuristic_to_json(const HeuristicResult& r,
                                     const ProtocolDefaults& defaults = {}) {
  nlohmann::ordered_json j;
  j["config"] = protocol_config_json(defaults);
  if (r.conditionals.p_democrat_given_more_sedans) {
    j["p_democrat_given_more_sedans"] = *r.conditionals.p_democrat_given_more_sedans;
  } else {
    j["p_democrat_given_more_sedans"] = nullptr;
  }
  if (r.conditionals.p_republican_given_more_pickups) {
    j["p_republican_given_more_pickups"] = *r.conditionals.p_republican_given_more_pickups;
  } else {
    j["p_republican_given_more_pickups"] = nullptr;
  }
  j["cities_counted"] = r.conditionals.cities_counted;
  j["ties_excluded"] = r.conditionals.ties_excluded;
  j["cities_without_votes"] = r.cities_without_votes;
  return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Split override files: region_id,side with side in {train, test}.

inline std::unordered_map<std::string, SplitSide> read_split_csv(
    const std::filesystem::path& path) {
  const CsvTable table = read_csv(path, {"region_id", "side"});
  std::unordered_map<std::string, SplitSide> out;
  for (const CsvRow& row : table.rows) {
    SplitSide side;
    if (row.fields[1] == "train") side = SplitSide::kTrain;
    else if (row.fields[1] == "test") side = SplitSide::kTest;
    else throw row_error(table, row, "side must be \"train\" or \"test\"");
    if (!out.emplace(row.fields[0], side).second) {
      throw row_error(table, row, "duplicate region_id \"" + row.fields[0] + "\"");
    }
  }
  return out;
}

}  // namespace carcensus
