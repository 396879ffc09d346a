#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "carcensus/catalog.hpp"
#include "carcensus/detection.hpp"
#include "carcensus/estimator.hpp"
#include "carcensus/features.hpp"
#include "carcensus/regions.hpp"
#include "carcensus/rng.hpp"
#include "carcensus/util.hpp"

namespace carcensus {

// Synthetic dataset generation. Region targets are produced by applying
// known linear/softmax models to each region's realized feature vector --
// computed through the real aggregation path, so end-to-end runs exercise
// ingestion, thresholding, and featurization exactly as production data
// would. All randomness flows through SplitMix64 streams derived from the
// seed; a fixed seed yields byte-identical output files.

struct SynthSpec {
  uint64_t seed = 1;
  size_t n_regions = 300;
  std::vector<std::string> counties;       // assigned round-robin
  double noise_sigma = 0.0;                // absolute, in target (or logit) units
  double noise_sigma_frac = -1.0;          // when >= 0: fraction of each clean target's std
  uint64_t cars_min = 60;                  // detected cars per region, inclusive range
  uint64_t cars_max = 200;
  std::string catalog_ref = "builtin";     // "builtin" or a catalog.csv path
  std::vector<double> true_income_weights;          // 88; empty -> seeded defaults
  std::vector<std::vector<double>> true_race_weights;  // 4 x 88; empty -> seeded defaults
};

// County names spanning the alphabet; half train-side (A-C), half test-side.
inline std::vector<std::string> default_synth_counties() {
  return {"Adams",   "Baldwin", "Cabarrus", "Clark",   "Boone",   "Ada",
          "Carver",  "Bexar",   "Alameda",  "Chatham", "Brook",   "Custer",
          "Dakota",  "Eagle",   "Fulton",   "Greene",  "Harris",  "Ingham",
          "Jackson", "Kent",    "Lake",     "Maricopa", "Nueces",  "Yolo"};
}

inline SynthSpec read_synth_spec(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  SynthSpec spec;
  try {
    if (j.contains("seed")) spec.seed = j["seed"].get<uint64_t>();
    if (j.contains("n_regions")) spec.n_regions = j["n_regions"].get<size_t>();
    if (j.contains("counties")) spec.counties = j["counties"].get<std::vector<std::string>>();
    if (j.contains("noise_sigma")) spec.noise_sigma = j["noise_sigma"].get<double>();
    if (j.contains("noise_sigma_frac")) spec.noise_sigma_frac = j["noise_sigma_frac"].get<double>();
    if (j.contains("cars_per_region")) {
      const auto& range = j["cars_per_region"];
      if (!range.is_array() || range.size() != 2) {
        throw ParseError(path.string() + ": cars_per_region must be [min, max]");
      }
      spec.cars_min = range[0].get<uint64_t>();
      spec.cars_max = range[1].get<uint64_t>();
    }
    if (j.contains("catalog")) spec.catalog_ref = j["catalog"].get<std::string>();
    if (j.contains("true_income_weights")) {
      spec.true_income_weights = j["true_income_weights"].get<std::vector<double>>();
    }
    if (j.contains("true_race_weights")) {
      spec.true_race_weights = j["true_race_weights"].get<std::vector<std::vector<double>>>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return spec;
}

// Deterministic catalog covering every make, body type, country, and year
// bucket: two categories per make, attributes drawn from a fixed stream that
// does not depend on the dataset seed.
inline Catalog builtin_catalog() {
  SplitMix64 rng(0x5eedca7aULL);
  std::vector<VehicleCategory> cats;
  int k = 0;
  for (int variant = 0; variant < 2; ++variant) {
    for (int make = 0; make < kMakeCount; ++make, ++k) {
      VehicleCategory c;
      char id[16];
      std::snprintf(id, sizeof(id), "cat_%03d", k);
      c.category_id = id;
      c.make = make;
      c.model = "Model-" + std::to_string(k);
      c.body_type = k % kBodyTypeCount;
      c.country = k % kCountryCount;
      c.year_min = 1990 + (k * 5) % 25;
      c.year_max = std::min(c.year_min + 2, 2014);
      c.price_usd = std::floor(rng.uniform(8000.0, 80000.0));
      const double roll = rng.uniform();
      if (roll < 0.04) {
        c.is_electric = true;  // electrics carry no mpg metadata
      } else {
        if (roll < 0.12) c.is_hybrid = true;
        const double city = std::floor(rng.uniform(12.0, 40.0));
        c.city_mpg = city;
        c.highway_mpg = city + std::floor(rng.uniform(3.0, 9.0));
      }
      cats.push_back(std::move(c));
    }
  }
  return Catalog(std::move(cats));
}

struct SynthSummary {
  size_t regions = 0;
  size_t eligible_regions = 0;
  size_t detections = 0;  // above the default threshold
  size_t chaff_detections = 0;
  size_t truth_boxes = 0;
};

namespace detail {

inline std::vector<double> seeded_sparse_weights(uint64_t seed, size_t dim, size_t nonzero,
                                                 double scale) {
  SplitMix64 rng(seed);
  std::vector<double> w(dim, 0.0);
  for (size_t k = 0; k < nonzero; ++k) {
    const size_t j = static_cast<size_t>(rng.below(dim));
    const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
    w[j] += sign * rng.uniform(0.5, 1.0) * scale;
  }
  return w;
}

inline double population_std(const std::vector<double>& v) {
  if (v.empty()) return 0;
  double mean = 0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double var = 0;
  for (double x : v) var += (x - mean) * (x - mean);
  return std::sqrt(var / static_cast<double>(v.size()));
}

}  // namespace detail

inline SynthSummary generate_dataset(const SynthSpec& spec, const std::filesystem::path& out_dir) {
  if (spec.n_regions < 10) throw ValidationError("synth: n_regions must be >= 10");
  if (spec.noise_sigma < 0) throw ValidationError("synth: noise_sigma must be >= 0");
  if (spec.cars_min < 1 || spec.cars_min > spec.cars_max) {
    throw ValidationError("synth: cars_per_region range must satisfy 1 <= min <= max");
  }

  const std::vector<std::string> counties =
      spec.counties.empty() ? default_synth_counties() : spec.counties;
  if (counties.empty()) throw ValidationError("synth: county list is empty");

  const Catalog catalog =
      spec.catalog_ref == "builtin" ? builtin_catalog() : parse_catalog(spec.catalog_ref);
  const size_t n_cats = catalog.size();

  std::vector<double> income_w = spec.true_income_weights;
  if (income_w.empty()) {
    income_w = detail::seeded_sparse_weights(spec.seed ^ 0x111111ULL, kFeatureCount, 15, 4000.0);
  }
  if (income_w.size() != kFeatureCount) throw ValidationError("synth: income weights must have 88 components");
  const std::vector<double> vote_w =
      detail::seeded_sparse_weights(spec.seed ^ 0x222222ULL, kFeatureCount, 15, 0.05);
  std::vector<std::vector<double>> race_w = spec.true_race_weights;
  if (race_w.empty()) {
    for (int cl = 0; cl < 4; ++cl) {
      race_w.push_back(detail::seeded_sparse_weights(spec.seed ^ (0x333300ULL + cl),
                                                     kFeatureCount, 10, 0.4));
    }
  }
  if (race_w.size() != 4) throw ValidationError("synth: race weights must have 4 rows");
  for (const auto& row : race_w) {
    if (row.size() != kFeatureCount) throw ValidationError("synth: race weights must have 88 columns");
  }
  std::vector<std::vector<double>> edu_w;
  for (int cl = 0; cl < 5; ++cl) {
    edu_w.push_back(detail::seeded_sparse_weights(spec.seed ^ (0x444400ULL + cl),
                                                  kFeatureCount, 10, 0.35));
  }

  SplitMix64 rng(spec.seed);
  SynthSummary summary;
  summary.regions = spec.n_regions;

  std::vector<Region> regions(spec.n_regions);
  std::vector<RegionCensus> censuses(spec.n_regions);
  std::vector<Detection> all_detections;
  std::vector<TruthBox> truths;

  for (size_t r = 0; r < spec.n_regions; ++r) {
    Region& region = regions[r];
    char id[32];
    std::snprintf(id, sizeof(id), "r%04llu", static_cast<unsigned long long>(r));
    region.region_id = id;
    region.kind = RegionKind::kCity;
    region.city = "City" + std::to_string(r);
    region.state = "ST";
    region.county = counties[r % counties.size()];
    region.population = 800 + rng.below(49200);

    const uint64_t cars = spec.cars_min + rng.below(spec.cars_max - spec.cars_min + 1);
    const double cars_per_image = rng.uniform(0.5, 3.0);
    const uint64_t image_target = std::max<uint64_t>(
        1, static_cast<uint64_t>(std::llround(static_cast<double>(cars) / cars_per_image)));

    // Region-specific taste over categories: unnormalized exponential scores.
    std::vector<double> cumulative(n_cats, 0.0);
    double acc = 0;
    for (size_t c = 0; c < n_cats; ++c) {
      acc += std::exp(rng.normal() * 1.2);
      cumulative[c] = acc;
    }

    auto sample_category = [&]() -> size_t {
      const double u = rng.uniform() * acc;
      return static_cast<size_t>(
          std::lower_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin());
    };
    auto image_name = [&](uint64_t img) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%s_img%05llu", region.region_id.c_str(),
                    static_cast<unsigned long long>(img));
      return std::string(buf);
    };

    std::vector<Detection> region_dets;
    for (uint64_t i = 0; i < cars; ++i) {
      Detection d;
      d.region_id = region.region_id;
      // Cycle through the image pool first so every image gets a detection.
      d.image_id = image_name(i < image_target ? i : rng.below(image_target));
      d.bbox.w = rng.uniform(50.0, 200.0);
      d.bbox.h = rng.uniform(50.0, 200.0);
      d.bbox.x = rng.uniform(0.0, 860.0 - d.bbox.w);
      d.bbox.y = rng.uniform(0.0, 573.0 - d.bbox.h);
      d.raw_score = rng.uniform(-2.25, 3.0);

      const size_t true_cat = sample_category();
      const double p1 = 0.5 + 0.4 * rng.uniform();
      size_t decoy1 = rng.below(n_cats), decoy2 = rng.below(n_cats);
      if (decoy1 == true_cat) decoy1 = (decoy1 + 1) % n_cats;
      if (decoy2 == true_cat || decoy2 == decoy1) decoy2 = (decoy2 + 2) % n_cats;
      d.class_hypotheses = {
          {catalog.categories()[true_cat].category_id, p1},
          {catalog.categories()[decoy1].category_id, (1 - p1) * 0.48},
          {catalog.categories()[decoy2].category_id, (1 - p1) * 0.32}};

      if (rng.uniform() < 0.8) {
        const double scale = rng.uniform(0.9, 1.1);
        TruthBox t;
        t.image_id = d.image_id;
        t.bbox.w = d.bbox.w * scale;
        t.bbox.h = d.bbox.h * scale;
        t.bbox.x = std::clamp(d.bbox.x + d.bbox.w * (1 - scale) / 2, 0.0, 860.0 - t.bbox.w);
        t.bbox.y = std::clamp(d.bbox.y + d.bbox.h * (1 - scale) / 2, 0.0, 573.0 - t.bbox.h);
        truths.push_back(std::move(t));
      }
      region_dets.push_back(std::move(d));
    }

    // Low-score clutter that the default threshold removes.
    const uint64_t n_chaff = cars / 5 + 1;
    for (uint64_t i = 0; i < n_chaff; ++i) {
      Detection d;
      d.region_id = region.region_id;
      d.image_id = image_name(rng.below(image_target));
      d.bbox.w = rng.uniform(50.0, 200.0);
      d.bbox.h = rng.uniform(50.0, 200.0);
      d.bbox.x = rng.uniform(0.0, 860.0 - d.bbox.w);
      d.bbox.y = rng.uniform(0.0, 573.0 - d.bbox.h);
      d.raw_score = rng.uniform(-6.0, -2.35);
      const size_t cat = sample_category();
      d.class_hypotheses = {{catalog.categories()[cat].category_id, 0.6}};
      region_dets.push_back(std::move(d));
      ++summary.chaff_detections;
    }

    // Census over the detections that survive the default raw threshold;
    // image count follows the pipeline's convention (distinct image ids over
    // all of the region's detection records).
    RegionCensus& census = censuses[r];
    census.region_id = region.region_id;
    std::vector<std::string> image_ids;
    for (const Detection& d : region_dets) {
      image_ids.push_back(d.image_id);
      if (d.raw_score >= -2.3) {
        census.detections.push_back(d);
        ++summary.detections;
      }
    }
    std::sort(image_ids.begin(), image_ids.end());
    image_ids.erase(std::unique(image_ids.begin(), image_ids.end()), image_ids.end());
    census.image_count = image_ids.size();

    all_detections.insert(all_detections.end(), region_dets.begin(), region_dets.end());
    if (is_eligible(region, census.detections.size())) ++summary.eligible_regions;
  }
  summary.truth_boxes = truths.size();
  if (summary.eligible_regions == 0) {
    throw ValidationError("synth: infeasible spec, no region satisfies the eligibility rules");
  }

  // Realized features through the production aggregation path.
  Matrix features(spec.n_regions, kFeatureCount);
  for (size_t r = 0; r < spec.n_regions; ++r) {
    const FeatureVector f = aggregate_features(censuses[r], catalog);
    for (size_t j = 0; j < kFeatureCount; ++j) features(r, j) = f[j];
  }
  const Standardizer standardizer = fit_standardizer(features);
  const Matrix z = standardizer.apply(features);

  auto linear_target = [&](const std::vector<double>& w, double base) {
    std::vector<double> out(spec.n_regions, base);
    for (size_t r = 0; r < spec.n_regions; ++r) {
      for (size_t j = 0; j < kFeatureCount; ++j) out[r] += w[j] * z(r, j);
    }
    return out;
  };

  std::vector<double> income = linear_target(income_w, 60000.0);
  std::vector<double> vote = linear_target(vote_w, 0.5);
  std::vector<std::vector<double>> race_logits(4), edu_logits(5);
  for (int cl = 0; cl < 4; ++cl) race_logits[cl] = linear_target(race_w[cl], 0.0);
  for (int cl = 0; cl < 5; ++cl) edu_logits[cl] = linear_target(edu_w[cl], 0.0);

  // Noise pass: absolute sigma, or a fraction of each clean series' std.
  SplitMix64 noise_rng(spec.seed ^ 0x5eedull);
  auto sigma_for = [&](const std::vector<double>& clean) {
    return spec.noise_sigma_frac >= 0 ? spec.noise_sigma_frac * detail::population_std(clean)
                                      : spec.noise_sigma;
  };
  const double income_sigma = sigma_for(income);
  const double vote_sigma = sigma_for(vote);
  std::vector<double> race_sigma(4), edu_sigma(5);
  for (int cl = 0; cl < 4; ++cl) race_sigma[cl] = sigma_for(race_logits[cl]);
  for (int cl = 0; cl < 5; ++cl) edu_sigma[cl] = sigma_for(edu_logits[cl]);

  for (size_t r = 0; r < spec.n_regions; ++r) {
    Region& region = regions[r];
    const double pop = static_cast<double>(region.population);

    const double income_r = income[r] + income_sigma * noise_rng.normal();
    region.income_median = std::max(1000.0, std::floor(income_r));

    double vote_r = vote[r] + vote_sigma * noise_rng.normal();
    vote_r = std::clamp(vote_r, 0.01, 0.99);
    const uint64_t turnout = static_cast<uint64_t>(std::llround(pop * 0.45));
    const uint64_t obama = static_cast<uint64_t>(std::llround(vote_r * static_cast<double>(turnout)));
    region.obama_votes = obama;
    region.mccain_votes = turnout - obama;

    auto softmax_counts = [&](const std::vector<std::vector<double>>& logits,
                              const std::vector<double>& sigmas, double universe) {
      std::vector<double> p(logits.size());
      double mx = -1e300;
      for (size_t cl = 0; cl < logits.size(); ++cl) {
        p[cl] = logits[cl][r] + sigmas[cl] * noise_rng.normal();
        mx = std::max(mx, p[cl]);
      }
      double zsum = 0;
      for (double& v : p) {
        v = std::exp(v - mx);
        zsum += v;
      }
      std::vector<double> counts(p.size());
      for (size_t cl = 0; cl < p.size(); ++cl) counts[cl] = std::floor(p[cl] / zsum * universe);
      return counts;
    };

    const std::vector<double> race_counts = softmax_counts(race_logits, race_sigma, pop);
    region.race_counts = {race_counts[0], race_counts[1], race_counts[2]};
    const double adult_pop = std::floor(pop * 0.6);
    const std::vector<double> edu_counts = softmax_counts(edu_logits, edu_sigma, adult_pop);
    region.edu_counts = {edu_counts[0], edu_counts[1], edu_counts[2], edu_counts[3],
                         edu_counts[4]};
  }

  std::filesystem::create_directories(out_dir);
  write_text_file_atomic(out_dir / "catalog.csv", catalog_to_csv(catalog));
  write_text_file_atomic(out_dir / "regions.csv", regions_to_csv(regions));
  write_text_file_atomic(out_dir / "acs.csv", acs_to_csv(regions));
  write_text_file_atomic(out_dir / "votes.csv", votes_to_csv(regions));
  write_text_file_atomic(out_dir / "detections.jsonl", detections_to_jsonl(all_detections));
  write_text_file_atomic(out_dir / "truths.jsonl", truths_to_jsonl(truths));
  return summary;
}

}  // namespace carcensus
