#pragma once

#include <array>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "carcensus/catalog.hpp"
#include "carcensus/csv.hpp"
#include "carcensus/detection.hpp"
#include "carcensus/util.hpp"

namespace carcensus {

// Fixed 88-component summary of a region's detected cars. The layout is
// frozen; serialized models reference it through kFeatureLayoutVersion.
//
//   [0]      cars_per_image
//   [1]      avg_price_usd
//   [2..3]   avg_city_mpg, avg_highway_mpg (cars without the value excluded)
//   [4..5]   pct_hybrid, pct_electric
//   [6..12]  pct by manufacturing country (7, alphabetical)
//   [13]     pct_foreign (100 - pct USA)
//   [14..24] pct by body type (11, catalog order)
//   [25..29] pct by year bucket (5-year buckets from 1990, by year_min)
//   [30..87] pct by make (58, alphabetical)
//
// Percentages are on a 0..100 scale.
inline constexpr size_t kFeatureCount = 88;
inline constexpr std::string_view kFeatureLayoutVersion = "car-features-v1";

inline constexpr size_t kFeatCarsPerImage = 0;
inline constexpr size_t kFeatAvgPrice = 1;
inline constexpr size_t kFeatAvgCityMpg = 2;
inline constexpr size_t kFeatAvgHighwayMpg = 3;
inline constexpr size_t kFeatPctHybrid = 4;
inline constexpr size_t kFeatPctElectric = 5;
inline constexpr size_t kFeatCountryBase = 6;
inline constexpr size_t kFeatPctForeign = 13;
inline constexpr size_t kFeatBodyBase = 14;
inline constexpr size_t kFeatYearBase = 25;
inline constexpr size_t kFeatMakeBase = 30;
inline constexpr size_t kYearBucketCount = 5;

using FeatureVector = std::array<double, kFeatureCount>;

namespace detail {

inline std::string feature_token(std::string_view name) {
  std::string out;
  for (char c : name) {
    const unsigned char u = static_cast<unsigned char>(c);
    out += std::isalnum(u) ? static_cast<char>(std::tolower(u)) : '_';
  }
  return out;
}

}  // namespace detail

inline const std::array<std::string, kFeatureCount>& feature_names() {
  static const std::array<std::string, kFeatureCount> names = [] {
    std::array<std::string, kFeatureCount> n;
    n[kFeatCarsPerImage] = "cars_per_image";
    n[kFeatAvgPrice] = "avg_price_usd";
    n[kFeatAvgCityMpg] = "avg_city_mpg";
    n[kFeatAvgHighwayMpg] = "avg_highway_mpg";
    n[kFeatPctHybrid] = "pct_hybrid";
    n[kFeatPctElectric] = "pct_electric";
    for (int c = 0; c < kCountryCount; ++c) {
      n[kFeatCountryBase + c] = "pct_country_" + detail::feature_token(country_names()[c]);
    }
    n[kFeatPctForeign] = "pct_foreign";
    for (int b = 0; b < kBodyTypeCount; ++b) {
      n[kFeatBodyBase + b] = "pct_body_" + detail::feature_token(body_type_names()[b]);
    }
    for (size_t y = 0; y < kYearBucketCount; ++y) {
      const int lo = 1990 + static_cast<int>(y) * 5;
      n[kFeatYearBase + y] = "pct_year_" + std::to_string(lo) + "_" + std::to_string(lo + 4);
    }
    for (int m = 0; m < kMakeCount; ++m) {
      n[kFeatMakeBase + m] = "pct_make_" + detail::feature_token(make_names()[m]);
    }
    return n;
  }();
  return names;
}

// A region's post-threshold detections plus how many images produced them.
struct RegionCensus {
  std::string region_id;
  uint64_t image_count = 0;
  std::vector<Detection> detections;
};

// Highest-probability class hypothesis; ties break toward the
// lexicographically smaller category_id.
inline std::string resolve_category(const Detection& d) {
  if (d.class_hypotheses.empty()) {
    throw ValidationError("detection in image " + d.image_id + " has no class hypotheses");
  }
  const ClassHypothesis* best = &d.class_hypotheses[0];
  for (const ClassHypothesis& h : d.class_hypotheses) {
    if (h.probability > best->probability ||
        (h.probability == best->probability && h.category_id < best->category_id)) {
      best = &h;
    }
  }
  return best->category_id;
}

// Aggregates a census into the fixed feature layout. By default each
// detection counts once under its top-1 category. With probability_weighted
// set, every class hypothesis contributes its probability (scaled by the
// calibrated detection probability when present) instead.
inline FeatureVector aggregate_features(const RegionCensus& census, const Catalog& catalog,
                                        bool probability_weighted = false) {
  if (census.detections.empty()) {
    throw ValidationError("region " + census.region_id + " has no detections to aggregate");
  }
  if (census.image_count == 0) {
    throw ValidationError("region " + census.region_id + " has image_count = 0");
  }

  double total = 0;
  double price_sum = 0;
  double city_mpg_sum = 0, city_mpg_w = 0;
  double highway_mpg_sum = 0, highway_mpg_w = 0;
  double hybrid_w = 0, electric_w = 0;
  std::array<double, kCountryCount> country_w{};
  std::array<double, kBodyTypeCount> body_w{};
  std::array<double, kYearBucketCount> year_w{};
  std::array<double, kMakeCount> make_w{};

  auto add_car = [&](const VehicleCategory& cat, double weight) {
    total += weight;
    price_sum += cat.price_usd * weight;
    if (cat.city_mpg) {
      city_mpg_sum += *cat.city_mpg * weight;
      city_mpg_w += weight;
    }
    if (cat.highway_mpg) {
      highway_mpg_sum += *cat.highway_mpg * weight;
      highway_mpg_w += weight;
    }
    if (cat.is_hybrid) hybrid_w += weight;
    if (cat.is_electric) electric_w += weight;
    country_w[cat.country] += weight;
    body_w[cat.body_type] += weight;
    year_w[static_cast<size_t>((cat.year_min - 1990) / 5)] += weight;
    make_w[cat.make] += weight;
  };

  for (const Detection& d : census.detections) {
    if (probability_weighted) {
      if (d.class_hypotheses.empty()) {
        throw ValidationError("detection in image " + d.image_id + " has no class hypotheses");
      }
      const double det_w = d.calibrated_prob ? *d.calibrated_prob : 1.0;
      for (const ClassHypothesis& h : d.class_hypotheses) {
        add_car(catalog.at(h.category_id), det_w * h.probability);
      }
    } else {
      add_car(catalog.at(resolve_category(d)), 1.0);
    }
  }
  if (total <= 0) {
    throw ValidationError("region " + census.region_id + " has zero total detection weight");
  }

  FeatureVector f{};
  f[kFeatCarsPerImage] = total / static_cast<double>(census.image_count);
  f[kFeatAvgPrice] = price_sum / total;
  f[kFeatAvgCityMpg] = city_mpg_w > 0 ? city_mpg_sum / city_mpg_w : 0.0;
  f[kFeatAvgHighwayMpg] = highway_mpg_w > 0 ? highway_mpg_sum / highway_mpg_w : 0.0;
  f[kFeatPctHybrid] = 100.0 * hybrid_w / total;
  f[kFeatPctElectric] = 100.0 * electric_w / total;
  for (int c = 0; c < kCountryCount; ++c) f[kFeatCountryBase + c] = 100.0 * country_w[c] / total;
  f[kFeatPctForeign] = 100.0 - f[kFeatCountryBase + kCountryUsaIndex];
  for (int b = 0; b < kBodyTypeCount; ++b) f[kFeatBodyBase + b] = 100.0 * body_w[b] / total;
  for (size_t y = 0; y < kYearBucketCount; ++y) f[kFeatYearBase + y] = 100.0 * year_w[y] / total;
  for (int m = 0; m < kMakeCount; ++m) f[kFeatMakeBase + m] = 100.0 * make_w[m] / total;
  return f;
}

struct FeatureRow {
  std::string region_id;
  FeatureVector values{};
};

inline const std::vector<std::string>& features_csv_header() {
  static const std::vector<std::string> header = [] {
    std::vector<std::string> h = {"region_id"};
    for (const std::string& name : feature_names()) h.push_back(name);
    return h;
  }();
  return header;
}

inline std::string features_to_csv(const std::vector<FeatureRow>& rows) {
  std::string out = join_csv(features_csv_header());
  out += '\n';
  for (const FeatureRow& r : rows) {
    out += r.region_id;
    for (double v : r.values) {
      out += ',';
      out += format_double(v);
    }
    out += '\n';
  }
  return out;
}

inline std::vector<FeatureRow> read_features_csv(const std::filesystem::path& path) {
  const CsvTable table = read_csv(path, features_csv_header());
  std::vector<FeatureRow> rows;
  rows.reserve(table.rows.size());
  for (const CsvRow& row : table.rows) {
    FeatureRow r;
    r.region_id = row.fields[0];
    for (size_t i = 0; i < kFeatureCount; ++i) {
      auto v = parse_double(row.fields[i + 1]);
      if (!v) throw row_error(table, row, "malformed number in " + features_csv_header()[i + 1]);
      r.values[i] = *v;
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace carcensus
