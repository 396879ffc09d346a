#include <algorithm>
#include <numeric>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include "carcensus/features.hpp"
#include "carcensus/rng.hpp"
#include "carcensus/synth.hpp"
#include "test_helpers.hpp"

using namespace carcensus;
using test_helpers::TempDir;

namespace {

VehicleCategory category(const std::string& id, const char* make, const char* body,
                         const char* country, int year_min, double price, double city_mpg,
                         double highway_mpg) {
  VehicleCategory c;
  c.category_id = id;
  c.make = *index_of(make_names(), make);
  c.model = "m";
  c.body_type = *index_of(body_type_names(), body);
  c.country = *index_of(country_names(), country);
  c.year_min = year_min;
  c.year_max = std::min(year_min + 2, 2014);
  c.price_usd = price;
  c.city_mpg = city_mpg;
  c.highway_mpg = highway_mpg;
  return c;
}

Detection det_of(const std::string& cat_id, double top_prob = 0.9) {
  Detection d;
  d.image_id = "img";
  d.region_id = "r";
  d.bbox = {0, 0, 60, 60};
  d.raw_score = 0;
  d.class_hypotheses = {{cat_id, top_prob}};
  return d;
}

Catalog two_car_catalog() {
  return Catalog({category("honda", "Honda", "sedan", "Japan", 1992, 10000, 20, 30),
                  category("ford", "Ford", "truck-regular", "USA", 2011, 30000, 15, 20)});
}

void check_group_sums(const FeatureVector& f) {
  double country = 0, body = 0, year = 0, make = 0;
  for (int c = 0; c < kCountryCount; ++c) country += f[kFeatCountryBase + c];
  for (int b = 0; b < kBodyTypeCount; ++b) body += f[kFeatBodyBase + b];
  for (size_t y = 0; y < kYearBucketCount; ++y) year += f[kFeatYearBase + y];
  for (int m = 0; m < kMakeCount; ++m) make += f[kFeatMakeBase + m];
  CHECK(country == Catch::Approx(100.0).margin(1e-6));
  CHECK(body == Catch::Approx(100.0).margin(1e-6));
  CHECK(year == Catch::Approx(100.0).margin(1e-6));
  CHECK(make == Catch::Approx(100.0).margin(1e-6));
  CHECK(f[kFeatPctForeign] ==
        Catch::Approx(100.0 - f[kFeatCountryBase + kCountryUsaIndex]).margin(1e-6));
}

}  // namespace

TEST_CASE("layout is frozen at 88 named components") {
  CHECK(kFeatureCount == 88);
  CHECK(feature_names().size() == 88);
  CHECK(feature_names()[0] == "cars_per_image");
  CHECK(feature_names()[13] == "pct_foreign");
  CHECK(feature_names()[14] == "pct_body_convertible");
  CHECK(feature_names()[24] == "pct_body_wagon");
  CHECK(feature_names()[25] == "pct_year_1990_1994");
  CHECK(feature_names()[30] == "pct_make_acura");
  CHECK(feature_names()[87] == "pct_make_volvo");
}

TEST_CASE("category resolution picks the argmax with lexicographic ties") {
  Detection d = det_of("c7", 0.6);
  d.class_hypotheses.push_back({"c2", 0.3});
  CHECK(resolve_category(d) == "c7");

  Detection tie = det_of("b", 0.5);
  tie.class_hypotheses.push_back({"a", 0.5});
  CHECK(resolve_category(tie) == "a");

  CHECK(resolve_category(det_of("only", 0.4)) == "only");

  Detection empty;
  empty.image_id = "x";
  CHECK_THROWS_AS(resolve_category(empty), ValidationError);
}

TEST_CASE("single-car census aggregates to the obvious vector") {
  const Catalog catalog = two_car_catalog();
  RegionCensus census;
  census.region_id = "r";
  census.image_count = 2;
  census.detections = {det_of("honda")};

  const FeatureVector f = aggregate_features(census, catalog);
  CHECK(f[kFeatCarsPerImage] == 0.5);
  CHECK(f[kFeatAvgPrice] == 10000.0);
  CHECK(f[kFeatAvgCityMpg] == 20.0);
  CHECK(f[kFeatAvgHighwayMpg] == 30.0);
  CHECK(f[kFeatCountryBase + *index_of(country_names(), "Japan")] == 100.0);
  CHECK(f[kFeatPctForeign] == 100.0);
  CHECK(f[kFeatBodyBase + *index_of(body_type_names(), "sedan")] == 100.0);
  CHECK(f[kFeatYearBase + 0] == 100.0);
  CHECK(f[kFeatMakeBase + *index_of(make_names(), "Honda")] == 100.0);
  check_group_sums(f);
}

TEST_CASE("two-car census reproduces the hand-computed aggregate") {
  const Catalog catalog = two_car_catalog();
  RegionCensus census;
  census.region_id = "r";
  census.image_count = 4;
  census.detections = {det_of("honda"), det_of("ford")};

  const FeatureVector f = aggregate_features(census, catalog);
  CHECK(f[kFeatCarsPerImage] == 0.5);
  CHECK(f[kFeatAvgPrice] == 20000.0);
  CHECK(f[kFeatAvgCityMpg] == 17.5);
  CHECK(f[kFeatAvgHighwayMpg] == 25.0);
  CHECK(f[kFeatCountryBase + *index_of(country_names(), "Japan")] == 50.0);
  CHECK(f[kFeatCountryBase + kCountryUsaIndex] == 50.0);
  CHECK(f[kFeatPctForeign] == 50.0);
  CHECK(f[kFeatBodyBase + *index_of(body_type_names(), "sedan")] == 50.0);
  CHECK(f[kFeatBodyBase + *index_of(body_type_names(), "truck-regular")] == 50.0);
  CHECK(f[kFeatYearBase + 0] == 50.0);
  CHECK(f[kFeatYearBase + 4] == 50.0);
  CHECK(f[kFeatMakeBase + *index_of(make_names(), "Honda")] == 50.0);
  CHECK(f[kFeatMakeBase + *index_of(make_names(), "Ford")] == 50.0);
  check_group_sums(f);
}

TEST_CASE("year buckets use the minimum year") {
  Catalog catalog({category("c", "Honda", "sedan", "Japan", 1994, 10000, 20, 30)});
  RegionCensus census;
  census.region_id = "r";
  census.image_count = 1;
  census.detections = {det_of("c")};
  const FeatureVector f = aggregate_features(census, catalog);
  CHECK(f[kFeatYearBase + 0] == 100.0);  // 1994-1996 category lands in 1990-1994
  CHECK(f[kFeatYearBase + 1] == 0.0);
}

TEST_CASE("electric cars without mpg are excluded from the mpg means") {
  VehicleCategory electric;
  electric.category_id = "ev";
  electric.make = *index_of(make_names(), "Tesla");
  electric.body_type = *index_of(body_type_names(), "sedan");
  electric.country = kCountryUsaIndex;
  electric.year_min = 2012;
  electric.year_max = 2014;
  electric.price_usd = 70000;
  electric.is_electric = true;
  Catalog catalog({category("gas", "Honda", "sedan", "Japan", 1992, 10000, 20, 30), electric});

  RegionCensus census;
  census.region_id = "r";
  census.image_count = 1;
  census.detections = {det_of("gas"), det_of("ev")};
  const FeatureVector f = aggregate_features(census, catalog);
  CHECK(f[kFeatAvgCityMpg] == 20.0);       // only the gas car has mpg
  CHECK(f[kFeatAvgPrice] == 40000.0);      // price averages over both
  CHECK(f[kFeatPctElectric] == 50.0);

  // All-electric census: no mpg values at all.
  census.detections = {det_of("ev")};
  const FeatureVector g = aggregate_features(census, catalog);
  CHECK(g[kFeatAvgCityMpg] == 0.0);
  CHECK(g[kFeatAvgHighwayMpg] == 0.0);
}

TEST_CASE("aggregation rejects empty censuses and unknown categories") {
  const Catalog catalog = two_car_catalog();
  RegionCensus census;
  census.region_id = "r";
  census.image_count = 1;
  CHECK_THROWS_AS(aggregate_features(census, catalog), ValidationError);
  census.detections = {det_of("mystery")};
  CHECK_THROWS_AS(aggregate_features(census, catalog), ValidationError);
  census.detections = {det_of("honda")};
  census.image_count = 0;
  CHECK_THROWS_AS(aggregate_features(census, catalog), ValidationError);
}

TEST_CASE("aggregation is order-invariant and scale-invariant") {
  const Catalog catalog = builtin_catalog();
  SplitMix64 rng(73);
  for (int trial = 0; trial < 20; ++trial) {
    RegionCensus census;
    census.region_id = "r";
    census.image_count = 1 + rng.below(40);
    const size_t n = 1 + rng.below(60);
    for (size_t i = 0; i < n; ++i) {
      census.detections.push_back(
          det_of(catalog.categories()[rng.below(catalog.size())].category_id));
    }
    const FeatureVector base = aggregate_features(census, catalog);

    RegionCensus shuffled = census;
    rng.shuffle(shuffled.detections);
    const FeatureVector reordered = aggregate_features(shuffled, catalog);
    for (size_t j = 0; j < kFeatureCount; ++j) {
      CHECK(reordered[j] == Catch::Approx(base[j]).margin(1e-9));
    }

    RegionCensus doubled = census;
    doubled.image_count *= 2;
    doubled.detections.insert(doubled.detections.end(), census.detections.begin(),
                              census.detections.end());
    const FeatureVector scaled = aggregate_features(doubled, catalog);
    for (size_t j = 0; j < kFeatureCount; ++j) {
      CHECK(scaled[j] == Catch::Approx(base[j]).margin(1e-9));
    }
  }
}

TEST_CASE("group sums hold on fuzzed censuses and absent kinds stay zero") {
  const Catalog catalog = builtin_catalog();
  SplitMix64 rng(79);
  for (int trial = 0; trial < 200; ++trial) {
    RegionCensus census;
    census.region_id = "r";
    census.image_count = 1 + rng.below(50);
    const size_t n = 1 + rng.below(80);
    std::vector<char> make_present(kMakeCount, 0);
    for (size_t i = 0; i < n; ++i) {
      const auto& cat = catalog.categories()[rng.below(catalog.size())];
      make_present[cat.make] = 1;
      census.detections.push_back(det_of(cat.category_id));
    }
    const FeatureVector f = aggregate_features(census, catalog);
    check_group_sums(f);
    for (int m = 0; m < kMakeCount; ++m) {
      if (!make_present[m]) CHECK(f[kFeatMakeBase + m] == 0.0);
    }
  }
}

TEST_CASE("probability-weighted mode keeps the group invariants") {
  const Catalog catalog = builtin_catalog();
  SplitMix64 rng(83);
  RegionCensus census;
  census.region_id = "r";
  census.image_count = 10;
  for (int i = 0; i < 40; ++i) {
    Detection d = det_of(catalog.categories()[rng.below(catalog.size())].category_id, 0.6);
    d.class_hypotheses.push_back(
        {catalog.categories()[rng.below(catalog.size())].category_id, 0.3});
    d.calibrated_prob = rng.uniform(0.2, 1.0);
    census.detections.push_back(d);
  }
  const FeatureVector f = aggregate_features(census, catalog, /*probability_weighted=*/true);
  check_group_sums(f);
  CHECK(f[kFeatCarsPerImage] < 4.0);  // weights < 1 per detection
}

TEST_CASE("features csv round-trips") {
  TempDir dir("features");
  const Catalog catalog = two_car_catalog();
  RegionCensus census;
  census.region_id = "r1";
  census.image_count = 4;
  census.detections = {det_of("honda"), det_of("ford")};
  std::vector<FeatureRow> rows = {{"r1", aggregate_features(census, catalog)}};
  const auto path = dir.write("features.csv", features_to_csv(rows));
  const auto loaded = read_features_csv(path);
  REQUIRE(loaded.size() == 1);
  CHECK(loaded[0].region_id == "r1");
  CHECK(loaded[0].values == rows[0].values);
}
