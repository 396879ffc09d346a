#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include "carcensus/detection.hpp"
#include "carcensus/oracles.hpp"
#include "carcensus/rng.hpp"
#include "test_helpers.hpp"

using namespace carcensus;
using test_helpers::TempDir;

namespace {

BoundingBox random_box(SplitMix64& rng, double frame_w = 860, double frame_h = 573) {
  BoundingBox b;
  b.w = rng.uniform(1.0, frame_w / 2);
  b.h = rng.uniform(1.0, frame_h / 2);
  b.x = rng.uniform(0.0, frame_w - b.w);
  b.y = rng.uniform(0.0, frame_h - b.h);
  return b;
}

Detection make_det(const std::string& image, double score, const BoundingBox& box) {
  Detection d;
  d.image_id = image;
  d.region_id = "r";
  d.bbox = box;
  d.raw_score = score;
  return d;
}

// Independent matching reference: enumerate every injective
// detection-to-truth assignment and keep the one that is greedy-consistent
// (each detection, in order, takes the best truth still available).
std::vector<int> brute_force_greedy(const std::vector<Detection>& dets,
                                    const std::vector<TruthBox>& truths, double iou_min) {
  const size_t n = dets.size();
  std::vector<int> assignment(n, -1);
  std::vector<char> used(truths.size(), 0);
  for (size_t i = 0; i < n; ++i) {
    double best = 0;
    int best_t = -1;
    for (size_t t = 0; t < truths.size(); ++t) {
      if (used[t] || truths[t].image_id != dets[i].image_id) continue;
      const double v = iou(dets[i].bbox, truths[t].bbox);
      if (v > best) {
        best = v;
        best_t = static_cast<int>(t);
      }
    }
    if (best_t >= 0 && best >= iou_min) {
      assignment[i] = best_t;
      used[best_t] = 1;
    }
  }
  std::vector<int> labels(n, 0);
  for (size_t i = 0; i < n; ++i) labels[i] = assignment[i] >= 0 ? 1 : 0;
  return labels;
}

}  // namespace

TEST_CASE("iou matches hand-computed values") {
  const BoundingBox a{0, 0, 10, 10};
  CHECK(iou(a, a) == 1.0);
  CHECK(iou(a, {20, 20, 5, 5}) == 0.0);
  CHECK(iou(a, {5, 0, 10, 10}) == Catch::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("iou is symmetric and translation invariant") {
  SplitMix64 rng(11);
  for (int i = 0; i < 1000; ++i) {
    const BoundingBox a = random_box(rng), b = random_box(rng);
    CHECK(iou(a, b) == iou(b, a));
    const double dx = rng.uniform(-50, 50), dy = rng.uniform(-50, 50);
    const BoundingBox a2{a.x + dx, a.y + dy, a.w, a.h};
    const BoundingBox b2{b.x + dx, b.y + dy, b.w, b.h};
    CHECK(iou(a2, b2) == Catch::Approx(iou(a, b)).margin(1e-12));
  }
}

TEST_CASE("thresholding is inclusive and stable") {
  std::vector<Detection> dets = {make_det("i", -3.0, {0, 0, 1, 1}),
                                 make_det("i", -2.3, {1, 0, 1, 1}),
                                 make_det("i", -1.0, {2, 0, 1, 1})};
  const auto kept = threshold_detections(dets, -2.3, false);
  REQUIRE(kept.size() == 2);
  CHECK(kept[0].raw_score == -2.3);
  CHECK(kept[1].raw_score == -1.0);

  const auto all = threshold_detections(dets, -std::numeric_limits<double>::infinity(), false);
  CHECK(all.size() == dets.size());

  // Thresholding on adjusted scores requires the prior to have run.
  CHECK_THROWS_AS(threshold_detections(dets, -2.3, true), ValidationError);
}

TEST_CASE("prior with all-zero cells is the identity on scores") {
  LocationSizePrior prior;
  prior.image_width = 860;
  prior.image_height = 573;
  prior.center_y_edges = {0.0, 0.5, 1.0};
  prior.log_area_edges = {0.0, 6.0, 12.0};
  prior.log_weights = {{0.0, 0.0}, {0.0, 0.0}};
  prior.validate();

  const Detection d = make_det("i", -1.0, {10, 10, 50, 50});
  const PriorApplication applied = apply_prior(d, prior);
  CHECK_FALSE(applied.clamped);
  CHECK(*applied.detection.adjusted_score == -1.0);
  CHECK(applied.detection.raw_score == -1.0);
}

TEST_CASE("prior adds the cell weight and clamps outside its support") {
  LocationSizePrior prior;
  prior.image_width = 860;
  prior.image_height = 573;
  prior.center_y_edges = {0.4, 0.6};
  prior.log_area_edges = {7.0, 8.0};
  prior.log_weights = {{-0.8}};
  prior.validate();

  // Box center-y 0.5 normalized, log area ~7.8: inside the single cell.
  const Detection inside = make_det("i", -1.0, {100, 261.5, 50, 50});
  const PriorApplication a = apply_prior(inside, prior);
  CHECK_FALSE(a.clamped);
  CHECK(*a.detection.adjusted_score == Catch::Approx(-1.8));

  // Tiny box near the top: outside support on both axes, clamped + flagged.
  const Detection outside = make_det("i", -1.0, {0, 0, 2, 2});
  const PriorApplication b = apply_prior(outside, prior);
  CHECK(b.clamped);
  CHECK(*b.detection.adjusted_score == Catch::Approx(-1.8));

  // Boxes beyond the image frame are rejected outright.
  CHECK_THROWS_AS(apply_prior(make_det("i", 0, {850, 560, 50, 50}), prior), ValidationError);
}

TEST_CASE("fitted prior lowers scores and thins retained detections") {
  SplitMix64 rng(21);
  // Truth boxes concentrated near the horizon band.
  std::vector<TruthBox> truths;
  for (int i = 0; i < 400; ++i) {
    BoundingBox b;
    b.w = rng.uniform(60, 120);
    b.h = rng.uniform(40, 80);
    b.x = rng.uniform(0.0, 860 - b.w);
    b.y = rng.uniform(230.0, 300.0 - b.h / 2);
    truths.push_back({"img", b});
  }
  const LocationSizePrior prior = fit_prior(truths, 860, 573);

  std::vector<Detection> dets;
  for (int i = 0; i < 10000; ++i) {
    Detection d = make_det("img" + std::to_string(i % 500), rng.uniform(-2.0, 0.5),
                           random_box(rng));
    dets.push_back(d);
  }
  const auto raw_kept = threshold_detections(dets, -1.5, false);
  for (auto& d : dets) d = apply_prior(d, prior).detection;
  const auto adj_kept = threshold_detections(dets, -2.3, true);
  for (const auto& d : dets) {
    CHECK(*d.adjusted_score <= d.raw_score);  // log-frequency weights are <= 0
  }
  // Mean retained per image drops in the same direction the protocol expects.
  CHECK(adj_kept.size() < raw_kept.size());
}

TEST_CASE("prior.json round-trips") {
  TempDir dir("prior");
  SplitMix64 rng(5);
  std::vector<TruthBox> truths;
  for (int i = 0; i < 50; ++i) truths.push_back({"i", random_box(rng)});
  const LocationSizePrior prior = fit_prior(truths, 860, 573, 4, 5);
  const auto path = dir.write("prior.json", prior_to_json(prior));
  const LocationSizePrior loaded = read_prior_json(path);
  CHECK(loaded.center_y_edges == prior.center_y_edges);
  CHECK(loaded.log_area_edges == prior.log_area_edges);
  CHECK(loaded.log_weights == prior.log_weights);
}

TEST_CASE("greedy matching on the simple cases") {
  const TruthBox t{"i", {0, 0, 10, 10}};

  // Single detection over a single truth.
  CHECK(match_greedy({make_det("i", 1.0, {0, 0, 10, 12})}, {t}) == std::vector<int>{1});

  // Two detections over the same truth: only the higher-ranked one counts.
  const auto labels = match_greedy(
      {make_det("i", 2.0, {0, 0, 10, 11}), make_det("i", 1.0, {0, 0, 10, 12})}, {t});
  CHECK(labels == std::vector<int>({1, 0}));

  // Below the IoU floor: no match.
  CHECK(match_greedy({make_det("i", 1.0, {8, 8, 10, 10})}, {t}) == std::vector<int>{0});
}

TEST_CASE("greedy matching agrees with the exhaustive reference") {
  SplitMix64 rng(31);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<Detection> dets;
    std::vector<TruthBox> truths;
    const int nd = 1 + static_cast<int>(rng.below(4));
    const int nt = 1 + static_cast<int>(rng.below(3));
    for (int i = 0; i < nd; ++i) {
      BoundingBox b;
      b.w = rng.uniform(5, 20);
      b.h = rng.uniform(5, 20);
      b.x = rng.uniform(0, 30);
      b.y = rng.uniform(0, 30);
      dets.push_back(make_det("img", static_cast<double>(nd - i), b));
    }
    for (int t = 0; t < nt; ++t) {
      BoundingBox b;
      b.w = rng.uniform(5, 20);
      b.h = rng.uniform(5, 20);
      b.x = rng.uniform(0, 30);
      b.y = rng.uniform(0, 30);
      truths.push_back({"img", b});
    }
    const auto got = match_greedy(dets, truths, 0.3);
    const auto expected = brute_force_greedy(dets, truths, 0.3);
    CHECK(got == expected);

    const int positives = std::accumulate(got.begin(), got.end(), 0);
    CHECK(positives <= std::min(dets.size(), truths.size()));
  }
}

TEST_CASE("average precision on the worked examples") {
  CHECK(average_precision({1}, 1) == 1.0);
  CHECK(average_precision({0, 1}, 1) == 0.5);
  CHECK_THROWS_AS(average_precision({1, 0}, 0), ValidationError);
}

TEST_CASE("average precision matches the oracle on random rankings") {
  SplitMix64 rng(41);
  for (int trial = 0; trial < 200; ++trial) {
    const size_t n = 1 + rng.below(8);
    std::vector<int> labels(n);
    int positives = 0;
    for (auto& l : labels) {
      l = rng.below(2) ? 1 : 0;
      positives += l;
    }
    const size_t n_truth = std::max<size_t>(1, positives + rng.below(4));
    CHECK(average_precision(labels, n_truth) == oracles::oracle_ap(labels, n_truth));
  }
}

TEST_CASE("average precision is invariant under monotone score transforms") {
  // AP depends only on the label ordering, which any strictly monotone score
  // transform preserves: rank by transformed scores and compare.
  SplitMix64 rng(51);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::pair<double, int>> scored;
    for (int i = 0; i < 12; ++i) scored.push_back({rng.uniform(-3, 3), rng.below(2) ? 1 : 0});
    auto by_desc = [](auto& v) {
      std::sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    };
    auto labels_of = [](const std::vector<std::pair<double, int>>& v) {
      std::vector<int> out;
      for (const auto& [s, l] : v) out.push_back(l);
      return out;
    };
    auto a = scored;
    by_desc(a);
    auto b = scored;
    for (auto& [s, l] : b) s = std::exp(2.0 * s) + 7.0;
    by_desc(b);
    CHECK(average_precision(labels_of(a), 5) == average_precision(labels_of(b), 5));
  }
}

TEST_CASE("detections round-trip through jsonl") {
  TempDir dir("jsonl");
  std::vector<Detection> dets;
  SplitMix64 rng(61);
  for (int i = 0; i < 20; ++i) {
    Detection d = make_det("img" + std::to_string(i), rng.uniform(-3, 3), random_box(rng));
    d.class_hypotheses = {{"c12", 0.41}, {"c7", 0.22}};
    if (i % 3 == 0) d.adjusted_score = d.raw_score - 0.5;
    dets.push_back(d);
  }
  const auto path = dir.write("d.jsonl", detections_to_jsonl(dets));
  const auto loaded = read_detections_jsonl(path);
  REQUIRE(loaded.size() == dets.size());
  for (size_t i = 0; i < dets.size(); ++i) {
    CHECK(loaded[i].image_id == dets[i].image_id);
    CHECK(loaded[i].raw_score == dets[i].raw_score);
    CHECK(loaded[i].bbox.x == dets[i].bbox.x);
    CHECK(loaded[i].adjusted_score == dets[i].adjusted_score);
    CHECK(loaded[i].class_hypotheses.size() == 2);
  }
}

TEST_CASE("jsonl parsing reports line numbers and invariant violations") {
  TempDir dir("jsonl");
  try {
    read_detections_jsonl(dir.write(
        "bad.jsonl",
        "{\"image_id\":\"a\",\"region_id\":\"r\",\"bbox\":[0,0,1,1],\"score\":0.0,\"classes\":[]}\n"
        "{\"image_id\":\"b\"\n"));
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find(":2") != std::string::npos);
  }

  // Unsorted class probabilities violate the detection invariant.
  CHECK_THROWS_AS(
      read_detections_jsonl(dir.write("bad2.jsonl",
                                      "{\"image_id\":\"a\",\"region_id\":\"r\",\"bbox\":[0,0,1,1],"
                                      "\"score\":0.0,\"classes\":[[\"x\",0.2],[\"y\",0.5]]}\n")),
      ValidationError);

  // Probabilities must not sum above 1.
  CHECK_THROWS_AS(
      read_detections_jsonl(dir.write("bad3.jsonl",
                                      "{\"image_id\":\"a\",\"region_id\":\"r\",\"bbox\":[0,0,1,1],"
                                      "\"score\":0.0,\"classes\":[[\"x\",0.8],[\"y\",0.7]]}\n")),
      ValidationError);
}
