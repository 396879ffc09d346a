#pragma once

#include <algorithm>
#include <filesystem>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "carcensus/util.hpp"

namespace carcensus {

// Monotone map from detection score to probability of the detection being
// correct. Fitting solves the least-squares problem
//     minimize sum_i w_i (y_i - p_i)^2   subject to p_i <= p_{i+1}
// over scores sorted ascending; evaluation interpolates linearly between the
// fitted knots and extrapolates with the boundary values, so outputs always
// stay inside [0, 1].
struct IsotonicMap {
  struct Knot {
    double score = 0;
    double prob = 0;
  };
  std::vector<Knot> knots;  // scores strictly increasing, probs nondecreasing

  double calibrate(double score) const {
    if (knots.empty()) throw ValidationError("calibrate: map has no knots");
    if (score <= knots.front().score) return knots.front().prob;
    if (score >= knots.back().score) return knots.back().prob;
    size_t lo = 0, hi = knots.size() - 1;
    while (hi - lo > 1) {
      const size_t mid = (lo + hi) / 2;
      if (score < knots[mid].score) hi = mid;
      else lo = mid;
    }
    const double t = (score - knots[lo].score) / (knots[hi].score - knots[lo].score);
    return knots[lo].prob + t * (knots[hi].prob - knots[lo].prob);
  }
};

// Pool-adjacent-violators on real-valued targets with weights. Scores are
// sorted ascending and tied scores merged into one weighted point before
// pooling, so the resulting knot scores are strictly increasing.
inline IsotonicMap fit_isotonic_weighted(const std::vector<double>& scores,
                                         const std::vector<double>& targets,
                                         const std::vector<double>& weights) {
  if (scores.empty()) throw ValidationError("fit_isotonic: empty input");
  if (scores.size() != targets.size() || (!weights.empty() && weights.size() != scores.size())) {
    throw ValidationError("fit_isotonic: length mismatch");
  }

  std::vector<size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return scores[a] < scores[b]; });

  // Merge tied scores by weighted target mean.
  std::vector<double> s, y, w;
  for (size_t idx : order) {
    const double wi = weights.empty() ? 1.0 : weights[idx];
    if (!s.empty() && scores[idx] == s.back()) {
      const double total = w.back() + wi;
      y.back() = (y.back() * w.back() + targets[idx] * wi) / total;
      w.back() = total;
    } else {
      s.push_back(scores[idx]);
      y.push_back(targets[idx]);
      w.push_back(wi);
    }
  }

  // Weighted block stack; pooling on strict violations yields the unique
  // minimizer after the tie merge.
  struct Block {
    double mean, weight;
    size_t count;  // merged points covered
  };
  std::vector<Block> blocks;
  for (size_t i = 0; i < s.size(); ++i) {
    blocks.push_back({y[i], w[i], 1});
    while (blocks.size() >= 2 && blocks[blocks.size() - 2].mean > blocks.back().mean) {
      const Block top = blocks.back();
      blocks.pop_back();
      Block& prev = blocks.back();
      const double total = prev.weight + top.weight;
      prev.mean = (prev.mean * prev.weight + top.mean * top.weight) / total;
      prev.weight = total;
      prev.count += top.count;
    }
  }

  IsotonicMap map;
  map.knots.reserve(s.size());
  size_t pos = 0;
  for (const Block& b : blocks) {
    for (size_t k = 0; k < b.count; ++k, ++pos) {
      map.knots.push_back({s[pos], b.mean});
    }
  }
  return map;
}

inline IsotonicMap fit_isotonic(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) throw ValidationError("fit_isotonic: length mismatch");
  std::vector<double> targets;
  targets.reserve(labels.size());
  for (int y : labels) {
    if (y != 0 && y != 1) throw ValidationError("fit_isotonic: labels must be 0 or 1");
    targets.push_back(static_cast<double>(y));
  }
  return fit_isotonic_weighted(scores, targets, {});
}

inline IsotonicMap read_calibration_json(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  IsotonicMap map;
  try {
    for (const auto& knot : j.at("knots")) {
      if (!knot.is_array() || knot.size() != 2) {
        throw ParseError(path.string() + ": knots must be [score, prob] pairs");
      }
      map.knots.push_back({knot[0].get<double>(), knot[1].get<double>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  if (map.knots.empty()) throw ValidationError(path.string() + ": calibration has no knots");
  for (size_t i = 0; i < map.knots.size(); ++i) {
    if (map.knots[i].prob < 0 || map.knots[i].prob > 1) {
      throw ValidationError(path.string() + ": knot probability outside [0,1]");
    }
    if (i > 0) {
      if (!(map.knots[i].score > map.knots[i - 1].score)) {
        throw ValidationError(path.string() + ": knot scores must be strictly increasing");
      }
      if (map.knots[i].prob < map.knots[i - 1].prob) {
        throw ValidationError(path.string() + ": knot probabilities must be nondecreasing");
      }
    }
  }
  return map;
}

inline std::string calibration_to_json(const IsotonicMap& map) {
  nlohmann::ordered_json j;
  auto knots = nlohmann::ordered_json::array();
  for (const IsotonicMap::Knot& k : map.knots) {
    knots.push_back({k.score, k.prob});
  }
  j["knots"] = std::move(knots);
  return j.dump(2) + "\n";
}

}  // namespace carcensus
