#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "carcensus/util.hpp"

namespace carcensus {

struct BoundingBox {
  double x = 0;  // top-left corner, pixels
  double y = 0;
  double w = 0;
  double h = 0;

  double area() const { return w * h; }
  double center_y() const { return y + h / 2.0; }
};

// Intersection over union; 0 for disjoint boxes. Exactly symmetric.
inline double iou(const BoundingBox& a, const BoundingBox& b) {
  const double ix = std::max(0.0, std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x));
  const double iy = std::max(0.0, std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y));
  const double inter = ix * iy;
  if (inter <= 0) return 0.0;
  return inter / (a.area() + b.area() - inter);
}

struct ClassHypothesis {
  std::string category_id;
  double probability = 0;
};

inline constexpr size_t kMaxClassHypotheses = 20;

struct Detection {
  std::string image_id;
  std::string region_id;
  BoundingBox bbox;
  double raw_score = 0;
  std::optional<double> adjusted_score;  // raw score plus location-size prior
  std::optional<double> calibrated_prob;
  std::vector<ClassHypothesis> class_hypotheses;  // <= 20, nonincreasing probability

  double score(bool use_adjusted) const {
    if (!use_adjusted) return raw_score;
    if (!adjusted_score) {
      throw ValidationError("detection " + image_id + " has no adjusted score; apply the prior first");
    }
    return *adjusted_score;
  }
};

struct TruthBox {
  std::string image_id;
  BoundingBox bbox;
};

namespace detail {

inline void validate_detection(const Detection& d, const std::string& context) {
  if (d.bbox.w <= 0 || d.bbox.h <= 0) throw ValidationError(context + ": box sides must be > 0");
  if (d.class_hypotheses.size() > kMaxClassHypotheses) {
    throw ValidationError(context + ": more than 20 class hypotheses");
  }
  double sum = 0, prev = 1.0;
  for (const ClassHypothesis& h : d.class_hypotheses) {
    if (h.probability < 0 || h.probability > 1) {
      throw ValidationError(context + ": class probability outside [0,1]");
    }
    if (h.probability > prev) {
      throw ValidationError(context + ": class hypotheses not sorted by probability");
    }
    prev = h.probability;
    sum += h.probability;
  }
  if (sum > 1.0 + 1e-6) throw ValidationError(context + ": class probabilities sum to more than 1");
}

inline BoundingBox bbox_from_json(const nlohmann::json& arr, const std::string& context) {
  if (!arr.is_array() || arr.size() != 4) throw ParseError(context + ": bbox must be [x, y, w, h]");
  BoundingBox b;
  b.x = arr[0].get<double>();
  b.y = arr[1].get<double>();
  b.w = arr[2].get<double>();
  b.h = arr[3].get<double>();
  return b;
}

}  // namespace detail

inline std::vector<Detection> read_detections_jsonl(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  std::vector<Detection> out;
  size_t line_no = 0;
  size_t start = 0;
  while (start < text.size()) {
    size_t end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    std::string_view line(text.data() + start, end - start);
    ++line_no;
    start = end + 1;
    if (trim(line).empty()) continue;
    const std::string context = path.string() + ":" + std::to_string(line_no);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(context + ": " + e.what());
    }
    try {
      Detection d;
      d.image_id = j.at("image_id").get<std::string>();
      d.region_id = j.at("region_id").get<std::string>();
      d.bbox = detail::bbox_from_json(j.at("bbox"), context);
      d.raw_score = j.at("score").get<double>();
      if (j.contains("adjusted_score")) d.adjusted_score = j["adjusted_score"].get<double>();
      if (j.contains("calibrated_prob")) d.calibrated_prob = j["calibrated_prob"].get<double>();
      if (j.contains("classes")) {
        for (const auto& entry : j["classes"]) {
          if (!entry.is_array() || entry.size() != 2) {
            throw ParseError(context + ": classes entries must be [category_id, probability]");
          }
          d.class_hypotheses.push_back(
              {entry[0].get<std::string>(), entry[1].get<double>()});
        }
      }
      detail::validate_detection(d, context);
      out.push_back(std::move(d));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(context + ": " + e.what());
    }
  }
  return out;
}

inline std::string detections_to_jsonl(const std::vector<Detection>& dets) {
  std::string out;
  for (const Detection& d : dets) {
    nlohmann::ordered_json j;
    j["image_id"] = d.image_id;
    j["region_id"] = d.region_id;
    j["bbox"] = {d.bbox.x, d.bbox.y, d.bbox.w, d.bbox.h};
    j["score"] = d.raw_score;
    nlohmann::ordered_json classes = nlohmann::ordered_json::array();
    for (const ClassHypothesis& h : d.class_hypotheses) {
      classes.push_back({h.category_id, h.probability});
    }
    j["classes"] = std::move(classes);
    if (d.adjusted_score) j["adjusted_score"] = *d.adjusted_score;
    if (d.calibrated_prob) j["calibrated_prob"] = *d.calibrated_prob;
    out += j.dump();
    out += '\n';
  }
  return out;
}

inline std::vector<TruthBox> read_truths_jsonl(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  std::vector<TruthBox> out;
  size_t line_no = 0;
  size_t start = 0;
  while (start < text.size()) {
    size_t end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    std::string_view line(text.data() + start, end - start);
    ++line_no;
    start = end + 1;
    if (trim(line).empty()) continue;
    const std::string context = path.string() + ":" + std::to_string(line_no);
    try {
      nlohmann::json j = nlohmann::json::parse(line);
      TruthBox t;
      t.image_id = j.at("image_id").get<std::string>();
      t.bbox = detail::bbox_from_json(j.at("bbox"), context);
      if (t.bbox.w <= 0 || t.bbox.h <= 0) throw ParseError(context + ": box sides must be > 0");
      out.push_back(std::move(t));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(context + ": " + e.what());
    }
  }
  return out;
}

inline std::string truths_to_jsonl(const std::vector<TruthBox>& truths) {
  std::string out;
  for (const TruthBox& t : truths) {
    nlohmann::ordered_json j;
    j["image_id"] = t.image_id;
    j["bbox"] = {t.bbox.x, t.bbox.y, t.bbox.w, t.bbox.h};
    out += j.dump();
    out += '\n';
  }
  return out;
}

// Additive log-weight prior over (normalized vertical box center, log box
// area). Cells are looked up by binary search over the edges; boxes outside
// the histogram support are clamped to the nearest cell and flagged.
struct LocationSizePrior {
  double image_width = 0;
  double image_height = 0;
  std::vector<double> center_y_edges;  // normalized by image height, strictly increasing
  std::vector<double> log_area_edges;  // strictly increasing
  std::vector<std::vector<double>> log_weights;  // [center_y bin][log_area bin]

  void validate() const {
    if (image_width <= 0 || image_height <= 0) throw ValidationError("prior: image size must be positive");
    auto check_edges = [](const std::vector<double>& e, const char* name) {
      if (e.size() < 2) throw ValidationError(std::string("prior: ") + name + " needs at least 2 edges");
      for (size_t i = 1; i < e.size(); ++i) {
        if (!(e[i] > e[i - 1])) {
          throw ValidationError(std::string("prior: ") + name + " must be strictly increasing");
        }
      }
    };
    check_edges(center_y_edges, "center_y_edges");
    check_edges(log_area_edges, "log_area_edges");
    if (log_weights.size() != center_y_edges.size() - 1) {
      throw ValidationError("prior: weight row count does not match center_y bins");
    }
    for (const auto& row : log_weights) {
      if (row.size() != log_area_edges.size() - 1) {
        throw ValidationError("prior: weight column count does not match log_area bins");
      }
      for (double w : row) {
        if (!std::isfinite(w)) throw ValidationError("prior: non-finite cell weight");
      }
    }
  }

  // Returns the bin index for v; sets clamped when v lies outside the edges.
  static size_t locate(const std::vector<double>& edges, double v, bool& clamped) {
    if (v < edges.front()) {
      clamped = true;
      return 0;
    }
    if (v > edges.back()) {
      clamped = true;
      return edges.size() - 2;
    }
    const size_t hi = static_cast<size_t>(std::upper_bound(edges.begin(), edges.end(), v) -
                                          edges.begin());
    return std::min(hi == 0 ? size_t{0} : hi - 1, edges.size() - 2);
  }

  double weight_at(const BoundingBox& b, bool& clamped) const {
    clamped = false;
    const double cy = b.center_y() / image_height;
    const double la = std::log(b.area());
    const size_t yi = locate(center_y_edges, cy, clamped);
    const size_t ai = locate(log_area_edges, la, clamped);
    return log_weights[yi][ai];
  }
};

struct PriorApplication {
  Detection detection;
  bool clamped = false;  // box fell outside the histogram support
};

// adjusted = raw + cell log-weight; the raw score is preserved.
inline PriorApplication apply_prior(const Detection& d, const LocationSizePrior& prior) {
  if (d.bbox.x < 0 || d.bbox.y < 0 || d.bbox.x + d.bbox.w > prior.image_width ||
      d.bbox.y + d.bbox.h > prior.image_height) {
    throw ValidationError("detection box lies outside the prior's image frame");
  }
  PriorApplication result;
  result.detection = d;
  result.detection.adjusted_score = d.raw_score + prior.weight_at(d.bbox, result.clamped);
  return result;
}

// Fits cell weights from the relative frequency of truth boxes:
// log((count + 1) / (max count + 1)), so the densest cell gets offset 0 and
// empty cells a finite negative offset.
inline LocationSizePrior fit_prior(const std::vector<TruthBox>& truths, double image_width,
                                   double image_height, size_t center_y_bins = 8,
                                   size_t log_area_bins = 8) {
  if (truths.empty()) throw ValidationError("cannot fit a prior from zero truth boxes");
  if (center_y_bins == 0 || log_area_bins == 0) throw ValidationError("prior bin counts must be > 0");
  LocationSizePrior p;
  p.image_width = image_width;
  p.image_height = image_height;

  double la_min = std::numeric_limits<double>::infinity();
  double la_max = -std::numeric_limits<double>::infinity();
  for (const TruthBox& t : truths) {
    const double la = std::log(t.bbox.area());
    la_min = std::min(la_min, la);
    la_max = std::max(la_max, la);
  }
  if (la_max <= la_min) la_max = la_min + 1.0;

  for (size_t i = 0; i <= center_y_bins; ++i) {
    p.center_y_edges.push_back(static_cast<double>(i) / static_cast<double>(center_y_bins));
  }
  for (size_t i = 0; i <= log_area_bins; ++i) {
    p.log_area_edges.push_back(la_min + (la_max - la_min) * static_cast<double>(i) /
                                            static_cast<double>(log_area_bins));
  }

  std::vector<std::vector<double>> counts(center_y_bins, std::vector<double>(log_area_bins, 0.0));
  double max_count = 0;
  for (const TruthBox& t : truths) {
    bool clamped = false;
    const double cy = t.bbox.center_y() / image_height;
    const double la = std::log(t.bbox.area());
    const size_t yi = LocationSizePrior::locate(p.center_y_edges, cy, clamped);
    const size_t ai = LocationSizePrior::locate(p.log_area_edges, la, clamped);
    counts[yi][ai] += 1.0;
    max_count = std::max(max_count, counts[yi][ai]);
  }
  p.log_weights.assign(center_y_bins, std::vector<double>(log_area_bins, 0.0));
  for (size_t yi = 0; yi < center_y_bins; ++yi) {
    for (size_t ai = 0; ai < log_area_bins; ++ai) {
      p.log_weights[yi][ai] = std::log((counts[yi][ai] + 1.0) / (max_count + 1.0));
    }
  }
  p.validate();
  return p;
}

inline LocationSizePrior read_prior_json(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  LocationSizePrior p;
  try {
    p.image_width = j.at("image_width").get<double>();
    p.image_height = j.at("image_height").get<double>();
    p.center_y_edges = j.at("center_y_edges").get<std::vector<double>>();
    p.log_area_edges = j.at("log_area_edges").get<std::vector<double>>();
    p.log_weights = j.at("log_weights").get<std::vector<std::vector<double>>>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  p.validate();
  return p;
}

inline std::string prior_to_json(const LocationSizePrior& p) {
  nlohmann::ordered_json j;
  j["image_width"] = p.image_width;
  j["image_height"] = p.image_height;
  j["center_y_edges"] = p.center_y_edges;
  j["log_area_edges"] = p.log_area_edges;
  j["log_weights"] = p.log_weights;
  return j.dump(2) + "\n";
}

// Keeps detections whose chosen score is >= tau (inclusive); input order is
// preserved.
inline std::vector<Detection> threshold_detections(const std::vector<Detection>& dets, double tau,
                                                   bool use_adjusted) {
  std::vector<Detection> out;
  out.reserve(dets.size());
  for (const Detection& d : dets) {
    if (d.score(use_adjusted) >= tau) out.push_back(d);
  }
  return out;
}

// Greedy matching in the given (score-descending) order: each detection
// claims the unmatched truth box of its image with the highest IoU, provided
// IoU >= iou_min; IoU ties go to the earlier truth index. Returns one binary
// label per detection.
inline std::vector<int> match_greedy(const std::vector<Detection>& dets,
                                     const std::vector<TruthBox>& truths, double iou_min = 0.5) {
  std::unordered_map<std::string, std::vector<size_t>> truths_by_image;
  for (size_t t = 0; t < truths.size(); ++t) {
    truths_by_image[truths[t].image_id].push_back(t);
  }
  std::vector<char> matched(truths.size(), 0);
  std::vector<int> labels(dets.size(), 0);
  for (size_t i = 0; i < dets.size(); ++i) {
    auto it = truths_by_image.find(dets[i].image_id);
    if (it == truths_by_image.end()) continue;
    double best_iou = 0;
    size_t best_t = truths.size();
    for (size_t t : it->second) {
      if (matched[t]) continue;
      const double v = iou(dets[i].bbox, truths[t].bbox);
      if (v > best_iou) {  // strict: ties keep the earlier truth index
        best_iou = v;
        best_t = t;
      }
    }
    if (best_t < truths.size() && best_iou >= iou_min) {
      matched[best_t] = 1;
      labels[i] = 1;
    }
  }
  return labels;
}

// Area under the stepwise precision-recall curve: the sum of precision at
// each positive rank, divided by the number of truth boxes.
inline double average_precision(const std::vector<int>& labels, size_t n_truth) {
  if (n_truth == 0) throw ValidationError("average precision is undefined for n_truth = 0");
  double positives = 0;
  double sum = 0;
  for (size_t k = 0; k < labels.size(); ++k) {
    if (labels[k] != 0) {
      positives += 1;
      sum += positives / static_cast<double>(k + 1);
    }
  }
  return sum / static_cast<double>(n_truth);
}

}  // namespace carcensus
