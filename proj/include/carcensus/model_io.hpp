#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "carcensus/estimator.hpp"
#include "carcensus/features.hpp"
#include "carcensus/util.hpp"

namespace carcensus {

inline constexpr std::string_view kModelFormatVersion = "carcensus-model-v1";

// A trained estimator for one target, together with the target name and the
// feature layout it was fitted against.
struct TrainedModel {
  std::string target;
  std::string feature_layout{kFeatureLayoutVersion};
  std::variant<RidgeModel, SoftmaxModel> model;

  bool is_ridge() const { return std::holds_alternative<RidgeModel>(model); }
  const RidgeModel& ridge() const { return std::get<RidgeModel>(model); }
  const SoftmaxModel& softmax() const { return std::get<SoftmaxModel>(model); }
};

namespace detail {

inline nlohmann::ordered_json standardizer_to_json(const Standardizer& s) {
  nlohmann::ordered_json j;
  j["mean"] = s.mean;
  j["std"] = s.std_dev;
  return j;
}

inline Standardizer standardizer_from_json(const nlohmann::json& j) {
  Standardizer s;
  s.mean = j.at("mean").get<std::vector<double>>();
  s.std_dev = j.at("std").get<std::vector<double>>();
  if (s.mean.size() != s.std_dev.size()) throw ValidationError("model: standardizer size mismatch");
  for (double v : s.std_dev) {
    if (!(v > 0)) throw ValidationError("model: standardizer std must be > 0");
  }
  return s;
}

}  // namespace detail

inline std::string model_to_json(const TrainedModel& m) {
  nlohmann::ordered_json j;
  j["format"] = kModelFormatVersion;
  j["feature_layout"] = m.feature_layout;
  j["target"] = m.target;
  if (m.is_ridge()) {
    const RidgeModel& r = m.ridge();
    j["type"] = "ridge";
    j["lambda"] = r.lambda;
    j["standardizer"] = detail::standardizer_to_json(r.standardizer);
    j["weights"] = r.weights;
    j["intercept"] = r.intercept;
    j["clip_lo"] = r.clip_lo;
    j["clip_hi"] = r.clip_hi;
  } else {
    const SoftmaxModel& s = m.softmax();
    j["type"] = "softmax";
    j["lambda"] = s.lambda;
    j["standardizer"] = detail::standardizer_to_json(s.standardizer);
    j["class_labels"] = s.class_labels;
    auto weights = nlohmann::ordered_json::array();
    for (size_t cl = 0; cl < s.weights.rows(); ++cl) {
      weights.push_back(std::vector<double>(s.weights.row(cl), s.weights.row(cl) + s.weights.cols()));
    }
    j["weights"] = std::move(weights);
    j["intercepts"] = s.intercepts;
  }
  return j.dump(2) + "\n";
}

inline TrainedModel model_from_json_text(const std::string& text, const std::string& context) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(context + ": " + e.what());
  }
  TrainedModel m;
  try {
    if (j.at("format").get<std::string>() != kModelFormatVersion) {
      throw ValidationError(context + ": unsupported model format");
    }
    m.feature_layout = j.at("feature_layout").get<std::string>();
    m.target = j.at("target").get<std::string>();
    const std::string type = j.at("type").get<std::string>();
    if (type == "ridge") {
      RidgeModel r;
      r.lambda = j.at("lambda").get<double>();
      r.standardizer = detail::standardizer_from_json(j.at("standardizer"));
      r.weights = j.at("weights").get<std::vector<double>>();
      r.intercept = j.at("intercept").get<double>();
      r.clip_lo = j.at("clip_lo").get<double>();
      r.clip_hi = j.at("clip_hi").get<double>();
      if (r.clip_lo > r.clip_hi) throw ValidationError(context + ": clip_lo > clip_hi");
      m.model = std::move(r);
    } else if (type == "softmax") {
      SoftmaxModel s;
      s.lambda = j.at("lambda").get<double>();
      s.standardizer = detail::standardizer_from_json(j.at("standardizer"));
      s.class_labels = j.at("class_labels").get<std::vector<std::string>>();
      const auto rows = j.at("weights").get<std::vector<std::vector<double>>>();
      if (rows.empty() || rows.size() != s.class_labels.size()) {
        throw ValidationError(context + ": weight row count mismatch");
      }
      s.weights = Matrix(rows.size(), rows[0].size());
      for (size_t cl = 0; cl < rows.size(); ++cl) {
        if (rows[cl].size() != rows[0].size()) throw ValidationError(context + ": ragged weights");
        for (size_t c = 0; c < rows[cl].size(); ++c) s.weights(cl, c) = rows[cl][c];
      }
      s.intercepts = j.at("intercepts").get<std::vector<double>>();
      if (s.intercepts.size() != s.class_labels.size()) {
        throw ValidationError(context + ": intercept count mismatch");
      }
      m.model = std::move(s);
    } else {
      throw ValidationError(context + ": unknown model type \"" + type + "\"");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(context + ": " + e.what());
  }
  return m;
}

inline TrainedModel read_model_json(const std::filesystem::path& path) {
  return model_from_json_text(read_text_file(path), path.string());
}

}  // namespace carcensus
