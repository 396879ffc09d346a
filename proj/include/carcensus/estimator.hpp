#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "carcensus/linalg.hpp"
#include "carcensus/rng.hpp"
#include "carcensus/util.hpp"

namespace carcensus {

// Training protocol shared by the ridge and softmax estimators:
//   - features standardized to zero mean / unit population std, parameters
//     fit once on the full training set;
//   - 5-fold cross validation picks one global regularization strength
//     (smallest mean held-out loss, earlier grid entry on ties);
//   - the final model averages the five fold models' parameters at that
//     strength;
//   - ridge predictions are clipped to the training target range.

struct Standardizer {
  std::vector<double> mean;
  std::vector<double> std_dev;  // > 0; zero-variance columns stored as 1

  bool empty() const { return mean.empty(); }

  void apply_in_place(std::span<double> x) const {
    if (empty()) return;
    if (x.size() != mean.size()) throw ValidationError("standardizer: dimension mismatch");
    for (size_t j = 0; j < x.size(); ++j) x[j] = (x[j] - mean[j]) / std_dev[j];
  }

  std::vector<double> apply_row(std::span<const double> x) const {
    std::vector<double> out(x.begin(), x.end());
    apply_in_place(out);
    return out;
  }

  Matrix apply(const Matrix& x) const {
    Matrix out = x;
    if (empty()) return out;
    if (x.cols() != mean.size()) throw ValidationError("standardizer: dimension mismatch");
    for (size_t i = 0; i < out.rows(); ++i) {
      apply_in_place(std::span<double>(out.row(i), out.cols()));
    }
    return out;
  }
};

// Per-column mean and population standard deviation; constant columns are
// assigned std 1 so they standardize to exactly 0.
inline Standardizer fit_standardizer(const Matrix& x) {
  if (x.rows() < 2) throw ValidationError("fit_standardizer: need at least 2 rows");
  const size_t n = x.rows(), d = x.cols();
  Standardizer s;
  s.mean.assign(d, 0.0);
  s.std_dev.assign(d, 0.0);
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = 0; j < d; ++j) s.mean[j] += x(i, j);
  }
  for (size_t j = 0; j < d; ++j) s.mean[j] /= static_cast<double>(n);
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = 0; j < d; ++j) {
      const double dv = x(i, j) - s.mean[j];
      s.std_dev[j] += dv * dv;
    }
  }
  for (size_t j = 0; j < d; ++j) {
    s.std_dev[j] = std::sqrt(s.std_dev[j] / static_cast<double>(n));
    if (s.std_dev[j] <= 0) s.std_dev[j] = 1.0;
  }
  return s;
}

struct RidgeModel {
  std::vector<double> weights;
  double intercept = 0;
  double lambda = 0;
  Standardizer standardizer;  // empty means inputs are already standardized
  double clip_lo = 0;
  double clip_hi = 0;

  double raw_prediction(std::span<const double> x) const {
    std::vector<double> xs = standardizer.apply_row(x);
    if (xs.size() != weights.size()) throw ValidationError("ridge predict: dimension mismatch");
    double v = intercept;
    for (size_t j = 0; j < weights.size(); ++j) v += weights[j] * xs[j];
    return v;
  }

  double predict(std::span<const double> x) const {
    return std::clamp(raw_prediction(x), clip_lo, clip_hi);
  }
};

// Exact minimizer of ||y - X w - b||^2 + lambda ||w||^2 with an unpenalized
// intercept, via the centered normal equations. X is expected standardized.
// The clip range is set to [min y, max y].
inline RidgeModel fit_ridge(const Matrix& x, const std::vector<double>& y, double lambda) {
  const size_t n = x.rows(), d = x.cols();
  if (n == 0 || y.size() != n) throw ValidationError("fit_ridge: need n > 0 matching rows");
  if (lambda < 0) throw ValidationError("fit_ridge: lambda must be >= 0");
  for (double v : y) {
    if (!std::isfinite(v)) throw ValidationError("fit_ridge: non-finite target");
  }
  for (double v : x.data()) {
    if (!std::isfinite(v)) throw ValidationError("fit_ridge: non-finite feature");
  }

  std::vector<double> xmean(d, 0.0);
  double ymean = 0;
  for (size_t i = 0; i < n; ++i) {
    ymean += y[i];
    for (size_t j = 0; j < d; ++j) xmean[j] += x(i, j);
  }
  ymean /= static_cast<double>(n);
  for (size_t j = 0; j < d; ++j) xmean[j] /= static_cast<double>(n);

  Matrix a(d, d);
  std::vector<double> rhs(d, 0.0);
  for (size_t i = 0; i < n; ++i) {
    const double* row = x.row(i);
    const double yc = y[i] - ymean;
    for (size_t j = 0; j < d; ++j) {
      const double xj = row[j] - xmean[j];
      rhs[j] += xj * yc;
      for (size_t k = j; k < d; ++k) {
        a(j, k) += xj * (row[k] - xmean[k]);
      }
    }
  }
  for (size_t j = 0; j < d; ++j) {
    a(j, j) += lambda;
    for (size_t k = j + 1; k < d; ++k) a(k, j) = a(j, k);
  }

  RidgeModel model;
  model.lambda = lambda;
  model.weights = cholesky_solve(std::move(a), std::move(rhs));
  double shift = 0;
  for (size_t j = 0; j < d; ++j) shift += model.weights[j] * xmean[j];
  model.intercept = ymean - shift;
  const auto [lo, hi] = std::minmax_element(y.begin(), y.end());
  model.clip_lo = *lo;
  model.clip_hi = *hi;
  return model;
}

struct SoftmaxModel {
  std::vector<std::string> class_labels;  // K names
  Matrix weights;                         // K x d
  std::vector<double> intercepts;         // K
  double lambda = 0;
  Standardizer standardizer;

  std::vector<double> predict(std::span<const double> x) const {
    std::vector<double> xs = standardizer.apply_row(x);
    if (xs.size() != weights.cols()) throw ValidationError("softmax predict: dimension mismatch");
    const size_t k = weights.rows();
    std::vector<double> logits(k, 0.0);
    for (size_t c = 0; c < k; ++c) {
      double v = intercepts[c];
      const double* wrow = weights.row(c);
      for (size_t j = 0; j < xs.size(); ++j) v += wrow[j] * xs[j];
      logits[c] = v;
    }
    const double m = *std::max_element(logits.begin(), logits.end());
    double z = 0;
    for (double& v : logits) {
      v = std::exp(v - m);
      z += v;
    }
    for (double& v : logits) v /= z;
    return logits;
  }
};

// Mean cross-entropy between target rows and softmax outputs, plus the
// lambda/2 ||W||^2 penalty (intercepts unpenalized). Returns the loss and
// fills the gradients when requested.
inline double softmax_loss(const Matrix& x, const Matrix& y, const Matrix& w,
                           const std::vector<double>& c, double lambda, Matrix* grad_w = nullptr,
                           std::vector<double>* grad_c = nullptr) {
  const size_t n = x.rows(), d = x.cols(), k = y.cols();
  if (y.rows() != n || w.rows() != k || w.cols() != d || c.size() != k) {
    throw ValidationError("softmax_loss: dimension mismatch");
  }
  if (grad_w) *grad_w = Matrix(k, d);
  if (grad_c) grad_c->assign(k, 0.0);

  double loss = 0;
  std::vector<double> logits(k);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (size_t i = 0; i < n; ++i) {
    const double* xi = x.row(i);
    for (size_t cl = 0; cl < k; ++cl) {
      double v = c[cl];
      const double* wrow = w.row(cl);
      for (size_t j = 0; j < d; ++j) v += wrow[j] * xi[j];
      logits[cl] = v;
    }
    const double m = *std::max_element(logits.begin(), logits.end());
    double z = 0;
    for (size_t cl = 0; cl < k; ++cl) z += std::exp(logits[cl] - m);
    const double log_z = std::log(z) + m;
    for (size_t cl = 0; cl < k; ++cl) {
      const double yik = y(i, cl);
      if (yik > 0) loss -= inv_n * yik * (logits[cl] - log_z);
      if (grad_w || grad_c) {
        const double resid = inv_n * (std::exp(logits[cl] - log_z) - yik);
        if (grad_c) (*grad_c)[cl] += resid;
        if (grad_w) {
          double* grow = grad_w->row(cl);
          for (size_t j = 0; j < d; ++j) grow[j] += resid * xi[j];
        }
      }
    }
  }
  double penalty = 0;
  for (double v : w.data()) penalty += v * v;
  loss += 0.5 * lambda * penalty;
  if (grad_w) {
    for (size_t idx = 0; idx < w.data().size(); ++idx) {
      grad_w->data()[idx] += lambda * w.data()[idx];
    }
  }
  return loss;
}

inline constexpr double kSoftmaxGradTolerance = 1e-6;
inline constexpr int kSoftmaxMaxIterations = 10000;

// Full-batch gradient descent with a backtracking (Armijo) line search.
// Stops when the gradient max-norm drops below 1e-6 or after 10,000
// iterations. Optional warm-start parameters seed the descent.
inline SoftmaxModel fit_softmax(const Matrix& x, const Matrix& y, double lambda,
                                std::vector<std::string> class_labels = {},
                                const SoftmaxModel* warm_start = nullptr) {
  const size_t n = x.rows(), d = x.cols(), k = y.cols();
  if (n == 0 || y.rows() != n) throw ValidationError("fit_softmax: need n > 0 matching rows");
  if (k < 2) throw ValidationError("fit_softmax: need at least 2 classes");
  if (lambda < 0) throw ValidationError("fit_softmax: lambda must be >= 0");
  for (double v : x.data()) {
    if (!std::isfinite(v)) throw ValidationError("fit_softmax: non-finite feature");
  }
  for (size_t i = 0; i < n; ++i) {
    double sum = 0;
    for (size_t cl = 0; cl < k; ++cl) {
      const double v = y(i, cl);
      if (!(v >= -1e-12) || !std::isfinite(v)) {
        throw ValidationError("fit_softmax: target rows must be nonnegative");
      }
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-6) {
      throw ValidationError("fit_softmax: target rows must sum to 1");
    }
  }
  if (class_labels.empty()) {
    for (size_t cl = 0; cl < k; ++cl) class_labels.push_back("class_" + std::to_string(cl));
  }
  if (class_labels.size() != k) throw ValidationError("fit_softmax: class label count mismatch");

  SoftmaxModel model;
  model.class_labels = std::move(class_labels);
  model.lambda = lambda;
  if (warm_start && warm_start->weights.rows() == k && warm_start->weights.cols() == d) {
    model.weights = warm_start->weights;
    model.intercepts = warm_start->intercepts;
  } else {
    model.weights = Matrix(k, d);
    model.intercepts.assign(k, 0.0);
  }

  Matrix grad_w;
  std::vector<double> grad_c;
  double loss = softmax_loss(x, y, model.weights, model.intercepts, lambda, &grad_w, &grad_c);
  double step = 1.0;
  Matrix trial_w(k, d);
  std::vector<double> trial_c(k);

  for (int iter = 0; iter < kSoftmaxMaxIterations; ++iter) {
    double grad_max = 0, grad_sq = 0;
    for (double g : grad_w.data()) {
      grad_max = std::max(grad_max, std::abs(g));
      grad_sq += g * g;
    }
    for (double g : grad_c) {
      grad_max = std::max(grad_max, std::abs(g));
      grad_sq += g * g;
    }
    if (grad_max < kSoftmaxGradTolerance) break;

    // Backtrack until the Armijo condition holds.
    bool accepted = false;
    for (int halving = 0; halving < 60; ++halving) {
      for (size_t idx = 0; idx < trial_w.data().size(); ++idx) {
        trial_w.data()[idx] = model.weights.data()[idx] - step * grad_w.data()[idx];
      }
      for (size_t cl = 0; cl < k; ++cl) trial_c[cl] = model.intercepts[cl] - step * grad_c[cl];
      const double trial_loss = softmax_loss(x, y, trial_w, trial_c, lambda);
      if (trial_loss <= loss - 1e-4 * step * grad_sq) {
        model.weights.data().swap(trial_w.data());
        model.intercepts.swap(trial_c);
        loss = softmax_loss(x, y, model.weights, model.intercepts, lambda, &grad_w, &grad_c);
        step *= 2.0;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;  // step underflow: gradient is numerically flat
  }
  return model;
}

// Deterministic fold assignment: shuffle indices with the seeded generator,
// then deal them round-robin.
inline std::vector<int> make_fold_assignment(size_t n, int folds, uint64_t seed) {
  if (folds < 2) throw ValidationError("cv_train: need folds >= 2");
  if (n < static_cast<size_t>(folds)) throw ValidationError("cv_train: fewer samples than folds");
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  SplitMix64 rng(seed);
  rng.shuffle(order);
  std::vector<int> fold(n, 0);
  for (size_t pos = 0; pos < n; ++pos) fold[order[pos]] = static_cast<int>(pos % folds);
  return fold;
}

namespace detail {

inline Matrix select_rows(const Matrix& x, const std::vector<size_t>& idx) {
  Matrix out(idx.size(), x.cols());
  for (size_t i = 0; i < idx.size(); ++i) {
    for (size_t j = 0; j < x.cols(); ++j) out(i, j) = x(idx[i], j);
  }
  return out;
}

}  // namespace detail

struct CvRidgeResult {
  RidgeModel model;                 // averaged fold models, full standardizer attached
  double best_lambda = 0;
  std::vector<double> mean_losses;  // per grid entry, mean held-out MSE
  std::vector<RidgeModel> fold_models;
};

inline CvRidgeResult cv_train_ridge(const Matrix& x_raw, const std::vector<double>& y,
                                    const std::vector<double>& lambda_grid, int folds,
                                    uint64_t seed,
                                    const std::vector<int>* fold_override = nullptr) {
  const size_t n = x_raw.rows();
  if (lambda_grid.empty()) throw ValidationError("cv_train: empty lambda grid");
  if (y.size() != n) throw ValidationError("cv_train: target length mismatch");

  const Standardizer standardizer = fit_standardizer(x_raw);
  const Matrix xs = standardizer.apply(x_raw);
  const std::vector<int> fold = fold_override ? *fold_override
                                              : make_fold_assignment(n, folds, seed);
  if (fold.size() != n) throw ValidationError("cv_train: fold assignment length mismatch");

  std::vector<std::vector<size_t>> in_fold(folds), out_fold(folds);
  for (size_t i = 0; i < n; ++i) {
    const int f = fold[i];
    if (f < 0 || f >= folds) throw ValidationError("cv_train: fold index out of range");
    in_fold[f].push_back(i);
    for (int g = 0; g < folds; ++g) {
      if (g != f) out_fold[g].push_back(i);
    }
  }
  for (int f = 0; f < folds; ++f) {
    if (in_fold[f].empty()) throw ValidationError("cv_train: empty fold");
  }

  CvRidgeResult result;
  result.mean_losses.assign(lambda_grid.size(), 0.0);
  size_t best = 0;
  for (size_t g = 0; g < lambda_grid.size(); ++g) {
    double mean_loss = 0;
    for (int f = 0; f < folds; ++f) {
      Matrix xt = detail::select_rows(xs, out_fold[f]);
      std::vector<double> yt;
      yt.reserve(out_fold[f].size());
      for (size_t i : out_fold[f]) yt.push_back(y[i]);
      const RidgeModel m = fit_ridge(xt, yt, lambda_grid[g]);
      double sse = 0;
      for (size_t i : in_fold[f]) {
        const double pred = std::clamp(
            std::inner_product(m.weights.begin(), m.weights.end(), xs.row(i), m.intercept),
            m.clip_lo, m.clip_hi);
        const double diff = pred - y[i];
        sse += diff * diff;
      }
      mean_loss += sse / static_cast<double>(in_fold[f].size());
    }
    result.mean_losses[g] = mean_loss / folds;
    if (result.mean_losses[g] < result.mean_losses[best]) best = g;
  }
  result.best_lambda = lambda_grid[best];

  RidgeModel averaged;
  averaged.lambda = result.best_lambda;
  averaged.weights.assign(xs.cols(), 0.0);
  for (int f = 0; f < folds; ++f) {
    Matrix xt = detail::select_rows(xs, out_fold[f]);
    std::vector<double> yt;
    for (size_t i : out_fold[f]) yt.push_back(y[i]);
    RidgeModel m = fit_ridge(xt, yt, result.best_lambda);
    for (size_t j = 0; j < averaged.weights.size(); ++j) averaged.weights[j] += m.weights[j];
    averaged.intercept += m.intercept;
    result.fold_models.push_back(std::move(m));
  }
  for (double& w : averaged.weights) w /= folds;
  averaged.intercept /= folds;
  const auto [lo, hi] = std::minmax_element(y.begin(), y.end());
  averaged.clip_lo = *lo;
  averaged.clip_hi = *hi;
  averaged.standardizer = standardizer;
  result.model = std::move(averaged);
  return result;
}

struct CvSoftmaxResult {
  SoftmaxModel model;
  double best_lambda = 0;
  std::vector<double> mean_losses;  // per grid entry, mean held-out cross-entropy
  std::vector<SoftmaxModel> fold_models;
};

inline CvSoftmaxResult cv_train_softmax(const Matrix& x_raw, const Matrix& y,
                                        const std::vector<double>& lambda_grid, int folds,
                                        uint64_t seed, std::vector<std::string> class_labels = {},
                                        const std::vector<int>* fold_override = nullptr) {
  const size_t n = x_raw.rows();
  if (lambda_grid.empty()) throw ValidationError("cv_train: empty lambda grid");
  if (y.rows() != n) throw ValidationError("cv_train: target length mismatch");

  const Standardizer standardizer = fit_standardizer(x_raw);
  const Matrix xs = standardizer.apply(x_raw);
  const std::vector<int> fold = fold_override ? *fold_override
                                              : make_fold_assignment(n, folds, seed);
  if (fold.size() != n) throw ValidationError("cv_train: fold assignment length mismatch");

  std::vector<std::vector<size_t>> in_fold(folds), out_fold(folds);
  for (size_t i = 0; i < n; ++i) {
    const int f = fold[i];
    if (f < 0 || f >= folds) throw ValidationError("cv_train: fold index out of range");
    in_fold[f].push_back(i);
    for (int g = 0; g < folds; ++g) {
      if (g != f) out_fold[g].push_back(i);
    }
  }
  for (int f = 0; f < folds; ++f) {
    if (in_fold[f].empty()) throw ValidationError("cv_train: empty fold");
  }

  // Evaluate the grid from the most to the least regularized value,
  // warm-starting each fit from the previous solution on the same fold.
  std::vector<size_t> eval_order(lambda_grid.size());
  std::iota(eval_order.begin(), eval_order.end(), 0);
  std::sort(eval_order.begin(), eval_order.end(),
            [&](size_t a, size_t b) { return lambda_grid[a] > lambda_grid[b]; });

  CvSoftmaxResult result;
  result.mean_losses.assign(lambda_grid.size(), 0.0);
  std::vector<SoftmaxModel> warm(folds);
  std::vector<Matrix> fold_x(folds);
  std::vector<Matrix> fold_y(folds);
  for (int f = 0; f < folds; ++f) {
    fold_x[f] = detail::select_rows(xs, out_fold[f]);
    fold_y[f] = detail::select_rows(y, out_fold[f]);
  }

  for (size_t rank = 0; rank < eval_order.size(); ++rank) {
    const size_t g = eval_order[rank];
    double mean_loss = 0;
    for (int f = 0; f < folds; ++f) {
      const SoftmaxModel* init = rank == 0 ? nullptr : &warm[f];
      SoftmaxModel m = fit_softmax(fold_x[f], fold_y[f], lambda_grid[g], class_labels, init);
      // Held-out mean cross-entropy.
      double ce = 0;
      for (size_t i : in_fold[f]) {
        const std::vector<double> p = [&] {
          std::vector<double> logits(y.cols());
          for (size_t cl = 0; cl < y.cols(); ++cl) {
            double v = m.intercepts[cl];
            const double* wrow = m.weights.row(cl);
            for (size_t j = 0; j < xs.cols(); ++j) v += wrow[j] * xs(i, j);
            logits[cl] = v;
          }
          const double mx = *std::max_element(logits.begin(), logits.end());
          double z = 0;
          for (double& v : logits) {
            v = std::exp(v - mx);
            z += v;
          }
          for (double& v : logits) v /= z;
          return logits;
        }();
        for (size_t cl = 0; cl < y.cols(); ++cl) {
          if (y(i, cl) > 0) ce -= y(i, cl) * std::log(std::max(p[cl], 1e-300));
        }
      }
      mean_loss += ce / static_cast<double>(in_fold[f].size());
      warm[f] = std::move(m);
    }
    result.mean_losses[g] = mean_loss / folds;
  }

  size_t best = 0;
  for (size_t g = 1; g < lambda_grid.size(); ++g) {
    if (result.mean_losses[g] < result.mean_losses[best]) best = g;
  }
  result.best_lambda = lambda_grid[best];

  SoftmaxModel averaged;
  averaged.lambda = result.best_lambda;
  averaged.weights = Matrix(y.cols(), xs.cols());
  averaged.intercepts.assign(y.cols(), 0.0);
  for (int f = 0; f < folds; ++f) {
    SoftmaxModel m = fit_softmax(fold_x[f], fold_y[f], result.best_lambda, class_labels, &warm[f]);
    for (size_t idx = 0; idx < averaged.weights.data().size(); ++idx) {
      averaged.weights.data()[idx] += m.weights.data()[idx];
    }
    for (size_t cl = 0; cl < y.cols(); ++cl) averaged.intercepts[cl] += m.intercepts[cl];
    result.fold_models.push_back(std::move(m));
  }
  for (double& v : averaged.weights.data()) v /= folds;
  for (double& v : averaged.intercepts) v /= folds;
  averaged.class_labels = result.fold_models[0].class_labels;
  averaged.standardizer = standardizer;
  result.model = std::move(averaged);
  return result;
}

}  // namespace carcensus
