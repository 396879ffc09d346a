#pragma once

// Brute-force reference implementations used to cross-check the numerical
// modules. Each oracle is written from scratch against the mathematical
// definition and shares no code with the implementation it checks:
//   - oracle_isotonic enumerates monotone block partitions instead of
//     running pool-adjacent-violators;
//   - oracle_ridge solves the full augmented normal system by Gaussian
//     elimination with partial pivoting instead of centered Cholesky;
//   - oracle_ap recomputes each precision from scratch instead of keeping a
//     running count;
//   - oracle_pearson accumulates in extended precision and evaluates the
//     t-tail by adaptive quadrature instead of a continued fraction.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "carcensus/util.hpp"

namespace carcensus::oracles {

struct IsotonicSolution {
  std::vector<double> scores;  // distinct scores ascending (ties merged)
  std::vector<double> probs;   // fitted value per score
  double objective = 0;        // weighted squared error at the optimum
};

// Exact isotonic least squares for n <= 12 merged points: enumerate all
// 2^(m-1) contiguous block partitions, value each block at its weighted
// label mean, keep the feasible (nondecreasing) partition with the smallest
// weighted squared error.
inline IsotonicSolution oracle_isotonic(const std::vector<double>& scores,
                                        const std::vector<double>& labels) {
  if (scores.empty() || scores.size() != labels.size()) {
    throw ValidationError("oracle_isotonic: bad input lengths");
  }

  std::vector<size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return scores[a] < scores[b]; });

  IsotonicSolution sol;
  std::vector<double> y, w;
  for (size_t idx : order) {
    if (!sol.scores.empty() && scores[idx] == sol.scores.back()) {
      const double total = w.back() + 1.0;
      y.back() = (y.back() * w.back() + labels[idx]) / total;
      w.back() = total;
    } else {
      sol.scores.push_back(scores[idx]);
      y.push_back(labels[idx]);
      w.push_back(1.0);
    }
  }

  const size_t m = sol.scores.size();
  if (m > 12) throw ValidationError("oracle_isotonic: too many points for enumeration (n > 12)");

  double best_obj = std::numeric_limits<double>::infinity();
  std::vector<double> best(m, 0.0);
  std::vector<double> candidate(m, 0.0);

  const uint64_t masks = m == 1 ? 1 : (uint64_t{1} << (m - 1));
  for (uint64_t mask = 0; mask < masks; ++mask) {
    // Bit b set means a block boundary between points b and b+1.
    double prev_mean = -std::numeric_limits<double>::infinity();
    bool feasible = true;
    double objective = 0;
    size_t block_start = 0;
    for (size_t i = 0; i < m; ++i) {
      const bool boundary = i + 1 == m || (mask >> i) & 1;
      if (!boundary) continue;
      double sum_wy = 0, sum_w = 0;
      for (size_t j = block_start; j <= i; ++j) {
        sum_wy += w[j] * y[j];
        sum_w += w[j];
      }
      const double mean = sum_wy / sum_w;
      if (mean < prev_mean) {
        feasible = false;
        break;
      }
      for (size_t j = block_start; j <= i; ++j) {
        candidate[j] = mean;
        objective += w[j] * (y[j] - mean) * (y[j] - mean);
      }
      prev_mean = mean;
      block_start = i + 1;
    }
    if (feasible && objective < best_obj) {
      best_obj = objective;
      best = candidate;
    }
  }

  sol.probs = std::move(best);
  sol.objective = best_obj;
  return sol;
}

struct RidgeSolution {
  std::vector<double> weights;
  double intercept = 0;
};

// Ridge with an unpenalized intercept, solved on the full (d+1)-dimensional
// augmented normal system by Gaussian elimination with partial pivoting.
inline RidgeSolution oracle_ridge(const std::vector<std::vector<double>>& x,
                                  const std::vector<double>& y, double lambda) {
  const size_t n = x.size();
  if (n == 0 || y.size() != n) throw ValidationError("oracle_ridge: bad input lengths");
  const size_t d = x[0].size();
  if (d > 20) throw ValidationError("oracle_ridge: too many columns for the oracle path (d > 20)");
  for (const auto& row : x) {
    if (row.size() != d) throw ValidationError("oracle_ridge: ragged matrix");
  }

  const size_t dim = d + 1;  // weights then intercept
  std::vector<std::vector<double>> a(dim, std::vector<double>(dim, 0.0));
  std::vector<double> rhs(dim, 0.0);
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = 0; j < d; ++j) {
      for (size_t k = 0; k < d; ++k) a[j][k] += x[i][j] * x[i][k];
      a[j][d] += x[i][j];
      a[d][j] += x[i][j];
      rhs[j] += x[i][j] * y[i];
    }
    a[d][d] += 1.0;
    rhs[d] += y[i];
  }
  for (size_t j = 0; j < d; ++j) a[j][j] += lambda;

  // Forward elimination with partial pivoting.
  double scale = 0;
  for (const auto& row : a) {
    for (double v : row) scale = std::max(scale, std::abs(v));
  }
  for (size_t col = 0; col < dim; ++col) {
    size_t pivot = col;
    for (size_t r = col + 1; r < dim; ++r) {
      if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
    }
    if (std::abs(a[pivot][col]) <= 1e-12 * std::max(scale, 1.0)) {
      throw ValidationError("oracle_ridge: singular system");
    }
    std::swap(a[col], a[pivot]);
    std::swap(rhs[col], rhs[pivot]);
    for (size_t r = col + 1; r < dim; ++r) {
      const double factor = a[r][col] / a[col][col];
      if (factor == 0) continue;
      for (size_t c = col; c < dim; ++c) a[r][c] -= factor * a[col][c];
      rhs[r] -= factor * rhs[col];
    }
  }
  std::vector<double> solution(dim, 0.0);
  for (size_t r = dim; r-- > 0;) {
    double v = rhs[r];
    for (size_t c = r + 1; c < dim; ++c) v -= a[r][c] * solution[c];
    solution[r] = v / a[r][r];
  }

  RidgeSolution out;
  out.weights.assign(solution.begin(), solution.begin() + static_cast<long>(d));
  out.intercept = solution[d];
  return out;
}

// Average precision by explicit precision recounts at every positive rank.
inline double oracle_ap(const std::vector<int>& labels, size_t n_truth) {
  if (n_truth == 0) throw ValidationError("oracle_ap: n_truth must be >= 1");
  if (labels.size() > 20) throw ValidationError("oracle_ap: too many detections for the oracle path");
  double total = 0;
  for (size_t k = 0; k < labels.size(); ++k) {
    if (labels[k] == 0) continue;
    size_t positives_at_k = 0;
    for (size_t j = 0; j <= k; ++j) {
      if (labels[j] != 0) ++positives_at_k;
    }
    total += static_cast<double>(positives_at_k) / static_cast<double>(k + 1);
  }
  return total / static_cast<double>(n_truth);
}

namespace detail {

// Adaptive Simpson quadrature in extended precision.
inline long double simpson(long double fa, long double fm, long double fb, long double a,
                           long double b) {
  return (b - a) / 6.0L * (fa + 4.0L * fm + fb);
}

template <typename F>
inline long double adaptive_simpson(const F& f, long double a, long double b, long double fa,
                                    long double fm, long double fb, long double whole,
                                    long double tol, int depth) {
  const long double m = (a + b) / 2.0L;
  const long double lm = (a + m) / 2.0L, rm = (m + b) / 2.0L;
  const long double flm = f(lm), frm = f(rm);
  const long double left = simpson(fa, flm, fm, a, m);
  const long double right = simpson(fm, frm, fb, m, b);
  if (depth <= 0 || std::abs(left + right - whole) <= 15.0L * tol) {
    return left + right + (left + right - whole) / 15.0L;
  }
  return adaptive_simpson(f, a, m, fa, flm, fm, left, tol / 2.0L, depth - 1) +
         adaptive_simpson(f, m, b, fm, frm, fb, right, tol / 2.0L, depth - 1);
}

template <typename F>
inline long double integrate(const F& f, long double a, long double b, long double tol) {
  const long double fa = f(a), fb = f(b), fm = f((a + b) / 2.0L);
  return adaptive_simpson(f, a, b, fa, fm, fb, simpson(fa, fm, fb, a, b), tol, 60);
}

}  // namespace detail

struct PearsonSolution {
  double r = 0;
  double p = 1;
};

// Pearson correlation in extended precision; the two-sided p-value is the
// regularized incomplete beta I_x(nu/2, 1/2) at x = nu/(nu+t^2), evaluated
// by adaptive quadrature of its defining integral.
inline PearsonSolution oracle_pearson(std::span<const double> xs, std::span<const double> ys) {
  const size_t n = xs.size();
  if (ys.size() != n) throw ValidationError("oracle_pearson: length mismatch");
  if (n < 3) throw ValidationError("oracle_pearson: need at least 3 samples");

  long double mx = 0, my = 0;
  for (size_t i = 0; i < n; ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= static_cast<long double>(n);
  my /= static_cast<long double>(n);
  long double sxx = 0, syy = 0, sxy = 0;
  for (size_t i = 0; i < n; ++i) {
    const long double dx = xs[i] - mx, dy = ys[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx <= 0 || syy <= 0) throw ValidationError("oracle_pearson: constant input");

  long double r = sxy / std::sqrt(sxx * syy);
  if (r > 1.0L) r = 1.0L;
  if (r < -1.0L) r = -1.0L;

  PearsonSolution sol;
  sol.r = static_cast<double>(r);

  const long double nu = static_cast<long double>(n - 2);
  const long double denom = 1.0L - r * r;
  if (denom <= 0) {
    sol.p = 0;
    return sol;
  }
  const long double t = r * std::sqrt(nu / denom);
  if (t == 0) {
    sol.p = 1;
    return sol;
  }
  const long double a = nu / 2.0L, b = 0.5L;
  const long double x = nu / (nu + t * t);
  const long double ln_beta = std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
  const auto integrand = [&](long double u) -> long double {
    if (u <= 0.0L || u >= 1.0L) return 0.0L;
    return std::exp((a - 1.0L) * std::log(u) + (b - 1.0L) * std::log1p(-u) - ln_beta);
  };
  const long double integral = detail::integrate(integrand, 0.0L, x, 1e-16L);
  long double p = integral;
  if (p < 0) p = 0;
  if (p > 1) p = 1;
  sol.p = static_cast<double>(p);
  return sol;
}

}  // namespace carcensus::oracles
