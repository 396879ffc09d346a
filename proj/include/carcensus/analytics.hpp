#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "carcensus/util.hpp"

namespace carcensus {

// Regularized incomplete beta function I_x(a, b) by the continued-fraction
// expansion (modified Lentz), with the symmetry switch for fast convergence.
inline double incomplete_beta(double a, double b, double x) {
  if (x <= 0) return 0;
  if (x >= 1) return 1;

  auto continued_fraction = [](double a_, double b_, double x_) {
    const double tiny = 1e-300;
    const double qab = a_ + b_, qap = a_ + 1, qam = a_ - 1;
    double c = 1.0;
    double d = 1.0 - qab * x_ / qap;
    if (std::abs(d) < tiny) d = tiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= 300; ++m) {
      const double m2 = 2.0 * m;
      double aa = m * (b_ - m) * x_ / ((qam + m2) * (a_ + m2));
      d = 1.0 + aa * d;
      if (std::abs(d) < tiny) d = tiny;
      c = 1.0 + aa / c;
      if (std::abs(c) < tiny) c = tiny;
      d = 1.0 / d;
      h *= d * c;
      aa = -(a_ + m) * (qab + m) * x_ / ((a_ + m2) * (qap + m2));
      d = 1.0 + aa * d;
      if (std::abs(d) < tiny) d = tiny;
      c = 1.0 + aa / c;
      if (std::abs(c) < tiny) c = tiny;
      d = 1.0 / d;
      const double del = d * c;
      h *= del;
      if (std::abs(del - 1.0) < 1e-15) break;
    }
    return h;
  };

  const double front = std::exp(std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                                a * std::log(x) + b * std::log1p(-x));
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return front * continued_fraction(a, b, x) / a;
  }
  return 1.0 - front * continued_fraction(b, a, 1.0 - x) / b;
}

// Two-sided p-value of a t statistic with the given degrees of freedom:
// p = I_{nu/(nu+t^2)}(nu/2, 1/2).
inline double student_t_two_sided_p(double t, double dof) {
  if (dof <= 0) throw ValidationError("t-test: degrees of freedom must be > 0");
  if (!std::isfinite(t)) return 0;
  const double x = dof / (dof + t * t);
  return incomplete_beta(dof / 2.0, 0.5, x);
}

struct PearsonResult {
  double r = 0;
  double p_value = 1;
};

// Sample Pearson correlation with the two-sided t-test p-value
// (t = r sqrt((n-2)/(1-r^2)), n-2 degrees of freedom).
inline PearsonResult pearson(std::span<const double> xs, std::span<const double> ys) {
  const size_t n = xs.size();
  if (ys.size() != n) throw ValidationError("pearson: length mismatch");
  if (n < 3) throw ValidationError("pearson: need at least 3 samples");

  double mx = 0, my = 0;
  for (size_t i = 0; i < n; ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);

  double sxx = 0, syy = 0, sxy = 0;
  for (size_t i = 0; i < n; ++i) {
    const double dx = xs[i] - mx, dy = ys[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx <= 0 || syy <= 0) {
    throw ValidationError("pearson: correlation undefined for a constant input");
  }

  PearsonResult result;
  result.r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  const double dof = static_cast<double>(n - 2);
  const double denom = 1.0 - result.r * result.r;
  if (denom <= 0) {
    result.p_value = 0;
  } else {
    const double t = result.r * std::sqrt(dof / denom);
    result.p_value = student_t_two_sided_p(t, dof);
  }
  return result;
}

// Share > 0.5 classifies a precinct Democrat; exactly 0.5 counts Republican.
inline double precinct_accuracy(std::span<const double> predicted,
                                std::span<const double> actual) {
  if (predicted.size() != actual.size()) throw ValidationError("precinct_accuracy: length mismatch");
  if (predicted.empty()) throw ValidationError("precinct_accuracy: empty input");
  size_t matches = 0;
  for (size_t i = 0; i < predicted.size(); ++i) {
    if ((predicted[i] > 0.5) == (actual[i] > 0.5)) ++matches;
  }
  return static_cast<double>(matches) / static_cast<double>(predicted.size());
}

struct CityTally {
  std::string city_id;
  uint64_t sedans = 0;
  uint64_t pickups = 0;  // all three pickup cab styles combined
  uint64_t obama_votes = 0;
  uint64_t mccain_votes = 0;
};

struct SedanTruckConditionals {
  // Empirical P(Democrat majority | more sedans than pickups) and
  // P(Republican majority | more pickups than sedans). A side is absent when
  // its conditioning set is empty.
  std::optional<double> p_democrat_given_more_sedans;
  std::optional<double> p_republican_given_more_pickups;
  size_t cities_counted = 0;
  size_t ties_excluded = 0;  // equal vehicle counts or split votes
};

inline SedanTruckConditionals sedan_truck_conditionals(std::span<const CityTally> tallies) {
  SedanTruckConditionals out;
  size_t more_sedans = 0, more_pickups = 0;
  size_t dem_and_sedans = 0, rep_and_pickups = 0;
  for (const CityTally& c : tallies) {
    if (c.sedans == c.pickups || c.obama_votes == c.mccain_votes) {
      ++out.ties_excluded;
      continue;
    }
    ++out.cities_counted;
    const bool dem = c.obama_votes > c.mccain_votes;
    if (c.sedans > c.pickups) {
      ++more_sedans;
      if (dem) ++dem_and_sedans;
    } else {
      ++more_pickups;
      if (!dem) ++rep_and_pickups;
    }
  }
  if (more_sedans > 0) {
    out.p_democrat_given_more_sedans =
        static_cast<double>(dem_and_sedans) / static_cast<double>(more_sedans);
  }
  if (more_pickups > 0) {
    out.p_republican_given_more_pickups =
        static_cast<double>(rep_and_pickups) / static_cast<double>(more_pickups);
  }
  return out;
}

inline double mean_absolute_error(std::span<const double> predicted,
                                  std::span<const double> actual) {
  if (predicted.size() != actual.size()) throw ValidationError("mae: length mismatch");
  if (predicted.empty()) throw ValidationError("mae: empty input");
  double sum = 0;
  for (size_t i = 0; i < predicted.size(); ++i) sum += std::abs(predicted[i] - actual[i]);
  return sum / static_cast<double>(predicted.size());
}

struct EvalReport {
  std::string target;
  size_t n = 0;
  double pearson_r = 0;
  double p_value = 1;
  double mae = 0;
  std::optional<double> accuracy;  // present for vote-share classification
};

}  // namespace carcensus
