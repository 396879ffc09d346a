#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "carcensus/csv.hpp"
#include "carcensus/util.hpp"

namespace carcensus {

inline constexpr double kEarthRadiusM = 6371000.0;
inline constexpr double kPi = 3.14159265358979323846;

inline double deg_to_rad(double deg) { return deg * kPi / 180.0; }
inline double rad_to_deg(double rad) { return rad * 180.0 / kPi; }

struct GpsPoint {
  double lat = 0;  // degrees, [-90, 90]
  double lon = 0;  // degrees, [-180, 180)
};

inline void validate_point(const GpsPoint& p) {
  if (p.lat < -90 || p.lat > 90) throw ValidationError("latitude out of range");
  if (p.lon < -180 || p.lon >= 180) throw ValidationError("longitude out of range");
}

inline double haversine_m(const GpsPoint& a, const GpsPoint& b) {
  const double phi1 = deg_to_rad(a.lat), phi2 = deg_to_rad(b.lat);
  const double dphi = phi2 - phi1;
  const double dlambda = deg_to_rad(b.lon - a.lon);
  const double s = std::sin(dphi / 2) * std::sin(dphi / 2) +
                   std::cos(phi1) * std::cos(phi2) * std::sin(dlambda / 2) * std::sin(dlambda / 2);
  return 2.0 * kEarthRadiusM * std::asin(std::min(1.0, std::sqrt(s)));
}

// Square grid of candidate acquisition points centered on `center`, built on
// a locally flat projection: one northward degree step per spacing_m meters,
// eastward steps scaled by cos(center latitude). Rows run south to north,
// columns west to east; (side/spacing + 1)^2 points in total.
inline std::vector<GpsPoint> generate_grid(const GpsPoint& center, double side_m = 20000.0,
                                           double spacing_m = 25.0) {
  validate_point(center);
  if (side_m <= 0 || spacing_m <= 0) throw ValidationError("grid: side and spacing must be > 0");
  const double ratio = side_m / spacing_m;
  const long long steps = std::llround(ratio);
  if (steps < 1 || std::abs(ratio - static_cast<double>(steps)) > 1e-9) {
    throw ValidationError("grid: side_m must be an integer multiple of spacing_m");
  }
  if (std::abs(center.lat) > 89.0) {
    throw ValidationError("grid: center within 1 degree of a pole");
  }

  const double dlat = rad_to_deg(spacing_m / kEarthRadiusM);
  const double dlon = rad_to_deg(spacing_m / (kEarthRadiusM * std::cos(deg_to_rad(center.lat))));
  const double half = static_cast<double>(steps) / 2.0;

  std::vector<GpsPoint> points;
  points.reserve(static_cast<size_t>((steps + 1) * (steps + 1)));
  for (long long i = 0; i <= steps; ++i) {
    const double lat = center.lat + (static_cast<double>(i) - half) * dlat;
    for (long long j = 0; j <= steps; ++j) {
      points.push_back({lat, center.lon + (static_cast<double>(j) - half) * dlon});
    }
  }
  return points;
}

// Distance-to-nearest-road oracle; implementations may be remote and may
// fail per point.
using RoadOracle = std::function<double(const GpsPoint&)>;

struct RoadFilterFailure {
  size_t index = 0;
  GpsPoint point;
  std::string message;
};

struct RoadFilterOutcome {
  std::vector<GpsPoint> kept;  // input order preserved
  std::vector<RoadFilterFailure> failures;
};

// Keeps points within max_dist_m of a road (inclusive). Oracle calls may run
// on up to n_threads workers; results are committed by input index so the
// output order never depends on scheduling.
inline RoadFilterOutcome filter_near_road(std::span<const GpsPoint> points,
                                          const RoadOracle& oracle, double max_dist_m = 12.5,
                                          unsigned n_threads = 1) {
  const size_t n = points.size();
  std::vector<std::optional<double>> distances(n);
  std::vector<std::optional<std::string>> errors(n);

  auto work = [&](size_t begin, size_t end) {
    for (size_t i = begin; i < end; ++i) {
      try {
        distances[i] = oracle(points[i]);
      } catch (const std::exception& e) {
        errors[i] = e.what();
      } catch (...) {
        errors[i] = "unknown oracle failure";
      }
    }
  };

  if (n_threads <= 1 || n < 2) {
    work(0, n);
  } else {
    const size_t workers = std::min<size_t>(n_threads, n);
    std::vector<std::thread> threads;
    const size_t chunk = (n + workers - 1) / workers;
    for (size_t w = 0; w < workers; ++w) {
      const size_t begin = w * chunk;
      const size_t end = std::min(n, begin + chunk);
      if (begin < end) threads.emplace_back(work, begin, end);
    }
    for (std::thread& t : threads) t.join();
  }

  RoadFilterOutcome out;
  for (size_t i = 0; i < n; ++i) {
    if (errors[i]) {
      out.failures.push_back({i, points[i], *errors[i]});
    } else if (*distances[i] <= max_dist_m) {
      out.kept.push_back(points[i]);
    }
  }
  return out;
}

// Camera acquisition plan: six rotations covering 360 degrees uniformly.
// With a 90-degree horizontal field of view, adjacent views overlap by 30
// degrees.
struct CameraPlan {
  GpsPoint point;
  std::array<double, 6> headings_deg = {0, 60, 120, 180, 240, 300};
  int image_width = 860;
  int image_height = 573;
  double hfov_deg = 90;
};

inline CameraPlan rotations(const GpsPoint& point) {
  validate_point(point);
  CameraPlan plan;
  plan.point = point;
  return plan;
}

struct PanoPixel {
  double x = 0;
  double y = 0;
  bool clamped = false;  // mapped beyond the panorama's vertical range
};

// Maps a rectilinear output pixel back to equirectangular panorama
// coordinates. The output pixel is cast as a ray through a pinhole with
// focal length (out_w/2)/tan(hfov/2); the ray's yaw/pitch then index the
// panorama linearly (x: 360 degrees across pano_w, y: +90..-90 degrees of
// pitch across pano_h).
inline PanoPixel unwarp(double pano_w, double pano_h, double heading_deg, double u, double v,
                        double out_w = 860.0, double out_h = 573.0, double hfov_deg = 90.0) {
  if (pano_w <= 0 || pano_h <= 0) throw ValidationError("unwarp: panorama size must be positive");
  if (u < 0 || u > out_w || v < 0 || v > out_h) {
    throw ValidationError("unwarp: pixel outside the output frame");
  }
  const double focal = (out_w / 2.0) / std::tan(deg_to_rad(hfov_deg / 2.0));
  const double du = u - out_w / 2.0;
  const double dv = v - out_h / 2.0;

  const double yaw_deg = heading_deg + rad_to_deg(std::atan2(du, focal));
  const double pitch_deg = rad_to_deg(std::atan2(-dv, std::hypot(focal, du)));

  double yaw_wrapped = std::fmod(yaw_deg, 360.0);
  if (yaw_wrapped < 0) yaw_wrapped += 360.0;

  PanoPixel out;
  out.x = yaw_wrapped / 360.0 * pano_w;
  out.y = (90.0 - pitch_deg) / 180.0 * pano_h;
  if (out.y < 0) {
    out.y = 0;
    out.clamped = true;
  } else if (out.y > pano_h) {
    out.y = pano_h;
    out.clamped = true;
  }
  return out;
}

struct RoadSegment {
  GpsPoint a;
  GpsPoint b;
};

inline const std::vector<std::string>& roads_csv_header() {
  static const std::vector<std::string> header = {"lat1", "lon1", "lat2", "lon2"};
  return header;
}

inline std::vector<RoadSegment> read_roads_csv(const std::filesystem::path& path) {
  const CsvTable table = read_csv(path, roads_csv_header());
  std::vector<RoadSegment> segments;
  segments.reserve(table.rows.size());
  for (const CsvRow& row : table.rows) {
    std::array<double, 4> vals{};
    for (int i = 0; i < 4; ++i) {
      auto v = parse_double(row.fields[i]);
      if (!v) throw row_error(table, row, "malformed coordinate");
      vals[i] = *v;
    }
    RoadSegment s{{vals[0], vals[1]}, {vals[2], vals[3]}};
    validate_point(s.a);
    validate_point(s.b);
    segments.push_back(s);
  }
  return segments;
}

// Distance in meters from a point to the nearest of a set of road segments,
// computed on a flat projection anchored at the query point.
class PolylineRoadOracle {
 public:
  explicit PolylineRoadOracle(std::vector<RoadSegment> segments)
      : segments_(std::move(segments)) {
    if (segments_.empty()) throw ValidationError("road oracle: no segments");
  }

  double operator()(const GpsPoint& p) const {
    const double coslat = std::cos(deg_to_rad(p.lat));
    const double meters_per_deg = kEarthRadiusM * kPi / 180.0;
    double best = std::numeric_limits<double>::infinity();
    for (const RoadSegment& s : segments_) {
      const double ax = (s.a.lon - p.lon) * coslat * meters_per_deg;
      const double ay = (s.a.lat - p.lat) * meters_per_deg;
      const double bx = (s.b.lon - p.lon) * coslat * meters_per_deg;
      const double by = (s.b.lat - p.lat) * meters_per_deg;
      const double dx = bx - ax, dy = by - ay;
      const double len_sq = dx * dx + dy * dy;
      double t = 0;
      if (len_sq > 0) t = std::clamp(-(ax * dx + ay * dy) / len_sq, 0.0, 1.0);
      const double cx = ax + t * dx, cy = ay + t * dy;
      best = std::min(best, std::hypot(cx, cy));
    }
    return best;
  }

 private:
  std::vector<RoadSegment> segments_;
};

// points.csv: decimal degrees with 7 fractional digits.
inline std::string points_to_csv(std::span<const GpsPoint> points) {
  std::string out = "lat,lon\n";
  char buf[64];
  for (const GpsPoint& p : points) {
    std::snprintf(buf, sizeof(buf), "%.7f,%.7f\n", p.lat, p.lon);
    out += buf;
  }
  return out;
}

inline std::vector<GpsPoint> read_points_csv(const std::filesystem::path& path) {
  const CsvTable table = read_csv(path, {"lat", "lon"});
  std::vector<GpsPoint> points;
  points.reserve(table.rows.size());
  for (const CsvRow& row : table.rows) {
    auto lat = parse_double(row.fields[0]);
    auto lon = parse_double(row.fields[1]);
    if (!lat || !lon) throw row_error(table, row, "malformed coordinate");
    GpsPoint p{*lat, *lon};
    validate_point(p);
    points.push_back(p);
  }
  return points;
}

}  // namespace carcensus
