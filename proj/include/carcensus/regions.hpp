#pragma once

#include <array>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "carcensus/csv.hpp"
#include "carcensus/util.hpp"

namespace carcensus {

enum class RegionKind { kCity, kZip, kPrecinct };

inline std::optional<RegionKind> region_kind_from_string(std::string_view s) {
  if (s == "city") return RegionKind::kCity;
  if (s == "zip") return RegionKind::kZip;
  if (s == "precinct") return RegionKind::kPrecinct;
  return std::nullopt;
}

inline std::string_view region_kind_name(RegionKind k) {
  switch (k) {
    case RegionKind::kCity: return "city";
    case RegionKind::kZip: return "zip";
    case RegionKind::kPrecinct: return "precinct";
  }
  return "city";
}

// Race shares: white, black, asian, other (remainder).
inline constexpr std::array<std::string_view, 4> kRaceClassNames = {"white", "black", "asian",
                                                                    "other"};
// Education shares, lowest to highest attainment.
inline constexpr std::array<std::string_view, 5> kEducationClassNames = {
    "less_than_hs", "high_school", "some_college", "bachelors", "graduate"};

struct Region {
  std::string region_id;
  RegionKind kind = RegionKind::kCity;
  std::string city;
  std::string state;
  std::string county;
  uint64_t population = 0;
  std::optional<double> income_median;
  std::optional<std::array<double, 4>> race_shares;  // fractions summing to 1
  std::optional<std::array<double, 5>> edu_shares;   // fractions summing to 1
  std::optional<uint64_t> obama_votes;
  std::optional<uint64_t> mccain_votes;
  // Raw person counts as parsed (white/black/asian, five education levels);
  // kept so serialization is the exact inverse of parsing.
  std::optional<std::array<double, 3>> race_counts;
  std::optional<std::array<double, 5>> edu_counts;

  // Two-candidate share; absent when votes are missing or both counts are 0.
  std::optional<double> vote_share() const {
    if (!obama_votes || !mccain_votes) return std::nullopt;
    const uint64_t total = *obama_votes + *mccain_votes;
    if (total == 0) return std::nullopt;
    return static_cast<double>(*obama_votes) / static_cast<double>(total);
  }
};

enum class SplitSide { kTrain, kTest };

struct SplitAssignment {
  std::string region_id;
  SplitSide side = SplitSide::kTrain;
};

// Counties with initials A-C train the models; D-Z are held out. The first
// character is matched case-insensitively after trimming whitespace.
inline SplitSide county_side(std::string_view county) {
  const std::string trimmed = trim(county);
  if (trimmed.empty()) throw ValidationError("empty county name");
  const unsigned char first = static_cast<unsigned char>(trimmed[0]);
  if (!std::isalpha(first) || first > 0x7f) {
    throw ValidationError("county \"" + trimmed + "\" does not start with an ASCII letter");
  }
  const char lower = static_cast<char>(std::tolower(first));
  return lower <= 'c' ? SplitSide::kTrain : SplitSide::kTest;
}

inline std::vector<SplitAssignment> split_by_county(const std::vector<Region>& regions) {
  std::vector<SplitAssignment> out;
  out.reserve(regions.size());
  for (const Region& r : regions) {
    out.push_back({r.region_id, county_side(r.county)});
  }
  return out;
}

// Both bounds inclusive.
inline bool is_eligible(const Region& region, uint64_t detected_car_count,
                        uint64_t min_population = 500, uint64_t min_cars = 50) {
  return region.population >= min_population && detected_car_count >= min_cars;
}

inline const std::vector<std::string>& regions_csv_header() {
  static const std::vector<std::string> header = {"region_id", "kind",   "city",
                                                  "state",     "county", "population"};
  return header;
}

inline const std::vector<std::string>& acs_csv_header() {
  static const std::vector<std::string> header = {
      "region_id",   "B19013_001E", "B02001_002E", "B02001_003E", "B02001_005E",
      "B06009_002E", "B06009_003E", "B06009_004E", "B06009_005E", "B06009_006E"};
  return header;
}

inline const std::vector<std::string>& votes_csv_header() {
  static const std::vector<std::string> header = {"region_id", "obama_votes", "mccain_votes"};
  return header;
}

namespace detail {

inline double parse_count_field(const CsvTable& t, const CsvRow& r, const std::string& field,
                                const char* name) {
  auto v = parse_double(field);
  if (!v) throw row_error(t, r, std::string("malformed number in ") + name + ": \"" + field + "\"");
  if (*v < 0) throw row_error(t, r, std::string(name) + " must be >= 0");
  return *v;
}

}  // namespace detail

// Parses the region roster and joins demographic and vote ground truth onto
// it. Missing cells leave the corresponding fields absent rather than zero.
inline std::vector<Region> parse_regions(const std::filesystem::path& regions_path,
                                         const std::filesystem::path& acs_path,
                                         const std::filesystem::path& votes_path) {
  const CsvTable regions_table = read_csv(regions_path, regions_csv_header());
  std::vector<Region> regions;
  regions.reserve(regions_table.rows.size());
  std::unordered_map<std::string, size_t> by_id;

  for (const CsvRow& row : regions_table.rows) {
    Region r;
    r.region_id = row.fields[0];
    if (r.region_id.empty()) throw row_error(regions_table, row, "empty region_id");
    auto kind = region_kind_from_string(row.fields[1]);
    if (!kind) throw row_error(regions_table, row, "unknown kind \"" + row.fields[1] + "\"");
    r.kind = *kind;
    r.city = row.fields[2];
    r.state = row.fields[3];
    r.county = row.fields[4];
    if (trim(r.county).empty()) throw row_error(regions_table, row, "empty county");
    auto pop = parse_int(row.fields[5]);
    if (!pop || *pop < 0) throw row_error(regions_table, row, "population must be a nonnegative integer");
    r.population = static_cast<uint64_t>(*pop);
    if (!by_id.emplace(r.region_id, regions.size()).second) {
      throw row_error(regions_table, row, "duplicate region_id \"" + r.region_id + "\"");
    }
    regions.push_back(std::move(r));
  }

  const CsvTable acs_table = read_csv(acs_path, acs_csv_header());
  std::unordered_map<std::string, size_t> acs_seen;
  for (const CsvRow& row : acs_table.rows) {
    auto it = by_id.find(row.fields[0]);
    if (it == by_id.end()) {
      throw row_error(acs_table, row, "unknown region_id \"" + row.fields[0] + "\"");
    }
    if (!acs_seen.emplace(row.fields[0], row.line_no).second) {
      throw row_error(acs_table, row, "duplicate region_id \"" + row.fields[0] + "\"");
    }
    Region& r = regions[it->second];

    if (!row.fields[1].empty()) {
      const double income = detail::parse_count_field(acs_table, row, row.fields[1], "B19013_001E");
      r.income_median = income;
    }

    const bool any_race = !row.fields[2].empty() || !row.fields[3].empty() || !row.fields[4].empty();
    if (any_race) {
      if (row.fields[2].empty() || row.fields[3].empty() || row.fields[4].empty()) {
        throw row_error(acs_table, row, "race columns must be all present or all absent");
      }
      if (r.population == 0) {
        throw row_error(acs_table, row, "race counts present but population is 0");
      }
      const double white = detail::parse_count_field(acs_table, row, row.fields[2], "B02001_002E");
      const double black = detail::parse_count_field(acs_table, row, row.fields[3], "B02001_003E");
      const double asian = detail::parse_count_field(acs_table, row, row.fields[4], "B02001_005E");
      const double pop = static_cast<double>(r.population);
      std::array<double, 4> shares = {white / pop, black / pop, asian / pop, 0.0};
      const double other = 1.0 - (shares[0] + shares[1] + shares[2]);
      if (other < -1e-6) {
        throw row_error(acs_table, row, "race counts exceed population (shares not a simplex)");
      }
      shares[3] = other < 0 ? 0.0 : other;
      r.race_shares = shares;
      r.race_counts = {white, black, asian};
    }

    bool any_edu = false, all_edu = true;
    for (int col = 5; col <= 9; ++col) {
      if (row.fields[col].empty()) all_edu = false;
      else any_edu = true;
    }
    if (any_edu) {
      if (!all_edu) throw row_error(acs_table, row, "education columns must be all present or all absent");
      std::array<double, 5> counts{};
      double total = 0;
      for (int col = 5; col <= 9; ++col) {
        counts[col - 5] = detail::parse_count_field(acs_table, row, row.fields[col],
                                                    acs_csv_header()[col].c_str());
        total += counts[col - 5];
      }
      if (total <= 0) throw row_error(acs_table, row, "education counts sum to zero");
      std::array<double, 5> shares{};
      for (int k = 0; k < 5; ++k) shares[k] = counts[k] / total;
      r.edu_shares = shares;
      r.edu_counts = counts;
    }
  }

  const CsvTable votes_table = read_csv(votes_path, votes_csv_header());
  std::unordered_map<std::string, size_t> votes_seen;
  for (const CsvRow& row : votes_table.rows) {
    auto it = by_id.find(row.fields[0]);
    if (it == by_id.end()) {
      throw row_error(votes_table, row, "unknown region_id \"" + row.fields[0] + "\"");
    }
    if (!votes_seen.emplace(row.fields[0], row.line_no).second) {
      throw row_error(votes_table, row, "duplicate region_id \"" + row.fields[0] + "\"");
    }
    Region& r = regions[it->second];
    auto obama = parse_int(row.fields[1]);
    auto mccain = parse_int(row.fields[2]);
    if (!obama || !mccain) throw row_error(votes_table, row, "malformed vote count");
    if (*obama < 0 || *mccain < 0) throw row_error(votes_table, row, "negative vote count");
    r.obama_votes = static_cast<uint64_t>(*obama);
    r.mccain_votes = static_cast<uint64_t>(*mccain);
  }

  return regions;
}

inline std::string regions_to_csv(const std::vector<Region>& regions) {
  std::string out = join_csv(regions_csv_header());
  out += '\n';
  for (const Region& r : regions) {
    out += join_csv({r.region_id, std::string(region_kind_name(r.kind)), r.city, r.state, r.county,
                     std::to_string(r.population)});
    out += '\n';
  }
  return out;
}

// Rows are emitted only for regions that carry at least one ground-truth
// field; cells stay empty where the field is absent.
inline std::string acs_to_csv(const std::vector<Region>& regions) {
  std::string out = join_csv(acs_csv_header());
  out += '\n';
  for (const Region& r : regions) {
    if (!r.income_median && !r.race_counts && !r.edu_counts) continue;
    std::vector<std::string> f(10);
    f[0] = r.region_id;
    if (r.income_median) f[1] = format_double(*r.income_median);
    if (r.race_counts) {
      for (int k = 0; k < 3; ++k) f[2 + k] = format_double((*r.race_counts)[k]);
    }
    if (r.edu_counts) {
      for (int k = 0; k < 5; ++k) f[5 + k] = format_double((*r.edu_counts)[k]);
    }
    out += join_csv(f);
    out += '\n';
  }
  return out;
}

inline std::string votes_to_csv(const std::vector<Region>& regions) {
  std::string out = join_csv(votes_csv_header());
  out += '\n';
  for (const Region& r : regions) {
    if (!r.obama_votes || !r.mccain_votes) continue;
    out += join_csv({r.region_id, std::to_string(*r.obama_votes), std::to_string(*r.mccain_votes)});
    out += '\n';
  }
  return out;
}

}  // namespace carcensus
