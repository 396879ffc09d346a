#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "carcensus/csv.hpp"
#include "carcensus/util.hpp"

namespace carcensus {

// Vehicle category vocabulary. The make, body type, and country lists are
// closed sets; categories referencing anything else are rejected at parse
// time. Makes and countries are kept in alphabetical order, body types in
// the catalog's fixed order; feature layout depends on these orders.

inline constexpr int kMakeCount = 58;
inline constexpr int kBodyTypeCount = 11;
inline constexpr int kCountryCount = 7;

inline const std::array<std::string_view, kMakeCount>& make_names() {
  static const std::array<std::string_view, kMakeCount> names = {
      "Acura",       "AM General", "Aston Martin", "Audi",       "Bentley",
      "BMW",         "Buick",      "Cadillac",     "Chevrolet",  "Chrysler",
      "Daewoo",      "Dodge",      "Eagle",        "Ferrari",    "Fiat",
      "Fisker",      "Ford",       "Geo",          "GMC",        "Honda",
      "Hummer",      "Hyundai",    "Infiniti",     "Isuzu",      "Jaguar",
      "Jeep",        "Kia",        "Lamborghini",  "Land Rover", "Lexus",
      "Lincoln",     "Lotus",      "Maserati",     "Maybach",    "Mazda",
      "McLaren",     "Mercedes-Benz", "Mercury",   "Mini",       "Mitsubishi",
      "Nissan",      "Oldsmobile", "Panoz",        "Plymouth",   "Pontiac",
      "Porsche",     "Ram",        "Rolls-Royce",  "Saab",       "Saturn",
      "Scion",       "Smart",      "Subaru",       "Suzuki",     "Tesla",
      "Toyota",      "Volkswagen", "Volvo"};
  return names;
}

inline const std::array<std::string_view, kBodyTypeCount>& body_type_names() {
  static const std::array<std::string_view, kBodyTypeCount> names = {
      "convertible",    "coupe", "hatchback",      "minivan", "sedan", "suv",
      "truck-regular",  "truck-extended", "truck-crew", "van", "wagon"};
  return names;
}

inline const std::array<std::string_view, kCountryCount>& country_names() {
  static const std::array<std::string_view, kCountryCount> names = {
      "England", "Germany", "Italy", "Japan", "South Korea", "Sweden", "USA"};
  return names;
}

inline constexpr int kCountryUsaIndex = 6;

// The three pickup cab styles, used by the sedans-vs-pickups tally.
inline constexpr std::array<int, 3> kPickupBodyIndices = {6, 7, 8};
inline constexpr int kBodySedanIndex = 4;

template <size_t N>
inline std::optional<int> index_of(const std::array<std::string_view, N>& names,
                                   std::string_view value) {
  for (size_t i = 0; i < N; ++i) {
    if (names[i] == value) return static_cast<int>(i);
  }
  return std::nullopt;
}

struct VehicleCategory {
  std::string category_id;
  int make = 0;       // index into make_names()
  std::string model;
  int body_type = 0;  // index into body_type_names()
  int year_min = 1990;
  int year_max = 1990;
  int country = 0;    // index into country_names()
  std::optional<double> city_mpg;
  std::optional<double> highway_mpg;
  double price_usd = 0;
  bool is_hybrid = false;
  bool is_electric = false;
};

class Catalog {
 public:
  Catalog() = default;
  explicit Catalog(std::vector<VehicleCategory> categories)
      : categories_(std::move(categories)) {
    for (size_t i = 0; i < categories_.size(); ++i) {
      auto [it, inserted] = index_.emplace(categories_[i].category_id, i);
      if (!inserted) {
        throw ValidationError("duplicate category_id: " + categories_[i].category_id);
      }
    }
  }

  const std::vector<VehicleCategory>& categories() const { return categories_; }
  size_t size() const { return categories_.size(); }

  const VehicleCategory* find(std::string_view id) const {
    auto it = index_.find(std::string(id));
    return it == index_.end() ? nullptr : &categories_[it->second];
  }

  const VehicleCategory& at(std::string_view id) const {
    const VehicleCategory* cat = find(id);
    if (!cat) throw ValidationError("category not in catalog: " + std::string(id));
    return *cat;
  }

 private:
  std::vector<VehicleCategory> categories_;
  std::unordered_map<std::string, size_t> index_;
};

inline const std::vector<std::string>& catalog_csv_header() {
  static const std::vector<std::string> header = {
      "category_id", "make",     "model",       "body_type", "year_min", "year_max",
      "country",     "city_mpg", "highway_mpg", "price_usd", "is_hybrid", "is_electric"};
  return header;
}

namespace detail {

inline bool parse_bool_field(const CsvTable& t, const CsvRow& r, const std::string& field,
                             const char* name) {
  if (field == "true") return true;
  if (field == "false") return false;
  throw row_error(t, r, std::string(name) + " must be \"true\" or \"false\", found \"" + field + "\"");
}

inline double parse_number_field(const CsvTable& t, const CsvRow& r, const std::string& field,
                                 const char* name) {
  auto v = parse_double(field);
  if (!v) throw row_error(t, r, std::string("malformed number in ") + name + ": \"" + field + "\"");
  return *v;
}

}  // namespace detail

inline Catalog parse_catalog(const std::filesystem::path& path) {
  const CsvTable table = read_csv(path, catalog_csv_header());
  std::vector<VehicleCategory> cats;
  cats.reserve(table.rows.size());
  std::unordered_set<std::string> seen_ids;

  for (const CsvRow& row : table.rows) {
    VehicleCategory c;
    c.category_id = row.fields[0];
    if (c.category_id.empty()) throw row_error(table, row, "empty category_id");
    if (!seen_ids.insert(c.category_id).second) {
      throw row_error(table, row, "duplicate category_id \"" + c.category_id + "\"");
    }

    auto make = index_of(make_names(), row.fields[1]);
    if (!make) throw row_error(table, row, "unknown make \"" + row.fields[1] + "\"");
    c.make = *make;

    c.model = row.fields[2];

    auto body = index_of(body_type_names(), row.fields[3]);
    if (!body) throw row_error(table, row, "unknown body_type \"" + row.fields[3] + "\"");
    c.body_type = *body;

    c.year_min = static_cast<int>(detail::parse_number_field(table, row, row.fields[4], "year_min"));
    c.year_max = static_cast<int>(detail::parse_number_field(table, row, row.fields[5], "year_max"));
    if (!(1990 <= c.year_min && c.year_min <= c.year_max && c.year_max <= 2014)) {
      throw row_error(table, row, "year range must satisfy 1990 <= year_min <= year_max <= 2014");
    }

    auto country = index_of(country_names(), row.fields[6]);
    if (!country) throw row_error(table, row, "unknown country \"" + row.fields[6] + "\"");
    c.country = *country;

    c.is_hybrid = detail::parse_bool_field(table, row, row.fields[10], "is_hybrid");
    c.is_electric = detail::parse_bool_field(table, row, row.fields[11], "is_electric");
    if (c.is_electric && c.is_hybrid) {
      throw row_error(table, row, "is_electric categories must have is_hybrid=false");
    }

    for (int mpg_col : {7, 8}) {
      const std::string& field = row.fields[mpg_col];
      const char* name = mpg_col == 7 ? "city_mpg" : "highway_mpg";
      if (field.empty()) {
        if (!c.is_electric) {
          throw row_error(table, row, std::string("empty ") + name + " only allowed for electric categories");
        }
        continue;
      }
      const double v = detail::parse_number_field(table, row, field, name);
      if (v <= 0) throw row_error(table, row, std::string(name) + " must be > 0");
      if (mpg_col == 7) c.city_mpg = v;
      else c.highway_mpg = v;
    }

    c.price_usd = detail::parse_number_field(table, row, row.fields[9], "price_usd");
    if (c.price_usd <= 0) throw row_error(table, row, "price_usd must be > 0");

    cats.push_back(std::move(c));
  }
  return Catalog(std::move(cats));
}

inline std::string catalog_to_csv(const Catalog& catalog) {
  std::string out = join_csv(catalog_csv_header());
  out += '\n';
  for (const VehicleCategory& c : catalog.categories()) {
    std::vector<std::string> f = {
        c.category_id,
        std::string(make_names()[c.make]),
        c.model,
        std::string(body_type_names()[c.body_type]),
        std::to_string(c.year_min),
        std::to_string(c.year_max),
        std::string(country_names()[c.country]),
        c.city_mpg ? format_double(*c.city_mpg) : "",
        c.highway_mpg ? format_double(*c.highway_mpg) : "",
        format_double(c.price_usd),
        c.is_hybrid ? "true" : "false",
        c.is_electric ? "true" : "false"};
    out += join_csv(f);
    out += '\n';
  }
  return out;
}

}  // namespace carcensus
