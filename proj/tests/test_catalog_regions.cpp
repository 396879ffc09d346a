#include <algorithm>
#include <string>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include "carcensus/catalog.hpp"
#include "carcensus/regions.hpp"
#include "carcensus/rng.hpp"
#include "test_helpers.hpp"

using namespace carcensus;
using test_helpers::TempDir;

namespace {

const char* kCatalogHeader =
    "category_id,make,model,body_type,year_min,year_max,country,city_mpg,highway_mpg,"
    "price_usd,is_hybrid,is_electric\n";

std::string catalog_csv(const std::string& rows) { return std::string(kCatalogHeader) + rows; }

const char* kRegionsHeader = "region_id,kind,city,state,county,population\n";
const char* kAcsHeader =
    "region_id,B19013_001E,B02001_002E,B02001_003E,B02001_005E,B06009_002E,B06009_003E,"
    "B06009_004E,B06009_005E,B06009_006E\n";
const char* kVotesHeader = "region_id,obama_votes,mccain_votes\n";

}  // namespace

TEST_CASE("catalog accepts valid rows in file order") {
  TempDir dir("catalog");
  const auto path = dir.write(
      "catalog.csv",
      catalog_csv("c1,Honda,Accord,sedan,1990,1994,Japan,20,30,10000,false,false\n"
                  "c2,Ford,F-150,truck-regular,2010,2014,USA,15,20,30000,false,false\n"
                  "c3,Tesla,Model S,sedan,2012,2014,USA,,,70000,false,true\n"));
  const Catalog catalog = parse_catalog(path);
  REQUIRE(catalog.size() == 3);
  CHECK(catalog.categories()[0].category_id == "c1");
  CHECK(make_names()[catalog.categories()[0].make] == "Honda");
  CHECK(catalog.categories()[1].category_id == "c2");
  CHECK(!catalog.categories()[2].city_mpg.has_value());
  CHECK(catalog.categories()[2].is_electric);
  CHECK(catalog.at("c2").price_usd == 30000.0);
}

TEST_CASE("catalog rejects unknown enum values with the line number") {
  TempDir dir("catalog");
  const auto path = dir.write(
      "catalog.csv", catalog_csv("c1,Hondda,Accord,sedan,1990,1994,Japan,20,30,10000,false,false\n"));
  try {
    parse_catalog(path);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    const std::string msg = e.what();
    CHECK(msg.find(":2:") != std::string::npos);
    CHECK(msg.find("Hondda") != std::string::npos);
  }
}

TEST_CASE("catalog rejects duplicate ids, bad years, bad numbers, missing mpg") {
  TempDir dir("catalog");
  CHECK_THROWS_AS(
      parse_catalog(dir.write(
          "a.csv", catalog_csv("c42,Honda,A,sedan,1990,1994,Japan,20,30,10000,false,false\n"
                               "c42,Ford,B,sedan,1990,1994,USA,20,30,10000,false,false\n"))),
      ParseError);
  CHECK_THROWS_AS(
      parse_catalog(dir.write(
          "b.csv", catalog_csv("c1,Honda,A,sedan,1989,1994,Japan,20,30,10000,false,false\n"))),
      ParseError);
  CHECK_THROWS_AS(
      parse_catalog(dir.write(
          "c.csv", catalog_csv("c1,Honda,A,sedan,1990,1994,Japan,xx,30,10000,false,false\n"))),
      ParseError);
  // Empty mpg cells are only allowed for electrics.
  CHECK_THROWS_AS(
      parse_catalog(dir.write(
          "d.csv", catalog_csv("c1,Honda,A,sedan,1990,1994,Japan,,,10000,false,false\n"))),
      ParseError);
  // Electric implies not hybrid.
  CHECK_THROWS_AS(
      parse_catalog(dir.write(
          "e.csv", catalog_csv("c1,Tesla,A,sedan,2012,2014,USA,,,70000,true,true\n"))),
      ParseError);
}

TEST_CASE("catalog round-trips through serialization") {
  TempDir dir("catalog");
  const std::string body =
      catalog_csv("c1,Honda,Accord,sedan,1990,1994,Japan,20,30,10000,false,false\n"
                  "c3,Tesla,Model S,sedan,2012,2014,USA,,,70000,false,true\n");
  const Catalog catalog = parse_catalog(dir.write("catalog.csv", body));
  CHECK(catalog_to_csv(catalog) == body);
}

TEST_CASE("county split follows the first-letter rule") {
  CHECK(county_side("Baldwin") == SplitSide::kTrain);
  CHECK(county_side("Ada") == SplitSide::kTrain);
  CHECK(county_side("Cabarrus") == SplitSide::kTrain);
  CHECK(county_side("Dakota") == SplitSide::kTest);
  CHECK(county_side("Maricopa") == SplitSide::kTest);
  CHECK(county_side("Yolo") == SplitSide::kTest);
  CHECK(county_side("baldwin") == SplitSide::kTrain);  // case-insensitive
  CHECK(county_side("  Chatham  ") == SplitSide::kTrain);
  CHECK_THROWS_AS(county_side("1st District"), ValidationError);
  CHECK_THROWS_AS(county_side(""), ValidationError);
}

TEST_CASE("split_by_county is a total partition preserving membership") {
  std::vector<Region> regions;
  SplitMix64 rng(99);
  const char* counties[] = {"Adams", "Boone", "Clark", "Dakota", "Eagle", "Zavala"};
  for (int i = 0; i < 200; ++i) {
    Region r;
    r.region_id = "r" + std::to_string(i);
    r.county = counties[rng.below(6)];
    regions.push_back(r);
  }
  const auto split = split_by_county(regions);
  REQUIRE(split.size() == regions.size());
  std::vector<std::string> seen;
  for (const auto& s : split) {
    seen.push_back(s.region_id);
    const Region& r = *std::find_if(regions.begin(), regions.end(),
                                    [&](const Region& reg) { return reg.region_id == s.region_id; });
    const char first = static_cast<char>(std::tolower(r.county[0]));
    CHECK((s.side == SplitSide::kTrain) == (first <= 'c'));
  }
  std::vector<std::string> expected;
  for (const auto& r : regions) expected.push_back(r.region_id);
  std::sort(seen.begin(), seen.end());
  std::sort(expected.begin(), expected.end());
  CHECK(seen == expected);
}

TEST_CASE("eligibility boundaries are inclusive and monotone") {
  Region r;
  r.population = 500;
  CHECK(is_eligible(r, 50));
  r.population = 499;
  CHECK_FALSE(is_eligible(r, 1000));
  r.population = 10000;
  CHECK_FALSE(is_eligible(r, 49));

  SplitMix64 rng(4242);
  for (int i = 0; i < 500; ++i) {
    Region a;
    a.population = rng.below(2000);
    const uint64_t cars = rng.below(200);
    const bool base = is_eligible(a, cars);
    Region b = a;
    b.population += 1 + rng.below(100);
    if (base) {
      CHECK(is_eligible(b, cars));
      CHECK(is_eligible(a, cars + 1 + rng.below(100)));
    }
  }
}

TEST_CASE("region parsing joins ground truth and derives shares") {
  TempDir dir("regions");
  const auto regions_path = dir.write("regions.csv",
                                      std::string(kRegionsHeader) +
                                          "r1,zip,Seattle,WA,Adams,1000\n"
                                          "r2,precinct,Yolo,CA,Dakota,800\n"
                                          "r3,city,Tampa,FL,Boone,0\n");
  const auto acs_path = dir.write("acs.csv", std::string(kAcsHeader) +
                                                 "r1,52000,600,250,100,100,200,300,250,150\n"
                                                 "r2,,,,,,,,,\n");
  const auto votes_path = dir.write("votes.csv", std::string(kVotesHeader) +
                                                     "r1,600,400\n"
                                                     "r2,0,0\n");
  const auto regions = parse_regions(regions_path, acs_path, votes_path);
  REQUIRE(regions.size() == 3);

  const Region& r1 = regions[0];
  REQUIRE(r1.income_median.has_value());
  CHECK(*r1.income_median == 52000.0);
  REQUIRE(r1.race_shares.has_value());
  CHECK((*r1.race_shares)[0] == Catch::Approx(0.6));
  CHECK((*r1.race_shares)[1] == Catch::Approx(0.25));
  CHECK((*r1.race_shares)[2] == Catch::Approx(0.1));
  CHECK((*r1.race_shares)[3] == Catch::Approx(0.05));
  double race_sum = 0, edu_sum = 0;
  for (double s : *r1.race_shares) race_sum += s;
  for (double s : *r1.edu_shares) edu_sum += s;
  CHECK(race_sum == Catch::Approx(1.0).margin(1e-6));
  CHECK(edu_sum == Catch::Approx(1.0).margin(1e-6));
  REQUIRE(r1.vote_share().has_value());
  CHECK(*r1.vote_share() == Catch::Approx(0.6));

  // r2: empty ACS cells leave fields absent; a 0/0 vote row is kept but the
  // share is undefined.
  const Region& r2 = regions[1];
  CHECK_FALSE(r2.income_median.has_value());
  CHECK_FALSE(r2.race_shares.has_value());
  CHECK_FALSE(r2.edu_shares.has_value());
  REQUIRE(r2.obama_votes.has_value());
  CHECK_FALSE(r2.vote_share().has_value());

  CHECK_FALSE(regions[2].obama_votes.has_value());
}

TEST_CASE("region parsing rejects domain violations") {
  TempDir dir("regions");
  const auto regions_path =
      dir.write("regions.csv", std::string(kRegionsHeader) + "r1,zip,Seattle,WA,Adams,1000\n");
  const auto empty_votes = dir.write("votes0.csv", kVotesHeader);
  const auto empty_acs = dir.write("acs0.csv", kAcsHeader);

  // Negative income.
  CHECK_THROWS_AS(parse_regions(regions_path,
                                dir.write("acs1.csv", std::string(kAcsHeader) + "r1,-5,,,,,,,,\n"),
                                empty_votes),
                  ParseError);
  // Unknown region id in a ground-truth file.
  CHECK_THROWS_AS(parse_regions(regions_path,
                                dir.write("acs2.csv", std::string(kAcsHeader) + "rX,1,,,,,,,,\n"),
                                empty_votes),
                  ParseError);
  // Race counts exceeding the population break the simplex.
  CHECK_THROWS_AS(
      parse_regions(regions_path,
                    dir.write("acs3.csv", std::string(kAcsHeader) + "r1,,900,200,100,,,,,\n"),
                    empty_votes),
      ParseError);
  // Negative vote count.
  CHECK_THROWS_AS(parse_regions(regions_path, empty_acs,
                                dir.write("votes1.csv", std::string(kVotesHeader) + "r1,-3,10\n")),
                  ParseError);
  // Duplicate region ids.
  CHECK_THROWS_AS(parse_regions(dir.write("regions2.csv", std::string(kRegionsHeader) +
                                                              "r1,zip,A,B,Adams,10\n"
                                                              "r1,zip,A,B,Adams,10\n"),
                                empty_acs, empty_votes),
                  ParseError);
}

TEST_CASE("serialized region lists re-parse identically") {
  TempDir dir("roundtrip");
  SplitMix64 rng(7);
  std::vector<std::string> region_rows, acs_rows, votes_rows;
  for (int i = 0; i < 50; ++i) {
    const std::string id = "r" + std::to_string(i);
    const uint64_t pop = 500 + rng.below(20000);
    region_rows.push_back(id + ",zip,City,ST," + (i % 2 ? "Adams" : "Dakota") + "," +
                          std::to_string(pop));
    const uint64_t white = rng.below(pop / 2), black = rng.below(pop / 4),
                   asian = rng.below(pop / 8);
    acs_rows.push_back(id + "," + std::to_string(20000 + rng.below(90000)) + "," +
                       std::to_string(white) + "," + std::to_string(black) + "," +
                       std::to_string(asian) + ",10,20,30,25,15");
    votes_rows.push_back(id + "," + std::to_string(rng.below(5000)) + "," +
                         std::to_string(rng.below(5000)));
  }
  auto join = [](const char* header, const std::vector<std::string>& rows) {
    std::string out = header;
    for (const auto& r : rows) {
      out += r;
      out += '\n';
    }
    return out;
  };
  const auto parsed = parse_regions(dir.write("r.csv", join(kRegionsHeader, region_rows)),
                                    dir.write("a.csv", join(kAcsHeader, acs_rows)),
                                    dir.write("v.csv", join(kVotesHeader, votes_rows)));

  const auto reparsed = parse_regions(dir.write("r2.csv", regions_to_csv(parsed)),
                                      dir.write("a2.csv", acs_to_csv(parsed)),
                                      dir.write("v2.csv", votes_to_csv(parsed)));
  REQUIRE(reparsed.size() == parsed.size());
  for (size_t i = 0; i < parsed.size(); ++i) {
    CHECK(reparsed[i].region_id == parsed[i].region_id);
    CHECK(reparsed[i].kind == parsed[i].kind);
    CHECK(reparsed[i].county == parsed[i].county);
    CHECK(reparsed[i].population == parsed[i].population);
    CHECK(reparsed[i].income_median == parsed[i].income_median);
    CHECK(reparsed[i].race_shares == parsed[i].race_shares);
    CHECK(reparsed[i].edu_shares == parsed[i].edu_shares);
    CHECK(reparsed[i].obama_votes == parsed[i].obama_votes);
    CHECK(reparsed[i].mccain_votes == parsed[i].mccain_votes);
  }
}
