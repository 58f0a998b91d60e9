#include <sstream>

#include "doctest.h"
#include "fixtures.hpp"
#include "occupred/taxonomy.hpp"

using namespace occupred;

namespace {

OccupationTaxonomy parse(const std::string& occ, const std::string& rel) {
  std::istringstream o(occ), r(rel);
  return parse_taxonomy(o, r);
}

const std::string kThree =
    "code\ttitle\n"
    "15-1252.00\tSoftware Developers\n"
    "13-2011.00\tAccountants and Auditors\n"
    "29-1141.00\tRegistered Nurses\n";

}  // namespace

TEST_CASE("load_taxonomy") {
  SUBCASE("no related rows gives singleton lists") {
    auto t = parse(kThree, "target_code\trelated_code\trank\n");
    REQUIRE(t.size() == 3);
    for (const auto& e : t.entries()) CHECK(t.related(e.code).ranked == std::vector<std::string>{e.code});
  }
  SUBCASE("target prepended as rank one") {
    auto t = parse(kThree,
                   "target_code\trelated_code\trank\n"
                   "15-1252.00\t29-1141.00\t3\n"
                   "15-1252.00\t13-2011.00\t2\n");
    CHECK(t.related("15-1252.00").ranked == std::vector<std::string>{"15-1252.00", "13-2011.00", "29-1141.00"});
    // directional
    CHECK(t.related("13-2011.00").ranked.size() == 1);
  }
  SUBCASE("dangling code is named") {
    try {
      parse(kThree, "target_code\trelated_code\trank\n15-1252.00\t99-9999.00\t2\n");
      FAIL("expected DanglingCode");
    } catch (const DanglingCode& e) {
      CHECK(e.code() == "99-9999.00");
    }
  }
  SUBCASE("parse errors carry line numbers") {
    try {
      parse("code\ttitle\n15-1252.00\tSoftware Developers\nbad-code\tX\n", "a\tb\tc\n");
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.line() == 3);
    }
    CHECK_THROWS_AS(parse("15-1252.00\tSoftware Developers\n", "a\tb\tc\n"), ParseError);
    CHECK_THROWS_AS(parse(kThree, "t\tr\tk\n15-1252.00\t13-2011.00\t3\n"), ParseError);
    CHECK_THROWS_AS(parse(kThree, "t\tr\tk\n15-1252.00\t13-2011.00\ttwo\n"), ParseError);
    CHECK_THROWS_AS(parse(kThree + "15-1252.00\tDup\n", "t\tr\tk\n"), ParseError);
  }
  SUBCASE("comma-separated with quotes and aliases") {
    auto t = parse("code,title,aliases\n\"43-3031.00\",\"Bookkeeping, Accounting, and Auditing Clerks\",Bookkeepers|AP Clerk\n",
                   "target_code,related_code,rank\n");
    REQUIRE(t.size() == 1);
    CHECK(t.entries()[0].title == "Bookkeeping, Accounting, and Auditing Clerks");
    CHECK(t.normalize_title("bookkeepers")->code == "43-3031.00");
    CHECK(t.normalize_title("ap clerk")->code == "43-3031.00");
  }
}

TEST_CASE("normalize_title") {
  auto t = fixture_taxonomy();
  CHECK(t.normalize_title("Software Developers")->code == "15-1252.00");
  CHECK(t.normalize_title("  software   DEVELOPERS ")->code == "15-1252.00");
  CHECK(t.normalize_title("Software Developers.")->code == "15-1252.00");
  CHECK(t.normalize_title("15-1252.00")->title == "Software Developers");
  CHECK(t.normalize_title("Software Engineers")->code == "15-1252.00");  // alias
  CHECK_FALSE(t.normalize_title("Astronaut").has_value());
  CHECK_FALSE(t.normalize_title("Software Developer").has_value());  // no fuzzy matching
  CHECK_FALSE(t.normalize_title("").has_value());
  for (const auto& e : t.entries()) CHECK(t.normalize_title(e.title) == e);
}

TEST_CASE("related_rank") {
  auto t = occupred::testing::small_taxonomy();
  CHECK(t.related_rank("11-1111.00", "11-1111.00") == 1u);
  CHECK(t.related_rank("11-1111.00", "33-3333.00") == 3u);
  CHECK_FALSE(t.related_rank("11-1111.00", "55-5555.00").has_value());
  CHECK_THROWS_AS(t.related_rank("99-9999.00", "11-1111.00"), UnknownTruthCode);
  auto f = fixture_taxonomy();
  for (const auto& e : f.entries()) CHECK(f.related_rank(e.code, e.code) == 1u);
}

TEST_CASE("serialize then load is identity") {
  auto t = fixture_taxonomy();
  auto back = parse(format_occupations_tsv(t), format_related_tsv(t));
  CHECK(back.entries() == t.entries());
  for (const auto& e : t.entries()) CHECK(back.related(e.code) == t.related(e.code));
  CHECK(back.aliases() == t.aliases());
}

TEST_CASE("constructor invariants") {
  using Entries = std::vector<OccupationEntry>;
  CHECK_THROWS_AS(OccupationTaxonomy(Entries{{"11-1111.00", "A"}, {"11-1111.00", "B"}}), InvalidArgument);
  CHECK_THROWS_AS(OccupationTaxonomy(Entries{{"11-1111.00", "A"}, {"22-2222.00", "a."}}), InvalidArgument);
  CHECK_THROWS_AS(OccupationTaxonomy(Entries{{"11-1111.00", "A"}}, {{"11-1111.00", {"22-2222.00"}}}), DanglingCode);
}
