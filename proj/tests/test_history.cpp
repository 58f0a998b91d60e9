#include <fstream>
#include <sstream>

#include "doctest.h"
#include "fixtures.hpp"
#include "occupred/history.hpp"
#include "occupred/taxonomy.hpp"

using namespace occupred;
using namespace occupred::testing;

TEST_CASE("YearMonth parsing truncates days and rejects garbage") {
  CHECK(YearMonth::parse("2010-03") == YearMonth{2010, 3});
  CHECK(YearMonth::parse("2010-03-17") == YearMonth{2010, 3});
  CHECK_THROWS_AS(YearMonth::parse("2010-13"), InvalidArgument);
  CHECK_THROWS_AS(YearMonth::parse("10-03"), InvalidArgument);
  CHECK(YearMonth{2010, 3}.str() == "2010-03");
  CHECK(YearMonth::from_ordinal(YearMonth{1999, 12}.ordinal()) == YearMonth{1999, 12});
}

TEST_CASE("validate_history") {
  SUBCASE("well-formed three-event history has no violations") {
    UserHistory h{"u1",
                  {edu("Westbrook University", "Bachelor's", "Accounting", 2005),
                   job("Staff Accountant", "13-2011.00", "2006-01", "2009-06"),
                   job("Senior Accountant", "13-2011.00", "2009-07")}};
    CHECK(validate_history(h).ok());
  }
  SUBCASE("end before start names the record") {
    UserHistory h{"u1", {job("Clerk", "43-9061.00", "2010-05", "2009-01"), job("Clerk", "43-9061.00", "2011-01")}};
    auto report = validate_history(h);
    REQUIRE(report.violations.size() == 1);
    CHECK(report.violations[0].record_index == 0u);
    CHECK(report.violations[0].rule == "job.date_range");
  }
  SUBCASE("out-of-order events") {
    UserHistory h{"u1", {job("A", "43-9061.00", "2012-01"), job("B", "43-9061.00", "2010-01")}};
    auto report = validate_history(h);
    REQUIRE(report.violations.size() == 1);
    CHECK(report.violations[0].rule == "history.order");
    CHECK(report.violations[0].record_index == 1u);
  }
  SUBCASE("record-level rules") {
    UserHistory h{"u1",
                  {edu(" ", "BSc", "", 1850), job("A", "1234", std::nullopt)}};
    auto report = validate_history(h);
    std::vector<std::string> rules;
    for (const auto& v : report.violations) rules.push_back(v.rule);
    CHECK(rules == std::vector<std::string>{"education.school_name", "education.major", "education.graduation_year",
                                            "job.start_date", "job.occupation_code"});
  }
  SUBCASE("history without jobs") {
    UserHistory h{"u1", {edu("X", "Y", "Z")}};
    auto report = validate_history(h);
    REQUIRE(report.violations.size() == 1);
    CHECK_FALSE(report.violations[0].record_index.has_value());
  }
  SUBCASE("does not mutate input") {
    auto h = simple_user("u9", 3);
    const auto copy = h;
    (void)validate_history(h);
    CHECK(h == copy);
  }
}

TEST_CASE("preprocess_corpus") {
  SUBCASE("four valid jobs drops the user") {
    auto r = preprocess_corpus({simple_user("u1", 4)});
    CHECK(r.corpus.empty());
    CHECK(r.stats.users_dropped_too_few_jobs == 1);
  }
  SUBCASE("record removal precedes user counting") {
    auto h = simple_user("u1", 5);
    std::get<JobRecord>(h.events[2].record).start_date.reset();
    auto r = preprocess_corpus({h});
    CHECK(r.corpus.empty());
    CHECK(r.stats.jobs_dropped_missing_start == 1);
    CHECK(r.stats.users_dropped_too_few_jobs == 1);
  }
  SUBCASE("education preserved even when undated") {
    auto h = simple_user("u1", 6);
    h.events[0] = edu("Northfield College", "Bachelor's", "Marketing");
    auto r = preprocess_corpus({h});
    REQUIRE(r.corpus.size() == 1);
    CHECK(r.corpus[0].events.size() == 7);
    CHECK(r.stats.education_records_kept == 1);
  }
  SUBCASE("unclassified jobs removed, sixteen jobs dropped") {
    auto h = simple_user("u1", 6);
    std::get<JobRecord>(h.events[1].record).occupation_code.reset();
    auto big = simple_user("u2", 16);
    auto r = preprocess_corpus({h, big});
    REQUIRE(r.corpus.size() == 1);
    CHECK(r.corpus[0].job_count() == 5);
    CHECK(r.stats.jobs_dropped_unclassified == 1);
    CHECK(r.stats.users_dropped_too_many_jobs == 1);
    CHECK(r.stats.users_in == 2);
    CHECK(r.stats.jobs_in == 22);
  }
  SUBCASE("held-out job excluded from the count when configured") {
    PreprocessConfig cfg;
    cfg.count_held_out_job = false;
    CHECK(preprocess_corpus({simple_user("u1", 5)}, cfg).corpus.empty());
    CHECK(preprocess_corpus({simple_user("u1", 16)}, cfg).corpus.size() == 1);
  }
  SUBCASE("idempotent and bounded on noisy synthetic data") {
    SynthConfig sc;
    sc.inject_noise = true;
    sc.min_jobs = 3;
    sc.max_jobs = 17;
    auto raw = synthesize_fixtures(11, 200, fixture_taxonomy(), sc);
    auto once = preprocess_corpus(raw);
    auto twice = preprocess_corpus(once.corpus);
    CHECK(once.corpus == twice.corpus);
    CHECK(twice.stats.users_retained == once.corpus.size());
    CHECK(once.stats.users_in ==
          once.stats.users_retained + once.stats.users_dropped_too_few_jobs + once.stats.users_dropped_too_many_jobs);
    CHECK(once.stats.jobs_dropped_missing_start + once.stats.jobs_dropped_unclassified > 0);
    for (const auto& u : once.corpus) {
      CHECK(u.job_count() >= 5);
      CHECK(u.job_count() <= 15);
      for (const auto& ev : u.events) {
        if (const auto* j = ev.job()) {
          CHECK(j->start_date.has_value());
          CHECK(j->classified());
        }
      }
    }
  }
}

TEST_CASE("split_instance") {
  SUBCASE("six jobs") {
    auto h = simple_user("u1", 6);
    const auto before = h;
    auto inst = split_instance(h);
    CHECK(inst.history.job_count() == 5);
    CHECK(inst.truth.code == "11-1111.00");  // 6th job cycles back to the first code
    CHECK(inst.truth.title == "Alpha Analysts");
    CHECK(h == before);
    CHECK_FALSE(inst.no_prior_jobs);
  }
  SUBCASE("trailing education stays in the history") {
    auto h = simple_user("u1", 5);
    h.events.push_back(edu("Eastport University", "Master's", "Economics"));
    auto inst = split_instance(h);
    CHECK(inst.truth.code == "55-5555.00");
    REQUIRE(inst.history.events.size() == 6);
    CHECK(inst.history.events.back().education() != nullptr);
    CHECK(inst.history.events.back().education()->school_name == "Eastport University");
    CHECK(inst.dropped_future_events == 0);
  }
  SUBCASE("education dated after the target start is removed") {
    auto h = simple_user("u1", 5);
    h.events.push_back(edu("Eastport University", "Master's", "Economics", 2030));
    auto inst = split_instance(h);
    CHECK(inst.dropped_future_events == 1);
    CHECK(inst.history.events.size() == 5);
  }
  SUBCASE("single job") {
    UserHistory h{"u1", {edu("X", "Y", "Z", 2000), job("Nurse", "29-1141.00", "2001-01")}};
    auto inst = split_instance(h);
    CHECK(inst.no_prior_jobs);
    CHECK(inst.history.job_count() == 0);
    CHECK(inst.truth.code == "29-1141.00");
  }
  SUBCASE("unclassified final job") {
    auto h = simple_user("u1", 5);
    std::get<JobRecord>(h.events.back().record).occupation_code.reset();
    CHECK_THROWS_AS(split_instance(h), LastJobUnclassified);
  }
  SUBCASE("always removes exactly one job") {
    for (const auto& u : synthesize_fixtures(3, 50, fixture_taxonomy())) {
      CHECK(split_instance(u).history.job_count() + 1 == u.job_count());
    }
  }
}

TEST_CASE("render_history_text") {
  UserHistory h{"u42",
                {edu("Lakeside State University", "Bachelor's", "Computer Science", 2008),
                 job("Junior Developer", "15-1252.00", "2009-02", "2012-06", "Software Developers")}};
  std::get<JobRecord>(h.events[1].record).industry = "Information Technology";
  std::get<JobRecord>(h.events[1].record).salary = 62000;

  SUBCASE("deterministic") { CHECK(render_history_text(h) == render_history_text(h)); }
  SUBCASE("golden file") {
    std::ifstream in(std::string(OCCUPRED_TEST_DATA) + "/history_plain_v1.golden.txt", std::ios::binary);
    REQUIRE(in);
    std::stringstream ss;
    ss << in.rdbuf();
    CHECK(render_history_text(h, "plain-v1") == ss.str());
  }
  SUBCASE("absent salary emits no salary line") {
    std::get<JobRecord>(h.events[1].record).salary.reset();
    CHECK(render_history_text(h).find("Salary") == std::string::npos);
    CHECK(render_history_text(h, "compact-v1").find("salary") == std::string::npos);
  }
  SUBCASE("every attribute appears, in order") {
    for (const auto& id : history_template_ids()) {
      auto text = render_history_text(h, id);
      for (const char* needle : {"Lakeside State University", "Bachelor's", "Computer Science", "2008",
                                 "Junior Developer", "15-1252.00", "Software Developers", "Information Technology",
                                 "2009-02", "2012-06", "62000"}) {
        CHECK_MESSAGE(text.find(needle) != std::string::npos, id << " missing " << needle);
      }
      CHECK(text.find("Lakeside") < text.find("Junior Developer"));
    }
  }
  SUBCASE("unknown template") { CHECK_THROWS_AS(render_history_text(h, "nope"), UnknownTemplate); }
}

TEST_CASE("synthesize_fixtures") {
  const auto tax = fixture_taxonomy();
  SUBCASE("deterministic per seed") {
    CHECK(synthesize_fixtures(7, 10, tax) == synthesize_fixtures(7, 10, tax));
    CHECK_FALSE(synthesize_fixtures(7, 10, tax) == synthesize_fixtures(8, 10, tax));
  }
  SUBCASE("empty") { CHECK(synthesize_fixtures(7, 0, tax).empty()); }
  SUBCASE("hundred users pass preprocessing untouched") {
    auto corpus = synthesize_fixtures(7, 100, tax);
    auto r = preprocess_corpus(corpus);
    CHECK(r.corpus.size() == 100);
    CHECK(r.corpus == corpus);
    CHECK(r.stats.jobs_dropped_missing_start + r.stats.jobs_dropped_unclassified == 0);
    for (const auto& u : corpus) {
      CHECK(validate_history(u).ok());
      for (const auto& ev : u.events) {
        if (const auto* j = ev.job()) CHECK(tax.contains(*j->occupation_code));
      }
    }
  }
  SUBCASE("transitions favour related occupations") {
    std::size_t related = 0, total = 0;
    for (const auto& u : synthesize_fixtures(5, 200, tax)) {
      const JobRecord* prev = nullptr;
      for (const auto& ev : u.events) {
        const auto* j = ev.job();
        if (!j) continue;
        if (prev && *prev->occupation_code != *j->occupation_code) {
          ++total;
          if (tax.related_rank(*prev->occupation_code, *j->occupation_code)) ++related;
        }
        prev = j;
      }
    }
    // A uniform jump lands in a 6-entry related list about 6/49 of the time.
    CHECK(static_cast<double>(related) / static_cast<double>(total) > 0.5);
  }
  SUBCASE("empty taxonomy") { CHECK_THROWS_AS(synthesize_fixtures(1, 1, OccupationTaxonomy{}), InvalidArgument); }
}

TEST_CASE("corpus JSON round trip") {
  auto corpus = synthesize_fixtures(21, 20, fixture_taxonomy());
  auto text = to_jsonl(corpus);
  CHECK(parse_jsonl<UserHistory>(text, "mem") == corpus);
  auto first = Json::parse(text.substr(0, text.find('\n')));
  CHECK(first.begin().key() == "user_id");
  CHECK(first["events"][0]["kind"] == "education");
  CHECK(first["events"][1]["start_date"].get<std::string>().size() == 7);
}
