#pragma once

#include <optional>
#include <string>

#include <filesystem>
#include <map>
#include <memory>
#include <random>

#include "occupred/history.hpp"
#include "occupred/llm_gateway.hpp"
#include "occupred/oracle_forge.hpp"
#include "occupred/scenarios.hpp"
#include "occupred/taxonomy.hpp"

namespace occupred::testing {

inline HistoryEvent job(std::string title, std::optional<std::string> code, std::optional<std::string> start,
                        std::optional<std::string> end = std::nullopt, std::optional<std::string> name = std::nullopt,
                        std::optional<double> salary = std::nullopt) {
  JobRecord j;
  j.job_title = std::move(title);
  j.occupation_code = std::move(code);
  j.occupation_name = std::move(name);
  if (start) j.start_date = YearMonth::parse(*start);
  if (end) j.end_date = YearMonth::parse(*end);
  j.salary = salary;
  return {j};
}

inline HistoryEvent edu(std::string school, std::string degree, std::string major,
                        std::optional<int> year = std::nullopt) {
  return {EducationRecord{std::move(school), std::move(degree), std::move(major), year}};
}

/// Five-entry taxonomy with a hand-authored related list for A:
/// ranked(A) = [A, B, C, D]; ranked(B) = [B, A].
inline OccupationTaxonomy small_taxonomy() {
  return OccupationTaxonomy({{"11-1111.00", "Alpha Analysts"},
                             {"22-2222.00", "Beta Builders"},
                             {"33-3333.00", "Gamma Gardeners"},
                             {"44-4444.00", "Delta Designers"},
                             {"55-5555.00", "Epsilon Engineers"}},
                            {{"11-1111.00", {"22-2222.00", "33-3333.00", "44-4444.00"}}, {"22-2222.00", {"11-1111.00"}}});
}

/// A history with `n_jobs` classified jobs (taxonomy codes cycling) and one
/// dated education record first.
inline UserHistory simple_user(const std::string& id, int n_jobs) {
  static const char* codes[] = {"11-1111.00", "22-2222.00", "33-3333.00", "44-4444.00", "55-5555.00"};
  static const char* names[] = {"Alpha Analysts", "Beta Builders", "Gamma Gardeners", "Delta Designers",
                                "Epsilon Engineers"};
  UserHistory h{id, {edu("Lakeside State University", "Bachelor's", "Economics", 2001)}};
  for (int k = 0; k < n_jobs; ++k) {
    const int year = 2002 + 2 * k;
    h.events.push_back(job("Title " + std::to_string(k), codes[k % 5], std::to_string(year) + "-03",
                           std::to_string(year + 1) + "-12", names[k % 5]));
  }
  return h;
}

/// simple_user histories made distinct by school name; job count cycles 5..7.
inline std::vector<UserHistory> distinct_users(int n) {
  std::vector<UserHistory> c;
  for (int i = 0; i < n; ++i) {
    c.push_back(simple_user("u" + std::to_string(i), 5 + i % 3));
    std::get<EducationRecord>(c.back().events[0].record).school_name = "School " + std::to_string(i);
  }
  return c;
}

/// Rule matching on labels (and optionally an attempt index) that replays
/// `texts` in order.
inline PlaybookRule label_rule(std::map<std::string, std::string> labels, std::vector<std::string> texts,
                               std::optional<int> attempt = std::nullopt) {
  PlaybookRule r;
  for (const auto& [k, v] : labels) r.name += k + "=" + v + ";";
  r.match.labels = std::move(labels);
  r.match.attempt_index = attempt;
  for (auto& t : texts) {
    ScriptedStep s;
    s.text = std::move(t);
    r.steps.push_back(std::move(s));
  }
  return r;
}

inline PlaybookRule failing_rule(std::map<std::string, std::string> labels, std::optional<int> attempt = std::nullopt) {
  PlaybookRule r = label_rule(std::move(labels), {}, attempt);
  ScriptedStep s;
  s.kind = ScriptedStep::Kind::transport_error;
  s.text = "scripted outage";
  r.steps.push_back(s);
  return r;
}

struct MockRig {
  std::shared_ptr<ScriptedMock> mock;
  std::unique_ptr<Gateway> gateway;

  explicit MockRig(Playbook pb, std::optional<std::filesystem::path> cache = std::nullopt) {
    mock = std::make_shared<ScriptedMock>(std::move(pb));
    GatewayOptions o;
    o.sleeper = [](std::chrono::milliseconds) {};
    o.cache_dir = std::move(cache);
    gateway = std::make_unique<Gateway>(mock, o);
  }
};

struct ScratchDir {
  std::filesystem::path path;
  ScratchDir() {
    std::random_device rd;
    path = std::filesystem::temp_directory_path() / ("occupred-scratch-" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path);
  }
  ~ScratchDir() { std::filesystem::remove_all(path); }
};

/// Oracle triplets over synthetic users of the fixture taxonomy, with
/// template reasons ending on the truth title.
inline std::vector<OracleTriplet> synth_triplets(std::size_t n, std::uint64_t seed, const OccupationTaxonomy& tax) {
  const auto corpus = preprocess_corpus(synthesize_fixtures(seed, n, tax)).corpus;
  std::vector<OracleTriplet> out;
  for (const auto& u : corpus) {
    const auto inst = split_instance(u);
    const auto* e = tax.find(inst.truth.code);
    out.push_back({inst.history, template_reason(inst.history, e->title), *e, 0});
  }
  return out;
}

}  // namespace occupred::testing
