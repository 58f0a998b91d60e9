#include "occupred/history.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <sstream>

#include "occupred/rng.hpp"
#include "occupred/taxonomy.hpp"

namespace occupred {

namespace {

bool blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

int parse_int(std::string_view s, std::string_view whole) {
  int v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) {
    throw InvalidArgument("bad date '" + std::string(whole) + "'");
  }
  return v;
}

}  // namespace

YearMonth YearMonth::parse(std::string_view text) {
  if (text.size() != 7 && text.size() != 10) throw InvalidArgument("bad date '" + std::string(text) + "'");
  if (text[4] != '-' || (text.size() == 10 && text[7] != '-')) {
    throw InvalidArgument("bad date '" + std::string(text) + "'");
  }
  YearMonth ym{parse_int(text.substr(0, 4), text), parse_int(text.substr(5, 2), text)};
  if (ym.month < 1 || ym.month > 12) throw InvalidArgument("bad month in '" + std::string(text) + "'");
  return ym;
}

std::string YearMonth::str() const {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02d", year, month);
  return buf;
}

std::optional<YearMonth> HistoryEvent::sort_date() const {
  if (const auto* j = job()) return j->start_date;
  const auto* e = education();
  if (e->graduation_year) return YearMonth{*e->graduation_year, 12};
  return std::nullopt;
}

std::size_t UserHistory::job_count() const {
  return static_cast<std::size_t>(
      std::count_if(events.begin(), events.end(), [](const HistoryEvent& e) { return e.is_job(); }));
}

bool is_onet_code(std::string_view code) noexcept {
  if (code.size() != 10) return false;
  for (std::size_t i = 0; i < code.size(); ++i) {
    const char c = code[i];
    if (i == 2) {
      if (c != '-') return false;
    } else if (i == 7) {
      if (c != '.') return false;
    } else if (!std::isdigit(static_cast<unsigned char>(c))) {
      return false;
    }
  }
  return true;
}

ValidationReport validate_history(const UserHistory& history) {
  ValidationReport report;
  auto add = [&](std::optional<std::size_t> idx, std::string rule, std::string msg) {
    report.violations.push_back({idx, std::move(rule), std::move(msg)});
  };

  std::optional<YearMonth> last_dated;
  for (std::size_t i = 0; i < history.events.size(); ++i) {
    const auto& ev = history.events[i];
    if (const auto* e = ev.education()) {
      if (blank(e->school_name)) add(i, "education.school_name", "school name is empty");
      if (blank(e->degree)) add(i, "education.degree", "degree is empty");
      if (blank(e->major)) add(i, "education.major", "major is empty");
      if (e->graduation_year && (*e->graduation_year < 1900 || *e->graduation_year > 2100)) {
        add(i, "education.graduation_year", "graduation year outside [1900, 2100]");
      }
    } else {
      const auto& j = *ev.job();
      if (!j.start_date) add(i, "job.start_date", "job has no start date");
      if (j.start_date && j.end_date && *j.end_date < *j.start_date) {
        add(i, "job.date_range", "end date " + j.end_date->str() + " precedes start date " + j.start_date->str());
      }
      if (j.occupation_code && !is_onet_code(*j.occupation_code)) {
        add(i, "job.occupation_code", "occupation code '" + *j.occupation_code + "' is not DD-DDDD.DD");
      }
    }
    if (auto d = ev.sort_date()) {
      if (last_dated && *d < *last_dated) {
        add(i, "history.order", "event dated " + d->str() + " follows an event dated " + last_dated->str());
      }
      if (!last_dated || *d > *last_dated) last_dated = d;
    }
  }
  if (history.job_count() == 0) add(std::nullopt, "history.no_jobs", "history has no job records");
  return report;
}

PreprocessResult preprocess_corpus(const std::vector<UserHistory>& raw, const PreprocessConfig& config) {
  PreprocessResult result;
  auto& st = result.stats;
  st.users_in = raw.size();
  for (const auto& user : raw) {
    UserHistory kept{user.user_id, {}};
    std::size_t education = 0;
    for (const auto& ev : user.events) {
      if (const auto* j = ev.job()) {
        ++st.jobs_in;
        if (!j->start_date) {
          ++st.jobs_dropped_missing_start;
          continue;
        }
        if (!j->classified()) {
          ++st.jobs_dropped_unclassified;
          continue;
        }
      } else {
        ++education;
      }
      kept.events.push_back(ev);
    }
    std::size_t jobs = kept.job_count();
    const std::size_t counted = (config.count_held_out_job || jobs == 0) ? jobs : jobs - 1;
    if (counted < config.min_jobs) {
      ++st.users_dropped_too_few_jobs;
      continue;
    }
    if (counted > config.max_jobs) {
      ++st.users_dropped_too_many_jobs;
      continue;
    }
    st.education_records_kept += education;
    ++st.users_retained;
    result.corpus.push_back(std::move(kept));
  }
  return result;
}

TaskInstance split_instance(const UserHistory& history) {
  std::optional<std::size_t> last_job;
  for (std::size_t i = 0; i < history.events.size(); ++i) {
    if (history.events[i].is_job()) last_job = i;
  }
  if (!last_job) throw NoJobRecords(history.user_id);
  const auto& target = *history.events[*last_job].job();
  if (!target.classified()) throw LastJobUnclassified(history.user_id);

  TaskInstance inst;
  inst.history.user_id = history.user_id;
  inst.truth = {*target.occupation_code, target.occupation_name.value_or("")};
  for (std::size_t i = 0; i < history.events.size(); ++i) {
    if (i == *last_job) continue;
    const auto& ev = history.events[i];
    if (i > *last_job && target.start_date) {
      auto d = ev.sort_date();
      if (d && *d > *target.start_date) {
        ++inst.dropped_future_events;
        continue;
      }
    }
    inst.history.events.push_back(ev);
  }
  inst.no_prior_jobs = inst.history.job_count() == 0;
  return inst;
}

// ---------------------------------------------------------------------------
// Rendering

namespace {

std::string format_salary(double salary) {
  std::ostringstream os;
  if (std::floor(salary) == salary && std::fabs(salary) < 1e15) {
    os << static_cast<long long>(salary);
  } else {
    os.setf(std::ios::fixed);
    os.precision(2);
    os << salary;
  }
  return os.str();
}

std::string period(const JobRecord& j) {
  std::string s = j.start_date ? j.start_date->str() : "unknown";
  s += " to ";
  s += j.end_date ? j.end_date->str() : "present";
  return s;
}

std::string occupation_label(const JobRecord& j) {
  std::string s;
  if (j.occupation_name) s = *j.occupation_name;
  if (j.occupation_code) {
    if (!s.empty()) s += " ";
    s += "(" + *j.occupation_code + ")";
  }
  return s;
}

std::string render_plain(const UserHistory& h) {
  std::string out = "Education and job history (oldest first):\n";
  for (std::size_t i = 0; i < h.events.size(); ++i) {
    const auto& ev = h.events[i];
    out += "\n[" + std::to_string(i + 1) + "] ";
    if (const auto* e = ev.education()) {
      out += "Education\n";
      out += "School: " + e->school_name + "\n";
      out += "Degree: " + e->degree + "\n";
      out += "Major: " + e->major + "\n";
      if (e->graduation_year) out += "Graduation year: " + std::to_string(*e->graduation_year) + "\n";
    } else {
      const auto& j = *ev.job();
      out += "Job\n";
      out += "Job title: " + j.job_title + "\n";
      if (j.occupation_code || j.occupation_name) out += "Occupation: " + occupation_label(j) + "\n";
      if (j.industry) out += "Industry: " + *j.industry + "\n";
      out += "Period: " + period(j) + "\n";
      if (j.salary) out += "Salary: " + format_salary(*j.salary) + " per year\n";
    }
  }
  return out;
}

std::string render_compact(const UserHistory& h) {
  std::string out;
  for (const auto& ev : h.events) {
    if (const auto* e = ev.education()) {
      out += "- Education: " + e->degree + " in " + e->major + ", " + e->school_name;
      if (e->graduation_year) out += ", graduated " + std::to_string(*e->graduation_year);
    } else {
      const auto& j = *ev.job();
      out += "- Job: " + j.job_title;
      if (j.occupation_code || j.occupation_name) out += " [" + occupation_label(j) + "]";
      if (j.industry) out += ", industry " + *j.industry;
      out += ", " + period(j);
      if (j.salary) out += ", salary " + format_salary(*j.salary) + " per year";
    }
    out += "\n";
  }
  return out;
}

}  // namespace

std::vector<std::string> history_template_ids() { return {"plain-v1", "compact-v1"}; }

std::string render_history_text(const UserHistory& history, std::string_view template_id) {
  if (template_id == "plain-v1") return render_plain(history);
  if (template_id == "compact-v1") return render_compact(history);
  throw UnknownTemplate(std::string(template_id));
}

// ---------------------------------------------------------------------------
// Fixtures

namespace {

constexpr std::string_view kSchools[] = {
    "Lakeside State University", "Northfield College",        "Riverbend Institute of Technology",
    "Westbrook University",      "Granite Hills Community College", "Eastport University",
    "Summit Valley College",     "Harborview State University"};
constexpr std::string_view kMajors[] = {"Computer Science", "Accounting",  "Business Administration",
                                        "Nursing",          "Marketing",   "Mechanical Engineering",
                                        "Psychology",       "Economics",   "Information Systems"};
constexpr std::string_view kIndustries[] = {"Information Technology", "Finance and Insurance",
                                            "Health Care",            "Manufacturing",
                                            "Retail Trade",           "Professional Services",
                                            "Education",              "Public Administration"};
constexpr std::string_view kSeniority[] = {"", "", "Senior ", "Lead ", "Associate ", "Junior "};

template <std::size_t N>
std::string pick(SplitMix64& rng, const std::string_view (&pool)[N]) {
  return std::string(pool[rng.below(N)]);
}

/// Singular-ish job title from an occupation title ("Software Developers" ->
/// "Software Developer").
std::string job_title_for(const std::string& occupation_title, SplitMix64& rng) {
  std::string base = occupation_title;
  if (auto comma = base.find(','); comma != std::string::npos) base = base.substr(0, comma);
  if (auto and_pos = base.find(" and "); and_pos != std::string::npos) base = base.substr(0, and_pos);
  if (base.size() > 3 && base.back() == 's' && base[base.size() - 2] != 's') base.pop_back();
  return pick(rng, kSeniority) + base;
}

std::size_t next_occupation(std::size_t current, const OccupationTaxonomy& tax, const SynthConfig& cfg,
                            SplitMix64& rng) {
  const double u = rng.unit();
  if (u < cfg.p_stay) return current;
  const auto& ranked = tax.related(tax.entries()[current].code).ranked;
  if (u < cfg.p_stay + cfg.p_related && ranked.size() > 1) {
    const auto& code = ranked[1 + rng.below(ranked.size() - 1)];
    for (std::size_t i = 0; i < tax.size(); ++i) {
      if (tax.entries()[i].code == code) return i;
    }
  }
  return rng.below(tax.size());
}

}  // namespace

std::vector<UserHistory> synthesize_fixtures(std::uint64_t seed, std::size_t n_users,
                                             const OccupationTaxonomy& taxonomy, const SynthConfig& config) {
  if (taxonomy.empty()) throw InvalidArgument("synthesize_fixtures: taxonomy is empty");
  if (config.min_jobs == 0 || config.min_jobs > config.max_jobs) {
    throw InvalidArgument("synthesize_fixtures: bad job-count bounds");
  }
  std::vector<UserHistory> corpus;
  corpus.reserve(n_users);
  for (std::size_t u = 0; u < n_users; ++u) {
    char id[32];
    std::snprintf(id, sizeof id, "u%05zu", u + 1);
    UserHistory user{id, {}};
    auto rng = keyed_rng(user.user_id, seed);

    const int first_grad = static_cast<int>(rng.between(1990, 2012));
    EducationRecord bachelor{pick(rng, kSchools), "Bachelor's", pick(rng, kMajors), first_grad};
    if (config.inject_noise && rng.chance(0.2)) bachelor.graduation_year.reset();
    user.events.push_back({bachelor});

    const std::size_t n_jobs = static_cast<std::size_t>(
        rng.between(static_cast<std::int64_t>(config.min_jobs), static_cast<std::int64_t>(config.max_jobs)));
    int month = YearMonth{first_grad + 1, 1}.ordinal() + static_cast<int>(rng.between(0, 6));
    std::size_t occ = rng.below(taxonomy.size());
    double salary = 38000.0 + 1000.0 * static_cast<double>(rng.between(0, 30));
    // Optional graduate degree earned after one of the non-final jobs.
    const std::size_t masters_after = (n_jobs > 1 && rng.chance(0.3)) ? 1 + rng.below(n_jobs - 1) : 0;

    for (std::size_t k = 0; k < n_jobs; ++k) {
      if (k > 0) occ = next_occupation(occ, taxonomy, config, rng);
      const auto& entry = taxonomy.entries()[occ];
      const int duration = static_cast<int>(rng.between(6, 48));
      JobRecord job;
      job.job_title = job_title_for(entry.title, rng);
      job.occupation_code = entry.code;
      job.occupation_name = entry.title;
      job.industry = pick(rng, kIndustries);
      job.start_date = YearMonth::from_ordinal(month);
      if (k + 1 < n_jobs) job.end_date = YearMonth::from_ordinal(month + duration - 1);
      if (rng.chance(0.8)) job.salary = salary;
      salary += 1000.0 * static_cast<double>(rng.between(1, 8));
      user.events.push_back({job});

      month += duration + static_cast<int>(rng.between(0, 3));
      if (k + 1 == masters_after) {
        const int grad_year = YearMonth::from_ordinal(month - 1).year;
        user.events.push_back({EducationRecord{pick(rng, kSchools), "Master's", pick(rng, kMajors), grad_year}});
        month = std::max(month, YearMonth{grad_year + 1, 1}.ordinal());
      }
    }

    if (config.inject_noise) {
      // Noise only touches non-final jobs so the held-out target stays valid.
      for (std::size_t i = 1; i + 1 < user.events.size(); ++i) {
        auto* j = std::get_if<JobRecord>(&user.events[i].record);
        if (!j) continue;
        const double r = rng.unit();
        if (r < 0.05) {
          j->start_date.reset();
        } else if (r < 0.10) {
          j->occupation_code.reset();
          j->occupation_name.reset();
        }
      }
    }
    corpus.push_back(std::move(user));
  }
  return corpus;
}

// ---------------------------------------------------------------------------
// JSON

void to_json(Json& j, const YearMonth& v) { j = v.str(); }
void from_json(const Json& j, YearMonth& v) { v = YearMonth::parse(j.get<std::string>()); }

namespace {

template <class T>
void put_opt(Json& j, const char* key, const std::optional<T>& v) {
  if (v) j[key] = *v;
}

template <class T>
void get_opt(const Json& j, const char* key, std::optional<T>& out) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) {
    out.reset();
  } else {
    out = it->get<T>();
  }
}

}  // namespace

void to_json(Json& j, const HistoryEvent& v) {
  j = Json::object();
  if (const auto* e = v.education()) {
    j["kind"] = "education";
    j["school_name"] = e->school_name;
    j["degree"] = e->degree;
    j["major"] = e->major;
    put_opt(j, "graduation_year", e->graduation_year);
  } else {
    const auto& r = *v.job();
    j["kind"] = "job";
    j["job_title"] = r.job_title;
    put_opt(j, "occupation_code", r.occupation_code);
    put_opt(j, "occupation_name", r.occupation_name);
    put_opt(j, "industry", r.industry);
    put_opt(j, "start_date", r.start_date);
    put_opt(j, "end_date", r.end_date);
    put_opt(j, "salary", r.salary);
  }
}

void from_json(const Json& j, HistoryEvent& v) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "education") {
    EducationRecord e;
    e.school_name = j.at("school_name").get<std::string>();
    e.degree = j.at("degree").get<std::string>();
    e.major = j.at("major").get<std::string>();
    get_opt(j, "graduation_year", e.graduation_year);
    v.record = std::move(e);
  } else if (kind == "job") {
    JobRecord r;
    r.job_title = j.at("job_title").get<std::string>();
    get_opt(j, "occupation_code", r.occupation_code);
    get_opt(j, "occupation_name", r.occupation_name);
    get_opt(j, "industry", r.industry);
    get_opt(j, "start_date", r.start_date);
    get_opt(j, "end_date", r.end_date);
    get_opt(j, "salary", r.salary);
    v.record = std::move(r);
  } else {
    throw InvalidArgument("unknown event kind '" + kind + "'");
  }
}

void to_json(Json& j, const UserHistory& v) {
  j = Json::object();
  j["user_id"] = v.user_id;
  j["events"] = v.events;
}

void from_json(const Json& j, UserHistory& v) {
  v.user_id = j.at("user_id").get<std::string>();
  v.events = j.at("events").get<std::vector<HistoryEvent>>();
}

void to_json(Json& j, const PreprocessStats& v) {
  j = Json{{"users_in", v.users_in},
           {"users_retained", v.users_retained},
           {"users_dropped_too_few_jobs", v.users_dropped_too_few_jobs},
           {"users_dropped_too_many_jobs", v.users_dropped_too_many_jobs},
           {"jobs_in", v.jobs_in},
           {"jobs_dropped_missing_start", v.jobs_dropped_missing_start},
           {"jobs_dropped_unclassified", v.jobs_dropped_unclassified},
           {"education_records_kept", v.education_records_kept}};
}

void to_json(Json& j, const Violation& v) {
  j = Json::object();
  if (v.record_index) {
    j["record_index"] = *v.record_index;
  } else {
    j["record_index"] = nullptr;
  }
  j["rule"] = v.rule;
  j["message"] = v.message;
}

}  // namespace occupred
