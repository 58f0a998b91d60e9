#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "occupred/errors.hpp"
#include "occupred/json_io.hpp"

namespace occupred {

class OccupationTaxonomy;

/// Calendar month. Day-level data is truncated on parse.
struct YearMonth {
  int year = 0;
  int month = 1;

  auto operator<=>(const YearMonth&) const = default;

  /// Accepts "YYYY-MM" and "YYYY-MM-DD" (day dropped). Throws InvalidArgument.
  static YearMonth parse(std::string_view text);
  std::string str() const;
  int ordinal() const noexcept { return year * 12 + (month - 1); }
  static YearMonth from_ordinal(int ordinal) noexcept { return {ordinal / 12, ordinal % 12 + 1}; }
};

struct EducationRecord {
  std::string school_name;
  std::string degree;
  std::string major;
  std::optional<int> graduation_year;

  bool operator==(const EducationRecord&) const = default;
};

struct JobRecord {
  std::string job_title;
  std::optional<std::string> occupation_code;  // absent = unclassified
  std::optional<std::string> occupation_name;
  std::optional<std::string> industry;
  std::optional<YearMonth> start_date;
  std::optional<YearMonth> end_date;  // absent = ongoing
  std::optional<double> salary;       // per year

  bool classified() const noexcept { return occupation_code && !occupation_code->empty(); }
  bool operator==(const JobRecord&) const = default;
};

/// One entry of a user history. The sort date is derived from the record:
/// start date for jobs, December of the graduation year for education. An
/// undated record keeps its position in the source sequence.
struct HistoryEvent {
  std::variant<EducationRecord, JobRecord> record;

  bool is_job() const noexcept { return std::holds_alternative<JobRecord>(record); }
  const JobRecord* job() const noexcept { return std::get_if<JobRecord>(&record); }
  const EducationRecord* education() const noexcept { return std::get_if<EducationRecord>(&record); }
  std::optional<YearMonth> sort_date() const;

  bool operator==(const HistoryEvent&) const = default;
};

struct UserHistory {
  std::string user_id;
  std::vector<HistoryEvent> events;

  std::size_t job_count() const;
  bool operator==(const UserHistory&) const = default;
};

/// Ground-truth occupation (code plus title as recorded on the held-out job).
struct OccupationRef {
  std::string code;
  std::string title;

  bool operator==(const OccupationRef&) const = default;
};

struct TaskInstance {
  UserHistory history;  // the first T events
  OccupationRef truth;  // y_{T+1}
  /// The held-out job was the only job; history has no job records.
  bool no_prior_jobs = false;
  /// Events listed after the held-out job but dated later than its start;
  /// removed so the history never sees the future.
  std::size_t dropped_future_events = 0;
};

// ---------------------------------------------------------------------------
// Validation

struct Violation {
  std::optional<std::size_t> record_index;  // none = user-level rule
  std::string rule;
  std::string message;

  bool operator==(const Violation&) const = default;
};

struct ValidationReport {
  std::vector<Violation> violations;
  bool ok() const noexcept { return violations.empty(); }
};

/// Checks every record and ordering invariant. Never throws on bad data.
ValidationReport validate_history(const UserHistory& history);

/// True for codes shaped DD-DDDD.DD.
bool is_onet_code(std::string_view code) noexcept;

// ---------------------------------------------------------------------------
// Preprocessing

struct PreprocessConfig {
  std::size_t min_jobs = 5;
  std::size_t max_jobs = 15;
  /// Count the held-out final job toward the bounds.
  bool count_held_out_job = true;
};

struct PreprocessStats {
  std::size_t users_in = 0;
  std::size_t users_retained = 0;
  std::size_t users_dropped_too_few_jobs = 0;
  std::size_t users_dropped_too_many_jobs = 0;
  std::size_t jobs_in = 0;
  std::size_t jobs_dropped_missing_start = 0;
  std::size_t jobs_dropped_unclassified = 0;
  std::size_t education_records_kept = 0;

  bool operator==(const PreprocessStats&) const = default;
};

struct PreprocessResult {
  std::vector<UserHistory> corpus;
  PreprocessStats stats;
};

/// Removes jobs lacking a start date or occupation code, then keeps users
/// whose remaining job count is within the configured bounds. Education
/// records are never removed.
PreprocessResult preprocess_corpus(const std::vector<UserHistory>& raw,
                                   const PreprocessConfig& config = {});

// ---------------------------------------------------------------------------
// Task construction

class LastJobUnclassified : public Error {
 public:
  explicit LastJobUnclassified(const std::string& user_id)
      : Error("LastJobUnclassified", "final job of user " + user_id + " has no occupation code") {}
};

class NoJobRecords : public Error {
 public:
  explicit NoJobRecords(const std::string& user_id)
      : Error("NoJobRecords", "user " + user_id + " has no job records") {}
};

/// Holds out the chronologically last job as the prediction target.
TaskInstance split_instance(const UserHistory& history);

// ---------------------------------------------------------------------------
// Prompt rendering

class UnknownTemplate : public Error {
 public:
  explicit UnknownTemplate(const std::string& id)
      : Error("UnknownTemplate", "unknown history template '" + id + "'") {}
};

inline constexpr std::string_view kDefaultHistoryTemplate = "plain-v1";

/// Registered ids: "plain-v1" (one attribute per line) and "compact-v1"
/// (one record per line).
std::string render_history_text(const UserHistory& history,
                                std::string_view template_id = kDefaultHistoryTemplate);
std::vector<std::string> history_template_ids();

// ---------------------------------------------------------------------------
// Fixture synthesis

struct SynthConfig {
  std::size_t min_jobs = 5;
  std::size_t max_jobs = 15;
  /// Transition kernel: probability of staying in the same occupation, of
  /// moving to a related one, otherwise a uniform jump.
  double p_stay = 0.25;
  double p_related = 0.55;
  /// Inject records that preprocessing must drop (missing start dates,
  /// unclassified jobs, too-short careers).
  bool inject_noise = false;
};

/// Deterministic per (seed, n_users, taxonomy, config). Throws
/// InvalidArgument when the taxonomy is empty.
std::vector<UserHistory> synthesize_fixtures(std::uint64_t seed, std::size_t n_users,
                                             const OccupationTaxonomy& taxonomy,
                                             const SynthConfig& config = {});

// ---------------------------------------------------------------------------
// JSON

void to_json(Json& j, const YearMonth& v);
void from_json(const Json& j, YearMonth& v);
void to_json(Json& j, const HistoryEvent& v);
void from_json(const Json& j, HistoryEvent& v);
void to_json(Json& j, const UserHistory& v);
void from_json(const Json& j, UserHistory& v);
void to_json(Json& j, const PreprocessStats& v);
void to_json(Json& j, const Violation& v);

}  // namespace occupred
