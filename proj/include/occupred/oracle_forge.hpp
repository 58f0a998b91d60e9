#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "occupred/history.hpp"
#include "occupred/json_io.hpp"
#include "occupred/llm_gateway.hpp"
#include "occupred/prompts.hpp"
#include "occupred/taxonomy.hpp"

namespace occupred {

enum class AttemptStatus { ok, call_failed, unparseable };

struct Attempt {
  int attempt_index = 0;
  std::string reason_text;
  std::string raw_prediction;
  std::optional<OccupationEntry> normalized_prediction;
  bool correct = false;
  AttemptStatus status = AttemptStatus::ok;
  std::string error;  // call error kind/message or missing tag

  bool operator==(const Attempt&) const = default;
};

struct OracleTriplet {
  UserHistory history;
  std::string reason;
  OccupationEntry truth;
  int source_attempt = 0;

  bool operator==(const OracleTriplet&) const = default;
};

/// Persisted form of a triplet (history is joined back from the corpus).
struct PoolRecord {
  std::string user_id;
  std::string reason;
  std::string truth_code;
  std::string truth_title;
  int source_attempt = 0;

  bool operator==(const PoolRecord&) const = default;
};

/// Every attempt for one user, kept for preference-pair construction.
struct UserAttempts {
  std::string user_id;
  OccupationEntry truth;
  std::vector<Attempt> attempts;

  bool operator==(const UserAttempts&) const = default;
};

struct ForgeConfig {
  CallSettings call{"generator", "", 0.8, 1024, std::nullopt, 4};
  std::size_t n_attempts = 3;
  std::uint64_t rng_seed = 0;
  PromptSet prompts = PromptSet::defaults();
};

struct ForgeStats {
  std::size_t users_total = 0;
  std::size_t users_retained = 0;
  std::size_t users_no_correct = 0;
  /// Users whose task could not be built (no jobs, or truth outside the taxonomy).
  std::size_t users_invalid = 0;
  std::size_t attempts_total = 0;
  std::size_t attempts_correct = 0;
  std::size_t attempts_call_failed = 0;
  std::size_t attempts_unparseable = 0;
  /// Index k holds the number of users with exactly k correct attempts.
  std::vector<std::size_t> correct_histogram;

  bool operator==(const ForgeStats&) const = default;
};

struct TrainingPool {
  std::vector<OracleTriplet> triplets;
  std::vector<UserAttempts> attempts;
  std::vector<std::pair<std::string, std::string>> invalid_users;  // (user_id, reason)
  ForgeStats stats;
};

/// Request for one attempt. Labels carry stage and user id.
ChatRequest generation_request(const TaskInstance& instance, int attempt_index, const ForgeConfig& config);

/// Turns a completed call into an Attempt, checked against the truth code.
Attempt evaluate_attempt(int attempt_index, const CallResult& result, const std::string& truth_code,
                         const OccupationTaxonomy& taxonomy);

/// Exactly n_attempts entries with attempt_index 0..n-1. Per-call failures
/// are recorded on the attempt. Throws InvalidArgument when n_attempts is 0.
std::vector<Attempt> generate_attempts(const TaskInstance& instance, std::size_t n_attempts, Gateway& gateway,
                                       const OccupationTaxonomy& taxonomy, const ForgeConfig& config = {});

std::vector<Attempt> filter_correct(const std::vector<Attempt>& attempts);

/// Uniform pick keyed by (user_id, seed). None when nothing is valid. The
/// triplet's truth is taken from the instance as given.
std::optional<OracleTriplet> retain_and_sample(const TaskInstance& instance, const std::vector<Attempt>& valid,
                                               std::uint64_t rng_seed);

/// All users' attempts go through one bounded batch; results merge in corpus
/// order. Truth titles are replaced by their canonical taxonomy titles. Throws InvalidArgument on configuration errors only.
TrainingPool build_training_pool(const std::vector<UserHistory>& corpus, Gateway& gateway,
                                 const OccupationTaxonomy& taxonomy, const ForgeConfig& config = {});

PoolRecord to_record(const OracleTriplet& t);
/// Rebuilds triplets from persisted records and the corpus they came from.
/// Throws SchemaError for users missing from the corpus.
std::vector<OracleTriplet> attach_histories(const std::vector<PoolRecord>& records,
                                            const std::vector<UserHistory>& corpus);

std::string to_string(AttemptStatus s);
AttemptStatus attempt_status_from_string(const std::string& s);

void to_json(Json& j, const Attempt& a);
void from_json(const Json& j, Attempt& a);
void to_json(Json& j, const PoolRecord& r);
void from_json(const Json& j, PoolRecord& r);
void to_json(Json& j, const UserAttempts& u);
void from_json(const Json& j, UserAttempts& u);
void to_json(Json& j, const ForgeStats& s);

}  // namespace occupred
