#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "occupred/json_io.hpp"
#include "occupred/oracle_forge.hpp"
#include "occupred/prompts.hpp"

namespace occupred {

enum class SftVariant { joint, reason, predictor };
std::string to_string(SftVariant v);
SftVariant sft_variant_from_string(const std::string& s);

struct SftExample {
  std::string instruction;
  std::string input;
  std::string output;
  SftVariant variant = SftVariant::joint;

  bool operator==(const SftExample&) const = default;
};

/// joint: both tagged blocks; reason: REASON only; predictor: history plus
/// oracle reason in, NEXT_OCCUPATION line out.
std::vector<SftExample> emit_sft(const std::vector<OracleTriplet>& pool, SftVariant variant,
                                 const PromptSet& prompts = PromptSet::defaults());

/// joint: preference over reason plus occupation; reason: over the reason
/// alone (two-model option, predictor frozen).
enum class DpoVariant { joint, reason };
std::string to_string(DpoVariant v);
DpoVariant dpo_variant_from_string(const std::string& s);

enum class PairingPolicy { one_per_user, all_pairs };
std::string to_string(PairingPolicy p);
PairingPolicy pairing_policy_from_string(const std::string& s);

struct DpoPair {
  std::string prompt;
  std::string chosen;
  std::string rejected;
  std::string user_id;

  bool operator==(const DpoPair&) const = default;
};

struct DpoStats {
  std::size_t users_in_pool = 0;
  std::size_t users_paired = 0;
  std::size_t excluded_all_correct = 0;
  /// Had incorrect attempts, but none with a usable reason text.
  std::size_t excluded_no_usable_negative = 0;
  /// Pool users with no persisted attempts.
  std::size_t excluded_missing_attempts = 0;
  std::size_t pairs = 0;
};

struct DpoResult {
  std::vector<DpoPair> pairs;
  DpoStats stats;
};

/// Only users in `filtered_pool` are considered. one_per_user pairs the pool's
/// oracle reason with one seeded incorrect attempt; all_pairs crosses every
/// correct attempt with every usable incorrect one. Negatives are incorrect,
/// completed attempts with a non-empty reason.
DpoResult emit_dpo(const std::vector<UserAttempts>& attempts, const std::vector<OracleTriplet>& filtered_pool,
                   DpoVariant variant, PairingPolicy policy, std::uint64_t rng_seed,
                   const PromptSet& prompts = PromptSet::defaults());

struct DatasetMetadata {
  std::string kind;  // "sft" or "dpo"
  std::string variant;
  std::string pairing_policy;  // dpo only
  std::uint64_t forge_seed = 0;
  std::uint64_t pairing_seed = 0;
  double tau = 4.0;
  std::size_t n_attempts = 3;
  std::size_t records = 0;
  std::string prompt_version;
  std::string prompt_digest;

  Json to_json() const;
};

/// Trainer settings recorded next to each dataset.
Json sft_hyperparameters();
Json dpo_hyperparameters();

void to_json(Json& j, const SftExample& e);
void from_json(const Json& j, SftExample& e);
void to_json(Json& j, const DpoPair& p);
void from_json(const Json& j, DpoPair& p);
void to_json(Json& j, const DpoStats& s);

}  // namespace occupred
