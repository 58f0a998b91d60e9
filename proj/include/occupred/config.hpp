#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "occupred/errors.hpp"
#include "occupred/json_io.hpp"

namespace occupred {

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error("ConfigError", what) {}
};

/// Reads the TOML subset used by run configs: [section] and [a.b] headers,
/// key = value with basic strings, integers, floats, booleans and one-line
/// arrays of those, '#' comments. Throws ConfigError naming the line.
Json parse_toml_subset(const std::string& text, const std::string& source = "config");

struct EndpointSettings {
  std::string base_url;
  std::string model;
  /// Environment variable holding the API key. The key itself never enters
  /// the config, manifests or caches.
  std::string api_key_env;
  std::optional<double> temperature;
  int max_tokens = 1024;
  std::optional<std::int64_t> sampling_seed;
  std::size_t max_in_flight = 4;
  int timeout_ms = 60000;
  int max_attempts = 3;
};

struct SeedSettings {
  std::uint64_t sampling = 0;
  std::uint64_t perturbation = 0;
  std::uint64_t pairing = 0;
  std::uint64_t synth = 0;
  std::uint64_t split = 0;
  std::uint64_t scenario = 0;
};

struct RunConfig {
  std::filesystem::path runs_dir = "runs";
  double tau = 4.0;
  std::size_t n_attempts = 3;
  std::size_t max_in_flight = 4;
  std::string history_template = "plain-v1";
  std::string prompt_version = "v1";
  double test_fraction = 0.2;

  SeedSettings seeds;
  std::map<std::string, EndpointSettings> endpoints;

  // synth
  std::size_t synth_users = 100;
  bool synth_noise = false;
  double p_correct_attempt = 0.55;
  double p_judge_reject = 0.2;
  double p_predict_correct = 0.45;

  // optional external inputs for ingest
  std::optional<std::filesystem::path> corpus_path;
  std::optional<std::filesystem::path> occupations_path;
  std::optional<std::filesystem::path> related_path;

  std::size_t robustness_items = 100;
  std::string sft_variant = "joint";
  std::string dpo_variant = "joint";
  std::string pairing_policy = "one-per-user";
  std::vector<std::string> predict_modes = {"two_model", "joint"};
  bool evaluate_reasons = true;

  /// Throws ConfigError for unknown keys, wrong types or invalid values.
  static RunConfig from_json(const Json& j);
  static RunConfig from_toml(const std::string& text, const std::string& source = "config");
  static RunConfig load(const std::filesystem::path& path);

  /// tau in [1,5], n_attempts >= 1, known variants and modes.
  void validate() const;
  /// Throws ConfigError unless [endpoints.<id>] is defined with a base URL.
  const EndpointSettings& endpoint(const std::string& id) const;

  /// Applies "name=value" seed overrides. Throws ConfigError.
  void apply_seed_override(const std::string& assignment);

  /// Canonical form used for the config digest.
  Json to_json() const;
  std::string digest() const;
};

}  // namespace occupred
