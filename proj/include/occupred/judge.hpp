#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "occupred/history.hpp"
#include "occupred/json_io.hpp"
#include "occupred/llm_gateway.hpp"
#include "occupred/oracle_forge.hpp"
#include "occupred/prompts.hpp"
#include "occupred/taxonomy.hpp"

namespace occupred {

enum class Dimension { factuality = 0, coherence = 1, utility = 2 };
inline constexpr std::array<Dimension, 3> kDimensions = {Dimension::factuality, Dimension::coherence,
                                                         Dimension::utility};
std::string to_string(Dimension d);
/// "FACT" / "COHR" / "UTIL".
std::string dimension_tag(Dimension d);
Dimension dimension_from_string(const std::string& s);

struct RationalityScores {
  double fact = 0;
  double cohr = 0;
  double util = 0;
  std::array<std::string, 3> justifications;
  /// Dimensions whose parsed value fell outside [1,5] and was clamped.
  std::vector<Dimension> clamped;

  double get(Dimension d) const;
  double min() const;
  bool operator==(const RationalityScores&) const = default;
};

class JudgeUnparseable : public Error {
 public:
  explicit JudgeUnparseable(const std::string& what) : Error("JudgeUnparseable", what) {}
};

/// Reads "FACT: <n>", "COHR: <n>", "UTIL: <n>" anywhere in the text; the
/// justification is whatever follows the number up to the next tag. Values
/// outside [1,5] are clamped and flagged. None when any tag is missing.
std::optional<RationalityScores> parse_judge_output(std::string_view text);

struct JudgeConfig {
  CallSettings call{"judge", "", 0.0, 512, std::nullopt, 4};
  PromptSet prompts = PromptSet::defaults();
};

/// Prompt given to the judge for one reason.
std::string judge_prompt(const UserHistory& history, std::string_view reason, std::string_view truth_title,
                         const PromptSet& prompts);

/// Throws InvalidArgument for an empty reason and JudgeUnparseable when the
/// reply and one reprompt both fail to parse. Call failures propagate.
RationalityScores score_reason(const UserHistory& history, const std::string& reason, const OccupationEntry& truth,
                               Gateway& gateway, const JudgeConfig& config = {},
                               std::map<std::string, std::string> labels = {});

struct JudgeItem {
  const UserHistory* history = nullptr;
  std::string reason;
  OccupationEntry truth;
  std::map<std::string, std::string> labels;
};

struct JudgeOutcome {
  std::optional<RationalityScores> scores;
  std::optional<CallError> error;
  /// Raw judge replies in order (the second one only after a reprompt).
  std::vector<std::string> replies;
};

/// Batched scoring with one reprompt round for unparseable replies.
std::vector<JudgeOutcome> score_reasons(const std::vector<JudgeItem>& items, Gateway& gateway,
                                        const JudgeConfig& config = {});

bool passes_threshold(const RationalityScores& scores, double tau = 4.0);

struct DimensionSummary {
  std::size_t n = 0;
  double mean = 0;
  double min = 0;
  double max = 0;
  /// Counts for [1,2), [2,3), [3,4), [4,5), 5.
  std::array<std::size_t, 5> histogram{};
};

struct JudgeStats {
  double tau = 4.0;
  std::size_t items_in = 0;
  std::size_t retained = 0;
  std::size_t below_threshold = 0;
  std::size_t judge_errors = 0;
  std::size_t clamped_items = 0;
  std::array<DimensionSummary, 3> per_dimension;
};

struct ScoredItem {
  std::string user_id;
  std::optional<RationalityScores> scores;
  std::optional<CallError> error;
  bool passed = false;
  std::vector<std::string> replies;
};

struct FilterResult {
  std::vector<OracleTriplet> retained;
  std::vector<ScoredItem> items;
  JudgeStats stats;
};

/// Keeps triplets whose every dimension is >= tau. Per-item judge errors
/// exclude the item and are counted.
FilterResult filter_pool(const std::vector<OracleTriplet>& pool, Gateway& gateway, double tau = 4.0,
                         const JudgeConfig& config = {});

// ---------------------------------------------------------------------------
// Perturbation

enum class PerturbLevel { minor, major };
std::string to_string(PerturbLevel l);

struct PerturbationSpec {
  Dimension dimension = Dimension::factuality;
  PerturbLevel level = PerturbLevel::minor;
  std::uint64_t rng_seed = 0;
};

class NotPerturbable : public Error {
 public:
  explicit NotPerturbable(const std::string& what) : Error("NotPerturbable", what) {}
};

/// Splits after '.', '?' or '!' followed by whitespace. Pieces are trimmed;
/// empty pieces are dropped.
std::vector<std::string> split_sentences(std::string_view text);

/// Deterministic per spec.rng_seed. Throws NotPerturbable when the reason
/// lacks what the chosen perturbation needs.
std::string perturb(const std::string& reason, const PerturbationSpec& spec, const UserHistory& history,
                    const OccupationEntry& truth, const OccupationTaxonomy& taxonomy);

// ---------------------------------------------------------------------------
// Robustness report

struct MeanScores {
  double fact = 0;
  double cohr = 0;
  double util = 0;

  double get(Dimension d) const;
  bool operator==(const MeanScores&) const = default;
};

/// Variant names: "oracle" and "<dimension>-<level>", e.g. "coherence-major".
std::vector<std::string> robustness_variants();

struct RobustnessItem {
  std::string user_id;
  /// Scores per variant; a variant missing here was excluded for this item.
  std::map<std::string, RationalityScores> scores;
  std::map<std::string, std::string> perturbed_text;
  std::optional<std::string> excluded;  // error kind that excluded the item
  std::map<std::string, std::vector<std::string>> replies;
};

struct RobustnessReport {
  std::size_t sample_size = 0;
  std::size_t included = 0;
  std::size_t excluded_not_perturbable = 0;
  std::size_t excluded_judge_error = 0;
  /// Targeted table: each perturbed row reads the column of the dimension its
  /// perturbation attacked.
  MeanScores oracle;
  MeanScores minor;
  MeanScores major;
  /// Every variant scored on every dimension.
  std::map<std::string, MeanScores> cross;
  /// Per level: each dimension averaged over all three perturbation families.
  MeanScores minor_all_families;
  MeanScores major_all_families;
  std::vector<RobustnessItem> items;

  Json to_json() const;
  /// Aligned table mirroring rows Oracle / Minor / Major.
  std::string to_text() const;
};

struct RobustnessConfig {
  std::uint64_t perturb_seed = 0;
  JudgeConfig judge;
};

/// Per-(item, variant) perturbation seed.
std::uint64_t perturbation_seed(const std::string& user_id, const std::string& variant, std::uint64_t seed);

/// Items whose perturbations fail or whose judge calls fail are excluded
/// from every mean. Throws InvalidArgument on an empty sample.
RobustnessReport judge_robustness_report(const std::vector<OracleTriplet>& sample, Gateway& gateway,
                                         const OccupationTaxonomy& taxonomy, const RobustnessConfig& config = {});

void to_json(Json& j, const RationalityScores& s);
void from_json(const Json& j, RationalityScores& s);
void to_json(Json& j, const JudgeStats& s);
void to_json(Json& j, const ScoredItem& s);
void to_json(Json& j, const MeanScores& m);

}  // namespace occupred
