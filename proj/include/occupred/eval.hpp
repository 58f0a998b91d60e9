#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "occupred/errors.hpp"
#include "occupred/inference.hpp"
#include "occupred/judge.hpp"
#include "occupred/json_io.hpp"
#include "occupred/taxonomy.hpp"

namespace occupred {

class EmptyInput : public Error {
 public:
  explicit EmptyInput(const std::string& what) : Error("EmptyInput", what) {}
};

class LengthMismatch : public Error {
 public:
  explicit LengthMismatch(const std::string& what) : Error("LengthMismatch", what) {}
};

// ---------------------------------------------------------------------------
// Accuracy

struct UserScore {
  std::string user_id;
  int em = 0;
  double rm = 0;                     // 1/k, or 0 when outside the related list
  std::optional<std::size_t> rank;  // k

  bool operator==(const UserScore&) const = default;
};

struct MetricReport {
  double acc_em = 0;
  double acc_rm = 0;
  std::size_t n = 0;
  std::vector<UserScore> per_user;
};

/// Share of users whose normalized prediction equals the truth code.
/// Throws EmptyInput.
double acc_em(const std::vector<PredictionRecord>& records);
/// Mean of 1/rank of the prediction in the truth's related list. Throws
/// EmptyInput or UnknownTruthCode.
double acc_rm(const std::vector<PredictionRecord>& records, const OccupationTaxonomy& taxonomy);
/// Both accuracies with per-user rows, in record order.
MetricReport score_predictions(const std::vector<PredictionRecord>& records, const OccupationTaxonomy& taxonomy);

/// Records plus failures turned into empty, unnormalized records, so failed
/// users count as wrong. Failures without a truth code are skipped.
std::vector<PredictionRecord> with_failures_as_wrong(std::vector<PredictionRecord> records,
                                                     const std::vector<PredictionFailure>& failures);

// ---------------------------------------------------------------------------
// Significance

struct ContingencyTable {
  std::size_t b = 0;  // A correct, B wrong
  std::size_t c = 0;  // A wrong, B correct
  std::size_t both_correct = 0;
  std::size_t both_wrong = 0;

  std::size_t n() const noexcept { return b + c + both_correct + both_wrong; }
  bool operator==(const ContingencyTable&) const = default;
};

struct McNemarResult {
  ContingencyTable table;
  double statistic = 0;  // (|b-c|-1)^2 / (b+c)
  double p_value = 1;
  double corrected_alpha = 0.05;
  bool significant = false;
  std::string method;  // "chi-square", "exact-binomial" or "degenerate"
};

/// Continuity-corrected statistic; chi-square(1) p-value when b+c >= 25,
/// exact two-sided binomial otherwise. b+c = 0 reports p = 1 with method
/// "degenerate". Throws UserSetMismatch unless users align position by
/// position, InvalidArgument when n_comparisons is 0.
McNemarResult mcnemar(const MetricReport& a, const MetricReport& b, std::size_t n_comparisons, double alpha = 0.05);
McNemarResult mcnemar(const ContingencyTable& table, std::size_t n_comparisons, double alpha = 0.05);

// ---------------------------------------------------------------------------
// Text similarity

/// Lowercase, punctuation split into its own tokens, whitespace separated.
std::vector<std::string> metric_tokens(std::string_view text);

inline constexpr double kBleuEpsilon = 1e-9;

/// Sentence BLEU-4 with add-epsilon smoothing for zero n-gram matches.
double bleu(std::string_view candidate, std::string_view reference);
/// F1 of clipped n-gram overlap; n is 1 or 2.
double rouge_n(std::string_view candidate, std::string_view reference, int n);
/// F1 from the longest common subsequence.
double rouge_l(std::string_view candidate, std::string_view reference);

struct ReasonQualityRow {
  std::string label;
  std::size_t n = 0;
  double fact = 0;
  double cohr = 0;
  double util = 0;
  double overall = 0;  // mean of the three dimension means
  double bleu = 0;
  double rouge1 = 0;
  double rouge2 = 0;
  double rouge_l = 0;
};

/// Similarity columns are means of per-pair scores against the oracle reasons.
/// Throws LengthMismatch or EmptyInput.
ReasonQualityRow reason_quality_report(const std::vector<std::string>& generated,
                                       const std::vector<std::string>& oracle,
                                       const std::vector<RationalityScores>& judge_scores,
                                       std::string label = "generated");

// ---------------------------------------------------------------------------
// Reports

/// Version strings stamped into every report.
Json metric_definitions();

struct ModelEvaluation {
  std::string label;
  MetricReport metrics;
  std::size_t failures = 0;
};

struct PairwiseSignificance {
  std::string model_a;
  std::string model_b;
  McNemarResult result;
};

/// All unordered pairs, Bonferroni-corrected by the number of pairs.
std::vector<PairwiseSignificance> pairwise_significance(const std::vector<ModelEvaluation>& models,
                                                        double alpha = 0.05);

Json metrics_json(const std::vector<ModelEvaluation>& models, const std::vector<ReasonQualityRow>& quality = {});
std::string metrics_text(const std::vector<ModelEvaluation>& models, const std::vector<ReasonQualityRow>& quality = {});
Json significance_json(const std::vector<PairwiseSignificance>& comparisons, double alpha = 0.05);

Json to_json(const McNemarResult& r);
Json to_json(const ReasonQualityRow& r);

}  // namespace occupred
