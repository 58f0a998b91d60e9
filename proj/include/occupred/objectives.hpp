#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "occupred/errors.hpp"
#include "occupred/json_io.hpp"

namespace occupred {

class NonFiniteInput : public Error {
 public:
  explicit NonFiniteInput(const std::string& what) : Error("NonFiniteInput", what) {}
};

/// Per-token log-probabilities over one target span. Every value must be
/// finite and <= 0, and the span non-empty.
struct SpanLogProbs {
  std::vector<double> values;
};

/// user id -> span. Ordered so sums are reproducible.
using UserSpans = std::map<std::string, SpanLogProbs>;

struct NllResult {
  double total = 0;           // sum over users and tokens of -log p
  std::size_t tokens = 0;
  std::size_t users = 0;
  double per_token_mean = 0;  // total / tokens
  double per_user_mean = 0;   // total / users
};

/// Reasoning-token negative log-likelihood. Throws NonFiniteInput for NaN,
/// infinite or positive log-probs and for empty spans.
NllResult nll_reason(const UserSpans& spans);
/// Same reduction over occupation-token spans.
NllResult nll_prediction(const UserSpans& spans);

/// nll_reason + nll_prediction. Throws UserSetMismatch unless both inputs
/// cover the same users.
double joint_loss(const UserSpans& reason_spans, const UserSpans& prediction_spans);

/// Summed sequence log-probabilities of the chosen and rejected outputs under
/// the policy and the reference model.
struct PreferenceLogProbs {
  double policy_pos = 0;
  double policy_neg = 0;
  double ref_pos = 0;
  double ref_neg = 0;
};

/// Preference margin z = (policy_pos - policy_neg) - (ref_pos - ref_neg).
double dpo_margin(const PreferenceLogProbs& p);

/// -log sigmoid(beta * z), computed as softplus(-beta * z) so it stays finite
/// for large |beta * z|. Throws InvalidArgument for beta <= 0 and
/// NonFiniteInput for bad log-probs.
double dpo_loss(const PreferenceLogProbs& p, double beta);

/// d loss / d policy_pos = -beta * sigmoid(-beta * z).
double dpo_loss_grad_policy_pos(const PreferenceLogProbs& p, double beta);

/// Numerically stable log(sigmoid(x)).
double log_sigmoid(double x);
double sigmoid(double x);

/// Records {user_id, span: "reason"|"occupation", logprobs: [...]} from a
/// JSON-Lines file, split by span. Throws SchemaError naming the line.
struct LogprobFile {
  UserSpans reason;
  UserSpans occupation;
};
LogprobFile parse_logprob_jsonl(const std::string& text, const std::string& source = "logprobs");
LogprobFile read_logprob_jsonl(const std::filesystem::path& path);

Json to_json(const NllResult& r);

}  // namespace occupred
