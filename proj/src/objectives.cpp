#include "occupred/objectives.hpp"

#include <cmath>

namespace occupred {

namespace {

void check_logprob(double v, const std::string& where) {
  if (!std::isfinite(v)) throw NonFiniteInput("non-finite log-probability in " + where);
  if (v > 0.0) throw NonFiniteInput("positive log-probability in " + where);
}

NllResult nll(const UserSpans& spans) {
  NllResult r;
  for (const auto& [user, span] : spans) {
    if (span.values.empty()) throw NonFiniteInput("empty span for user " + user);
    for (double v : span.values) {
      check_logprob(v, "span of user " + user);
      r.total -= v;
    }
    r.tokens += span.values.size();
  }
  r.users = spans.size();
  if (r.total == 0.0) r.total = 0.0;  // no negative zero
  r.per_token_mean = r.tokens ? r.total / static_cast<double>(r.tokens) : 0.0;
  r.per_user_mean = r.users ? r.total / static_cast<double>(r.users) : 0.0;
  return r;
}

}  // namespace

NllResult nll_reason(const UserSpans& spans) { return nll(spans); }
NllResult nll_prediction(const UserSpans& spans) { return nll(spans); }

double joint_loss(const UserSpans& reason_spans, const UserSpans& prediction_spans) {
  if (reason_spans.size() != prediction_spans.size()) {
    throw UserSetMismatch("reason and prediction spans cover different users");
  }
  for (auto a = reason_spans.begin(), b = prediction_spans.begin(); a != reason_spans.end(); ++a, ++b) {
    if (a->first != b->first) throw UserSetMismatch("user " + a->first + " has no prediction span");
  }
  return nll_reason(reason_spans).total + nll_prediction(prediction_spans).total;
}

double log_sigmoid(double x) {
  // log sigma(x) = -softplus(-x)
  if (x >= 0) return -std::log1p(std::exp(-x));
  return x - std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double dpo_margin(const PreferenceLogProbs& p) { return (p.policy_pos - p.policy_neg) - (p.ref_pos - p.ref_neg); }

namespace {

void check_preference(const PreferenceLogProbs& p, double beta) {
  if (!(beta > 0.0) || !std::isfinite(beta)) throw InvalidArgument("beta must be a positive finite number");
  check_logprob(p.policy_pos, "policy_pos");
  check_logprob(p.policy_neg, "policy_neg");
  check_logprob(p.ref_pos, "ref_pos");
  check_logprob(p.ref_neg, "ref_neg");
}

}  // namespace

double dpo_loss(const PreferenceLogProbs& p, double beta) {
  check_preference(p, beta);
  return -log_sigmoid(beta * dpo_margin(p));
}

double dpo_loss_grad_policy_pos(const PreferenceLogProbs& p, double beta) {
  check_preference(p, beta);
  return -beta * sigmoid(-beta * dpo_margin(p));
}

LogprobFile parse_logprob_jsonl(const std::string& text, const std::string& source) {
  LogprobFile out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    const std::string line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = Json::parse(line);
      const auto user = j.at("user_id").get<std::string>();
      const auto span = j.at("span").get<std::string>();
      SpanLogProbs s{j.at("logprobs").get<std::vector<double>>()};
      if (s.values.empty()) throw InvalidArgument("empty logprobs");
      for (double v : s.values) check_logprob(v, "logprobs");
      UserSpans* target = nullptr;
      if (span == "reason") {
        target = &out.reason;
      } else if (span == "occupation") {
        target = &out.occupation;
      } else {
        throw InvalidArgument("span must be \"reason\" or \"occupation\"");
      }
      if (!target->emplace(user, std::move(s)).second) throw InvalidArgument("duplicate " + span + " span for " + user);
    } catch (const nlohmann::json::exception& e) {
      throw SchemaError(source, line_no, e.what());
    } catch (const Error& e) {
      throw SchemaError(source, line_no, e.what());
    }
  }
  return out;
}

LogprobFile read_logprob_jsonl(const std::filesystem::path& path) {
  return parse_logprob_jsonl(read_file(path), path.string());
}

Json to_json(const NllResult& r) {
  return Json{{"total", r.total},
              {"tokens", r.tokens},
              {"users", r.users},
              {"per_token_mean", r.per_token_mean},
              {"per_user_mean", r.per_user_mean}};
}

}  // namespace occupred
