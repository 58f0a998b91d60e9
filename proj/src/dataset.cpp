#include "occupred/dataset.hpp"

#include <unordered_map>

#include "occupred/output_format.hpp"
#include "occupred/rng.hpp"

namespace occupred {

std::string to_string(SftVariant v) {
  switch (v) {
    case SftVariant::joint:
      return "joint";
    case SftVariant::reason:
      return "reason";
    case SftVariant::predictor:
      return "predictor";
  }
  return "joint";
}

SftVariant sft_variant_from_string(const std::string& s) {
  if (s == "joint") return SftVariant::joint;
  if (s == "reason") return SftVariant::reason;
  if (s == "predictor") return SftVariant::predictor;
  throw InvalidArgument("unknown SFT variant '" + s + "'");
}

std::string to_string(DpoVariant v) { return v == DpoVariant::joint ? "joint" : "reason"; }

DpoVariant dpo_variant_from_string(const std::string& s) {
  if (s == "joint") return DpoVariant::joint;
  if (s == "reason" || s == "two-model" || s == "two_model") return DpoVariant::reason;
  throw InvalidArgument("unknown DPO variant '" + s + "'");
}

std::string to_string(PairingPolicy p) { return p == PairingPolicy::one_per_user ? "one-per-user" : "all-pairs"; }

PairingPolicy pairing_policy_from_string(const std::string& s) {
  if (s == "one-per-user" || s == "one_per_user") return PairingPolicy::one_per_user;
  if (s == "all-pairs" || s == "all_pairs") return PairingPolicy::all_pairs;
  throw InvalidArgument("unknown pairing policy '" + s + "'");
}

std::vector<SftExample> emit_sft(const std::vector<OracleTriplet>& pool, SftVariant variant,
                                 const PromptSet& prompts) {
  std::vector<SftExample> out;
  out.reserve(pool.size());
  for (const auto& t : pool) {
    const auto history = render_history_text(t.history, prompts.history_template);
    SftExample e;
    e.variant = variant;
    switch (variant) {
      case SftVariant::joint:
        e.instruction = prompts.joint_instruction;
        e.input = history;
        e.output = format_joint_output(t.reason, t.truth.title);
        break;
      case SftVariant::reason:
        e.instruction = prompts.reason_instruction;
        e.input = history;
        e.output = format_reason_output(t.reason);
        break;
      case SftVariant::predictor:
        e.instruction = prompts.predictor_instruction;
        e.input = predictor_input(history, t.reason);
        e.output = format_prediction_output(t.truth.title);
        break;
    }
    out.push_back(std::move(e));
  }
  return out;
}

namespace {

std::string completion(DpoVariant variant, const std::string& reason, const std::string& occupation) {
  if (variant == DpoVariant::reason || occupation.empty()) return format_reason_output(reason);
  return format_joint_output(reason, occupation);
}

}  // namespace

DpoResult emit_dpo(const std::vector<UserAttempts>& attempts, const std::vector<OracleTriplet>& filtered_pool,
                   DpoVariant variant, PairingPolicy policy, std::uint64_t rng_seed, const PromptSet& prompts) {
  std::unordered_map<std::string, const UserAttempts*> by_user;
  for (const auto& a : attempts) by_user.emplace(a.user_id, &a);

  DpoResult res;
  res.stats.users_in_pool = filtered_pool.size();
  const auto& instruction = variant == DpoVariant::joint ? prompts.joint_instruction : prompts.reason_instruction;

  for (const auto& t : filtered_pool) {
    auto it = by_user.find(t.history.user_id);
    if (it == by_user.end()) {
      ++res.stats.excluded_missing_attempts;
      continue;
    }
    std::vector<const Attempt*> positives;
    std::vector<const Attempt*> negatives;
    bool any_incorrect = false;
    for (const auto& a : it->second->attempts) {
      if (a.correct) {
        positives.push_back(&a);
        continue;
      }
      any_incorrect = true;
      if (a.status != AttemptStatus::call_failed && !a.reason_text.empty()) negatives.push_back(&a);
    }
    if (!any_incorrect) {
      ++res.stats.excluded_all_correct;
      continue;
    }
    if (negatives.empty()) {
      ++res.stats.excluded_no_usable_negative;
      continue;
    }

    const auto prompt = compose_prompt(instruction, render_history_text(t.history, prompts.history_template));
    std::vector<DpoPair> user_pairs;
    auto add = [&](const std::string& pos_reason, const Attempt& neg) {
      DpoPair p{prompt, completion(variant, pos_reason, t.truth.title),
                completion(variant, neg.reason_text, neg.raw_prediction), t.history.user_id};
      if (p.chosen != p.rejected) user_pairs.push_back(std::move(p));
    };
    if (policy == PairingPolicy::one_per_user) {
      auto rng = keyed_rng(t.history.user_id, rng_seed);
      add(t.reason, *negatives[rng.below(negatives.size())]);
    } else {
      for (const auto* pos : positives) {
        for (const auto* neg : negatives) add(pos->reason_text, *neg);
      }
    }
    if (user_pairs.empty()) {
      ++res.stats.excluded_no_usable_negative;
      continue;
    }
    ++res.stats.users_paired;
    for (auto& p : user_pairs) res.pairs.push_back(std::move(p));
  }
  res.stats.pairs = res.pairs.size();
  return res;
}

Json DatasetMetadata::to_json() const {
  Json j;
  j["kind"] = kind;
  j["variant"] = variant;
  if (kind == "dpo") j["pairing_policy"] = pairing_policy;
  j["seeds"] = Json{{"forge", forge_seed}, {"pairing", pairing_seed}};
  j["tau"] = tau;
  j["n_attempts"] = n_attempts;
  j["records"] = records;
  j["prompt_version"] = prompt_version;
  j["prompt_digest"] = prompt_digest;
  j["training"] = kind == "dpo" ? dpo_hyperparameters() : sft_hyperparameters();
  return j;
}

Json sft_hyperparameters() {
  return Json{{"max_seq_len", 2048},   {"batch_size", 8}, {"learning_rate", 2e-5}, {"lr_schedule", "cosine"},
              {"epochs", 8},           {"precision", "bf16"}, {"deepspeed", "zero3"}};
}

Json dpo_hyperparameters() {
  return Json{{"loss", "sigmoid"},    {"beta", 0.1},          {"max_seq_len", 2048}, {"batch_size", 2},
              {"grad_accumulation", 4}, {"learning_rate", 5e-6}, {"epochs", 5}};
}

void to_json(Json& j, const SftExample& e) {
  j = Json{{"instruction", e.instruction}, {"input", e.input}, {"output", e.output}};
}

void from_json(const Json& j, SftExample& e) {
  e.instruction = j.at("instruction").get<std::string>();
  e.input = j.at("input").get<std::string>();
  e.output = j.at("output").get<std::string>();
  const auto blocks = scan_tagged_output(e.output);
  if (blocks.prediction && !blocks.reason) {
    e.variant = SftVariant::predictor;
  } else if (blocks.reason && !blocks.prediction) {
    e.variant = SftVariant::reason;
  } else {
    e.variant = SftVariant::joint;
  }
}

void to_json(Json& j, const DpoPair& p) {
  j = Json{{"prompt", p.prompt}, {"chosen", p.chosen}, {"rejected", p.rejected}, {"user_id", p.user_id}};
}

void from_json(const Json& j, DpoPair& p) {
  p.prompt = j.at("prompt").get<std::string>();
  p.chosen = j.at("chosen").get<std::string>();
  p.rejected = j.at("rejected").get<std::string>();
  p.user_id = j.value("user_id", std::string());
}

void to_json(Json& j, const DpoStats& s) {
  j = Json{{"users_in_pool", s.users_in_pool},
           {"users_paired", s.users_paired},
           {"excluded_all_correct", s.excluded_all_correct},
           {"excluded_no_usable_negative", s.excluded_no_usable_negative},
           {"excluded_missing_attempts", s.excluded_missing_attempts},
           {"pairs", s.pairs}};
}

}  // namespace occupred
