#include "occupred/oracle_forge.hpp"

#include <unordered_map>

#include "occupred/output_format.hpp"
#include "occupred/rng.hpp"

namespace occupred {

ChatRequest generation_request(const TaskInstance& instance, int attempt_index, const ForgeConfig& config) {
  const auto prompt = compose_prompt(config.prompts.oracle_instruction,
                                     render_history_text(instance.history, config.prompts.history_template));
  return config.call.request(prompt, attempt_index, {{"stage", "forge"}, {"user_id", instance.history.user_id}});
}

Attempt evaluate_attempt(int attempt_index, const CallResult& result, const std::string& truth_code,
                         const OccupationTaxonomy& taxonomy) {
  Attempt a;
  a.attempt_index = attempt_index;
  if (!result.ok()) {
    a.status = AttemptStatus::call_failed;
    a.error = result.error ? result.error->kind + ": " + result.error->message : "call failed";
    return a;
  }
  const auto blocks = scan_tagged_output(result.response->text);
  if (blocks.reason) a.reason_text = *blocks.reason;
  if (blocks.prediction) a.raw_prediction = *blocks.prediction;
  if (!blocks.reason || !blocks.prediction) {
    a.status = AttemptStatus::unparseable;
    a.error = !blocks.reason ? "MissingTag: REASON" : "MissingTag: NEXT_OCCUPATION";
    return a;
  }
  a.normalized_prediction = taxonomy.normalize_title(a.raw_prediction);
  a.correct = a.normalized_prediction && a.normalized_prediction->code == truth_code;
  return a;
}

std::vector<Attempt> generate_attempts(const TaskInstance& instance, std::size_t n_attempts, Gateway& gateway,
                                       const OccupationTaxonomy& taxonomy, const ForgeConfig& config) {
  if (n_attempts == 0) throw InvalidArgument("n_attempts must be at least 1");
  std::vector<ChatRequest> requests;
  for (std::size_t i = 0; i < n_attempts; ++i) {
    requests.push_back(generation_request(instance, static_cast<int>(i), config));
  }
  const auto results = gateway.complete_batch(requests, std::max<std::size_t>(1, config.call.max_in_flight));
  std::vector<Attempt> out;
  for (std::size_t i = 0; i < n_attempts; ++i) {
    out.push_back(evaluate_attempt(static_cast<int>(i), results[i], instance.truth.code, taxonomy));
  }
  return out;
}

std::vector<Attempt> filter_correct(const std::vector<Attempt>& attempts) {
  std::vector<Attempt> out;
  for (const auto& a : attempts) {
    if (a.correct) out.push_back(a);
  }
  return out;
}

std::optional<OracleTriplet> retain_and_sample(const TaskInstance& instance, const std::vector<Attempt>& valid,
                                               std::uint64_t rng_seed) {
  if (valid.empty()) return std::nullopt;
  auto rng = keyed_rng(instance.history.user_id, rng_seed);
  const auto& pick = valid[rng.below(valid.size())];
  return OracleTriplet{instance.history, pick.reason_text, {instance.truth.code, instance.truth.title},
                       pick.attempt_index};
}

TrainingPool build_training_pool(const std::vector<UserHistory>& corpus, Gateway& gateway,
                                 const OccupationTaxonomy& taxonomy, const ForgeConfig& config) {
  if (config.n_attempts == 0) throw InvalidArgument("n_attempts must be at least 1");
  if (config.call.max_in_flight == 0) throw InvalidArgument("max_in_flight must be at least 1");
  render_history_text(UserHistory{}, config.prompts.history_template);  // rejects unknown templates up front

  TrainingPool pool;
  pool.stats.users_total = corpus.size();
  pool.stats.correct_histogram.assign(config.n_attempts + 1, 0);

  std::vector<TaskInstance> instances;
  std::vector<ChatRequest> requests;
  for (const auto& user : corpus) {
    TaskInstance inst;
    try {
      inst = split_instance(user);
    } catch (const Error& e) {
      pool.invalid_users.emplace_back(user.user_id, e.kind());
      ++pool.stats.users_invalid;
      continue;
    }
    const auto* entry = taxonomy.find(inst.truth.code);
    if (!entry) {
      pool.invalid_users.emplace_back(user.user_id, "UnknownTruthCode");
      ++pool.stats.users_invalid;
      continue;
    }
    inst.truth.title = entry->title;
    for (std::size_t i = 0; i < config.n_attempts; ++i) {
      requests.push_back(generation_request(inst, static_cast<int>(i), config));
    }
    instances.push_back(std::move(inst));
  }

  const auto results = gateway.complete_batch(requests, config.call.max_in_flight);

  for (std::size_t u = 0; u < instances.size(); ++u) {
    const auto& inst = instances[u];
    UserAttempts record{inst.history.user_id, {inst.truth.code, inst.truth.title}, {}};
    for (std::size_t i = 0; i < config.n_attempts; ++i) {
      auto a = evaluate_attempt(static_cast<int>(i), results[u * config.n_attempts + i], inst.truth.code, taxonomy);
      ++pool.stats.attempts_total;
      if (a.correct) ++pool.stats.attempts_correct;
      if (a.status == AttemptStatus::call_failed) ++pool.stats.attempts_call_failed;
      if (a.status == AttemptStatus::unparseable) ++pool.stats.attempts_unparseable;
      record.attempts.push_back(std::move(a));
    }
    const auto valid = filter_correct(record.attempts);
    ++pool.stats.correct_histogram[valid.size()];
    if (auto t = retain_and_sample(inst, valid, config.rng_seed)) {
      pool.triplets.push_back(std::move(*t));
      ++pool.stats.users_retained;
    } else {
      ++pool.stats.users_no_correct;
    }
    pool.attempts.push_back(std::move(record));
  }
  return pool;
}

PoolRecord to_record(const OracleTriplet& t) {
  return {t.history.user_id, t.reason, t.truth.code, t.truth.title, t.source_attempt};
}

std::vector<OracleTriplet> attach_histories(const std::vector<PoolRecord>& records,
                                            const std::vector<UserHistory>& corpus) {
  std::unordered_map<std::string, const UserHistory*> by_id;
  for (const auto& u : corpus) by_id.emplace(u.user_id, &u);
  std::vector<OracleTriplet> out;
  std::size_t line = 0;
  for (const auto& r : records) {
    ++line;
    auto it = by_id.find(r.user_id);
    if (it == by_id.end()) throw SchemaError("pool", line, "user " + r.user_id + " is not in the corpus");
    const auto inst = split_instance(*it->second);
    if (inst.truth.code != r.truth_code) {
      throw SchemaError("pool", line, "truth code of user " + r.user_id + " does not match the corpus");
    }
    out.push_back({inst.history, r.reason, {r.truth_code, r.truth_title}, r.source_attempt});
  }
  return out;
}

std::string to_string(AttemptStatus s) {
  switch (s) {
    case AttemptStatus::ok:
      return "ok";
    case AttemptStatus::call_failed:
      return "call_failed";
    case AttemptStatus::unparseable:
      return "unparseable";
  }
  return "ok";
}

AttemptStatus attempt_status_from_string(const std::string& s) {
  if (s == "ok") return AttemptStatus::ok;
  if (s == "call_failed") return AttemptStatus::call_failed;
  if (s == "unparseable") return AttemptStatus::unparseable;
  throw InvalidArgument("unknown attempt status '" + s + "'");
}

void to_json(Json& j, const Attempt& a) {
  j = Json::object();
  j["attempt_index"] = a.attempt_index;
  j["status"] = to_string(a.status);
  j["reason"] = a.reason_text;
  j["raw_prediction"] = a.raw_prediction;
  if (a.normalized_prediction) {
    j["predicted_code"] = a.normalized_prediction->code;
    j["predicted_title"] = a.normalized_prediction->title;
  } else {
    j["predicted_code"] = nullptr;
    j["predicted_title"] = nullptr;
  }
  j["correct"] = a.correct;
  if (!a.error.empty()) j["error"] = a.error;
}

void from_json(const Json& j, Attempt& a) {
  a.attempt_index = j.at("attempt_index").get<int>();
  a.status = attempt_status_from_string(j.at("status").get<std::string>());
  a.reason_text = j.at("reason").get<std::string>();
  a.raw_prediction = j.at("raw_prediction").get<std::string>();
  a.normalized_prediction.reset();
  if (j.contains("predicted_code") && !j["predicted_code"].is_null()) {
    a.normalized_prediction = OccupationEntry{j["predicted_code"].get<std::string>(),
                                              j.value("predicted_title", std::string())};
  }
  a.correct = j.at("correct").get<bool>();
  a.error = j.value("error", std::string());
}

void to_json(Json& j, const PoolRecord& r) {
  j = Json{{"user_id", r.user_id},
           {"reason", r.reason},
           {"truth_code", r.truth_code},
           {"truth_title", r.truth_title},
           {"source_attempt", r.source_attempt}};
}

void from_json(const Json& j, PoolRecord& r) {
  r.user_id = j.at("user_id").get<std::string>();
  r.reason = j.at("reason").get<std::string>();
  r.truth_code = j.at("truth_code").get<std::string>();
  r.truth_title = j.at("truth_title").get<std::string>();
  r.source_attempt = j.at("source_attempt").get<int>();
  if (r.reason.empty()) throw InvalidArgument("empty reason for user " + r.user_id);
}

void to_json(Json& j, const UserAttempts& u) {
  j = Json{{"user_id", u.user_id}, {"truth_code", u.truth.code}, {"truth_title", u.truth.title},
           {"attempts", u.attempts}};
}

void from_json(const Json& j, UserAttempts& u) {
  u.user_id = j.at("user_id").get<std::string>();
  u.truth = {j.at("truth_code").get<std::string>(), j.at("truth_title").get<std::string>()};
  u.attempts = j.at("attempts").get<std::vector<Attempt>>();
}

void to_json(Json& j, const ForgeStats& s) {
  j = Json{{"users_total", s.users_total},
           {"users_retained", s.users_retained},
           {"users_no_correct", s.users_no_correct},
           {"users_invalid", s.users_invalid},
           {"attempts_total", s.attempts_total},
           {"attempts_correct", s.attempts_correct},
           {"attempts_call_failed", s.attempts_call_failed},
           {"attempts_unparseable", s.attempts_unparseable},
           {"correct_histogram", s.correct_histogram}};
}

}  // namespace occupred
