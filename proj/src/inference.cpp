#include "occupred/inference.hpp"

#include "occupred/output_format.hpp"

namespace occupred {

std::string to_string(PredictMode m) { return m == PredictMode::two_model ? "two_model" : "joint"; }

PredictMode predict_mode_from_string(const std::string& s) {
  if (s == "two_model" || s == "two-model") return PredictMode::two_model;
  if (s == "joint") return PredictMode::joint;
  throw InvalidArgument("unknown prediction mode '" + s + "'");
}

namespace {

std::map<std::string, std::string> labels(const TaskInstance& inst, PredictMode mode, const char* part) {
  return {{"stage", "predict"}, {"mode", to_string(mode)}, {"part", part}, {"user_id", inst.history.user_id}};
}

std::string history_text(const TaskInstance& inst, const InferenceConfig& config) {
  return render_history_text(inst.history, config.prompts.history_template);
}

[[noreturn]] void raise(const std::string& stage, const CallResult& r) {
  throw StageError(stage, r.error->kind, r.error->message);
}

std::string stage1_reason(const CallResult& r) {
  if (!r.ok()) raise("reasoner", r);
  try {
    return parse_model_output(r.response->text, OutputMode::reason_only).reason;
  } catch (const MissingTag& e) {
    throw StageError("reasoner", e.kind(), e.what());
  }
}

std::string stage2_prediction(const CallResult& r) {
  if (!r.ok()) raise("predictor", r);
  try {
    return parse_model_output(r.response->text, OutputMode::prediction_only).raw_prediction;
  } catch (const MissingTag& e) {
    throw StageError("predictor", e.kind(), e.what());
  }
}

ParsedOutput joint_output(const CallResult& r) {
  if (!r.ok()) raise("joint", r);
  try {
    return parse_model_output(r.response->text, OutputMode::joint);
  } catch (const MissingTag& e) {
    throw StageError("joint", e.kind(), e.what());
  }
}

PredictionRecord make_record(const TaskInstance& inst, PredictMode mode, std::string reason, std::string raw,
                             const OccupationTaxonomy& taxonomy) {
  PredictionRecord rec;
  rec.user_id = inst.history.user_id;
  rec.mode = mode;
  rec.reason = std::move(reason);
  rec.predicted = taxonomy.normalize_title(raw);
  rec.raw_prediction = std::move(raw);
  rec.truth = {inst.truth.code, inst.truth.title};
  return rec;
}

CallResult call(Gateway& gateway, const ChatRequest& req) {
  CallResult r;
  try {
    r.response = gateway.complete(req);
  } catch (const Error& e) {
    r.error = CallError{e.kind(), e.what()};
  }
  return r;
}

}  // namespace

ChatRequest reasoner_request(const TaskInstance& instance, const InferenceConfig& config) {
  return config.reasoner.request(compose_prompt(config.prompts.reason_instruction, history_text(instance, config)), 0,
                                 labels(instance, PredictMode::two_model, "reasoner"));
}

ChatRequest predictor_request(const TaskInstance& instance, const std::string& reason, const InferenceConfig& config) {
  return config.predictor.request(
      compose_prompt(config.prompts.predictor_instruction, predictor_input(history_text(instance, config), reason)), 0,
      labels(instance, PredictMode::two_model, "predictor"));
}

ChatRequest joint_request(const TaskInstance& instance, const InferenceConfig& config) {
  return config.joint.request(compose_prompt(config.prompts.joint_instruction, history_text(instance, config)), 0,
                              labels(instance, PredictMode::joint, "joint"));
}

PredictionRecord predict_two_model(const TaskInstance& instance, Gateway& gateway, const OccupationTaxonomy& taxonomy,
                                   const InferenceConfig& config) {
  auto reason = stage1_reason(call(gateway, reasoner_request(instance, config)));
  auto raw = stage2_prediction(call(gateway, predictor_request(instance, reason, config)));
  return make_record(instance, PredictMode::two_model, std::move(reason), std::move(raw), taxonomy);
}

PredictionRecord predict_joint(const TaskInstance& instance, Gateway& gateway, const OccupationTaxonomy& taxonomy,
                               const InferenceConfig& config) {
  auto out = joint_output(call(gateway, joint_request(instance, config)));
  return make_record(instance, PredictMode::joint, std::move(out.reason), std::move(out.raw_prediction), taxonomy);
}

BatchPrediction batch_predict(const std::vector<UserHistory>& test_corpus, PredictMode mode, Gateway& gateway,
                              const OccupationTaxonomy& taxonomy, const InferenceConfig& config) {
  render_history_text(UserHistory{}, config.prompts.history_template);

  // slot per user: a record, a failure, or pending
  struct Slot {
    std::optional<TaskInstance> inst;
    std::optional<PredictionRecord> record;
    std::optional<PredictionFailure> failure;
    std::string reason;
  };
  std::vector<Slot> slots(test_corpus.size());
  auto fail = [&](Slot& s, const std::string& user, const std::string& stage, const std::string& kind,
                  const std::string& msg) {
    PredictionFailure f{user, mode, stage, kind, msg, std::nullopt};
    if (s.inst) f.truth_code = s.inst->truth.code;
    s.failure = std::move(f);
  };

  for (std::size_t i = 0; i < test_corpus.size(); ++i) {
    auto& s = slots[i];
    try {
      auto inst = split_instance(test_corpus[i]);
      const auto* entry = taxonomy.find(inst.truth.code);
      if (!entry) {
        fail(s, test_corpus[i].user_id, "task", "UnknownTruthCode", "truth code " + inst.truth.code + " not in taxonomy");
        continue;
      }
      inst.truth.title = entry->title;
      s.inst = std::move(inst);
    } catch (const Error& e) {
      fail(s, test_corpus[i].user_id, "task", e.kind(), e.what());
    }
  }

  auto run = [&](std::size_t width, auto make_request, auto consume) {
    std::vector<std::size_t> idx;
    std::vector<ChatRequest> reqs;
    for (std::size_t i = 0; i < slots.size(); ++i) {
      if (!slots[i].inst || slots[i].failure || slots[i].record) continue;
      idx.push_back(i);
      reqs.push_back(make_request(slots[i]));
    }
    const auto results = gateway.complete_batch(reqs, std::max<std::size_t>(1, width));
    for (std::size_t k = 0; k < idx.size(); ++k) {
      auto& s = slots[idx[k]];
      try {
        consume(s, results[k]);
      } catch (const StageError& e) {
        fail(s, s.inst->history.user_id, e.stage(), e.kind(), e.what());
      }
    }
  };

  if (mode == PredictMode::joint) {
    run(config.joint.max_in_flight, [&](Slot& s) { return joint_request(*s.inst, config); },
        [&](Slot& s, const CallResult& r) {
          auto out = joint_output(r);
          s.record = make_record(*s.inst, mode, std::move(out.reason), std::move(out.raw_prediction), taxonomy);
        });
  } else {
    run(config.reasoner.max_in_flight, [&](Slot& s) { return reasoner_request(*s.inst, config); },
        [&](Slot& s, const CallResult& r) { s.reason = stage1_reason(r); });
    run(config.predictor.max_in_flight, [&](Slot& s) { return predictor_request(*s.inst, s.reason, config); },
        [&](Slot& s, const CallResult& r) {
          auto raw = stage2_prediction(r);
          s.record = make_record(*s.inst, mode, std::move(s.reason), std::move(raw), taxonomy);
        });
  }

  BatchPrediction out;
  for (auto& s : slots) {
    if (s.record) {
      out.records.push_back(std::move(*s.record));
    } else if (s.failure) {
      out.failures.push_back(std::move(*s.failure));
    }
  }
  return out;
}

void to_json(Json& j, const PredictionRecord& r) {
  j = Json{{"user_id", r.user_id}, {"mode", to_string(r.mode)}, {"reason", r.reason}, {"raw_prediction", r.raw_prediction}};
  if (r.predicted) j["predicted_code"] = r.predicted->code;
  j["truth_code"] = r.truth.code;
}

void from_json(const Json& j, PredictionRecord& r) {
  r.user_id = j.at("user_id").get<std::string>();
  r.mode = predict_mode_from_string(j.at("mode").get<std::string>());
  r.reason = j.at("reason").get<std::string>();
  r.raw_prediction = j.at("raw_prediction").get<std::string>();
  r.predicted.reset();
  if (j.contains("predicted_code") && !j["predicted_code"].is_null()) {
    r.predicted = OccupationEntry{j["predicted_code"].get<std::string>(), ""};
  }
  r.truth = {j.at("truth_code").get<std::string>(), ""};
}

void to_json(Json& j, const PredictionFailure& f) {
  j = Json{{"user_id", f.user_id}, {"mode", to_string(f.mode)}, {"stage", f.stage}, {"kind", f.kind}, {"message", f.message}};
  if (f.truth_code) j["truth_code"] = *f.truth_code;
}

void from_json(const Json& j, PredictionFailure& f) {
  f.user_id = j.at("user_id").get<std::string>();
  f.mode = predict_mode_from_string(j.at("mode").get<std::string>());
  f.stage = j.at("stage").get<std::string>();
  f.kind = j.at("kind").get<std::string>();
  f.message = j.value("message", std::string());
  f.truth_code.reset();
  if (j.contains("truth_code") && !j["truth_code"].is_null()) f.truth_code = j["truth_code"].get<std::string>();
}

}  // namespace occupred
