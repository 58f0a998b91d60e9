#pragma once

#include <optional>
#include <string>
#include <vector>

#include "occupred/history.hpp"
#include "occupred/json_io.hpp"
#include "occupred/llm_gateway.hpp"
#include "occupred/prompts.hpp"
#include "occupred/taxonomy.hpp"

namespace occupred {

enum class PredictMode { two_model, joint };
std::string to_string(PredictMode m);
PredictMode predict_mode_from_string(const std::string& s);

struct PredictionRecord {
  std::string user_id;
  PredictMode mode = PredictMode::joint;
  std::string reason;
  std::string raw_prediction;
  std::optional<OccupationEntry> predicted;  // none when the title did not normalize
  OccupationEntry truth;

  bool operator==(const PredictionRecord&) const = default;
};

/// Failure of one inference stage: "reasoner", "predictor", "joint" or "task"
/// (the user could not be turned into a prediction task).
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& kind, const std::string& message)
      : Error(kind, stage + ": " + message), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

struct PredictionFailure {
  std::string user_id;
  PredictMode mode = PredictMode::joint;
  std::string stage;
  std::string kind;
  std::string message;
  std::optional<std::string> truth_code;

  bool operator==(const PredictionFailure&) const = default;
};

struct InferenceConfig {
  CallSettings reasoner{"reasoner", "", 0.0, 1024, std::nullopt, 4};
  CallSettings predictor{"predictor", "", 0.0, 256, std::nullopt, 4};
  CallSettings joint{"joint", "", 0.0, 1024, std::nullopt, 4};
  PromptSet prompts = PromptSet::defaults();
};

/// Stage-1 request: reason instruction over the history alone.
ChatRequest reasoner_request(const TaskInstance& instance, const InferenceConfig& config);
/// Stage-2 request: history plus the stage-1 reason, embedded verbatim.
ChatRequest predictor_request(const TaskInstance& instance, const std::string& reason, const InferenceConfig& config);
ChatRequest joint_request(const TaskInstance& instance, const InferenceConfig& config);

/// Two sequential calls. Throws StageError naming the failing stage.
PredictionRecord predict_two_model(const TaskInstance& instance, Gateway& gateway, const OccupationTaxonomy& taxonomy,
                                   const InferenceConfig& config = {});
/// One call, both blocks parsed from it. Throws StageError("joint", ...).
PredictionRecord predict_joint(const TaskInstance& instance, Gateway& gateway, const OccupationTaxonomy& taxonomy,
                               const InferenceConfig& config = {});

struct BatchPrediction {
  std::vector<PredictionRecord> records;
  std::vector<PredictionFailure> failures;
};

/// Every user ends up in exactly one of records or failures, in corpus
/// order. Users run in parallel through the gateway; the two stages of one
/// user stay sequential.
BatchPrediction batch_predict(const std::vector<UserHistory>& test_corpus, PredictMode mode, Gateway& gateway,
                              const OccupationTaxonomy& taxonomy, const InferenceConfig& config = {});

void to_json(Json& j, const PredictionRecord& r);
void from_json(const Json& j, PredictionRecord& r);
void to_json(Json& j, const PredictionFailure& f);
void from_json(const Json& j, PredictionFailure& f);

}  // namespace occupred
