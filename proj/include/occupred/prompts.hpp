#pragma once

#include <string>
#include <string_view>

#include "occupred/json_io.hpp"

namespace occupred {

/// Versioned instruction texts. Dataset emission and inference read the same
/// set so training prompts and inference prompts never drift apart.
struct PromptSet {
  std::string version = "v1";
  std::string history_template = "plain-v1";
  std::string oracle_instruction;
  std::string joint_instruction;
  std::string reason_instruction;
  std::string predictor_instruction;
  std::string judge_instruction;

  static PromptSet defaults();
  /// Digest over every field; recorded in dataset metadata.
  std::string digest() const;
};

/// Single user-turn prompt: instruction, blank line, input.
std::string compose_prompt(std::string_view instruction, std::string_view input);

/// Predictor input: rendered history followed by the reasoning text verbatim.
std::string predictor_input(std::string_view history_text, std::string_view reason);

void to_json(Json& j, const PromptSet& p);
void from_json(const Json& j, PromptSet& p);

}  // namespace occupred
