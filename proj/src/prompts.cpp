#include "occupred/prompts.hpp"

#include "occupred/digest.hpp"

namespace occupred {

namespace {

constexpr std::string_view kTaggedFormat =
    "Respond with exactly two tagged blocks and nothing else:\n"
    "REASON: <your reasoning>\n"
    "NEXT_OCCUPATION: <one occupation title from the O*NET-SOC 2019 taxonomy, on its own line>";

}  // namespace

PromptSet PromptSet::defaults() {
  PromptSet p;
  p.oracle_instruction =
      "You are a career analyst. Read the person's education and job history below. Explain what their "
      "trajectory reveals about their preferences and skills, and how that leads to the occupation of their "
      "next job. Refer only to facts present in the history, and keep the steps in temporal order. Then name "
      "that next occupation using its exact standardized O*NET-SOC 2019 title.\n" +
      std::string(kTaggedFormat);
  p.joint_instruction =
      "Given the person's education and job history, explain the reasoning behind their next career move and "
      "predict the occupation of their next job using its exact O*NET-SOC 2019 title.\n" +
      std::string(kTaggedFormat);
  p.reason_instruction =
      "Given the person's education and job history, explain the reasoning behind their next career move. "
      "Do not name the next occupation.\n"
      "Respond with one tagged block:\n"
      "REASON: <your reasoning>";
  p.predictor_instruction =
      "Given the person's education and job history and a reasoning about their career, predict the "
      "occupation of their next job using its exact O*NET-SOC 2019 title.\n"
      "Respond with one line:\n"
      "NEXT_OCCUPATION: <occupation title>";
  p.judge_instruction =
      "You evaluate a reason written to explain a person's next occupation. You are given the person's "
      "education and job history, the reason, and the occupation they actually moved into. Score the reason "
      "from 1 (poor) to 5 (excellent) on three dimensions:\n"
      "FACT (factuality): every education or job detail stated in the reason is grounded in the history; "
      "nothing is invented and no essential fact is left out.\n"
      "COHR (coherence): the reasoning is logically consistent and each step follows a clear temporal or "
      "causal order.\n"
      "UTIL (utility): the reasoning gives relevant evidence that directly supports the actual next "
      "occupation.\n"
      "Respond with exactly three lines, each holding the tag, one number, and a brief justification:\n"
      "FACT: <score> <justification>\n"
      "COHR: <score> <justification>\n"
      "UTIL: <score> <justification>";
  return p;
}

std::string PromptSet::digest() const {
  Json j = *this;
  return sha256_hex(j.dump());
}

std::string compose_prompt(std::string_view instruction, std::string_view input) {
  std::string out(instruction);
  out += "\n\n";
  out += input;
  return out;
}

std::string predictor_input(std::string_view history_text, std::string_view reason) {
  std::string out(history_text);
  out += "\nReasoning:\n";
  out += reason;
  out += "\n";
  return out;
}

void to_json(Json& j, const PromptSet& p) {
  j = Json{{"version", p.version},
           {"history_template", p.history_template},
           {"oracle_instruction", p.oracle_instruction},
           {"joint_instruction", p.joint_instruction},
           {"reason_instruction", p.reason_instruction},
           {"predictor_instruction", p.predictor_instruction},
           {"judge_instruction", p.judge_instruction}};
}

void from_json(const Json& j, PromptSet& p) {
  const auto d = PromptSet::defaults();
  p.version = j.value("version", d.version);
  p.history_template = j.value("history_template", d.history_template);
  p.oracle_instruction = j.value("oracle_instruction", d.oracle_instruction);
  p.joint_instruction = j.value("joint_instruction", d.joint_instruction);
  p.reason_instruction = j.value("reason_instruction", d.reason_instruction);
  p.predictor_instruction = j.value("predictor_instruction", d.predictor_instruction);
  p.judge_instruction = j.value("judge_instruction", d.judge_instruction);
}

}  // namespace occupred
