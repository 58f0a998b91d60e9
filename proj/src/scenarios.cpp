#include "occupred/scenarios.hpp"

#include <cmath>
#include <cstdio>

#include "occupred/output_format.hpp"
#include "occupred/rng.hpp"

namespace occupred {

namespace {

std::string with_article(const std::string& noun) {
  const bool vowel = !noun.empty() && std::string("AEIOUaeiou").find(noun.front()) != std::string::npos;
  return (vowel ? "an " : "a ") + noun;
}

}  // namespace

std::string template_reason(const UserHistory& history, const std::string& target_title) {
  const EducationRecord* first_edu = nullptr;
  std::vector<const JobRecord*> jobs;
  for (const auto& e : history.events) {
    if (const auto* ed = e.education(); ed && !first_edu) first_edu = ed;
    if (const auto* j = e.job()) jobs.push_back(j);
  }
  std::string out;
  if (first_edu) {
    out += "After earning a " + first_edu->degree + " in " + first_edu->major + " from " + first_edu->school_name;
    if (first_edu->graduation_year) out += " in " + std::to_string(*first_edu->graduation_year);
    out += ", ";
  }
  if (jobs.empty()) {
    out += first_edu ? "they are ready to begin their career. " : "They are at the start of their career. ";
    out += "Their studies define the skills they bring. ";
    out += "No earlier job pulls them in another direction. ";
    out += "Entry roles that use their training fit best. ";
  } else {
    const auto* first = jobs.front();
    const auto* last = jobs.back();
    out += std::string(first_edu ? "they" : "They") + " started working as " + with_article(first->job_title);
    if (first->start_date) out += " in " + std::to_string(first->start_date->year);
    out += ". ";
    out += "They went on to hold " + std::to_string(jobs.size()) + " positions, most recently as " + with_article(last->job_title);
    if (last->start_date) out += " from " + std::to_string(last->start_date->year);
    out += ". ";
    out += "Across these roles they built steady experience";
    if (last->industry) out += " in " + *last->industry;
    out += ". ";
    out += "Their recent work points toward a closely related role with broader responsibility. ";
  }
  out += "Moving into " + target_title + " is the natural next step.";
  return out;
}

std::string judge_reply(double fact, double cohr, double util) {
  auto num = [](double v) {
    char buf[32];
    if (v == std::floor(v)) {
      std::snprintf(buf, sizeof buf, "%d", static_cast<int>(v));
    } else {
      std::snprintf(buf, sizeof buf, "%g", v);
    }
    return std::string(buf);
  };
  return "FACT: " + num(fact) + " Facts match the history.\n" + "COHR: " + num(cohr) +
         " Steps follow in order.\n" + "UTIL: " + num(util) + " Evidence supports the outcome.";
}

std::array<int, 3> reference_judge_scores(std::size_t item, std::size_t n_items, const std::string& variant) {
  auto below = [&](double fraction) {
    return item < static_cast<std::size_t>(std::lround(fraction * static_cast<double>(n_items)));
  };
  std::array<int, 3> s{below(0.85) ? 5 : 4, below(0.90) ? 5 : 4, below(0.93) ? 5 : 4};
  if (variant == "factuality-minor") s[0] = below(0.30) ? 4 : 3;
  if (variant == "coherence-minor") s[1] = below(0.96) ? 4 : 3;
  if (variant == "utility-minor") s[2] = below(0.10) ? 4 : 3;
  if (variant == "factuality-major") s[0] = below(0.80) ? 3 : 2;
  if (variant == "coherence-major") s[1] = below(0.10) ? 3 : 2;
  if (variant == "utility-major") s[2] = below(0.37) ? 2 : 1;
  return s;
}

namespace {

PlaybookRule respond(std::string name, std::map<std::string, std::string> labels, std::string text,
                     std::optional<int> attempt = std::nullopt) {
  PlaybookRule r;
  r.name = std::move(name);
  r.match.labels = std::move(labels);
  r.match.attempt_index = attempt;
  ScriptedStep s;
  s.text = std::move(text);
  r.steps.push_back(std::move(s));
  return r;
}

const char* const kVariants[] = {"oracle",           "factuality-minor", "coherence-minor", "utility-minor",
                                 "factuality-major", "coherence-major",  "utility-major"};

}  // namespace

Playbook reference_judge_playbook(std::size_t n_items) {
  Playbook pb;
  for (std::size_t i = 0; i < n_items; ++i) {
    for (const char* v : kVariants) {
      const auto s = reference_judge_scores(i, n_items, v);
      pb.rules.push_back(respond("robustness/" + std::to_string(i) + "/" + v,
                                 {{"stage", "judge-robustness"}, {"item", std::to_string(i)}, {"variant", v}},
                                 judge_reply(s[0], s[1], s[2])));
    }
  }
  return pb;
}

}  // namespace occupred

namespace occupred {

namespace {

std::string wrong_title(const OccupationEntry& truth, const OccupationTaxonomy& taxonomy, SplitMix64& rng) {
  const auto& ranked = taxonomy.related(truth.code).ranked;
  if (ranked.size() > 1 && rng.chance(0.5)) return taxonomy.find(ranked[1 + rng.below(ranked.size() - 1)])->title;
  if (taxonomy.size() < 2) return "Unlisted Occupation";
  for (;;) {
    const auto& e = taxonomy.entries()[rng.below(taxonomy.size())];
    if (e.code != truth.code) return e.title;
  }
}

}  // namespace

Playbook scenario_playbook(const std::vector<UserHistory>& corpus, const OccupationTaxonomy& taxonomy,
                           const MockScenario& scenario) {
  Playbook pb;
  for (const auto& user : corpus) {
    TaskInstance inst;
    try {
      inst = split_instance(user);
    } catch (const Error&) {
      continue;
    }
    const auto* truth = taxonomy.find(inst.truth.code);
    if (!truth) continue;
    const auto& id = user.user_id;
    auto rng = keyed_rng(id, scenario.seed);

    for (std::size_t k = 0; k < scenario.n_attempts; ++k) {
      const auto title = rng.chance(scenario.p_correct_attempt) ? truth->title : wrong_title(*truth, taxonomy, rng);
      pb.rules.push_back(respond("forge/" + id + "/" + std::to_string(k), {{"stage", "forge"}, {"user_id", id}},
                                 format_joint_output(template_reason(inst.history, title), title),
                                 static_cast<int>(k)));
    }

    std::array<int, 3> s{4 + static_cast<int>(rng.below(2)), 4 + static_cast<int>(rng.below(2)),
                         4 + static_cast<int>(rng.below(2))};
    if (rng.chance(scenario.p_judge_reject)) s[rng.below(3)] = 2 + static_cast<int>(rng.below(2));
    pb.rules.push_back(
        respond("judge-filter/" + id, {{"stage", "judge-filter"}, {"user_id", id}}, judge_reply(s[0], s[1], s[2])));

    const auto two_model = rng.chance(scenario.p_predict_correct) ? truth->title : wrong_title(*truth, taxonomy, rng);
    pb.rules.push_back(respond("predict/reasoner/" + id, {{"stage", "predict"}, {"part", "reasoner"}, {"user_id", id}},
                               format_reason_output(template_reason(inst.history, two_model))));
    pb.rules.push_back(respond("predict/predictor/" + id,
                               {{"stage", "predict"}, {"part", "predictor"}, {"user_id", id}},
                               format_prediction_output(two_model)));
    const auto joint = rng.chance(scenario.p_predict_correct) ? truth->title : wrong_title(*truth, taxonomy, rng);
    pb.rules.push_back(respond("predict/joint/" + id, {{"stage", "predict"}, {"part", "joint"}, {"user_id", id}},
                               format_joint_output(template_reason(inst.history, joint), joint)));

    for (const char* mode : {"two_model", "joint"}) {
      pb.rules.push_back(respond("judge-eval/" + std::string(mode) + "/" + id,
                                 {{"stage", "judge-eval"}, {"mode", mode}, {"user_id", id}},
                                 judge_reply(3 + static_cast<double>(rng.below(3)), 3 + static_cast<double>(rng.below(3)),
                                             3 + static_cast<double>(rng.below(3)))));
    }
  }
  auto table = reference_judge_playbook(scenario.robustness_items);
  for (auto& r : table.rules) pb.rules.push_back(std::move(r));
  return pb;
}

}  // namespace occupred
