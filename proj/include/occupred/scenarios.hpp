#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "occupred/history.hpp"
#include "occupred/llm_gateway.hpp"
#include "occupred/taxonomy.hpp"

namespace occupred {

/// Five-sentence reason that names education and job facts from the history
/// and ends on `target_title`. Used to script mock generators.
std::string template_reason(const UserHistory& history, const std::string& target_title);

/// Judge reply in the tagged format with integer-or-decimal scores.
std::string judge_reply(double fact, double cohr, double util);

/// Scripted scores for robustness item `item` of `n_items` under `variant`.
/// Oracle rows are mostly 5, minor rows mostly 3-4, major rows mostly 1-3;
/// with 100 items the means are 4.85/4.90/4.93, 3.30/3.96/3.10 and
/// 2.80/2.10/1.37 on the targeted dimension.
std::array<int, 3> reference_judge_scores(std::size_t item, std::size_t n_items, const std::string& variant);

/// Rules keyed on {stage: judge-robustness, item, variant}.
Playbook reference_judge_playbook(std::size_t n_items);

struct MockScenario {
  std::uint64_t seed = 0;
  std::size_t n_attempts = 3;
  /// Chance that a given forge attempt predicts the truth.
  double p_correct_attempt = 0.55;
  /// Chance that a filtered triplet is scored below threshold.
  double p_judge_reject = 0.2;
  /// Chance that the predictor (or joint model) hits the truth.
  double p_predict_correct = 0.45;
  std::size_t robustness_items = 100;
};

/// Playbook for a whole mock run over `corpus`: forge attempts, judge
/// filtering, robustness scoring and the two inference modes. Responses are
/// drawn deterministically from the scenario seed per user.
Playbook scenario_playbook(const std::vector<UserHistory>& corpus, const OccupationTaxonomy& taxonomy,
                           const MockScenario& scenario);

}  // namespace occupred
