#include <boost/multiprecision/cpp_bin_float.hpp>
#include <cmath>
#include <limits>

#include "doctest.h"
#include "occupred/objectives.hpp"
#include "occupred/rng.hpp"

using namespace occupred;
using Big = boost::multiprecision::cpp_bin_float_50;

namespace {

// -log(1 / (1 + exp(-x))) at 50 digits
double oracle_dpo(double beta, double pp, double pn, double rp, double rn) {
  const Big z = (Big(pp) - Big(pn)) - (Big(rp) - Big(rn));
  const Big x = Big(beta) * z;
  return static_cast<double>(boost::multiprecision::log1p(boost::multiprecision::exp(-x)));
}

UserSpans spans(std::initializer_list<std::pair<const char*, std::vector<double>>> items) {
  UserSpans s;
  for (const auto& [u, v] : items) s[u] = SpanLogProbs{v};
  return s;
}

}  // namespace

TEST_CASE("nll sums negative log-probs") {
  const auto s = spans({{"a", {-0.5, -1.5}}, {"b", {-2.0}}});
  const auto r = nll_reason(s);
  CHECK(r.total == 4.0);
  CHECK(r.tokens == 3);
  CHECK(r.users == 2);
  CHECK(r.per_token_mean == doctest::Approx(4.0 / 3));
  CHECK(r.per_user_mean == 2.0);
  CHECK(nll_prediction(spans({{"a", {0.0}}})).total == 0.0);

  const auto p = spans({{"a", {-1.0}}, {"b", {-0.25}}});
  CHECK(joint_loss(s, p) == 5.25);
  CHECK_THROWS_AS(joint_loss(s, spans({{"a", {-1.0}}})), UserSetMismatch);
  CHECK_THROWS_AS(joint_loss(s, spans({{"a", {-1.0}}, {"c", {-1.0}}})), UserSetMismatch);
}

TEST_CASE("nll rejects bad inputs") {
  CHECK_THROWS_AS(nll_reason(spans({{"a", {std::nan("")}}})), NonFiniteInput);
  CHECK_THROWS_AS(nll_reason(spans({{"a", {-std::numeric_limits<double>::infinity()}}})), NonFiniteInput);
  CHECK_THROWS_AS(nll_reason(spans({{"a", {0.1}}})), NonFiniteInput);
  CHECK_THROWS_AS(nll_reason(spans({{"a", {}}})), NonFiniteInput);
}

TEST_CASE("dpo loss: worked value and identities") {
  const PreferenceLogProbs p{-10, -12, -11, -11.5};
  CHECK(dpo_margin(p) == 1.5);
  const double loss = dpo_loss(p, 0.1);
  CHECK(std::abs(loss - oracle_dpo(0.1, -10, -12, -11, -11.5)) < 1e-12);
  CHECK(std::abs(loss - 0.620957047789532) < 1e-12);

  for (double beta : {0.01, 0.1, 1.0}) {
    CHECK(std::abs(dpo_loss({-3, -3, -7, -7}, beta) - std::log(2.0)) < 1e-12);
    CHECK(dpo_loss({-1, -9, -5, -5}, beta) < std::log(2.0));
    CHECK(dpo_loss({-9, -1, -5, -5}, beta) > std::log(2.0));
  }
  CHECK_THROWS_AS(dpo_loss(p, 0.0), InvalidArgument);
  CHECK_THROWS_AS(dpo_loss(p, -1.0), InvalidArgument);
  CHECK_THROWS_AS(dpo_loss({std::nan(""), -1, -1, -1}, 0.1), NonFiniteInput);
}

TEST_CASE("dpo loss stays finite at extreme margins and matches the oracle") {
  // beta * z = +-700
  const double big = dpo_loss({0, -7000, -1, -1}, 0.1);
  const double small = dpo_loss({-7000, 0, -1, -1}, 0.1);
  CHECK(std::isfinite(big));
  CHECK(std::isfinite(small));
  CHECK(small == doctest::Approx(700.0));
  CHECK(big >= 0.0);
  CHECK(big < 1e-300);

  SplitMix64 rng(2024);
  for (int i = 0; i < 200; ++i) {
    const double pp = -rng.unit() * 200, pn = -rng.unit() * 200, rp = -rng.unit() * 200, rn = -rng.unit() * 200;
    const double beta = 0.01 + rng.unit();
    const double got = dpo_loss({pp, pn, rp, rn}, beta);
    const double want = oracle_dpo(beta, pp, pn, rp, rn);
    CHECK(std::abs(got - want) <= 1e-12 * std::max(1.0, want));
  }
}

TEST_CASE("dpo gradient matches central differences") {
  SplitMix64 rng(7);
  for (int i = 0; i < 100; ++i) {
    const double beta = 0.05 + rng.unit();
    PreferenceLogProbs p{-20 - rng.unit() * 10, -20 - rng.unit() * 10, -20 - rng.unit() * 10, -20 - rng.unit() * 10};
    const double h = 1e-5;
    auto up = p, down = p;
    up.policy_pos += h;
    down.policy_pos -= h;
    const double numeric = (dpo_loss(up, beta) - dpo_loss(down, beta)) / (2 * h);
    const double analytic = dpo_loss_grad_policy_pos(p, beta);
    CHECK(std::abs(numeric - analytic) <= 1e-6 * std::abs(analytic));
  }
}

TEST_CASE("logprob JSONL loader") {
  const std::string text =
      "{\"user_id\":\"a\",\"span\":\"reason\",\"logprobs\":[-1,-2]}\n"
      "{\"user_id\":\"a\",\"span\":\"occupation\",\"logprobs\":[-0.5]}\n";
  const auto f = parse_logprob_jsonl(text);
  CHECK(joint_loss(f.reason, f.occupation) == 3.5);
  try {
    parse_logprob_jsonl(text + "{\"user_id\":\"b\",\"span\":\"title\",\"logprobs\":[-1]}\n", "lp.jsonl");
    FAIL("expected SchemaError");
  } catch (const SchemaError& e) {
    CHECK(e.line() == 3);
  }
  CHECK_THROWS_AS(parse_logprob_jsonl("{\"user_id\":\"b\",\"span\":\"reason\",\"logprobs\":[0.5]}\n"), SchemaError);
}
