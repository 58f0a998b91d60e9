// Acceptance checks: one PASS/FAIL line per criterion.

#include <algorithm>
#include <boost/multiprecision/cpp_bin_float.hpp>
#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

#include "fixtures.hpp"
#include "occupred/dataset.hpp"
#include "occupred/digest.hpp"
#include "occupred/eval.hpp"
#include "occupred/inference.hpp"
#include "occupred/judge.hpp"
#include "occupred/objectives.hpp"
#include "occupred/output_format.hpp"
#include "occupred/pipeline.hpp"
#include "occupred/rng.hpp"

using namespace occupred;
using namespace occupred::testing;
namespace fs = std::filesystem;
using Big = boost::multiprecision::cpp_bin_float_50;

namespace {

struct Check {
  std::ostringstream why;
  bool ok = true;
  void expect(bool cond, const std::string& msg) {
    if (!cond && ok) why << msg;
    ok = ok && cond;
  }
};

using Clock = std::chrono::steady_clock;
double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

PredictionRecord rec(const std::string& user, const std::string& truth, std::optional<std::string> pred) {
  PredictionRecord r;
  r.user_id = user;
  r.truth = {truth, ""};
  if (pred) r.predicted = OccupationEntry{*pred, ""};
  return r;
}

// Reads the related file again by hand and scores every record.
std::pair<double, double> brute_accuracy(const std::vector<PredictionRecord>& rs,
                                         const std::map<std::string, std::vector<std::string>>& related) {
  double em = 0, rm = 0;
  for (const auto& r : rs) {
    if (!r.predicted) continue;
    if (r.predicted->code == r.truth.code) em += 1;
    std::vector<std::string> ranked{r.truth.code};
    if (auto it = related.find(r.truth.code); it != related.end())
      for (const auto& c : it->second)
        if (c != r.truth.code && std::find(ranked.begin(), ranked.end(), c) == ranked.end()) ranked.push_back(c);
    for (std::size_t k = 0; k < ranked.size(); ++k)
      if (ranked[k] == r.predicted->code) {
        rm += 1.0 / static_cast<double>(k + 1);
        break;
      }
  }
  return {em / static_cast<double>(rs.size()), rm / static_cast<double>(rs.size())};
}

const std::map<std::string, std::vector<std::string>> kRelated = {
    {"11-1111.00", {"22-2222.00", "33-3333.00", "44-4444.00"}}, {"22-2222.00", {"11-1111.00"}}};

Check metric_oracle() {
  Check c;
  const auto start = Clock::now();
  const auto tax = small_taxonomy();
  const std::vector<PredictionRecord> rs = {
      rec("u0", "11-1111.00", "11-1111.00"), rec("u1", "11-1111.00", "22-2222.00"),
      rec("u2", "11-1111.00", "33-3333.00"), rec("u3", "11-1111.00", "44-4444.00"),
      rec("u4", "11-1111.00", "55-5555.00"), rec("u5", "22-2222.00", "11-1111.00"),
      rec("u6", "22-2222.00", "22-2222.00"), rec("u7", "22-2222.00", "33-3333.00"),
      rec("u8", "55-5555.00", "55-5555.00"), rec("u9", "33-3333.00", std::nullopt)};
  const auto [em, rm] = brute_accuracy(rs, kRelated);
  c.expect(em == 0.3, "hand EM");
  c.expect(std::abs(rm - (1 + 0.5 + 1.0 / 3 + 0.25 + 0.5 + 1 + 1) / 10) < 1e-15, "hand RM");
  c.expect(acc_em(rs) == em, "acc_em differs from brute force");
  c.expect(acc_rm(rs, tax) == rm, "acc_rm differs from brute force");
  const auto report = score_predictions(rs, tax);
  c.expect(report.acc_em == em && report.acc_rm == rm, "score_predictions differs");
  c.expect(seconds_since(start) < 1.0, "slower than 1 s");
  return c;
}

Check metric_ordering() {
  Check c;
  const auto tax = fixture_taxonomy();
  std::vector<std::string> codes;
  for (const auto& e : tax.entries()) codes.push_back(e.code);
  SplitMix64 rng(20240501);
  for (int trial = 0; trial < 1000 && c.ok; ++trial) {
    std::vector<PredictionRecord> rs;
    const auto n = 1 + rng.below(40);
    for (std::size_t i = 0; i < n; ++i) {
      const auto& truth = codes[rng.below(codes.size())];
      std::optional<std::string> pred;
      const double u = rng.unit();
      const auto& ranked = tax.related(truth).ranked;
      if (u < 0.3) pred = truth;
      else if (u < 0.6) pred = ranked[rng.below(ranked.size())];
      else if (u < 0.9) pred = codes[rng.below(codes.size())];
      rs.push_back(rec("u" + std::to_string(i), truth, pred));
    }
    const double em = acc_em(rs), rm = acc_rm(rs, tax);
    c.expect(rm >= em, "trial " + std::to_string(trial) + ": RM " + std::to_string(rm) + " < EM " + std::to_string(em));
  }
  return c;
}

Check dpo_identity() {
  Check c;
  for (double beta : {0.01, 0.1, 1.0}) {
    for (double lp : {-3.0, -10.0, -42.5}) {
      const double l = dpo_loss({lp, lp - 1.5, lp, lp - 1.5}, beta);
      c.expect(std::abs(l - std::log(2.0)) < 1e-9, "ln 2 identity at beta " + std::to_string(beta));
    }
  }
  SplitMix64 rng(99);
  for (int i = 0; i < 100; ++i) {
    const double beta = 0.01 + rng.unit();
    PreferenceLogProbs p{-50 * rng.unit(), -50 * rng.unit(), -50 * rng.unit(), -50 * rng.unit()};
    const double z = (p.policy_pos - p.ref_pos) - (p.policy_neg - p.ref_neg);
    // derivative w.r.t. the margin z, from a 50-digit logistic
    const Big bz = Big(beta) * Big(z);
    const double expect = static_cast<double>(-Big(beta) / (1 + boost::multiprecision::exp(bz)));
    const double got = dpo_loss_grad_policy_pos(p, beta);
    c.expect(std::abs(got - expect) <= 1e-6 * std::abs(expect), "gradient at point " + std::to_string(i));
  }
  return c;
}

Check dpo_worked_value() {
  Check c;
  const double loss = dpo_loss({-10, -12, -11, -11.5}, 0.1);
  const Big z = Big("0.1") * ((Big(-10) - Big(-11)) - (Big(-12) - Big("-11.5")));
  const Big oracle = boost::multiprecision::log1p(boost::multiprecision::exp(-z));
  c.expect(std::abs(loss - static_cast<double>(oracle)) < 1e-9,
           "loss " + std::to_string(loss) + " vs " + oracle.str(12));
  return c;
}

Check threshold_filter() {
  Check c;
  const auto tax = fixture_taxonomy();
  const auto pool = synth_triplets(12, 11, tax);
  const std::vector<std::array<double, 3>> scores = {{5, 5, 5}, {4, 4, 4},   {3.9, 5, 5},   {5, 3, 5},
                                                     {4.5, 4.5, 4.1}, {5, 5, 2}, {4, 5, 4},     {1, 1, 1},
                                                     {4.2, 4.5, 3.9}, {5, 4, 5}, {4, 3.99, 5},  {4.01, 4, 4}};
  Playbook pb;
  std::vector<std::string> expected;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const auto& s = scores[i];
    pb.rules.push_back(label_rule({{"stage", "judge-filter"}, {"user_id", pool[i].history.user_id}},
                                  {judge_reply(s[0], s[1], s[2])}));
    if (std::min({s[0], s[1], s[2]}) >= 4.0) expected.push_back(pool[i].history.user_id);
  }
  MockRig rig(pb);
  const auto res = filter_pool(pool, *rig.gateway, 4.0);
  std::vector<std::string> kept;
  for (const auto& t : res.retained) kept.push_back(t.history.user_id);
  c.expect(kept == expected, "retained set differs from min-dimension rule");
  c.expect(std::find(kept.begin(), kept.end(), pool[1].history.user_id) != kept.end(), "4.0 boundary dropped");
  return c;
}

Check robustness_table() {
  Check c;
  const auto tax = fixture_taxonomy();
  auto sample = synth_triplets(120, 21, tax);
  sample.resize(100);
  const auto start = Clock::now();
  MockRig rig(reference_judge_playbook(100));
  const auto rep = judge_robustness_report(sample, *rig.gateway, tax);
  const double secs = seconds_since(start);
  const std::array<std::array<double, 3>, 3> want = {{{4.85, 4.90, 4.93}, {3.30, 3.96, 3.10}, {2.80, 2.10, 1.37}}};
  const std::array<MeanScores, 3> got = {rep.oracle, rep.minor, rep.major};
  for (int r = 0; r < 3; ++r) {
    const double vals[3] = {got[r].fact, got[r].cohr, got[r].util};
    for (int d = 0; d < 3; ++d)
      c.expect(std::abs(vals[d] - want[r][d]) <= 0.005,
               "row " + std::to_string(r) + " col " + std::to_string(d) + " = " + std::to_string(vals[d]));
  }
  c.expect(rep.included == 100, "items excluded");
  c.expect(secs < 5.0, "slower than 5 s");
  return c;
}

struct MockRun {
  fs::path dir;
  double seconds = 0;
};

MockRun mock_run(const fs::path& runs, const std::string& run_id) {
  RunConfig cfg;
  cfg.runs_dir = runs;
  cfg.synth_users = 100;
  const auto start = Clock::now();
  RunOptions opt;
  opt.run_id = run_id;
  Pipeline synth(cfg, opt);
  synth.run("synth");
  opt.mock_playbook = synth.stage_dir("synth") / "playbook.json";
  Pipeline p(cfg, opt);
  for (const auto& s : stage_names())
    if (s != "synth") p.run(s);
  return {p.run_dir(), seconds_since(start)};
}

template <typename T>
std::vector<T> load(const fs::path& p) {
  return read_jsonl<T>(p);
}

Check dataset_sizes(const MockRun& run) {
  Check c;
  const auto filtered = load<PoolRecord>(run.dir / "judge-filter" / "filtered.jsonl");
  const auto sft = load<SftExample>(run.dir / "emit-sft" / "sft.jsonl");
  const auto dpo = load<DpoPair>(run.dir / "emit-dpo" / "dpo.jsonl");
  const auto attempts = load<UserAttempts>(run.dir / "forge" / "attempts.jsonl");
  std::set<std::string> sft_users, dpo_users;
  for (const auto& r : filtered) sft_users.insert(r.user_id);
  c.expect(sft.size() == filtered.size(), "SFT rows do not match the filtered pool");
  for (const auto& p : dpo) dpo_users.insert(p.user_id);
  c.expect(!dpo_users.empty(), "no DPO users");
  c.expect(dpo_users.size() <= sft_users.size(), "more DPO users than SFT users");
  for (const auto& u : dpo_users) {
    c.expect(sft_users.count(u) == 1, u + " paired but not in SFT");
    auto it = std::find_if(attempts.begin(), attempts.end(), [&](const UserAttempts& a) { return a.user_id == u; });
    c.expect(it != attempts.end(), u + " has no attempts");
    if (it == attempts.end()) continue;
    bool pos = false, neg = false;
    for (const auto& a : it->attempts) {
      pos = pos || (a.status == AttemptStatus::ok && a.correct);
      neg = neg || (a.status == AttemptStatus::ok && !a.correct);
    }
    c.expect(pos && neg, u + " lacks a correct or an incorrect attempt");
  }
  return c;
}

Check forge_correctness(const MockRun& a, const MockRun& b) {
  Check c;
  const auto tax = load_taxonomy(a.dir / "ingest" / "occupations.tsv", a.dir / "ingest" / "related.tsv");
  const auto pool = load<PoolRecord>(a.dir / "forge" / "pool.jsonl");
  const auto attempts = load<UserAttempts>(a.dir / "forge" / "attempts.jsonl");
  c.expect(!pool.empty(), "empty pool");
  std::set<std::string> in_pool;
  for (const auto& r : pool) {
    in_pool.insert(r.user_id);
    auto it = std::find_if(attempts.begin(), attempts.end(), [&](const UserAttempts& u) { return u.user_id == r.user_id; });
    c.expect(it != attempts.end(), r.user_id + " missing attempts");
    if (it == attempts.end()) continue;
    const auto& src = it->attempts.at(static_cast<std::size_t>(r.source_attempt));
    const auto norm = tax.normalize_title(src.raw_prediction);
    c.expect(norm && norm->code == r.truth_code && it->truth.code == r.truth_code,
             r.user_id + " source attempt does not re-verify");
    c.expect(src.reason_text == r.reason, r.user_id + " reason differs from its attempt");
  }
  for (const auto& u : attempts) {
    const bool any = std::any_of(u.attempts.begin(), u.attempts.end(), [&](const Attempt& at) {
      const auto norm = tax.normalize_title(at.raw_prediction);
      return at.status == AttemptStatus::ok && norm && norm->code == u.truth.code;
    });
    if (!any) c.expect(in_pool.count(u.user_id) == 0, u.user_id + " kept with zero correct attempts");
  }
  for (const auto& s : stage_names()) {
    for (const auto& entry : fs::directory_iterator(a.dir / s)) {
      if (!entry.is_regular_file()) continue;
      const auto other = b.dir / s / entry.path().filename();
      c.expect(fs::exists(other) && sha256_file(entry.path()) == sha256_file(other),
               s + "/" + entry.path().filename().string() + " differs between runs");
    }
  }
  c.expect(a.seconds < 30.0 && b.seconds < 30.0, "mock run slower than 30 s");
  return c;
}

// LCS and clipped n-gram counts written out longhand.
double lcs_f1(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::vector<std::vector<int>> t(a.size() + 1, std::vector<int>(b.size() + 1, 0));
  for (std::size_t i = 1; i <= a.size(); ++i)
    for (std::size_t j = 1; j <= b.size(); ++j)
      t[i][j] = a[i - 1] == b[j - 1] ? t[i - 1][j - 1] + 1 : std::max(t[i - 1][j], t[i][j - 1]);
  const double l = t[a.size()][b.size()];
  if (l == 0) return 0;
  const double p = l / a.size(), r = l / b.size();
  return 2 * p * r / (p + r);
}

double ngram_f1(const std::vector<std::string>& a, const std::vector<std::string>& b, std::size_t n) {
  std::map<std::vector<std::string>, int> ca, cb;
  for (std::size_t i = 0; i + n <= a.size(); ++i) ca[{a.begin() + i, a.begin() + i + n}]++;
  for (std::size_t i = 0; i + n <= b.size(); ++i) cb[{b.begin() + i, b.begin() + i + n}]++;
  double overlap = 0, na = 0, nb = 0;
  for (const auto& [g, k] : ca) {
    na += k;
    if (auto it = cb.find(g); it != cb.end()) overlap += std::min(k, it->second);
  }
  for (const auto& [g, k] : cb) nb += k;
  if (overlap == 0) return 0;
  const double p = overlap / na, r = overlap / nb;
  return 2 * p * r / (p + r);
}

Check text_metrics() {
  Check c;
  const std::string s = "The analyst moved into a senior data role after five years of steady growth.";
  c.expect(bleu(s, s) == 1.0, "bleu identity");
  c.expect(rouge_n(s, s, 1) == 1.0 && rouge_n(s, s, 2) == 1.0 && rouge_l(s, s) == 1.0, "rouge identity");
  const std::vector<std::pair<std::string, std::string>> cases = {
      {"the cat sat on the mat", "the cat is on the mat"},
      {"a b c d", "a c b d"},
      {"data analyst to data scientist", "analyst became a data scientist quickly"},
      {"one two three", "four five six"}};
  for (const auto& [cand, ref] : cases) {
    const auto a = metric_tokens(cand), b = metric_tokens(ref);
    c.expect(std::abs(rouge_n(cand, ref, 1) - ngram_f1(a, b, 1)) < 1e-9, "rouge-1 '" + cand + "'");
    c.expect(std::abs(rouge_n(cand, ref, 2) - ngram_f1(a, b, 2)) < 1e-9, "rouge-2 '" + cand + "'");
    c.expect(std::abs(rouge_l(cand, ref) - lcs_f1(a, b)) < 1e-9, "rouge-l '" + cand + "'");
  }
  // the cat sat on the mat / the cat is on the mat: p1 5/6, p2 3/5, p3 1/4, p4 eps/3
  const double hand = std::exp((std::log(5.0 / 6) + std::log(3.0 / 5) + std::log(1.0 / 4) + std::log(1e-9 / 3)) / 4);
  c.expect(std::abs(bleu(cases[0].first, cases[0].second) - hand) < 1e-9, "bleu hand case");
  const auto m = mcnemar(ContingencyTable{10, 2, 0, 0}, 1);
  c.expect(std::abs(m.statistic - 49.0 / 12.0) < 1e-9, "McNemar statistic " + std::to_string(m.statistic));
  return c;
}

Check perturbation_contracts() {
  Check c;
  const auto tax = fixture_taxonomy();
  const auto triplets = synth_triplets(10, 31, tax);
  auto lower = [](std::string s) {
    for (auto& ch : s) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    return s;
  };
  for (const auto& t : triplets) {
    auto base = split_sentences(t.reason);
    std::sort(base.begin(), base.end());
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      for (auto level : {PerturbLevel::minor, PerturbLevel::major}) {
        auto co = split_sentences(perturb(t.reason, {Dimension::coherence, level, seed}, t.history, t.truth, tax));
        std::sort(co.begin(), co.end());
        c.expect(co == base, "coherence changed the sentence multiset");
      }
      const auto um = perturb(t.reason, {Dimension::utility, PerturbLevel::major, seed}, t.history, t.truth, tax);
      c.expect(lower(um).find(lower(t.truth.title)) == std::string::npos, "utility-major kept the truth title");
      for (auto d : {Dimension::factuality, Dimension::coherence, Dimension::utility})
        for (auto level : {PerturbLevel::minor, PerturbLevel::major}) {
          const PerturbationSpec spec{d, level, seed};
          c.expect(perturb(t.reason, spec, t.history, t.truth, tax) == perturb(t.reason, spec, t.history, t.truth, tax),
                   "perturbation not deterministic");
        }
    }
  }
  return c;
}

Check inference_stitching() {
  Check c;
  const auto tax = fixture_taxonomy();
  const auto corpus = preprocess_corpus(synthesize_fixtures(8, 30, tax)).corpus;
  Playbook pb;
  for (const auto& u : corpus) {
    const auto inst = split_instance(u);
    pb.rules.push_back(label_rule({{"stage", "predict"}, {"part", "reasoner"}, {"user_id", u.user_id}},
                                  {format_reason_output(template_reason(inst.history, tax.entries()[0].title))}));
    pb.rules.push_back(label_rule({{"stage", "predict"}, {"part", "predictor"}, {"user_id", u.user_id}},
                                  {format_prediction_output(tax.entries()[0].title)}));
  }
  MockRig rig(pb);
  const auto batch = batch_predict(corpus, PredictMode::two_model, *rig.gateway, tax);
  c.expect(batch.failures.empty() && batch.records.size() == corpus.size(), "records missing");
  const auto tr = rig.mock->transcript();
  for (const auto& r : batch.records) {
    c.expect(!r.reason.empty(), r.user_id + " empty reason");
    bool found = false;
    for (const auto& e : tr) {
      if (e.labels.count("part") == 0 || e.labels.at("part") != "predictor" || e.labels.at("user_id") != r.user_id)
        continue;
      std::string text;
      for (const auto& m : e.messages) text += m.content + "\n";
      found = text.find(r.reason) != std::string::npos;
    }
    c.expect(found, r.user_id + " stage-2 prompt lacks the stage-1 reason");
  }
  return c;
}

}  // namespace

int main() {
  ScratchDir scratch;
  std::optional<MockRun> run_a, run_b;
  auto runs = [&]() -> std::pair<const MockRun&, const MockRun&> {
    if (!run_a) {
      run_a = mock_run(scratch.path, "a");
      run_b = mock_run(scratch.path, "b");
    }
    return {*run_a, *run_b};
  };

  const std::vector<std::pair<std::string, std::function<Check()>>> criteria = {
      {"metric-oracle-equivalence", metric_oracle},
      {"metric-ordering-invariant", metric_ordering},
      {"dpo-loss-identity", dpo_identity},
      {"dpo-worked-value", dpo_worked_value},
      {"threshold-filter", threshold_filter},
      {"judge-robustness-table", robustness_table},
      {"dataset-size-invariant", [&] { return dataset_sizes(runs().first); }},
      {"forge-correctness", [&] { const auto [a, b] = runs(); return forge_correctness(a, b); }},
      {"text-metric-oracles", text_metrics},
      {"perturbation-contracts", perturbation_contracts},
      {"inference-stitching", inference_stitching},
  };
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    Check c;
    try {
      c = fn();
    } catch (const std::exception& e) {
      c.ok = false;
      c.why << "threw: " << e.what();
    }
    if (c.ok) {
      std::cout << "PASS " << name << "\n";
    } else {
      std::cout << "FAIL " << name << ": " << c.why.str() << "\n";
      ++failed;
    }
  }
  return failed == 0 ? 0 : 1;
}
