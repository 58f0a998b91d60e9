#include "occupred/eval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <map>

namespace occupred {

// ---------------------------------------------------------------------------
// Accuracy

namespace {

bool exact(const PredictionRecord& r) { return r.predicted && r.predicted->code == r.truth.code; }

}  // namespace

MetricReport score_predictions(const std::vector<PredictionRecord>& records, const OccupationTaxonomy& taxonomy) {
  if (records.empty()) throw EmptyInput("no prediction records to score");
  MetricReport m;
  m.n = records.size();
  double em_sum = 0, rm_sum = 0;
  for (const auto& r : records) {
    UserScore s;
    s.user_id = r.user_id;
    s.em = exact(r) ? 1 : 0;
    if (!taxonomy.contains(r.truth.code)) throw UnknownTruthCode(r.truth.code);
    if (r.predicted) s.rank = taxonomy.related_rank(r.truth.code, r.predicted->code);
    s.rm = s.rank ? 1.0 / static_cast<double>(*s.rank) : 0.0;
    em_sum += s.em;
    rm_sum += s.rm;
    m.per_user.push_back(std::move(s));
  }
  m.acc_em = em_sum / static_cast<double>(m.n);
  m.acc_rm = rm_sum / static_cast<double>(m.n);
  return m;
}

double acc_em(const std::vector<PredictionRecord>& records) {
  if (records.empty()) throw EmptyInput("no prediction records to score");
  double hits = 0;
  for (const auto& r : records) hits += exact(r) ? 1 : 0;
  return hits / static_cast<double>(records.size());
}

double acc_rm(const std::vector<PredictionRecord>& records, const OccupationTaxonomy& taxonomy) {
  return score_predictions(records, taxonomy).acc_rm;
}

std::vector<PredictionRecord> with_failures_as_wrong(std::vector<PredictionRecord> records,
                                                     const std::vector<PredictionFailure>& failures) {
  for (const auto& f : failures) {
    if (!f.truth_code) continue;
    PredictionRecord r;
    r.user_id = f.user_id;
    r.mode = f.mode;
    r.truth = {*f.truth_code, ""};
    records.push_back(std::move(r));
  }
  std::stable_sort(records.begin(), records.end(),
                   [](const PredictionRecord& a, const PredictionRecord& b) { return a.user_id < b.user_id; });
  return records;
}

// ---------------------------------------------------------------------------
// Significance

namespace {

/// P(X <= k) for X ~ Binomial(n, 1/2), summed in log space.
double binomial_half_cdf(std::size_t k, std::size_t n) {
  const double ln_half_n = static_cast<double>(n) * std::log(0.5);
  const double ln_n_fact = std::lgamma(static_cast<double>(n) + 1);
  double total = 0;
  for (std::size_t i = 0; i <= k; ++i) {
    const double ln_choose =
        ln_n_fact - std::lgamma(static_cast<double>(i) + 1) - std::lgamma(static_cast<double>(n - i) + 1);
    total += std::exp(ln_choose + ln_half_n);
  }
  return total;
}

}  // namespace

McNemarResult mcnemar(const ContingencyTable& table, std::size_t n_comparisons, double alpha) {
  if (n_comparisons == 0) throw InvalidArgument("n_comparisons must be at least 1");
  McNemarResult r;
  r.table = table;
  r.corrected_alpha = alpha / static_cast<double>(n_comparisons);
  const std::size_t discordant = table.b + table.c;
  if (discordant == 0) {
    r.method = "degenerate";
    r.statistic = 0;
    r.p_value = 1;
    r.significant = false;
    return r;
  }
  const double diff = std::abs(static_cast<double>(table.b) - static_cast<double>(table.c)) - 1.0;
  r.statistic = diff * diff / static_cast<double>(discordant);
  if (discordant >= 25) {
    r.method = "chi-square";
    r.p_value = std::erfc(std::sqrt(r.statistic / 2.0));
  } else {
    r.method = "exact-binomial";
    r.p_value = std::min(1.0, 2.0 * binomial_half_cdf(std::min(table.b, table.c), discordant));
  }
  r.significant = r.p_value < r.corrected_alpha;
  return r;
}

McNemarResult mcnemar(const MetricReport& a, const MetricReport& b, std::size_t n_comparisons, double alpha) {
  if (a.per_user.size() != b.per_user.size()) throw UserSetMismatch("models were scored on different user counts");
  ContingencyTable t;
  for (std::size_t i = 0; i < a.per_user.size(); ++i) {
    const auto& x = a.per_user[i];
    const auto& y = b.per_user[i];
    if (x.user_id != y.user_id) throw UserSetMismatch("user " + x.user_id + " does not line up with " + y.user_id);
    if (x.em && y.em) {
      ++t.both_correct;
    } else if (x.em) {
      ++t.b;
    } else if (y.em) {
      ++t.c;
    } else {
      ++t.both_wrong;
    }
  }
  return mcnemar(t, n_comparisons, alpha);
}

// ---------------------------------------------------------------------------
// Text similarity

std::vector<std::string> metric_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(std::move(cur));
    cur.clear();
  };
  for (char ch : text) {
    const auto u = static_cast<unsigned char>(ch);
    if (std::isspace(u)) {
      flush();
    } else if (u < 128 && std::ispunct(u)) {
      flush();
      out.emplace_back(1, ch);
    } else {
      cur.push_back(static_cast<char>(std::tolower(u)));
    }
  }
  flush();
  return out;
}

namespace {

using Counts = std::map<std::vector<std::string>, std::size_t>;

Counts ngrams(const std::vector<std::string>& toks, std::size_t n) {
  Counts c;
  if (toks.size() < n) return c;
  for (std::size_t i = 0; i + n <= toks.size(); ++i) ++c[std::vector<std::string>(toks.begin() + i, toks.begin() + i + n)];
  return c;
}

std::size_t clipped_overlap(const Counts& cand, const Counts& ref) {
  std::size_t m = 0;
  for (const auto& [g, k] : cand) {
    auto it = ref.find(g);
    if (it != ref.end()) m += std::min(k, it->second);
  }
  return m;
}

double f1(std::size_t overlap, std::size_t cand_total, std::size_t ref_total) {
  if (overlap == 0 || cand_total == 0 || ref_total == 0) return 0.0;
  const double p = static_cast<double>(overlap) / static_cast<double>(cand_total);
  const double r = static_cast<double>(overlap) / static_cast<double>(ref_total);
  return 2 * p * r / (p + r);
}

}  // namespace

double bleu(std::string_view candidate, std::string_view reference) {
  const auto c = metric_tokens(candidate);
  const auto r = metric_tokens(reference);
  if (c.empty()) return 0.0;
  double log_sum = 0;
  for (std::size_t n = 1; n <= 4; ++n) {
    const auto cg = ngrams(c, n);
    const std::size_t total = c.size() >= n ? c.size() - n + 1 : 0;
    const std::size_t matches = clipped_overlap(cg, ngrams(r, n));
    const double p = matches > 0 ? static_cast<double>(matches) / static_cast<double>(total)
                                 : kBleuEpsilon / static_cast<double>(std::max<std::size_t>(total, 1));
    log_sum += std::log(p);
  }
  const double bp = c.size() < r.size() ? std::exp(1.0 - static_cast<double>(r.size()) / static_cast<double>(c.size())) : 1.0;
  return bp * std::exp(log_sum / 4.0);
}

double rouge_n(std::string_view candidate, std::string_view reference, int n) {
  if (n != 1 && n != 2) throw InvalidArgument("rouge_n supports n = 1 or 2");
  const auto c = metric_tokens(candidate);
  const auto r = metric_tokens(reference);
  const auto un = static_cast<std::size_t>(n);
  const std::size_t ct = c.size() >= un ? c.size() - un + 1 : 0;
  const std::size_t rt = r.size() >= un ? r.size() - un + 1 : 0;
  return f1(clipped_overlap(ngrams(c, un), ngrams(r, un)), ct, rt);
}

double rouge_l(std::string_view candidate, std::string_view reference) {
  const auto a = metric_tokens(candidate);
  const auto b = metric_tokens(reference);
  if (a.empty() || b.empty()) return 0.0;
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return f1(prev[b.size()], a.size(), b.size());
}

ReasonQualityRow reason_quality_report(const std::vector<std::string>& generated, const std::vector<std::string>& oracle,
                                       const std::vector<RationalityScores>& judge_scores, std::string label) {
  if (generated.size() != oracle.size() || generated.size() != judge_scores.size()) {
    throw LengthMismatch("generated reasons, oracle reasons and judge scores differ in length");
  }
  if (generated.empty()) throw EmptyInput("no reasons to compare");
  ReasonQualityRow row;
  row.label = std::move(label);
  row.n = generated.size();
  for (std::size_t i = 0; i < row.n; ++i) {
    row.fact += judge_scores[i].fact;
    row.cohr += judge_scores[i].cohr;
    row.util += judge_scores[i].util;
    row.bleu += bleu(generated[i], oracle[i]);
    row.rouge1 += rouge_n(generated[i], oracle[i], 1);
    row.rouge2 += rouge_n(generated[i], oracle[i], 2);
    row.rouge_l += rouge_l(generated[i], oracle[i]);
  }
  const double n = static_cast<double>(row.n);
  for (double* v : {&row.fact, &row.cohr, &row.util, &row.bleu, &row.rouge1, &row.rouge2, &row.rouge_l}) *v /= n;
  row.overall = (row.fact + row.cohr + row.util) / 3.0;
  return row;
}

// ---------------------------------------------------------------------------
// Reports

Json metric_definitions() {
  return Json{{"acc_em", "acc-em/1 exact code match, failures count as wrong"},
              {"acc_rm", "acc-rm/1 mean reciprocal rank in related list, 0 when absent"},
              {"mcnemar", "mcnemar/1 continuity corrected, chi-square when b+c>=25 else exact binomial, bonferroni"},
              {"bleu", "bleu4/1 sentence level, add-1e-9 smoothing, mean over pairs"},
              {"rouge", "rouge-f1/1 rouge-1, rouge-2, rouge-l (lcs)"},
              {"overall", "overall/1 mean of fact, cohr, util means"}};
}

std::vector<PairwiseSignificance> pairwise_significance(const std::vector<ModelEvaluation>& models, double alpha) {
  std::vector<PairwiseSignificance> out;
  const std::size_t pairs = models.size() < 2 ? 1 : models.size() * (models.size() - 1) / 2;
  for (std::size_t i = 0; i < models.size(); ++i) {
    for (std::size_t j = i + 1; j < models.size(); ++j) {
      out.push_back({models[i].label, models[j].label, mcnemar(models[i].metrics, models[j].metrics, pairs, alpha)});
    }
  }
  return out;
}

Json to_json(const McNemarResult& r) {
  return Json{{"b", r.table.b},
              {"c", r.table.c},
              {"both_correct", r.table.both_correct},
              {"both_wrong", r.table.both_wrong},
              {"statistic", r.statistic},
              {"p_value", r.p_value},
              {"method", r.method},
              {"corrected_alpha", r.corrected_alpha},
              {"significant", r.significant}};
}

Json to_json(const ReasonQualityRow& r) {
  return Json{{"label", r.label}, {"n", r.n},           {"fact", r.fact},     {"cohr", r.cohr},
              {"util", r.util},   {"overall", r.overall}, {"bleu", r.bleu},   {"rouge_1", r.rouge1},
              {"rouge_2", r.rouge2}, {"rouge_l", r.rouge_l}};
}

Json metrics_json(const std::vector<ModelEvaluation>& models, const std::vector<ReasonQualityRow>& quality) {
  Json j;
  j["metric_definitions"] = metric_definitions();
  j["models"] = Json::array();
  for (const auto& m : models) {
    j["models"].push_back(Json{{"label", m.label},
                               {"n", m.metrics.n},
                               {"failures", m.failures},
                               {"acc_em", m.metrics.acc_em},
                               {"acc_rm", m.metrics.acc_rm}});
  }
  j["reason_quality"] = Json::array();
  for (const auto& q : quality) j["reason_quality"].push_back(to_json(q));
  return j;
}

std::string metrics_text(const std::vector<ModelEvaluation>& models, const std::vector<ReasonQualityRow>& quality) {
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-20s %8s %8s %6s %8s\n", "Model", "Acc_EM", "Acc_RM", "n", "failures");
  out += buf;
  for (const auto& m : models) {
    std::snprintf(buf, sizeof buf, "%-20s %8.4f %8.4f %6zu %8zu\n", m.label.c_str(), m.metrics.acc_em, m.metrics.acc_rm,
                  m.metrics.n, m.failures);
    out += buf;
  }
  if (!quality.empty()) {
    std::snprintf(buf, sizeof buf, "\n%-20s %6s %6s %6s %8s %6s %8s %8s %8s\n", "Reasons", "Fact", "Cohr", "Util",
                  "Overall", "BLEU", "ROUGE-1", "ROUGE-2", "ROUGE-L");
    out += buf;
    for (const auto& q : quality) {
      std::snprintf(buf, sizeof buf, "%-20s %6.2f %6.2f %6.2f %8.2f %6.4f %8.4f %8.4f %8.4f\n", q.label.c_str(), q.fact,
                    q.cohr, q.util, q.overall, q.bleu, q.rouge1, q.rouge2, q.rouge_l);
      out += buf;
    }
  }
  return out;
}

Json significance_json(const std::vector<PairwiseSignificance>& comparisons, double alpha) {
  Json j;
  j["metric_definitions"] = Json{{"mcnemar", metric_definitions()["mcnemar"]}};
  j["alpha"] = alpha;
  j["n_comparisons"] = comparisons.size();
  j["comparisons"] = Json::array();
  for (const auto& c : comparisons) {
    auto row = to_json(c.result);
    row["model_a"] = c.model_a;
    row["model_b"] = c.model_b;
    j["comparisons"].push_back(std::move(row));
  }
  return j;
}

}  // namespace occupred
