#include "occupred/judge.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <limits>
#include <regex>
#include <set>

#include "occupred/rng.hpp"

namespace occupred {

// ---------------------------------------------------------------------------
// Names

std::string to_string(Dimension d) {
  switch (d) {
    case Dimension::factuality:
      return "factuality";
    case Dimension::coherence:
      return "coherence";
    case Dimension::utility:
      return "utility";
  }
  return "factuality";
}

std::string dimension_tag(Dimension d) {
  switch (d) {
    case Dimension::factuality:
      return "FACT";
    case Dimension::coherence:
      return "COHR";
    case Dimension::utility:
      return "UTIL";
  }
  return "FACT";
}

Dimension dimension_from_string(const std::string& s) {
  if (s == "factuality" || s == "fact" || s == "FACT") return Dimension::factuality;
  if (s == "coherence" || s == "cohr" || s == "COHR") return Dimension::coherence;
  if (s == "utility" || s == "util" || s == "UTIL") return Dimension::utility;
  throw InvalidArgument("unknown dimension '" + s + "'");
}

std::string to_string(PerturbLevel l) { return l == PerturbLevel::minor ? "minor" : "major"; }

double RationalityScores::get(Dimension d) const {
  switch (d) {
    case Dimension::factuality:
      return fact;
    case Dimension::coherence:
      return cohr;
    case Dimension::utility:
      return util;
  }
  return fact;
}

double RationalityScores::min() const { return std::min({fact, cohr, util}); }

double MeanScores::get(Dimension d) const {
  switch (d) {
    case Dimension::factuality:
      return fact;
    case Dimension::coherence:
      return cohr;
    case Dimension::utility:
      return util;
  }
  return fact;
}

// ---------------------------------------------------------------------------
// Parsing

namespace {

std::string trim(std::string_view s, std::string_view chars = " \t\r\n") {
  const auto b = s.find_first_not_of(chars);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(chars);
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

std::optional<RationalityScores> parse_judge_output(std::string_view text) {
  static const std::regex tag_re(R"((FACT|COHR|UTIL)\s*:\s*([-+]?\d+(?:\.\d+)?))", std::regex::icase);
  struct Hit {
    std::size_t begin, value_end;
    double value;
  };
  std::array<std::optional<Hit>, 3> hits;
  std::vector<std::size_t> starts;
  const std::string s(text);
  for (auto it = std::sregex_iterator(s.begin(), s.end(), tag_re); it != std::sregex_iterator(); ++it) {
    std::string tag = (*it)[1].str();
    for (auto& c : tag) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    const auto d = dimension_from_string(tag);
    const auto begin = static_cast<std::size_t>(it->position(0));
    starts.push_back(begin);
    hits[static_cast<std::size_t>(d)] = Hit{begin, begin + static_cast<std::size_t>(it->length(0)),
                                            std::stod((*it)[2].str())};
  }
  if (!hits[0] || !hits[1] || !hits[2]) return std::nullopt;

  RationalityScores out;
  for (auto d : kDimensions) {
    const auto& h = *hits[static_cast<std::size_t>(d)];
    double v = h.value;
    if (v < 1.0 || v > 5.0) {
      v = std::clamp(v, 1.0, 5.0);
      out.clamped.push_back(d);
    }
    std::size_t end = s.size();
    for (auto st : starts) {
      if (st >= h.value_end && st < end) end = st;
    }
    out.justifications[static_cast<std::size_t>(d)] = trim(std::string_view(s).substr(h.value_end, end - h.value_end),
                                                           " \t\r\n-:;,.");
    switch (d) {
      case Dimension::factuality:
        out.fact = v;
        break;
      case Dimension::coherence:
        out.cohr = v;
        break;
      case Dimension::utility:
        out.util = v;
        break;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Scoring

std::string judge_prompt(const UserHistory& history, std::string_view reason, std::string_view truth_title,
                         const PromptSet& prompts) {
  std::string input = render_history_text(history, prompts.history_template);
  input += "\nReason:\n";
  input += reason;
  input += "\n\nActual next occupation: ";
  input += truth_title;
  input += "\n";
  return compose_prompt(prompts.judge_instruction, input);
}

namespace {

constexpr std::string_view kReprompt =
    "Your previous reply could not be read. Reply again with exactly three lines:\n"
    "FACT: <score 1-5> <justification>\n"
    "COHR: <score 1-5> <justification>\n"
    "UTIL: <score 1-5> <justification>";

}  // namespace

std::vector<JudgeOutcome> score_reasons(const std::vector<JudgeItem>& items, Gateway& gateway,
                                        const JudgeConfig& config) {
  std::vector<JudgeOutcome> out(items.size());
  std::vector<ChatRequest> first;
  std::vector<std::size_t> first_idx;
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto& it = items[i];
    if (it.reason.empty() || !it.history) {
      out[i].error = CallError{"InvalidArgument", "empty reason"};
      continue;
    }
    first.push_back(config.call.request(judge_prompt(*it.history, it.reason, it.truth.title, config.prompts), 0,
                                        it.labels));
    first_idx.push_back(i);
  }
  const auto r1 = gateway.complete_batch(first, std::max<std::size_t>(1, config.call.max_in_flight));

  std::vector<ChatRequest> second;
  std::vector<std::size_t> second_idx;
  for (std::size_t k = 0; k < first.size(); ++k) {
    auto& o = out[first_idx[k]];
    if (!r1[k].ok()) {
      o.error = r1[k].error;
      continue;
    }
    o.replies.push_back(r1[k].response->text);
    if (auto s = parse_judge_output(r1[k].response->text)) {
      o.scores = std::move(*s);
      continue;
    }
    auto req = first[k];
    req.messages.push_back({Role::assistant, r1[k].response->text});
    req.messages.push_back({Role::user, std::string(kReprompt)});
    req.labels["reprompt"] = "1";
    second.push_back(std::move(req));
    second_idx.push_back(first_idx[k]);
  }
  if (second.empty()) return out;

  const auto r2 = gateway.complete_batch(second, std::max<std::size_t>(1, config.call.max_in_flight));
  for (std::size_t k = 0; k < second.size(); ++k) {
    auto& o = out[second_idx[k]];
    if (!r2[k].ok()) {
      o.error = r2[k].error;
      continue;
    }
    o.replies.push_back(r2[k].response->text);
    if (auto s = parse_judge_output(r2[k].response->text)) {
      o.scores = std::move(*s);
    } else {
      o.error = CallError{"JudgeUnparseable", "judge reply unparseable after reprompt"};
    }
  }
  return out;
}

RationalityScores score_reason(const UserHistory& history, const std::string& reason, const OccupationEntry& truth,
                               Gateway& gateway, const JudgeConfig& config,
                               std::map<std::string, std::string> labels) {
  if (reason.empty()) throw InvalidArgument("reason must be non-empty");
  auto res = score_reasons({JudgeItem{&history, reason, truth, std::move(labels)}}, gateway, config);
  auto& o = res.front();
  if (o.scores) return *o.scores;
  if (o.error->kind == "JudgeUnparseable") throw JudgeUnparseable(o.error->message);
  throw Error(o.error->kind, o.error->message);
}

bool passes_threshold(const RationalityScores& scores, double tau) { return scores.min() >= tau; }

FilterResult filter_pool(const std::vector<OracleTriplet>& pool, Gateway& gateway, double tau,
                         const JudgeConfig& config) {
  FilterResult res;
  res.stats.tau = tau;
  res.stats.items_in = pool.size();
  std::vector<JudgeItem> items;
  for (const auto& t : pool) {
    items.push_back({&t.history, t.reason, t.truth, {{"stage", "judge-filter"}, {"user_id", t.history.user_id}}});
  }
  const auto outcomes = score_reasons(items, gateway, config);

  std::array<std::vector<double>, 3> values;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    ScoredItem s{pool[i].history.user_id, outcomes[i].scores, outcomes[i].error, false, outcomes[i].replies};
    if (!s.scores) {
      ++res.stats.judge_errors;
    } else {
      if (!s.scores->clamped.empty()) ++res.stats.clamped_items;
      for (auto d : kDimensions) values[static_cast<std::size_t>(d)].push_back(s.scores->get(d));
      s.passed = passes_threshold(*s.scores, tau);
      if (s.passed) {
        res.retained.push_back(pool[i]);
        ++res.stats.retained;
      } else {
        ++res.stats.below_threshold;
      }
    }
    res.items.push_back(std::move(s));
  }
  for (std::size_t d = 0; d < 3; ++d) {
    auto& sum = res.stats.per_dimension[d];
    const auto& v = values[d];
    sum.n = v.size();
    if (v.empty()) continue;
    double total = 0;
    for (double x : v) total += x;
    sum.mean = total / static_cast<double>(v.size());
    sum.min = *std::min_element(v.begin(), v.end());
    sum.max = *std::max_element(v.begin(), v.end());
    for (double x : v) {
      const auto bin = std::min<std::size_t>(4, static_cast<std::size_t>(std::floor(x)) - 1);
      ++sum.histogram[bin];
    }
  }
  return res;
}

// ---------------------------------------------------------------------------
// Perturbation

std::vector<std::string> split_sentences(std::string_view text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  auto push = [&](std::size_t end) {
    auto piece = trim(text.substr(start, end - start));
    if (!piece.empty()) out.push_back(std::move(piece));
  };
  for (std::size_t i = 0; i + 1 < text.size(); ++i) {
    const char c = text[i];
    if ((c == '.' || c == '?' || c == '!') && std::isspace(static_cast<unsigned char>(text[i + 1]))) {
      push(i + 1);
      start = i + 1;
    }
  }
  push(text.size());
  return out;
}

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

bool is_word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

/// Case-insensitive occurrences of `needle`; with `bounded`, the match must
/// not touch a letter or digit on either side.
std::vector<std::size_t> find_all(const std::string& text, const std::string& needle, bool bounded) {
  std::vector<std::size_t> out;
  if (needle.empty()) return out;
  const auto t = lower(text);
  const auto n = lower(needle);
  for (std::size_t p = t.find(n); p != std::string::npos; p = t.find(n, p + 1)) {
    if (bounded) {
      if (p > 0 && is_word_char(t[p - 1]) && is_word_char(n.front())) continue;
      const auto e = p + n.size();
      if (e < t.size() && is_word_char(t[e]) && is_word_char(n.back())) continue;
    }
    out.push_back(p);
    p += n.size() - 1;
  }
  return out;
}

std::string replace_all(const std::string& text, const std::string& needle, const std::string& replacement,
                        bool bounded) {
  const auto hits = find_all(text, needle, bounded);
  std::string out;
  std::size_t prev = 0;
  for (auto p : hits) {
    out.append(text, prev, p - prev);
    out += replacement;
    prev = p + needle.size();
  }
  out.append(text, prev, std::string::npos);
  return out;
}

bool has_sentence_punct(std::string_view s) { return s.find_first_of(".?!") != std::string_view::npos; }

enum class FactKind { school, degree, job_title, year };

struct Fact {
  FactKind kind;
  std::string value;
};

std::vector<Fact> history_facts(const UserHistory& h) {
  std::vector<Fact> out;
  std::set<std::string> seen;
  auto add = [&](FactKind k, const std::string& v) {
    if (v.size() < 2 || has_sentence_punct(v)) return;
    if (seen.insert(std::to_string(static_cast<int>(k)) + lower(v)).second) out.push_back({k, v});
  };
  for (const auto& e : h.events) {
    if (const auto* ed = e.education()) {
      add(FactKind::school, ed->school_name);
      add(FactKind::degree, ed->degree);
      if (ed->graduation_year) add(FactKind::year, std::to_string(*ed->graduation_year));
    } else if (const auto* j = e.job()) {
      add(FactKind::job_title, j->job_title);
      if (j->start_date) add(FactKind::year, std::to_string(j->start_date->year));
      if (j->end_date) add(FactKind::year, std::to_string(j->end_date->year));
    }
  }
  return out;
}

const std::vector<std::string>& fact_pool(FactKind k) {
  static const std::vector<std::string> schools = {
      "Northbridge Institute of Technology", "Harborview College", "Summit Ridge University",
      "Westfield Polytechnic", "Cedar Valley Community College", "Eastgate University", "Pinecrest Academy",
      "Riverbend State College"};
  static const std::vector<std::string> degrees = {"Associate's",  "Bachelor's", "Master's",   "MBA",
                                                   "PhD",          "Doctorate",  "Certificate", "High School Diploma"};
  static const std::vector<std::string> titles = {
      "Warehouse Associate", "Flight Attendant",    "Barista",           "Museum Curator",
      "Park Ranger",         "Dental Hygienist",    "Line Cook",         "Librarian",
      "Bus Driver",          "Real Estate Agent",   "Pharmacy Technician", "Event Planner"};
  static const std::vector<std::string> none;
  switch (k) {
    case FactKind::school:
      return schools;
    case FactKind::degree:
      return degrees;
    case FactKind::job_title:
      return titles;
    case FactKind::year:
      return none;
  }
  return none;
}

std::optional<std::string> pick_replacement(const Fact& f, const UserHistory& h, const std::string& text,
                                            const std::set<std::string>& used, SplitMix64& rng) {
  std::set<std::string> present;  // lowercased values already in the history
  for (const auto& x : history_facts(h)) present.insert(lower(x.value));
  std::vector<std::string> cands;
  if (f.kind == FactKind::year) {
    const int y = std::stoi(f.value);
    for (int d = 1; d <= 6; ++d) {
      for (int s : {-1, 1}) cands.push_back(std::to_string(y + s * d));
    }
  } else {
    cands = fact_pool(f.kind);
  }
  std::vector<std::string> ok;
  for (auto& c : cands) {
    const auto lc = lower(c);
    if (present.count(lc) || used.count(lc)) continue;
    if (!find_all(text, c, true).empty()) continue;
    ok.push_back(c);
  }
  if (ok.empty()) return std::nullopt;
  return ok[rng.below(ok.size())];
}

std::string perturb_facts(const std::string& reason, PerturbLevel level, const UserHistory& history,
                          SplitMix64& rng) {
  const std::size_t want = level == PerturbLevel::minor ? 1 : static_cast<std::size_t>(rng.between(2, 3));
  const auto facts = history_facts(history);
  std::string text = reason;
  std::set<std::string> done;      // lowercased originals already handled
  std::set<std::string> inserted;  // lowercased replacements
  std::size_t replaced = 0;
  while (replaced < want) {
    std::vector<const Fact*> cands;
    for (const auto& f : facts) {
      if (done.count(lower(f.value)) || inserted.count(lower(f.value))) continue;
      if (!find_all(text, f.value, true).empty()) cands.push_back(&f);
    }
    if (cands.empty()) break;
    const Fact& f = *cands[rng.below(cands.size())];
    done.insert(lower(f.value));
    auto rep = pick_replacement(f, history, text, inserted, rng);
    if (!rep) continue;
    inserted.insert(lower(*rep));
    text = replace_all(text, f.value, *rep, true);
    ++replaced;
  }
  if (replaced == 0) throw NotPerturbable("reason mentions no history fact");
  if (level == PerturbLevel::major && replaced < 2) {
    throw NotPerturbable("reason mentions fewer than two distinct history facts");
  }
  return text;
}

std::string perturb_order(const std::string& reason, PerturbLevel level, SplitMix64& rng) {
  auto sentences = split_sentences(reason);
  const auto n = sentences.size();
  if (n < 2) throw NotPerturbable("coherence perturbation needs at least two sentences");
  auto& last = sentences.back();
  if (last.find_last_of(".?!") != last.size() - 1) last += ".";

  const double p = level == PerturbLevel::minor ? 0.2 : 0.5;
  const auto m = static_cast<std::size_t>(std::lround(p * static_cast<double>(n)));
  const std::size_t k = std::min(n, std::max<std::size_t>(m, 2));

  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  rng.shuffle(idx);
  idx.resize(k);
  // Move sentence at idx[j+1] into slot idx[j]: a single cycle, so every
  // chosen slot changes.
  auto out = sentences;
  for (std::size_t j = 0; j < k; ++j) out[idx[j]] = sentences[idx[(j + 1) % k]];

  std::string text;
  for (std::size_t i = 0; i < n; ++i) {
    if (i) text += " ";
    text += out[i];
  }
  return text;
}

/// Title variants to look for: the title itself and, for plural titles, the
/// singular form (used only when the title itself is never mentioned).
std::vector<std::pair<std::string, bool>> title_forms(const std::string& title) {
  std::vector<std::pair<std::string, bool>> out{{title, false}};
  if (title.size() > 1 && (title.back() == 's' || title.back() == 'S')) out.push_back({title.substr(0, title.size() - 1), true});
  return out;
}

std::string singular(const std::string& title) {
  if (title.size() > 1 && (title.back() == 's' || title.back() == 'S')) return title.substr(0, title.size() - 1);
  return title;
}

std::string perturb_target(const std::string& reason, PerturbLevel level, const OccupationEntry& truth,
                           const OccupationTaxonomy& taxonomy, SplitMix64& rng) {
  auto forms = title_forms(truth.title);
  if (!find_all(reason, truth.title, true).empty()) forms.resize(1);
  bool mentioned = false;
  for (const auto& form : forms) mentioned = mentioned || !find_all(reason, form.first, true).empty();
  if (!mentioned) throw NotPerturbable("reason never mentions the truth occupation");

  const auto& ranked = taxonomy.related(truth.code).ranked;
  const auto truth_l = lower(truth.title);
  auto usable = [&](const OccupationEntry& e) {
    const auto l = lower(e.title);
    return e.code != truth.code && l.find(lower(singular(truth.title))) == std::string::npos &&
           truth_l.find(lower(singular(e.title))) == std::string::npos && !has_sentence_punct(e.title);
  };
  std::vector<const OccupationEntry*> cands;
  if (level == PerturbLevel::minor) {
    for (std::size_t r = 1; r < ranked.size() && r <= 4; ++r) {
      const auto* e = taxonomy.find(ranked[r]);
      if (e && usable(*e)) cands.push_back(e);
    }
  } else {
    const std::set<std::string> related(ranked.begin(), ranked.end());
    for (const auto& e : taxonomy.entries()) {
      if (!related.count(e.code) && usable(e)) cands.push_back(&e);
    }
  }
  if (cands.empty()) throw NotPerturbable("no replacement occupation available");
  const auto& rep = *cands[rng.below(cands.size())];

  std::string text = reason;
  for (const auto& [f, is_singular] : forms) {
    text = replace_all(text, f, is_singular ? singular(rep.title) : rep.title, true);
  }
  // Mentions glued to other words survive bounded matching; remove them too.
  text = replace_all(text, truth.title, rep.title, false);
  if (!find_all(text, truth.title, false).empty()) throw NotPerturbable("truth title survives replacement");
  return text;
}

}  // namespace

std::string perturb(const std::string& reason, const PerturbationSpec& spec, const UserHistory& history,
                    const OccupationEntry& truth, const OccupationTaxonomy& taxonomy) {
  SplitMix64 rng(spec.rng_seed);
  switch (spec.dimension) {
    case Dimension::factuality:
      return perturb_facts(reason, spec.level, history, rng);
    case Dimension::coherence:
      return perturb_order(reason, spec.level, rng);
    case Dimension::utility:
      return perturb_target(reason, spec.level, truth, taxonomy, rng);
  }
  return reason;
}

// ---------------------------------------------------------------------------
// Robustness report

std::vector<std::string> robustness_variants() {
  std::vector<std::string> out{"oracle"};
  for (auto level : {PerturbLevel::minor, PerturbLevel::major}) {
    for (auto d : kDimensions) out.push_back(to_string(d) + "-" + to_string(level));
  }
  return out;
}

std::uint64_t perturbation_seed(const std::string& user_id, const std::string& variant, std::uint64_t seed) {
  return fnv1a64(user_id + "#" + variant) ^ seed;
}

RobustnessReport judge_robustness_report(const std::vector<OracleTriplet>& sample, Gateway& gateway,
                                         const OccupationTaxonomy& taxonomy, const RobustnessConfig& config) {
  if (sample.empty()) throw InvalidArgument("robustness sample is empty");
  const auto variants = robustness_variants();
  RobustnessReport rep;
  rep.sample_size = sample.size();
  rep.items.resize(sample.size());

  std::vector<JudgeItem> items;
  std::vector<std::pair<std::size_t, std::string>> where;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const auto& t = sample[i];
    auto& item = rep.items[i];
    item.user_id = t.history.user_id;
    std::map<std::string, std::string> texts;
    try {
      for (const auto& v : variants) {
        if (v == "oracle") {
          texts[v] = t.reason;
          continue;
        }
        const auto dash = v.find('-');
        PerturbationSpec spec{dimension_from_string(v.substr(0, dash)),
                              v.substr(dash + 1) == "minor" ? PerturbLevel::minor : PerturbLevel::major,
                              perturbation_seed(t.history.user_id, v, config.perturb_seed)};
        texts[v] = perturb(t.reason, spec, t.history, t.truth, taxonomy);
      }
    } catch (const NotPerturbable& e) {
      item.excluded = e.kind();
      continue;
    } catch (const UnknownTruthCode& e) {
      item.excluded = e.kind();
      continue;
    }
    item.perturbed_text = texts;
    for (const auto& v : variants) {
      items.push_back({&t.history, texts[v], t.truth,
                       {{"stage", "judge-robustness"}, {"item", std::to_string(i)}, {"variant", v}}});
      where.emplace_back(i, v);
    }
  }
  const auto outcomes = score_reasons(items, gateway, config.judge);
  for (std::size_t k = 0; k < outcomes.size(); ++k) {
    auto& item = rep.items[where[k].first];
    item.replies[where[k].second] = outcomes[k].replies;
    if (outcomes[k].scores) {
      item.scores[where[k].second] = *outcomes[k].scores;
    } else if (!item.excluded) {
      item.excluded = outcomes[k].error ? outcomes[k].error->kind : "JudgeError";
    }
  }

  std::map<std::string, std::array<double, 3>> sums;
  for (const auto& item : rep.items) {
    if (item.excluded) {
      if (item.perturbed_text.empty()) {
        ++rep.excluded_not_perturbable;
      } else {
        ++rep.excluded_judge_error;
      }
      continue;
    }
    ++rep.included;
    for (const auto& v : variants) {
      const auto& s = item.scores.at(v);
      auto& acc = sums[v];
      acc[0] += s.fact;
      acc[1] += s.cohr;
      acc[2] += s.util;
    }
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const double n = static_cast<double>(rep.included);
  for (const auto& v : variants) {
    if (rep.included == 0) {
      rep.cross[v] = {nan, nan, nan};
    } else {
      const auto& acc = sums[v];
      rep.cross[v] = {acc[0] / n, acc[1] / n, acc[2] / n};
    }
  }
  rep.oracle = rep.cross["oracle"];
  auto targeted = [&](PerturbLevel level) {
    const auto suffix = "-" + to_string(level);
    return MeanScores{rep.cross[to_string(Dimension::factuality) + suffix].fact,
                      rep.cross[to_string(Dimension::coherence) + suffix].cohr,
                      rep.cross[to_string(Dimension::utility) + suffix].util};
  };
  auto families = [&](PerturbLevel level) {
    MeanScores m;
    const auto suffix = "-" + to_string(level);
    for (auto d : kDimensions) {
      const auto& c = rep.cross[to_string(d) + suffix];
      m.fact += c.fact / 3.0;
      m.cohr += c.cohr / 3.0;
      m.util += c.util / 3.0;
    }
    return m;
  };
  rep.minor = targeted(PerturbLevel::minor);
  rep.major = targeted(PerturbLevel::major);
  rep.minor_all_families = families(PerturbLevel::minor);
  rep.major_all_families = families(PerturbLevel::major);
  return rep;
}

namespace {

Json number_or_null(double v) { return std::isnan(v) ? Json(nullptr) : Json(v); }

std::string cell(double v) {
  if (std::isnan(v)) return "   n/a";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%6.2f", v);
  return buf;
}

std::string row(const std::string& label, const MeanScores& m, std::size_t width) {
  std::string out = label;
  out.resize(width, ' ');
  return out + cell(m.fact) + " " + cell(m.cohr) + " " + cell(m.util) + "\n";
}

}  // namespace

void to_json(Json& j, const MeanScores& m) {
  j = Json{{"fact", number_or_null(m.fact)}, {"cohr", number_or_null(m.cohr)}, {"util", number_or_null(m.util)}};
}

Json RobustnessReport::to_json() const {
  Json j;
  j["sample_size"] = sample_size;
  j["included"] = included;
  j["excluded_not_perturbable"] = excluded_not_perturbable;
  j["excluded_judge_error"] = excluded_judge_error;
  j["targeted"] = Json{{"oracle", oracle}, {"minor", minor}, {"major", major}};
  j["all_families"] = Json{{"oracle", oracle}, {"minor", minor_all_families}, {"major", major_all_families}};
  Json cross_j = Json::object();
  for (const auto& v : robustness_variants()) cross_j[v] = cross.at(v);
  j["cross"] = std::move(cross_j);
  Json items_j = Json::array();
  for (const auto& it : items) {
    Json ij;
    ij["user_id"] = it.user_id;
    ij["excluded"] = it.excluded ? Json(*it.excluded) : Json(nullptr);
    Json sj = Json::object();
    for (const auto& v : robustness_variants()) {
      if (auto f = it.scores.find(v); f != it.scores.end()) sj[v] = f->second;
    }
    ij["scores"] = std::move(sj);
    items_j.push_back(std::move(ij));
  }
  j["items"] = std::move(items_j);
  return j;
}

std::string RobustnessReport::to_text() const {
  constexpr std::size_t w = 10;
  std::string out;
  out += "Judge robustness: " + std::to_string(included) + " of " + std::to_string(sample_size) +
         " items included (" + std::to_string(excluded_not_perturbable) + " not perturbable, " +
         std::to_string(excluded_judge_error) + " judge errors)\n\n";
  out += "Targeted dimension\n";
  out += std::string(w, ' ') + "  Fact   Cohr   Util\n";
  out += row("Oracle", oracle, w);
  out += row("Minor", minor, w);
  out += row("Major", major, w);
  out += "\nAll perturbation families\n";
  out += std::string(w, ' ') + "  Fact   Cohr   Util\n";
  out += row("Oracle", oracle, w);
  out += row("Minor", minor_all_families, w);
  out += row("Major", major_all_families, w);
  out += "\nCross matrix (variant x scored dimension)\n";
  constexpr std::size_t cw = 20;
  out += std::string(cw, ' ') + "  Fact   Cohr   Util\n";
  for (const auto& v : robustness_variants()) out += row(v, cross.at(v), cw);
  return out;
}

// ---------------------------------------------------------------------------
// JSON

void to_json(Json& j, const RationalityScores& s) {
  j = Json{{"fact", s.fact}, {"cohr", s.cohr}, {"util", s.util}};
  j["justifications"] = Json{{"fact", s.justifications[0]}, {"cohr", s.justifications[1]},
                             {"util", s.justifications[2]}};
  Json c = Json::array();
  for (auto d : s.clamped) c.push_back(to_string(d));
  j["clamped"] = std::move(c);
}

void from_json(const Json& j, RationalityScores& s) {
  s.fact = j.at("fact").get<double>();
  s.cohr = j.at("cohr").get<double>();
  s.util = j.at("util").get<double>();
  if (auto it = j.find("justifications"); it != j.end()) {
    s.justifications = {it->value("fact", std::string()), it->value("cohr", std::string()),
                        it->value("util", std::string())};
  }
  s.clamped.clear();
  if (auto it = j.find("clamped"); it != j.end()) {
    for (const auto& d : *it) s.clamped.push_back(dimension_from_string(d.get<std::string>()));
  }
}

void to_json(Json& j, const JudgeStats& s) {
  j = Json{{"tau", s.tau},
           {"items_in", s.items_in},
           {"retained", s.retained},
           {"below_threshold", s.below_threshold},
           {"judge_errors", s.judge_errors},
           {"clamped_items", s.clamped_items}};
  Json dims = Json::object();
  for (auto d : kDimensions) {
    const auto& x = s.per_dimension[static_cast<std::size_t>(d)];
    dims[to_string(d)] = Json{{"n", x.n}, {"mean", x.mean}, {"min", x.min}, {"max", x.max},
                              {"histogram", x.histogram}};
  }
  j["per_dimension"] = std::move(dims);
}

void to_json(Json& j, const ScoredItem& s) {
  j = Json{{"user_id", s.user_id}};
  j["scores"] = s.scores ? Json(*s.scores) : Json(nullptr);
  j["error"] = s.error ? Json{{"kind", s.error->kind}, {"message", s.error->message}} : Json(nullptr);
  j["passed"] = s.passed;
  j["replies"] = s.replies;
}

}  // namespace occupred
