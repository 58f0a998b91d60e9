#include "occupred/pipeline.hpp"

#include <functional>

#include "occupred/dataset.hpp"
#include "occupred/digest.hpp"
#include "occupred/eval.hpp"
#include "occupred/history.hpp"
#include "occupred/inference.hpp"
#include "occupred/judge.hpp"
#include "occupred/oracle_forge.hpp"
#include "occupred/rng.hpp"
#include "occupred/scenarios.hpp"
#include "occupred/taxonomy.hpp"

#ifndef OCCUPRED_VERSION
#define OCCUPRED_VERSION "0.0.0"
#endif

namespace occupred {

namespace fs = std::filesystem;

const std::vector<std::string>& stage_names() {
  static const std::vector<std::string> names = {"synth",     "ingest",   "forge",   "judge-filter",
                                                 "judge-robustness", "emit-sft", "emit-dpo", "predict",
                                                 "evaluate",  "report"};
  return names;
}

std::string tool_version() { return "occupred " OCCUPRED_VERSION; }

Json Manifest::to_json() const {
  Json j;
  j["stage"] = stage;
  j["tool_version"] = tool_version;
  j["config_digest"] = config_digest;
  j["inputs"] = Json::object();
  for (const auto& [k, v] : inputs) j["inputs"][k] = v;
  j["outputs"] = Json::object();
  for (const auto& [k, v] : outputs) j["outputs"][k] = v;
  return j;
}

Manifest Manifest::from_json(const Json& j) {
  Manifest m;
  m.stage = j.at("stage").get<std::string>();
  m.tool_version = j.at("tool_version").get<std::string>();
  m.config_digest = j.at("config_digest").get<std::string>();
  for (auto it = j.at("inputs").begin(); it != j.at("inputs").end(); ++it) m.inputs[it.key()] = it.value().get<std::string>();
  for (auto it = j.at("outputs").begin(); it != j.at("outputs").end(); ++it) m.outputs[it.key()] = it.value().get<std::string>();
  return m;
}

namespace {

constexpr const char* kManifest = "manifest.json";

/// Per-stage scratch: records verified inputs and buffers outputs.
class StageContext {
 public:
  struct ProbeDone {};

  StageContext(fs::path run_dir, std::string stage, bool probe)
      : run_(std::move(run_dir)), stage_(std::move(stage)), probe_(probe) {}

  /// Marks the end of input gathering; a probe stops here.
  void ready() const {
    if (probe_) throw ProbeDone{};
  }

  /// Verified path of a predecessor artifact. Throws MissingStage or DigestMismatch.
  fs::path need(const std::string& stage, const std::string& file) {
    const auto m = manifest_of(stage);
    if (!m) throw MissingStage(stage);
    return verify(stage, file, *m);
  }

  /// Like need(), but absent stages yield nullopt.
  std::optional<fs::path> maybe(const std::string& stage, const std::string& file) {
    const auto m = manifest_of(stage);
    if (!m || !m->outputs.count(file)) return std::nullopt;
    return verify(stage, file, *m);
  }

  /// Output names recorded by a predecessor. Throws MissingStage.
  std::vector<std::string> outputs_of(const std::string& stage) {
    const auto m = manifest_of(stage);
    if (!m) throw MissingStage(stage);
    std::vector<std::string> out;
    for (const auto& [k, v] : m->outputs) out.push_back(k);
    return out;
  }

  void external(const std::string& label, const fs::path& path) {
    if (!fs::exists(path)) throw IoError("input file not found: " + path.string());
    inputs_[label] = sha256_file(path);
  }

  void note_input(const std::string& label, const std::string& digest) { inputs_[label] = digest; }

  void write(const std::string& file, std::string contents) { outputs_[file] = std::move(contents); }

  const std::map<std::string, std::string>& inputs() const { return inputs_; }
  const std::map<std::string, std::string>& outputs() const { return outputs_; }

  std::optional<Manifest> manifest_of(const std::string& stage) const {
    const auto p = run_ / stage / kManifest;
    if (!fs::exists(p)) return std::nullopt;
    try {
      return Manifest::from_json(Json::parse(read_file(p)));
    } catch (const nlohmann::json::exception& e) {
      throw DigestMismatch("manifest of stage '" + stage + "' is unreadable: " + e.what());
    }
  }

 private:
  fs::path verify(const std::string& stage, const std::string& file, const Manifest& m) {
    auto it = m.outputs.find(file);
    if (it == m.outputs.end()) throw MissingStage(stage);
    const auto path = run_ / stage / file;
    if (!fs::exists(path)) throw DigestMismatch(stage + "/" + file + " is missing");
    const auto digest = sha256_file(path);
    if (digest != it->second) {
      throw DigestMismatch(stage + "/" + file + " does not match its manifest digest; re-run '" + stage + "' with --force");
    }
    inputs_[stage + "/" + file] = digest;
    return path;
  }

  fs::path run_;
  std::string stage_;
  bool probe_;
  std::map<std::string, std::string> inputs_;
  std::map<std::string, std::string> outputs_;
};

struct TaxonomyFiles {
  fs::path occupations;
  fs::path related;
  OccupationTaxonomy load() const { return load_taxonomy(occupations, related); }
};

TaxonomyFiles taxonomy_from(StageContext& ctx, const std::string& stage) {
  return {ctx.need(stage, "occupations.tsv"), ctx.need(stage, "related.tsv")};
}

std::string dump(const Json& j) { return j.dump(2) + "\n"; }

EndpointConfig endpoint_config(const std::string& id, const EndpointSettings& e) {
  EndpointConfig c;
  c.id = id;
  c.base_url = e.base_url;
  c.model = e.model;
  c.api_key_env = e.api_key_env;
  c.max_in_flight = e.max_in_flight;
  c.retry.max_attempts = e.max_attempts;
  c.timeout = std::chrono::milliseconds(e.timeout_ms);
  return c;
}

}  // namespace

struct Pipeline::Impl {
  RunConfig config;
  RunOptions options;
  fs::path run;
  std::shared_ptr<ChatBackend> backend;
  std::unique_ptr<Gateway> gateway;
  std::string playbook_digest;

  bool mock() const { return options.mock_playbook.has_value(); }

  /// Settings for one endpoint role. Live runs require the endpoint to be
  /// configured; mock runs fall back to defaults.
  CallSettings settings(const std::string& id, double default_temperature, int default_max_tokens) const {
    CallSettings s;
    s.endpoint_id = id;
    s.temperature = default_temperature;
    s.max_tokens = default_max_tokens;
    s.max_in_flight = config.max_in_flight;
    const EndpointSettings* e = nullptr;
    if (mock()) {
      if (auto it = config.endpoints.find(id); it != config.endpoints.end()) e = &it->second;
    } else {
      e = &config.endpoint(id);
    }
    if (e) {
      s.model = e->model;
      if (e->temperature) s.temperature = *e->temperature;
      s.max_tokens = e->max_tokens;
      s.sampling_seed = e->sampling_seed;
      s.max_in_flight = e->max_in_flight;
    }
    return s;
  }

  /// Gateway for stages that call models; records the playbook as an input.
  Gateway& gw(StageContext& ctx, const std::vector<std::string>& endpoint_ids) {
    if (mock()) {
      ctx.external("mock-playbook", *options.mock_playbook);
    } else {
      for (const auto& id : endpoint_ids) config.endpoint(id);
    }
    if (gateway) return *gateway;
    GatewayOptions go;
    if (mock()) {
      playbook_digest = sha256_file(*options.mock_playbook);
      backend = std::make_shared<ScriptedMock>(Playbook::load(*options.mock_playbook));
      go.cache_dir = run / "cache" / ("mock-" + playbook_digest.substr(0, 16));
      go.sleeper = [](std::chrono::milliseconds) {};
    } else {
      std::vector<EndpointConfig> eps;
      for (const auto& [id, e] : config.endpoints) {
        eps.push_back(endpoint_config(id, e));
        go.endpoint_retry[id].max_attempts = e.max_attempts;
      }
      backend = std::make_shared<HttpBackend>(std::move(eps));
      go.cache_dir = run / "cache" / "live";
    }
    gateway = std::make_unique<Gateway>(backend, go);
    return *gateway;
  }

  PromptSet prompts() const {
    auto p = PromptSet::defaults();
    p.history_template = config.history_template;
    return p;
  }

  JudgeConfig judge_config() const { return JudgeConfig{settings("judge", 0.0, 512), prompts()}; }

  // -------------------------------------------------------------------------
  // Stages

  void synth(StageContext& ctx) {
    ctx.ready();
    const auto tax = fixture_taxonomy();
    SynthConfig sc;
    sc.inject_noise = config.synth_noise;
    const auto raw = synthesize_fixtures(config.seeds.synth, config.synth_users, tax, sc);
    MockScenario scenario;
    scenario.seed = config.seeds.scenario;
    scenario.n_attempts = config.n_attempts;
    scenario.p_correct_attempt = config.p_correct_attempt;
    scenario.p_judge_reject = config.p_judge_reject;
    scenario.p_predict_correct = config.p_predict_correct;
    scenario.robustness_items = config.robustness_items;
    const auto playbook = scenario_playbook(preprocess_corpus(raw).corpus, tax, scenario);
    ctx.write("users.jsonl", to_jsonl(raw));
    ctx.write("occupations.tsv", format_occupations_tsv(tax));
    ctx.write("related.tsv", format_related_tsv(tax));
    ctx.write("playbook.json", dump(playbook.to_json()));
  }

  void ingest(StageContext& ctx) {
    fs::path corpus_p, occ_p, rel_p;
    if (config.corpus_path || config.occupations_path || config.related_path) {
      if (!config.corpus_path || !config.occupations_path || !config.related_path) {
        throw ConfigError("paths.corpus, paths.occupations and paths.related must be given together");
      }
      corpus_p = *config.corpus_path;
      occ_p = *config.occupations_path;
      rel_p = *config.related_path;
      ctx.external("paths.corpus", corpus_p);
      ctx.external("paths.occupations", occ_p);
      ctx.external("paths.related", rel_p);
    } else {
      corpus_p = ctx.need("synth", "users.jsonl");
      occ_p = ctx.need("synth", "occupations.tsv");
      rel_p = ctx.need("synth", "related.tsv");
    }
    ctx.ready();
    const auto tax = load_taxonomy(occ_p, rel_p);
    const auto raw = read_jsonl<UserHistory>(corpus_p);

    std::vector<UserHistory> valid;
    Json rejected = Json::array();
    for (const auto& u : raw) {
      const auto report = validate_history(u);
      if (report.violations.empty()) {
        valid.push_back(u);
      } else {
        rejected.push_back(Json{{"user_id", u.user_id}, {"violations", report.violations}});
      }
    }
    const auto pre = preprocess_corpus(valid);
    std::vector<UserHistory> train, test;
    for (const auto& u : pre.corpus) {
      (keyed_rng(u.user_id, config.seeds.split).unit() < config.test_fraction ? test : train).push_back(u);
    }
    Json stats;
    stats["users_read"] = raw.size();
    stats["users_rejected_invalid"] = rejected.size();
    stats["rejected"] = rejected;
    stats["preprocess"] = pre.stats;
    stats["train_users"] = train.size();
    stats["test_users"] = test.size();
    stats["split_seed"] = config.seeds.split;
    stats["test_fraction"] = config.test_fraction;
    ctx.write("train.jsonl", to_jsonl(train));
    ctx.write("test.jsonl", to_jsonl(test));
    ctx.write("occupations.tsv", format_occupations_tsv(tax));
    ctx.write("related.tsv", format_related_tsv(tax));
    ctx.write("stats.json", dump(stats));
  }

  void forge(StageContext& ctx) {
    const auto train_p = ctx.need("ingest", "train.jsonl");
    const auto test_p = ctx.need("ingest", "test.jsonl");
    const auto tax_f = taxonomy_from(ctx, "ingest");
    auto& g = gw(ctx, {"generator"});
    ctx.ready();
    const auto train = read_jsonl<UserHistory>(train_p);
    const auto test = read_jsonl<UserHistory>(test_p);
    const auto tax = tax_f.load();
    ForgeConfig fc;
    fc.call = settings("generator", 0.8, 1024);
    fc.n_attempts = config.n_attempts;
    fc.rng_seed = config.seeds.sampling;
    fc.prompts = prompts();
    const auto pool = build_training_pool(train, g, tax, fc);
    const auto test_pool = build_training_pool(test, g, tax, fc);

    std::vector<PoolRecord> records, test_records;
    for (const auto& t : pool.triplets) records.push_back(to_record(t));
    for (const auto& t : test_pool.triplets) test_records.push_back(to_record(t));
    auto invalid = [](const TrainingPool& p) {
      Json a = Json::array();
      for (const auto& [u, why] : p.invalid_users) a.push_back(Json{{"user_id", u}, {"reason", why}});
      return a;
    };
    Json stats;
    stats["train"] = pool.stats;
    stats["train_invalid_users"] = invalid(pool);
    stats["test"] = test_pool.stats;
    stats["test_invalid_users"] = invalid(test_pool);
    stats["sampling_seed"] = config.seeds.sampling;
    ctx.write("pool.jsonl", to_jsonl(records));
    ctx.write("attempts.jsonl", to_jsonl(pool.attempts));
    ctx.write("test_oracle.jsonl", to_jsonl(test_records));
    ctx.write("stats.json", dump(stats));
  }

  struct PoolFiles {
    fs::path records;
    fs::path train;
    std::vector<OracleTriplet> load() const {
      return attach_histories(read_jsonl<PoolRecord>(records), read_jsonl<UserHistory>(train));
    }
  };

  PoolFiles train_pool(StageContext& ctx, const std::string& stage, const std::string& file) {
    return {ctx.need(stage, file), ctx.need("ingest", "train.jsonl")};
  }

  void judge_filter(StageContext& ctx) {
    const auto pool_f = train_pool(ctx, "forge", "pool.jsonl");
    auto& g = gw(ctx, {"judge"});
    ctx.ready();
    const auto pool = pool_f.load();
    const auto res = filter_pool(pool, g, config.tau, judge_config());
    std::vector<PoolRecord> kept;
    for (const auto& t : res.retained) kept.push_back(to_record(t));
    std::string scores;
    for (const auto& it : res.items) {
      Json j = it;
      scores += j.dump() + "\n";
    }
    ctx.write("filtered.jsonl", to_jsonl(kept));
    ctx.write("scores.jsonl", scores);
    Json stats = res.stats;
    ctx.write("stats.json", dump(stats));
  }

  void judge_robustness(StageContext& ctx) {
    const auto pool_f = train_pool(ctx, "forge", "pool.jsonl");
    const auto tax_f = taxonomy_from(ctx, "ingest");
    auto& g = gw(ctx, {"judge"});
    ctx.ready();
    auto pool = pool_f.load();
    const auto tax = tax_f.load();
    if (pool.size() > config.robustness_items) pool.resize(config.robustness_items);
    RobustnessConfig rc;
    rc.perturb_seed = config.seeds.perturbation;
    rc.judge = judge_config();
    const auto report = judge_robustness_report(pool, g, tax, rc);
    std::string transcript;
    for (std::size_t i = 0; i < report.items.size(); ++i) {
      const auto& it = report.items[i];
      for (const auto& v : robustness_variants()) {
        Json row{{"item", i}, {"user_id", it.user_id}, {"variant", v}};
        if (auto t = it.perturbed_text.find(v); t != it.perturbed_text.end()) row["text"] = t->second;
        if (auto r = it.replies.find(v); r != it.replies.end()) row["replies"] = r->second;
        if (auto s = it.scores.find(v); s != it.scores.end()) row["scores"] = s->second;
        if (it.excluded) row["excluded"] = *it.excluded;
        transcript += row.dump() + "\n";
      }
    }
    ctx.write("report.json", dump(report.to_json()));
    ctx.write("report.txt", report.to_text());
    ctx.write("transcript.jsonl", transcript);
  }

  DatasetMetadata metadata(const std::string& kind, const std::string& variant, std::size_t records) const {
    DatasetMetadata m;
    m.kind = kind;
    m.variant = variant;
    if (kind == "dpo") m.pairing_policy = config.pairing_policy;
    m.forge_seed = config.seeds.sampling;
    m.pairing_seed = config.seeds.pairing;
    m.tau = config.tau;
    m.n_attempts = config.n_attempts;
    m.records = records;
    const auto p = prompts();
    m.prompt_version = p.version;
    m.prompt_digest = p.digest();
    return m;
  }

  void emit_sft_stage(StageContext& ctx) {
    const auto pool_f = train_pool(ctx, "judge-filter", "filtered.jsonl");
    ctx.ready();
    const auto pool = pool_f.load();
    const auto variant = sft_variant_from_string(config.sft_variant);
    const auto rows = emit_sft(pool, variant, prompts());
    ctx.write("sft.jsonl", to_jsonl(rows));
    ctx.write("metadata.json", dump(metadata("sft", to_string(variant), rows.size()).to_json()));
  }

  void emit_dpo_stage(StageContext& ctx) {
    const auto pool_f = train_pool(ctx, "judge-filter", "filtered.jsonl");
    const auto attempts_p = ctx.need("forge", "attempts.jsonl");
    ctx.ready();
    const auto pool = pool_f.load();
    const auto attempts = read_jsonl<UserAttempts>(attempts_p);
    const auto variant = dpo_variant_from_string(config.dpo_variant);
    const auto res = emit_dpo(attempts, pool, variant, pairing_policy_from_string(config.pairing_policy),
                              config.seeds.pairing, prompts());
    ctx.write("dpo.jsonl", to_jsonl(res.pairs));
    ctx.write("metadata.json", dump(metadata("dpo", to_string(variant), res.pairs.size()).to_json()));
    Json stats = res.stats;
    ctx.write("stats.json", dump(stats));
  }

  InferenceConfig inference_config() const {
    InferenceConfig ic;
    ic.prompts = prompts();
    for (const auto& m : config.predict_modes) {
      if (predict_mode_from_string(m) == PredictMode::joint) {
        ic.joint = settings("joint", 0.0, 1024);
      } else {
        ic.reasoner = settings("reasoner", 0.0, 1024);
        ic.predictor = settings("predictor", 0.0, 256);
      }
    }
    return ic;
  }

  void predict(StageContext& ctx) {
    const auto test_p = ctx.need("ingest", "test.jsonl");
    const auto tax_f = taxonomy_from(ctx, "ingest");
    std::vector<std::string> ids;
    for (const auto& m : config.predict_modes) {
      if (predict_mode_from_string(m) == PredictMode::joint) {
        ids.push_back("joint");
      } else {
        ids.push_back("reasoner");
        ids.push_back("predictor");
      }
    }
    auto& g = gw(ctx, ids);
    ctx.ready();
    const auto test = read_jsonl<UserHistory>(test_p);
    const auto tax = tax_f.load();
    const auto ic = inference_config();
    for (const auto& m : config.predict_modes) {
      const auto mode = predict_mode_from_string(m);
      const auto res = batch_predict(test, mode, g, tax, ic);
      ctx.write("predictions_" + to_string(mode) + ".jsonl", to_jsonl(res.records));
      ctx.write("failures_" + to_string(mode) + ".jsonl", to_jsonl(res.failures));
    }
  }

  void evaluate(StageContext& ctx) {
    std::vector<std::string> modes;
    for (const auto& f : ctx.outputs_of("predict")) {
      const std::string prefix = "predictions_";
      if (f.rfind(prefix, 0) == 0) modes.push_back(f.substr(prefix.size(), f.size() - prefix.size() - 6));
    }
    std::sort(modes.begin(), modes.end(), [](const std::string& a, const std::string& b) {
      return (a == "two_model") > (b == "two_model") || ((a == "two_model") == (b == "two_model") && a < b);
    });
    std::map<std::string, std::pair<fs::path, fs::path>> files;
    for (const auto& m : modes) {
      files[m] = {ctx.need("predict", "predictions_" + m + ".jsonl"), ctx.need("predict", "failures_" + m + ".jsonl")};
    }
    const auto tax_f = taxonomy_from(ctx, "ingest");
    std::optional<fs::path> oracle_p, test_p;
    Gateway* g = nullptr;
    if (config.evaluate_reasons) {
      oracle_p = ctx.need("forge", "test_oracle.jsonl");
      test_p = ctx.need("ingest", "test.jsonl");
      g = &gw(ctx, {"judge"});
    }
    ctx.ready();
    const auto tax = tax_f.load();

    std::vector<ModelEvaluation> models;
    std::map<std::string, std::vector<PredictionRecord>> raw_records;
    for (const auto& m : modes) {
      auto recs = read_jsonl<PredictionRecord>(files[m].first);
      const auto fails = read_jsonl<PredictionFailure>(files[m].second);
      raw_records[m] = recs;
      const auto scored = with_failures_as_wrong(std::move(recs), fails);
      ModelEvaluation ev;
      ev.label = m;
      ev.metrics = score_predictions(scored, tax);
      ev.failures = fails.size();
      models.push_back(std::move(ev));
    }

    std::vector<ReasonQualityRow> quality;
    if (config.evaluate_reasons) {
      const auto oracle_records = read_jsonl<PoolRecord>(*oracle_p);
      const auto test = read_jsonl<UserHistory>(*test_p);
      std::map<std::string, std::string> oracle;
      for (const auto& r : oracle_records) oracle[r.user_id] = r.reason;
      std::map<std::string, TaskInstance> tasks;
      for (const auto& u : test) {
        try {
          tasks.emplace(u.user_id, split_instance(u));
        } catch (const Error&) {
        }
      }
      for (const auto& m : modes) {
        std::vector<JudgeItem> items;
        std::vector<std::string> generated, reference;
        for (const auto& r : raw_records[m]) {
          auto o = oracle.find(r.user_id);
          auto t = tasks.find(r.user_id);
          const auto* truth = tax.find(r.truth.code);
          if (o == oracle.end() || t == tasks.end() || !truth || r.reason.empty()) continue;
          items.push_back({&t->second.history, r.reason, *truth, {{"stage", "judge-eval"}, {"mode", m}, {"user_id", r.user_id}}});
          generated.push_back(r.reason);
          reference.push_back(o->second);
        }
        if (items.empty()) continue;
        const auto outcomes = score_reasons(items, *g, judge_config());
        std::vector<std::string> gen_ok, ref_ok;
        std::vector<RationalityScores> scores;
        for (std::size_t i = 0; i < outcomes.size(); ++i) {
          if (!outcomes[i].scores) continue;
          gen_ok.push_back(generated[i]);
          ref_ok.push_back(reference[i]);
          scores.push_back(*outcomes[i].scores);
        }
        if (!scores.empty()) quality.push_back(reason_quality_report(gen_ok, ref_ok, scores, m));
      }
    }

    const auto sig = pairwise_significance(models);
    ctx.write("metrics.json", dump(metrics_json(models, quality)));
    ctx.write("metrics.txt", metrics_text(models, quality));
    ctx.write("significance.json", dump(significance_json(sig)));
  }

  void report(StageContext& ctx) {
    const auto metrics_p = ctx.need("evaluate", "metrics.json");
    const auto significance_p = ctx.need("evaluate", "significance.json");
    const auto metrics_txt = ctx.need("evaluate", "metrics.txt");
    std::map<std::string, std::optional<fs::path>> extra;
    for (const auto& [stage, file] : std::vector<std::pair<std::string, std::string>>{
             {"ingest", "stats.json"},
             {"forge", "stats.json"},
             {"judge-filter", "stats.json"},
             {"judge-robustness", "report.json"},
             {"judge-robustness", "report.txt"},
             {"emit-sft", "metadata.json"},
             {"emit-dpo", "metadata.json"}}) {
      extra[stage + "/" + file] = ctx.maybe(stage, file);
    }
    ctx.ready();
    const auto metrics = Json::parse(read_file(metrics_p));
    const auto significance = Json::parse(read_file(significance_p));
    auto optional_json = [&](const std::string& stage, const std::string& file) -> Json {
      const auto& p = extra.at(stage + "/" + file);
      return p ? Json::parse(read_file(*p)) : Json(nullptr);
    };
    Json j;
    j["tool_version"] = tool_version();
    j["ingest"] = optional_json("ingest", "stats.json");
    j["forge"] = optional_json("forge", "stats.json");
    j["judge_filter"] = optional_json("judge-filter", "stats.json");
    const auto robustness = optional_json("judge-robustness", "report.json");
    if (!robustness.is_null()) {
      j["judge_robustness"] = Json{{"targeted", robustness["targeted"]}, {"all_families", robustness["all_families"]},
                                   {"included", robustness["included"]}, {"sample_size", robustness["sample_size"]}};
    } else {
      j["judge_robustness"] = nullptr;
    }
    j["sft"] = optional_json("emit-sft", "metadata.json");
    j["dpo"] = optional_json("emit-dpo", "metadata.json");
    j["metrics"] = metrics;
    j["significance"] = significance;

    std::string text = "Run report (" + tool_version() + ")\n\n";
    if (!j["forge"].is_null()) {
      const auto& f = j["forge"]["train"];
      text += "Oracle pool: " + f["users_retained"].dump() + " of " + f["users_total"].dump() + " training users kept\n";
    }
    if (!j["judge_filter"].is_null()) {
      text += "Judge filter: " + j["judge_filter"]["retained"].dump() + " of " + j["judge_filter"]["items_in"].dump() +
              " triplets pass\n";
    }
    if (!j["sft"].is_null()) text += "SFT records: " + j["sft"]["records"].dump() + "\n";
    if (!j["dpo"].is_null()) text += "DPO pairs: " + j["dpo"]["records"].dump() + "\n";
    if (const auto& p = extra.at("judge-robustness/report.txt")) text += "\n" + read_file(*p);
    text += "\n" + read_file(metrics_txt);
    text += "\nPairwise McNemar\n";
    for (const auto& c : significance["comparisons"]) {
      char buf[256];
      std::snprintf(buf, sizeof buf, "%-12s vs %-12s b=%-4s c=%-4s p=%.4g alpha=%.4g %s\n",
                    c["model_a"].get<std::string>().c_str(), c["model_b"].get<std::string>().c_str(),
                    c["b"].dump().c_str(), c["c"].dump().c_str(), c["p_value"].get<double>(),
                    c["corrected_alpha"].get<double>(), c["significant"].get<bool>() ? "significant" : "not significant");
      text += buf;
    }
    ctx.write("report.json", dump(j));
    ctx.write("report.txt", text);
  }

  void dispatch(const std::string& stage, StageContext& ctx) {
    static const std::map<std::string, void (Impl::*)(StageContext&)> table = {
        {"synth", &Impl::synth},
        {"ingest", &Impl::ingest},
        {"forge", &Impl::forge},
        {"judge-filter", &Impl::judge_filter},
        {"judge-robustness", &Impl::judge_robustness},
        {"emit-sft", &Impl::emit_sft_stage},
        {"emit-dpo", &Impl::emit_dpo_stage},
        {"predict", &Impl::predict},
        {"evaluate", &Impl::evaluate},
        {"report", &Impl::report}};
    auto it = table.find(stage);
    if (it == table.end()) throw InvalidArgument("unknown stage '" + stage + "'");
    (this->*(it->second))(ctx);
  }
};

Pipeline::Pipeline(RunConfig config, RunOptions options) : impl_(std::make_unique<Impl>()) {
  config.validate();
  if (options.run_id.empty() || options.run_id.find('/') != std::string::npos || options.run_id == "." ||
      options.run_id == "..") {
    throw ConfigError("run id must be a plain directory name");
  }
  if (options.mock_playbook && !fs::exists(*options.mock_playbook)) {
    throw ConfigError("mock playbook not found: " + options.mock_playbook->string());
  }
  impl_->config = std::move(config);
  impl_->options = std::move(options);
  impl_->run = impl_->config.runs_dir / impl_->options.run_id;
}

Pipeline::~Pipeline() = default;

fs::path Pipeline::run_dir() const { return impl_->run; }
fs::path Pipeline::stage_dir(const std::string& stage) const { return impl_->run / stage; }

StageOutcome Pipeline::run(const std::string& stage) {
  const auto& names = stage_names();
  if (std::find(names.begin(), names.end(), stage) == names.end()) throw InvalidArgument("unknown stage '" + stage + "'");

  const auto dir = stage_dir(stage);
  const auto config_digest = impl_->config.digest();
  StageOutcome out;
  out.stage = stage;
  out.dir = dir;

  // Probe: gather and verify inputs only, then compare with the manifest.
  StageContext probe(impl_->run, stage, true);
  const auto previous = probe.manifest_of(stage);
  try {
    impl_->dispatch(stage, probe);
  } catch (const StageContext::ProbeDone&) {
  }

  if (previous && !impl_->options.force && previous->config_digest == config_digest &&
      previous->tool_version == tool_version() && previous->inputs == probe.inputs()) {
    bool current = true;
    for (const auto& [file, digest] : previous->outputs) {
      const auto p = dir / file;
      if (!fs::exists(p) || sha256_file(p) != digest) {
        current = false;
        break;
      }
    }
    if (current) {
      out.skipped = true;
      for (const auto& [file, digest] : previous->outputs) out.outputs.push_back(file);
      return out;
    }
  }

  StageContext ctx(impl_->run, stage, false);
  const auto before = impl_->gateway ? impl_->gateway->counters() : GatewayCounters{};
  impl_->dispatch(stage, ctx);

  fs::create_directories(dir);
  fs::remove(dir / kManifest);
  Manifest m;
  m.stage = stage;
  m.tool_version = tool_version();
  m.config_digest = config_digest;
  m.inputs = ctx.inputs();
  for (const auto& [file, contents] : ctx.outputs()) {
    write_file_atomic(dir / file, contents);
    m.outputs[file] = sha256_hex(contents);
    out.outputs.push_back(file);
  }
  write_file_atomic(dir / kManifest, dump(m.to_json()));
  if (impl_->gateway) {
    const auto after = impl_->gateway->counters();
    out.calls.cache_hits = after.cache_hits - before.cache_hits;
    out.calls.cache_misses = after.cache_misses - before.cache_misses;
    out.calls.backend_calls = after.backend_calls - before.backend_calls;
    out.calls.retries = after.retries - before.retries;
  }
  return out;
}

}  // namespace occupred
