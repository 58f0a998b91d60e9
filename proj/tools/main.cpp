// occupred: staged pipeline for reason-augmented next-occupation prediction.

#include <CLI11.hpp>
#include <iostream>

#include "occupred/pipeline.hpp"

using namespace occupred;

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 2;
constexpr int kStageFailure = 3;
constexpr int kMissingPredecessor = 4;

struct Flags {
  std::string config;
  std::string run_id = "default";
  std::string runs_dir;
  std::string mock;
  std::vector<std::string> seeds;
  bool force = false;
};

int fail(int code, const std::string& kind, const std::string& message, const std::string& stage = "",
         const std::string& required = "") {
  Json j{{"error", kind}, {"message", message}, {"exit_code", code}};
  if (!stage.empty()) j["stage"] = stage;
  if (!required.empty()) j["required_stage"] = required;
  std::cerr << j.dump() << "\n";
  return code;
}

int run_stage(const std::string& stage, const Flags& f) {
  try {
    RunConfig cfg = f.config.empty() ? RunConfig{} : RunConfig::load(f.config);
    for (const auto& s : f.seeds) cfg.apply_seed_override(s);
    if (!f.runs_dir.empty()) cfg.runs_dir = f.runs_dir;
    RunOptions opt;
    opt.run_id = f.run_id;
    opt.force = f.force;
    if (!f.mock.empty()) opt.mock_playbook = f.mock;
    Pipeline pipeline(cfg, opt);
    const auto out = pipeline.run(stage);
    Json j{{"stage", out.stage},
           {"status", out.skipped ? "up-to-date" : "ran"},
           {"dir", out.dir.string()},
           {"outputs", out.outputs},
           {"calls",
            {{"backend_calls", out.calls.backend_calls},
             {"cache_hits", out.calls.cache_hits},
             {"cache_misses", out.calls.cache_misses},
             {"retries", out.calls.retries}}}};
    std::cout << j.dump() << "\n";
    return kOk;
  } catch (const ConfigError& e) {
    return fail(kConfigError, e.kind(), e.what(), stage);
  } catch (const MissingStage& e) {
    return fail(kMissingPredecessor, e.kind(), e.what(), stage, e.stage());
  } catch (const Error& e) {
    return fail(kStageFailure, e.kind(), e.what(), stage);
  } catch (const std::exception& e) {
    return fail(kStageFailure, "InternalError", e.what(), stage);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reason-augmented next-occupation prediction pipeline"};
  app.set_version_flag("--version", tool_version());
  app.require_subcommand(1);

  const std::map<std::string, std::string> help = {
      {"synth", "Write a synthetic corpus, taxonomy and mock playbook"},
      {"ingest", "Validate, preprocess and split the corpus"},
      {"forge", "Generate oracle reasons and keep correct attempts"},
      {"judge-filter", "Score oracle reasons and apply the threshold"},
      {"judge-robustness", "Score perturbed reasons to check judge sensitivity"},
      {"emit-sft", "Write the supervised fine-tuning dataset"},
      {"emit-dpo", "Write the preference dataset"},
      {"predict", "Run two-model and joint inference on the test split"},
      {"evaluate", "Compute accuracy, significance and reason quality"},
      {"report", "Assemble the run report"}};

  Flags flags;
  std::string chosen;
  for (const auto& name : stage_names()) {
    auto* sub = app.add_subcommand(name, help.at(name));
    sub->add_option("--config", flags.config, "Run config file (TOML)");
    sub->add_option("--run-id", flags.run_id, "Run directory name under the runs dir");
    sub->add_option("--runs-dir", flags.runs_dir, "Override run.runs_dir");
    sub->add_flag("--force", flags.force, "Re-run even when outputs are current");
    sub->add_option("--mock", flags.mock, "Scripted playbook replacing live endpoints");
    sub->add_option("--seed", flags.seeds, "Seed override name=value (repeatable)");
    sub->callback([&chosen, name] { chosen = name; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail(kConfigError, "UsageError", e.what());
  }
  return run_stage(chosen, flags);
}
