#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "occupred/config.hpp"
#include "occupred/errors.hpp"
#include "occupred/json_io.hpp"
#include "occupred/llm_gateway.hpp"

namespace occupred {

/// A stage's required predecessor artifact is absent.
class MissingStage : public Error {
 public:
  explicit MissingStage(std::string stage)
      : Error("MissingStage", "required stage '" + stage + "' has not been run"), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

/// An artifact no longer matches the digest its manifest recorded.
class DigestMismatch : public Error {
 public:
  explicit DigestMismatch(const std::string& what) : Error("DigestMismatch", what) {}
};

/// Stage names in pipeline order.
const std::vector<std::string>& stage_names();

std::string tool_version();

struct RunOptions {
  std::string run_id = "default";
  bool force = false;
  /// Scripted playbook replacing every live endpoint.
  std::optional<std::filesystem::path> mock_playbook;
};

struct StageOutcome {
  std::string stage;
  bool skipped = false;  // manifest showed the outputs already current
  std::filesystem::path dir;
  std::vector<std::string> outputs;
  GatewayCounters calls;
};

/// Manifest written next to each stage's artifacts.
struct Manifest {
  std::string stage;
  std::string tool_version;
  std::string config_digest;
  /// "<stage>/<file>" (or an external path) -> sha256.
  std::map<std::string, std::string> inputs;
  std::map<std::string, std::string> outputs;

  Json to_json() const;
  static Manifest from_json(const Json& j);
};

/// Runs stages inside runs/<run_id>/. Each stage reads its predecessors'
/// artifacts after checking them against their manifests and writes its own
/// artifacts plus manifest.json.
class Pipeline {
 public:
  Pipeline(RunConfig config, RunOptions options);
  ~Pipeline();

  /// Throws MissingStage, DigestMismatch, ConfigError or stage errors.
  StageOutcome run(const std::string& stage);

  std::filesystem::path run_dir() const;
  std::filesystem::path stage_dir(const std::string& stage) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace occupred
