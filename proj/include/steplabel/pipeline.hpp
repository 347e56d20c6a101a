#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "steplabel/backend.hpp"
#include "steplabel/dataset.hpp"
#include "steplabel/executor.hpp"
#include "steplabel/generator.hpp"
#include "steplabel/scaler.hpp"

namespace steplabel {

class ConfigError : public Error {
 public:
  using Error::Error;
};

enum class BackendMode { kFixture, kLive };

struct RunConfig {
  std::filesystem::path tasks_path;
  std::filesystem::path fixtures_dir;
  std::filesystem::path output_dir = "steplabel_out";
  BackendMode backend_mode = BackendMode::kFixture;
  LiveBackendConfig live;
  GenerationConfig generation;
  SandboxPolicy sandbox;
  ScalerConfig scaler;
  std::string scorer_url;      // external mode over HTTP
  std::string scorer_command;  // external mode over standard streams
  bool proptest = false;
  int worker_count = 1;
  int verbosity = 0;

  /// Ranges and path existence. Throws ConfigError.
  void validate() const;
};

/// Reads a JSON config. Relative paths resolve against the config's
/// directory. `${SVIP_API_KEY}` is expanded in the api_key field only.
RunConfig load_run_config(const std::filesystem::path& path);

/// Artifact names inside output_dir.
namespace artifacts {
inline constexpr const char* kTrees = "trees.jsonl";
inline constexpr const char* kTraces = "traces.jsonl";
inline constexpr const char* kLabels = "labels.jsonl";
inline constexpr const char* kCoT = "cot.jsonl";
inline constexpr const char* kRecords = "records.jsonl";
inline constexpr const char* kReport = "report.json";
inline constexpr const char* kScale = "scale.jsonl";
}  // namespace artifacts

struct StageOutcome {
  std::size_t tasks = 0;
  std::vector<std::string> failures;  // "task_id: message"
  bool ok() const { return failures.empty(); }
};

class Pipeline {
 public:
  explicit Pipeline(RunConfig config);

  StageOutcome generate();
  StageOutcome execute();
  StageOutcome label();
  StageOutcome convert();
  StageOutcome run_all();
  StageOutcome scale();

  const RunConfig& config() const { return config_; }

 private:
  std::shared_ptr<Backend> backend_for(const std::string& task_id, Role role, bool scale = false);
  std::vector<VisualTask> tasks() const;

  RunConfig config_;
  std::shared_ptr<Backend> live_;
};

/// Parses "TTF,TFT" and returns the winning index under the label ordering.
std::size_t rank_label_list(std::string_view list);

}  // namespace steplabel
