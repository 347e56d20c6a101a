#pragma once

#include <chrono>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "steplabel/core.hpp"
#include "steplabel/json_io.hpp"

namespace steplabel {

class SandboxSpawnFailure : public Error {
 public:
  using Error::Error;
};

struct SandboxPolicy {
  double wall_timeout_s = 10.0;  // whole path, not per block
  std::size_t memory_cap_mb = 512;
  std::size_t output_cap_bytes = 1 << 20;
  std::string python = "python3";
  // Network access is always denied; there is no switch for it.

  void validate() const;
};

/// Deterministic lookup tables standing in for vision and knowledge modules.
///
/// Each entry maps (function, canonical args) to a canonical JSON return
/// value. Canonical args use "image" for the task's visual input and
/// `{"region": [x1, y1, x2, y2]}` for regions; the same region form is decoded
/// from return values.
struct ModuleStubSet {
  struct Entry {
    std::string function;
    Json args = Json::array();
    Json ret;
  };
  std::vector<Entry> entries;

  static const std::vector<std::string>& declared_functions();

  /// `{"fn": ..., "args": [...], "ret": ...}` per line; a missing file is an
  /// empty table.
  static ModuleStubSet load(const std::filesystem::path& path);
  static ModuleStubSet load_for_task(const std::filesystem::path& fixtures_dir,
                                     const std::string& task_id);
};

struct FinalOutput {
  bool ok = false;
  std::string output;   // text printed by the terminal segment
  std::string message;  // error description when !ok
};

struct PathExecution {
  std::vector<BlockTrace> traces;
  // Present when an epilogue was supplied and every block succeeded.
  std::optional<FinalOutput> final_output;
  std::chrono::milliseconds elapsed{0};
  bool timed_out = false;
};

/// Runs a path of code blocks in a fresh guest interpreter process.
///
/// Blocks execute in order in one namespace. After each block the guest
/// reports every top-level name bound or rebound by it. The first failing
/// block is marked compile_error or runtime_error and every later block is
/// skipped. A timeout marks the running block runtime_error. When `epilogue`
/// is given and all blocks succeed, it runs last and its printed output is
/// returned in final_output.
///
/// Throws SandboxSpawnFailure when the interpreter cannot be started or dies
/// before reporting anything.
PathExecution run_path(const std::vector<CodeBlock>& path, const VisualTask& task,
                       const ModuleStubSet& stubs, const SandboxPolicy& policy,
                       const std::optional<std::string>& epilogue = std::nullopt);

/// Best-effort answer for a finished path: the terminal print when present,
/// otherwise the last captured answer-like variable.
std::optional<std::string> resolve_final_answer(const PathExecution& run);

/// Names treated as answer-carrying: `answer`, `final_answer`, `*_answer`.
bool is_answer_variable(std::string_view name);

}  // namespace steplabel
