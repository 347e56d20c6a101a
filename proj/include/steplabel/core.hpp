#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace steplabel {

// ---------------------------------------------------------------------------
// Errors. Every failure the pipeline can report derives from Error so callers
// can catch the family at stage boundaries.
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class MissingHeader : public Error {
 public:
  using Error::Error;
};

class MalformedIndex : public Error {
 public:
  using Error::Error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Tasks
// ---------------------------------------------------------------------------

enum class Modality { kSingleImage, kMultiImage, kVideo };

std::string_view to_string(Modality m);
Modality modality_from_string(std::string_view s);

struct VisualTask {
  std::string task_id;
  std::string query;
  std::string visual_ref;  // opaque; only the executor's stubs resolve it
  Modality modality = Modality::kSingleImage;
  std::optional<std::string> gold_answer;

  // Throws ValidationError on an empty id or query.
  void validate() const;
};

// ---------------------------------------------------------------------------
// Program tree
// ---------------------------------------------------------------------------

struct CodeBlock {
  std::string node_id;
  std::optional<std::string> parent_id;
  int step_index = 1;
  std::string description;
  std::string source;

  bool operator==(const CodeBlock&) const = default;
};

// Root-to-terminal-leaf paths are the complete programs of a task.
struct ProgramTree {
  std::string task_id;
  std::map<std::string, CodeBlock> nodes;
  std::vector<std::string> roots;
  std::map<std::string, std::vector<std::string>> children;
  // Terminal leaf id -> code printed before the termination marker.
  std::map<std::string, std::string> terminal_leaves;

  bool empty() const { return nodes.empty(); }
  std::size_t program_count() const { return terminal_leaves.size(); }

  // Node ids from the root down to `leaf_id`. Throws ValidationError on a
  // dangling parent reference or a cycle.
  std::vector<std::string> path_to(const std::string& leaf_id) const;
  std::vector<CodeBlock> blocks_on_path(const std::string& leaf_id) const;

  bool operator==(const ProgramTree&) const = default;
};

struct TreeViolation {
  std::string kind;  // "cycle", "orphan", "index mismatch", ...
  std::string node_id;
  std::string detail;
};

struct TreeValidation {
  std::vector<TreeViolation> violations;
  bool ok() const { return violations.empty(); }
};

TreeValidation validate_tree(const ProgramTree& tree);

// ---------------------------------------------------------------------------
// Execution traces
// ---------------------------------------------------------------------------

enum class BlockStatus { kOk, kCompileError, kRuntimeError, kSkipped };

std::string_view to_string(BlockStatus s);
BlockStatus block_status_from_string(std::string_view s);

enum class VarKind { kText, kNumber, kBoolean, kList, kMap, kImageRegion, kOpaque };

std::string_view to_string(VarKind k);
VarKind var_kind_from_string(std::string_view s);

struct VarValue {
  VarKind kind = VarKind::kOpaque;
  std::string text;

  bool operator==(const VarValue&) const = default;
};

// Sorted by name.
using VariableMap = std::map<std::string, VarValue>;

// One observed call into a stub vision/knowledge module.
struct ModuleCall {
  std::string function;
  std::string args_text;
  std::string return_text;

  bool operator==(const ModuleCall&) const = default;
};

struct BlockTrace {
  std::string node_id;
  BlockStatus status = BlockStatus::kSkipped;
  VariableMap variables;
  std::string stderr_excerpt;
  std::int64_t wall_time_ms = 0;
  std::vector<ModuleCall> calls;

  bool ok() const { return status == BlockStatus::kOk; }
  // Throws ValidationError when status/variables/excerpt disagree.
  void validate() const;

  bool operator==(const BlockTrace&) const = default;
};

// ---------------------------------------------------------------------------
// Labels, steps, records
// ---------------------------------------------------------------------------

struct StepLabels {
  bool relevance = false;
  bool logic = false;
  bool attribute = false;

  // relevance == false forces the other two dimensions false.
  bool lattice_ok() const { return relevance || (!logic && !attribute); }
  // "TTF" style rendering, relevance first.
  std::string code() const;
  static StepLabels from_code(std::string_view code);

  bool operator==(const StepLabels&) const = default;
};

inline constexpr std::string_view kCoTPrefix = "In this step, we use";

struct CoTStep {
  std::string text;
  StepLabels labels;
  std::string source_node_id;
  int step_index = 1;
};

enum class Split { kTrain, kTest };

std::string_view to_string(Split s);
Split split_from_string(std::string_view s);

struct StepRecord {
  std::string task_id;
  std::string query;
  std::string visual_ref;
  int step_index = 1;
  std::string code;
  VariableMap variables;
  std::string cot;
  StepLabels labels;
  std::string path_id;
  Split split = Split::kTrain;
  std::optional<std::string> gold_answer;
  std::optional<std::string> final_answer;

  bool operator==(const StepRecord&) const = default;
};

struct ScorerVerdict {
  double relevance_score = 0.0;
  double logic_score = 0.0;
  double attribute_score = 0.0;
  StepLabels thresholded_labels;
  std::optional<std::string> diagnostic;

  // Scores strictly above 0.5 map to true.
  static ScorerVerdict from_scores(double relevance, double logic, double attribute);
  static ScorerVerdict from_labels(const StepLabels& labels);
};

inline constexpr double kLabelThreshold = 0.5;

// ---------------------------------------------------------------------------
// Small text helpers shared across modules.
// ---------------------------------------------------------------------------

std::string trim(std::string_view s);
std::vector<std::string> split_lines(std::string_view s);
bool starts_with_ci(std::string_view s, std::string_view prefix);
std::string to_lower(std::string_view s);

}  // namespace steplabel
