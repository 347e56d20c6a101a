#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "steplabel/backend.hpp"
#include "steplabel/core.hpp"

namespace steplabel {

class InvalidCoT : public Error {
 public:
  using Error::Error;
};

/// Text placed in the variables slot of the conversion prompt: the sorted
/// dictionary of captured values, or the error when the block did not run.
std::string conversion_variables_text(const BlockTrace& trace);

std::string render_conversion_prompt(const CodeBlock& block, const BlockTrace& trace);

/// Asks the backend for one CoT step describing `block`. A reply that does
/// not open with the required prefix is retried once; a second miss throws
/// InvalidCoT. Labels are copied through unchanged.
CoTStep to_cot_step(const VisualTask& task, const CodeBlock& block, const BlockTrace& trace,
                    const StepLabels& labels, Backend& backend);

/// Maps a task id to its split. Must be a pure function of the id.
using SplitFn = std::function<Split(const std::string& task_id)>;

/// Stable FNV-1a bucket of the task id: the first `train_percent` of 100
/// buckets are train.
Split default_split(const std::string& task_id, int train_percent = 80);

/// Per terminal path, everything needed to emit its records.
struct PathArtifacts {
  std::vector<BlockTrace> traces;  // aligned with the path's blocks
  std::optional<std::string> final_answer;
};

/// One record per (terminal path, step). Nodes with no CoT step (invalid
/// conversions) are left out. `path_id` is the terminal leaf id.
std::vector<StepRecord> to_records(const VisualTask& task, const ProgramTree& tree,
                                   const std::map<std::string, PathArtifacts>& paths_by_leaf,
                                   const std::map<std::string, CoTStep>& cot_by_node,
                                   const SplitFn& split_fn);

}  // namespace steplabel
