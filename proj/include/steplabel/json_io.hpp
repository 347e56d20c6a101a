#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "steplabel/core.hpp"

namespace steplabel {

// Insertion-ordered so emitted files keep a fixed field order.
using Json = nlohmann::ordered_json;

Json to_json(const VisualTask& task);
VisualTask task_from_json(const Json& j);

Json to_json(const CodeBlock& block);
CodeBlock block_from_json(const Json& j);

Json to_json(const ProgramTree& tree);
ProgramTree tree_from_json(const Json& j);

Json to_json(const VariableMap& vars);
VariableMap variables_from_json(const Json& j);

// Timing is left out unless asked for; persisted artifacts stay byte-stable.
Json to_json(const BlockTrace& trace, bool with_timing = false);
BlockTrace trace_from_json(const Json& j);

Json to_json(const StepLabels& labels);
StepLabels labels_from_json(const Json& j);

/// Dictionary-style rendering of captured variables used inside prompts,
/// e.g. `{"count": 2, "label": "dog"}`. Keys sorted; text values quoted.
std::string variables_as_dict_text(const VariableMap& vars);

/// Reads a line-delimited JSON file, skipping blank lines. Throws Error with
/// the 1-based line number on a parse failure.
std::vector<Json> read_jsonl(const std::filesystem::path& path);
void write_jsonl(const std::filesystem::path& path, const std::vector<Json>& rows);

std::vector<VisualTask> load_tasks(const std::filesystem::path& path);

}  // namespace steplabel
