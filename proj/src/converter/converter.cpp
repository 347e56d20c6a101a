#include "steplabel/converter.hpp"

#include "steplabel/json_io.hpp"
#include "steplabel/prompts.hpp"

namespace steplabel {

std::string conversion_variables_text(const BlockTrace& trace) {
  switch (trace.status) {
    case BlockStatus::kOk:
      return variables_as_dict_text(trace.variables);
    case BlockStatus::kSkipped:
      return "Error: not executed because an earlier code block failed";
    default:
      return "Error (" + std::string(to_string(trace.status)) + "): " + trace.stderr_excerpt;
  }
}

std::string render_conversion_prompt(const CodeBlock& block, const BlockTrace& trace) {
  return prompt_template(prompt_names::kCoTConvert)
      .render({{"[CODE_BLOCK]", block.source},
               {"[Values of intermediate variables]", conversion_variables_text(trace)}});
}

CoTStep to_cot_step(const VisualTask& task, const CodeBlock& block, const BlockTrace& trace,
                    const StepLabels& labels, Backend& backend) {
  const std::string prompt = render_conversion_prompt(block, trace);
  std::string last;
  for (int attempt = 0; attempt < 2; ++attempt) {
    auto response = backend.complete(BackendRequest::user(
        prompt, Role::kConverter,
        task.visual_ref.empty() ? std::vector<std::string>{} : std::vector<std::string>{task.visual_ref}));
    last = trim(response.text);
    if (last.rfind(kCoTPrefix, 0) == 0) {
      return CoTStep{last, labels, block.node_id, block.step_index};
    }
  }
  throw InvalidCoT("CoT for node " + block.node_id + " does not start with '" +
                   std::string(kCoTPrefix) + "' after one retry: " + last.substr(0, 80));
}

Split default_split(const std::string& task_id, int train_percent) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : task_id) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return static_cast<int>(h % 100) < train_percent ? Split::kTrain : Split::kTest;
}

std::vector<StepRecord> to_records(const VisualTask& task, const ProgramTree& tree,
                                   const std::map<std::string, PathArtifacts>& paths_by_leaf,
                                   const std::map<std::string, CoTStep>& cot_by_node,
                                   const SplitFn& split_fn) {
  std::vector<StepRecord> records;
  const Split split = split_fn(task.task_id);
  for (const auto& [leaf, code] : tree.terminal_leaves) {
    auto artifacts = paths_by_leaf.find(leaf);
    if (artifacts == paths_by_leaf.end()) {
      throw ValidationError("no execution artifacts for path " + leaf);
    }
    const auto blocks = tree.blocks_on_path(leaf);
    if (artifacts->second.traces.size() != blocks.size()) {
      throw ValidationError("trace count does not match path length for " + leaf);
    }
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      const auto& block = blocks[i];
      auto cot = cot_by_node.find(block.node_id);
      if (cot == cot_by_node.end()) continue;
      StepRecord r;
      r.task_id = task.task_id;
      r.query = task.query;
      r.visual_ref = task.visual_ref;
      r.step_index = block.step_index;
      r.code = block.source;
      r.variables = artifacts->second.traces[i].variables;
      r.cot = cot->second.text;
      r.labels = cot->second.labels;
      r.path_id = leaf;
      r.split = split;
      r.gold_answer = task.gold_answer;
      if (i + 1 == blocks.size()) r.final_answer = artifacts->second.final_answer;
      records.push_back(std::move(r));
    }
  }
  return records;
}

}  // namespace steplabel
