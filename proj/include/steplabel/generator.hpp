#pragma once

#include <string>
#include <variant>
#include <vector>

#include "steplabel/backend.hpp"
#include "steplabel/core.hpp"

namespace steplabel {

class EmptyTree : public Error {
 public:
  using Error::Error;
};

struct GenerationConfig {
  int branch_factor = 2;  // children requested per expanded node
  int max_depth = 8;
  std::string termination_marker = "Work is Done!";
  std::size_t max_output_chars = 16384;

  void validate() const;
};

/// A continuation that ended the program. `final_code` is everything the
/// response carried before the termination marker; running it prints the
/// final answer.
struct Terminal {
  std::string final_code;
};

using Continuation = std::variant<CodeBlock, Terminal>;

/// Responses that could not become blocks, kept for the run report.
struct GenerationDiagnostic {
  std::string parent_id;  // empty for level-1 requests
  int ordinal = 0;
  std::string reason;
};

/// Removes a surrounding Markdown code fence, if any.
std::string strip_code_fence(std::string_view response);

/// Requests the first block of a program. `node_id` names the resulting node.
/// Throws MissingHeader/MalformedIndex when the response is not a valid step-1
/// block; backend errors propagate.
CodeBlock first_block(const VisualTask& task, Backend& backend, const GenerationConfig& config,
                      const std::string& node_id = "1");

/// Requests `config.branch_factor` continuations of `path`, in request order.
/// Child ids are `<parent id>.<ordinal>` with 1-based ordinals. Unparseable
/// responses are dropped and reported through `diagnostics`.
std::vector<Continuation> next_blocks(const VisualTask& task, const std::vector<CodeBlock>& path,
                                      Backend& backend, const GenerationConfig& config,
                                      std::vector<GenerationDiagnostic>* diagnostics = nullptr);

/// Renders the follow-up prompt for `path`.
std::string render_next_step_prompt(const VisualTask& task, const std::vector<CodeBlock>& path);
std::string render_first_step_prompt(const VisualTask& task);

struct GenerationResult {
  ProgramTree tree;
  std::vector<GenerationDiagnostic> diagnostics;
};

/// Breadth-first least-to-most expansion. Throws EmptyTree when no level-1
/// block parses.
GenerationResult expand_tree(const VisualTask& task, Backend& backend,
                             const GenerationConfig& config);

}  // namespace steplabel
