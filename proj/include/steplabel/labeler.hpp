#pragma once

#include <optional>
#include <string>
#include <vector>

#include "steplabel/backend.hpp"
#include "steplabel/core.hpp"
#include "steplabel/executor.hpp"

namespace steplabel {

struct LogicCheck {
  std::string name;
  bool passed = true;
  std::string detail;
};

struct LogicCheckReport {
  std::vector<LogicCheck> checks_run;
  // Conjunction of every passed flag; true when nothing ran.
  bool verdict() const;
};

struct AttributeCheck {
  std::string function_name;
  std::string args_text;
  std::string return_text;
  bool verifier_verdict = false;
  std::string detail;
};

struct AttributeCheckReport {
  std::vector<AttributeCheck> calls_checked;
  bool verdict() const;
};

/// Optional LLM-written property tests. Off by default: desk runs must be
/// deterministic without a model in the loop.
struct PropTestOptions {
  bool enabled = false;
  Backend* backend = nullptr;           // role: verifier
  const ModuleStubSet* stubs = nullptr;
  SandboxPolicy policy;
};

struct StepLabeling {
  StepLabels labels;
  std::optional<LogicCheckReport> logic;          // absent when relevance is false
  std::optional<AttributeCheckReport> attribute;  // absent when relevance is false
};

bool label_relevance(const BlockTrace& trace);

/// Truth-table replay of the block's boolean connectives and comparisons
/// against captured values, plus answer-format checks derived from the query.
/// `earlier` holds the traces of the blocks before `block` on the same path.
LogicCheckReport label_logic(const VisualTask& task, const CodeBlock& block,
                             const BlockTrace& trace, const std::vector<BlockTrace>& earlier,
                             const PropTestOptions& proptest = {},
                             const std::vector<CodeBlock>& earlier_blocks = {});

/// Cross-checks each recorded stub-module call with the verifier backend.
/// With no verifier, calls are accepted and marked unverified.
AttributeCheckReport label_attribute(const VisualTask& task, const CodeBlock& block,
                                     const BlockTrace& trace, Backend* verifier);

/// Relevance first; logic and attribute only run for relevant steps.
StepLabeling label_step(const VisualTask& task, const CodeBlock& block, const BlockTrace& trace,
                        const std::vector<BlockTrace>& earlier, Backend* verifier,
                        const PropTestOptions& proptest = {},
                        const std::vector<CodeBlock>& earlier_blocks = {});

// Query shape helpers used by the format checks.
bool is_boolean_query(std::string_view query);
std::vector<std::string> query_options(std::string_view query);

/// Parses a verifier reply: "incorrect"/"no" reject, "correct"/"yes" accept,
/// anything else rejects.
bool parse_verifier_verdict(std::string_view reply);

// ---------------------------------------------------------------------------
// Truth-table replay internals, exposed for tests.
// ---------------------------------------------------------------------------

struct ReplayOutcome {
  enum class Kind { kMatch, kMismatch, kOperandMissing, kNotReplayable } kind;
  std::string detail;
};

/// Connective-bearing assignments `name = <expr>` found at the top level of a
/// block, in source order, with the line they appear on.
struct ConnectiveAssignment {
  std::string target;
  std::string expression;
  int line = 0;
  bool last_assignment = true;  // false when the target is rebound later
};

std::vector<ConnectiveAssignment> find_connective_assignments(std::string_view source);

/// Names assigned at the top level of a block, in order of first assignment.
std::vector<std::string> assigned_names(std::string_view source);

}  // namespace steplabel
