#pragma once

#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "steplabel/backend.hpp"
#include "steplabel/core.hpp"
#include "steplabel/executor.hpp"
#include "steplabel/generator.hpp"
#include "steplabel/labeler.hpp"
#include "steplabel/ranker.hpp"

namespace steplabel {

class NoCandidates : public Error {
 public:
  using Error::Error;
};

class ScoringError : public Error {
 public:
  using Error::Error;
};

enum class ScorerMode { kOracle, kExternal };

std::string_view to_string(ScorerMode m);
ScorerMode scorer_mode_from_string(std::string_view s);

struct ScalerConfig {
  int candidates = 4;
  int max_depth = 8;
  ScorerMode scorer_mode = ScorerMode::kOracle;
  std::string termination_marker = "Work is Done!";

  void validate() const;
};

/// Client side of the step-scoring protocol. Requests carry
/// `{"query", "context", "step_text", "code", "variables"}`; replies carry
/// `{"relevance", "logic", "attribute"}` as reals.
class ScoringClient {
 public:
  virtual ~ScoringClient() = default;
  virtual Json score(const Json& request) = 0;
};

/// POSTs to `<base_url>/score`.
class HttpScoringClient : public ScoringClient {
 public:
  explicit HttpScoringClient(std::string base_url, std::chrono::milliseconds timeout = std::chrono::seconds(30));
  Json score(const Json& request) override;

 private:
  std::string origin_;
  std::string path_;
  std::chrono::milliseconds timeout_;
};

/// Line-delimited JSON over the standard streams of a child process started
/// with `/bin/sh -c <command>`. One request in flight at a time.
class StdioScoringClient : public ScoringClient {
 public:
  explicit StdioScoringClient(const std::string& command);
  ~StdioScoringClient() override;
  StdioScoringClient(const StdioScoringClient&) = delete;
  StdioScoringClient& operator=(const StdioScoringClient&) = delete;

  Json score(const Json& request) override;

 private:
  int pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  std::string pending_;
  std::mutex mutex_;
};

struct ScoringDeps {
  const ModuleStubSet* stubs = nullptr;
  SandboxPolicy policy;
  Backend* verifier = nullptr;     // attribute cross-checks in oracle mode
  ScoringClient* external = nullptr;
  Backend* converter = nullptr;    // optional step text for external mode
  Backend* tiebreak = nullptr;
};

/// A scored option at one inference step: either a new block or a final
/// segment that ends the program.
using CandidateStep = std::variant<CodeBlock, Terminal>;

/// Builds the scoring-protocol request for a candidate.
Json scoring_request(const VisualTask& task, const std::vector<CodeBlock>& path,
                     const CodeBlock& candidate, const std::string& step_text,
                     const VariableMap& variables);

/// Oracle mode executes path + candidate and labels the candidate with the
/// rule-based labeler; external mode asks the scoring service. Failures give
/// a (0, 0, 0) verdict with a diagnostic.
ScorerVerdict score_candidate(const VisualTask& task, const std::vector<CodeBlock>& path,
                              const CodeBlock& candidate, ScorerMode mode, const ScoringDeps& deps);

struct InferenceStep {
  std::vector<std::string> candidate_ids;
  std::vector<ScorerVerdict> verdicts;
  std::size_t chosen = 0;
  bool chose_terminal = false;
};

struct InferenceResult {
  std::string final_answer;
  bool no_answer = false;
  bool aborted = false;  // NoCandidates at some step
  std::vector<CodeBlock> chosen_path;
  std::optional<std::string> final_code;
  std::vector<InferenceStep> steps;
};

/// Greedy best-of-N decoding: each step requests N continuations, scores
/// them, and keeps the best under the label ordering.
InferenceResult run_inference(const VisualTask& task, Backend& generator, const ScoringDeps& deps,
                              const ScalerConfig& config);

}  // namespace steplabel
