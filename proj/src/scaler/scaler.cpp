#include "steplabel/scaler.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <array>
#include <cerrno>
#include <cstring>
#include <regex>

#include <httplib.h>

#include "steplabel/converter.hpp"

namespace steplabel {

std::string_view to_string(ScorerMode m) {
  return m == ScorerMode::kOracle ? "oracle" : "external";
}

ScorerMode scorer_mode_from_string(std::string_view s) {
  if (s == "oracle") return ScorerMode::kOracle;
  if (s == "external") return ScorerMode::kExternal;
  throw ValidationError("unknown scorer mode '" + std::string(s) + "'");
}

void ScalerConfig::validate() const {
  if (candidates < 1) throw ValidationError("candidates N must be at least 1");
  if (max_depth < 1) throw ValidationError("scaler max_depth must be at least 1");
}

// ---------------------------------------------------------------------------
// Scoring clients
// ---------------------------------------------------------------------------

namespace {

ScorerVerdict verdict_from_reply(const Json& reply) {
  auto get = [&](const char* key) {
    if (!reply.contains(key) || !reply.at(key).is_number()) {
      throw ScoringError(std::string("scoring reply lacks numeric '") + key + "'");
    }
    double v = reply.at(key).get<double>();
    if (!(v >= 0.0 && v <= 1.0)) throw ScoringError(std::string("score out of [0,1] for ") + key);
    return v;
  };
  return ScorerVerdict::from_scores(get("relevance"), get("logic"), get("attribute"));
}

ScorerVerdict failed_verdict(std::string why) {
  auto v = ScorerVerdict::from_scores(0.0, 0.0, 0.0);
  v.diagnostic = std::move(why);
  return v;
}

}  // namespace

HttpScoringClient::HttpScoringClient(std::string base_url, std::chrono::milliseconds timeout)
    : timeout_(timeout) {
  static const std::regex re(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(base_url, m, re)) throw ValidationError("malformed scoring URL: " + base_url);
  origin_ = m[1].str();
  std::string base = m[2].matched ? m[2].str() : "";
  while (!base.empty() && base.back() == '/') base.pop_back();
  path_ = base + "/score";
}

Json HttpScoringClient::score(const Json& request) {
  httplib::Client client(origin_);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout_);
  client.set_read_timeout(secs.count(),
                          std::chrono::duration_cast<std::chrono::microseconds>(timeout_ - secs).count());
  auto result = client.Post(path_, request.dump(), "application/json");
  if (!result) throw ScoringError("scoring service unreachable: " + httplib::to_string(result.error()));
  if (result->status != 200) throw ScoringError("scoring service returned HTTP " + std::to_string(result->status));
  try {
    return Json::parse(result->body);
  } catch (const Json::parse_error& e) {
    throw ScoringError(std::string("scoring reply is not JSON: ") + e.what());
  }
}

StdioScoringClient::StdioScoringClient(const std::string& command) {
  int in_pipe[2], out_pipe[2];
  if (::pipe2(in_pipe, O_CLOEXEC) != 0 || ::pipe2(out_pipe, O_CLOEXEC) != 0) {
    throw ScoringError(std::string("pipe failed: ") + std::strerror(errno));
  }
  const char* argv[] = {"/bin/sh", "-c", command.c_str(), nullptr};
  pid_ = ::fork();
  if (pid_ < 0) throw ScoringError(std::string("fork failed: ") + std::strerror(errno));
  if (pid_ == 0) {
    ::dup2(in_pipe[0], 0);
    ::dup2(out_pipe[1], 1);
    ::execv("/bin/sh", const_cast<char* const*>(argv));
    ::_exit(127);
  }
  ::close(in_pipe[0]);
  ::close(out_pipe[1]);
  to_child_ = in_pipe[1];
  from_child_ = out_pipe[0];
  ::signal(SIGPIPE, SIG_IGN);
}

StdioScoringClient::~StdioScoringClient() {
  if (to_child_ >= 0) ::close(to_child_);
  if (from_child_ >= 0) ::close(from_child_);
  if (pid_ > 0) {
    int status = 0;
    // The service exits on EOF; give it a moment before forcing it.
    for (int i = 0; i < 50; ++i) {
      if (::waitpid(pid_, &status, WNOHANG) == pid_) return;
      ::usleep(20000);
    }
    ::kill(pid_, SIGKILL);
    ::waitpid(pid_, &status, 0);
  }
}

Json StdioScoringClient::score(const Json& request) {
  std::lock_guard lock(mutex_);
  const std::string line = request.dump() + "\n";
  std::size_t written = 0;
  while (written < line.size()) {
    ssize_t n = ::write(to_child_, line.data() + written, line.size() - written);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw ScoringError(std::string("cannot write to scoring process: ") + std::strerror(errno));
    }
    written += static_cast<std::size_t>(n);
  }
  for (;;) {
    if (auto nl = pending_.find('\n'); nl != std::string::npos) {
      std::string reply = pending_.substr(0, nl);
      pending_.erase(0, nl + 1);
      try {
        return Json::parse(reply);
      } catch (const Json::parse_error& e) {
        throw ScoringError(std::string("scoring reply is not JSON: ") + e.what());
      }
    }
    pollfd p{from_child_, POLLIN, 0};
    if (::poll(&p, 1, 30000) <= 0) throw ScoringError("scoring process did not reply within 30 s");
    std::array<char, 4096> buf{};
    ssize_t n = ::read(from_child_, buf.data(), buf.size());
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) throw ScoringError("scoring process closed its output");
    pending_.append(buf.data(), static_cast<std::size_t>(n));
  }
}

// ---------------------------------------------------------------------------
// Scoring and inference
// ---------------------------------------------------------------------------

Json scoring_request(const VisualTask& task, const std::vector<CodeBlock>& path,
                     const CodeBlock& candidate, const std::string& step_text,
                     const VariableMap& variables) {
  Json j;
  j["query"] = task.query;
  Json context = Json::array();
  for (const auto& b : path) context.push_back(b.source);
  j["context"] = std::move(context);
  j["step_text"] = step_text;
  j["code"] = candidate.source;
  j["variables"] = to_json(variables);
  return j;
}

ScorerVerdict score_candidate(const VisualTask& task, const std::vector<CodeBlock>& path,
                              const CodeBlock& candidate, ScorerMode mode, const ScoringDeps& deps) {
  static const ModuleStubSet kNoStubs;
  const ModuleStubSet& stubs = deps.stubs ? *deps.stubs : kNoStubs;
  std::vector<CodeBlock> program = path;
  program.push_back(candidate);

  PathExecution run;
  try {
    run = run_path(program, task, stubs, deps.policy);
  } catch (const std::exception& e) {
    return failed_verdict(std::string("execution failed: ") + e.what());
  }
  const BlockTrace& trace = run.traces.back();
  std::vector<BlockTrace> earlier(run.traces.begin(), run.traces.end() - 1);

  if (mode == ScorerMode::kOracle) {
    const auto labeling = label_step(task, candidate, trace, earlier, deps.verifier, {}, path);
    return ScorerVerdict::from_labels(labeling.labels);
  }

  if (!deps.external) return failed_verdict("external scorer mode without a scoring client");
  std::string step_text;
  if (deps.converter) {
    try {
      step_text = to_cot_step(task, candidate, trace, StepLabels{}, *deps.converter).text;
    } catch (const std::exception&) {
      step_text.clear();
    }
  }
  try {
    return verdict_from_reply(
        deps.external->score(scoring_request(task, path, candidate, step_text, trace.variables)));
  } catch (const std::exception& e) {
    return failed_verdict(std::string("scoring failed: ") + e.what());
  }
}

InferenceResult run_inference(const VisualTask& task, Backend& generator, const ScoringDeps& deps,
                              const ScalerConfig& config) {
  task.validate();
  config.validate();
  GenerationConfig gen;
  gen.branch_factor = config.candidates;
  gen.max_depth = config.max_depth;
  gen.termination_marker = config.termination_marker;

  static const ModuleStubSet kNoStubs;
  const ModuleStubSet& stubs = deps.stubs ? *deps.stubs : kNoStubs;

  InferenceResult result;
  for (int depth = 1; depth <= config.max_depth; ++depth) {
    std::vector<CandidateStep> options;
    if (depth == 1) {
      for (int i = 1; i <= config.candidates; ++i) {
        try {
          options.emplace_back(first_block(task, generator, gen, std::to_string(i)));
        } catch (const MissingHeader&) {
        } catch (const MalformedIndex&) {
        }
      }
    } else {
      for (auto& c : next_blocks(task, result.chosen_path, generator, gen)) {
        std::visit([&](auto&& v) { options.emplace_back(std::move(v)); }, std::move(c));
      }
    }
    if (options.empty()) {
      result.aborted = true;
      break;
    }

    InferenceStep step;
    std::vector<Candidate> ranked;
    for (std::size_t i = 0; i < options.size(); ++i) {
      CodeBlock block;
      if (auto* b = std::get_if<CodeBlock>(&options[i])) {
        block = *b;
      } else {
        // A final segment is scored as one more block of the program.
        block.node_id = (result.chosen_path.empty() ? std::string("final")
                                                    : result.chosen_path.back().node_id + ".final") +
                        std::to_string(i + 1);
        block.parent_id = result.chosen_path.empty()
                              ? std::nullopt
                              : std::optional<std::string>(result.chosen_path.back().node_id);
        block.step_index = depth;
        block.description = "final result";
        block.source = std::get<Terminal>(options[i]).final_code;
      }
      auto verdict = score_candidate(task, result.chosen_path, block, config.scorer_mode, deps);
      step.candidate_ids.push_back(block.node_id);
      ranked.push_back(Candidate{block.node_id, verdict.thresholded_labels, block.source});
      step.verdicts.push_back(std::move(verdict));
    }
    const auto selection = select_best(ranked, deps.tiebreak, task.query);
    step.chosen = selection.index;
    step.chose_terminal = std::holds_alternative<Terminal>(options[selection.index]);
    result.steps.push_back(step);

    if (step.chose_terminal) {
      result.final_code = std::get<Terminal>(options[selection.index]).final_code;
      break;
    }
    result.chosen_path.push_back(std::get<CodeBlock>(options[selection.index]));
  }

  std::optional<std::string> answer;
  if (!result.chosen_path.empty() || result.final_code) {
    try {
      const auto run = run_path(result.chosen_path, task, stubs, deps.policy, result.final_code);
      answer = resolve_final_answer(run);
    } catch (const std::exception&) {
      answer.reset();
    }
  }
  result.no_answer = !answer.has_value();
  result.final_answer = answer.value_or("");
  return result;
}

}  // namespace steplabel
