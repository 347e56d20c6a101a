#include "steplabel/pipeline.hpp"

#include <atomic>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "steplabel/converter.hpp"
#include "steplabel/labeler.hpp"
#include "steplabel/ranker.hpp"

namespace steplabel {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

namespace {

template <typename T>
void read_opt(const Json& j, const char* key, T& out) {
  if (!j.contains(key) || j.at(key).is_null()) return;
  try {
    out = j.at(key).get<T>();
  } catch (const Json::exception&) {
    throw ConfigError(std::string("config field '") + key + "' has the wrong type");
  }
}

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() ? path : (base / path).lexically_normal();
}

std::string expand_credential(const std::string& value) {
  static const std::string kVar = "${SVIP_API_KEY}";
  if (value != kVar) return value;
  const char* env = std::getenv("SVIP_API_KEY");
  return env ? env : "";
}

}  // namespace

void RunConfig::validate() const {
  if (tasks_path.empty()) throw ConfigError("no tasks file configured");
  if (!fs::exists(tasks_path)) throw ConfigError("tasks file not found: " + tasks_path.string());
  if (!fixtures_dir.empty() && !fs::is_directory(fixtures_dir)) {
    throw ConfigError("fixture directory not found: " + fixtures_dir.string());
  }
  if (backend_mode == BackendMode::kFixture && fixtures_dir.empty()) {
    throw ConfigError("fixture backend needs a fixture directory");
  }
  if (backend_mode == BackendMode::kLive && live.endpoint.empty()) {
    throw ConfigError("live backend needs an endpoint");
  }
  if (worker_count < 1 || worker_count > 256) throw ConfigError("workers must be in 1..256");
  if (live.max_in_flight < 1 || live.max_in_flight > 1024) {
    throw ConfigError("max_in_flight must be in 1..1024");
  }
  if (scaler.scorer_mode == ScorerMode::kExternal && scorer_url.empty() && scorer_command.empty()) {
    throw ConfigError("external scorer mode needs scorer_url or scorer_command");
  }
  try {
    generation.validate();
    sandbox.validate();
    scaler.validate();
  } catch (const ValidationError& e) {
    throw ConfigError(e.what());
  }
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  Json j;
  try {
    j = Json::parse(in, nullptr, true, true);
  } catch (const Json::parse_error& e) {
    throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  const fs::path base = fs::absolute(path).parent_path();

  RunConfig c;
  std::string s;
  if (j.contains("tasks")) c.tasks_path = resolve(base, j.at("tasks").get<std::string>());
  if (j.contains("fixtures_dir")) c.fixtures_dir = resolve(base, j.at("fixtures_dir").get<std::string>());
  if (j.contains("output_dir")) c.output_dir = resolve(base, j.at("output_dir").get<std::string>());
  read_opt(j, "workers", c.worker_count);
  read_opt(j, "verbosity", c.verbosity);
  read_opt(j, "proptest", c.proptest);

  if (j.contains("backend")) {
    const auto& b = j.at("backend");
    std::string mode = "fixture";
    read_opt(b, "mode", mode);
    if (mode == "fixture") {
      c.backend_mode = BackendMode::kFixture;
    } else if (mode == "live") {
      c.backend_mode = BackendMode::kLive;
    } else {
      throw ConfigError("backend mode must be 'live' or 'fixture'");
    }
    read_opt(b, "endpoint", c.live.endpoint);
    read_opt(b, "model", c.live.model);
    std::string key;
    read_opt(b, "api_key", key);
    c.live.api_key = expand_credential(key);
    int ms = static_cast<int>(c.live.timeout.count());
    read_opt(b, "timeout_ms", ms);
    c.live.timeout = std::chrono::milliseconds(ms);
    read_opt(b, "max_retries", c.live.max_retries);
    ms = static_cast<int>(c.live.backoff_base.count());
    read_opt(b, "backoff_ms", ms);
    c.live.backoff_base = std::chrono::milliseconds(ms);
    read_opt(b, "max_in_flight", c.live.max_in_flight);
    if (b.contains("params")) c.live.params = b.at("params");
  }
  if (c.live.api_key.empty()) {
    if (const char* env = std::getenv("SVIP_API_KEY")) c.live.api_key = env;
  }
  if (j.contains("generation")) {
    const auto& g = j.at("generation");
    read_opt(g, "branch_factor", c.generation.branch_factor);
    read_opt(g, "max_depth", c.generation.max_depth);
    read_opt(g, "termination_marker", c.generation.termination_marker);
    read_opt(g, "max_output_chars", c.generation.max_output_chars);
  }
  if (j.contains("sandbox")) {
    const auto& sb = j.at("sandbox");
    read_opt(sb, "wall_timeout_s", c.sandbox.wall_timeout_s);
    read_opt(sb, "memory_cap_mb", c.sandbox.memory_cap_mb);
    read_opt(sb, "output_cap_bytes", c.sandbox.output_cap_bytes);
    read_opt(sb, "python", c.sandbox.python);
  }
  if (j.contains("scaler")) {
    const auto& sc = j.at("scaler");
    read_opt(sc, "candidates", c.scaler.candidates);
    read_opt(sc, "max_depth", c.scaler.max_depth);
    std::string mode = "oracle";
    read_opt(sc, "scorer_mode", mode);
    try {
      c.scaler.scorer_mode = scorer_mode_from_string(mode);
    } catch (const ValidationError& e) {
      throw ConfigError(e.what());
    }
    read_opt(sc, "scorer_url", c.scorer_url);
    read_opt(sc, "scorer_command", c.scorer_command);
  }
  c.scaler.termination_marker = c.generation.termination_marker;
  return c;
}

// ---------------------------------------------------------------------------
// Helpers
// ---------------------------------------------------------------------------

namespace {

// Runs fn over [0, n) on `workers` threads. Exceptions are reported per index.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
  std::atomic<std::size_t> next{0};
  auto loop = [&] {
    for (std::size_t i = next++; i < n; i = next++) fn(i);
  };
  const std::size_t count = std::min<std::size_t>(static_cast<std::size_t>(workers), n);
  if (count <= 1) {
    loop();
    return;
  }
  std::vector<std::jthread> pool;
  for (std::size_t t = 0; t < count; ++t) pool.emplace_back(loop);
}

struct TaskRun {
  std::vector<Json> rows;
  std::optional<std::string> failure;
};

template <typename Fn>
StageOutcome run_tasks(const std::vector<VisualTask>& tasks, int workers, const fs::path& out_file,
                       Fn&& per_task) {
  std::vector<TaskRun> runs(tasks.size());
  parallel_for(tasks.size(), workers, [&](std::size_t i) {
    try {
      runs[i].rows = per_task(tasks[i]);
    } catch (const std::exception& e) {
      runs[i].failure = tasks[i].task_id + ": " + e.what();
    }
  });
  StageOutcome outcome;
  outcome.tasks = tasks.size();
  std::vector<Json> rows;
  for (auto& r : runs) {
    if (r.failure) outcome.failures.push_back(*r.failure);
    for (auto& row : r.rows) rows.push_back(std::move(row));
  }
  write_jsonl(out_file, rows);
  return outcome;
}

std::map<std::string, ProgramTree> read_trees(const fs::path& file) {
  std::map<std::string, ProgramTree> trees;
  for (const auto& row : read_jsonl(file)) {
    auto tree = tree_from_json(row.at("tree"));
    const std::string id = tree.task_id;
    trees.emplace(id, std::move(tree));
  }
  return trees;
}

// task -> leaf -> artifacts
using TraceIndex = std::map<std::string, std::map<std::string, PathArtifacts>>;

TraceIndex read_traces(const fs::path& file) {
  TraceIndex index;
  for (const auto& row : read_jsonl(file)) {
    PathArtifacts a;
    for (const auto& t : row.at("traces")) a.traces.push_back(trace_from_json(t));
    if (!row.at("final_answer").is_null()) a.final_answer = row.at("final_answer").get<std::string>();
    index[row.at("task_id").get<std::string>()][row.at("path_id").get<std::string>()] = std::move(a);
  }
  return index;
}

// task -> node -> labels
std::map<std::string, std::map<std::string, StepLabels>> read_labels(const fs::path& file) {
  std::map<std::string, std::map<std::string, StepLabels>> index;
  for (const auto& row : read_jsonl(file)) {
    index[row.at("task_id").get<std::string>()][row.at("node_id").get<std::string>()] =
        labels_from_json(row.at("labels"));
  }
  return index;
}

// Every node on a terminal path, once, with the position where it is first
// reached. Leaves are visited in id order.
struct NodeVisit {
  std::string leaf;
  std::size_t position;
};

std::vector<std::pair<std::string, NodeVisit>> first_visits(const ProgramTree& tree) {
  std::vector<std::pair<std::string, NodeVisit>> order;
  std::set<std::string> seen;
  for (const auto& [leaf, code] : tree.terminal_leaves) {
    const auto ids = tree.path_to(leaf);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (seen.insert(ids[i]).second) order.push_back({ids[i], NodeVisit{leaf, i}});
    }
  }
  return order;
}

std::vector<VisualTask> tasks_in(const std::vector<VisualTask>& all,
                                 const std::set<std::string>& ids) {
  std::vector<VisualTask> out;
  for (const auto& t : all) {
    if (ids.contains(t.task_id)) out.push_back(t);
  }
  return out;
}

template <typename Map>
std::set<std::string> keys_of(const Map& m) {
  std::set<std::string> s;
  for (const auto& [k, v] : m) s.insert(k);
  return s;
}

void merge(StageOutcome& into, const StageOutcome& from) {
  into.tasks = std::max(into.tasks, from.tasks);
  into.failures.insert(into.failures.end(), from.failures.begin(), from.failures.end());
}

}  // namespace

// ---------------------------------------------------------------------------
// Pipeline
// ---------------------------------------------------------------------------

Pipeline::Pipeline(RunConfig config) : config_(std::move(config)) {
  config_.validate();
  if (config_.backend_mode == BackendMode::kLive) live_ = std::make_shared<LiveBackend>(config_.live);
}

std::vector<VisualTask> Pipeline::tasks() const { return load_tasks(config_.tasks_path); }

std::shared_ptr<Backend> Pipeline::backend_for(const std::string& task_id, Role role, bool scale) {
  if (live_) return live_;
  FixtureBackendFactory factory(config_.fixtures_dir, scale ? "scale_" : "");
  // Verifier and tie-break scripts are optional: without one the role is off.
  if ((role == Role::kVerifier || role == Role::kTieBreak) &&
      !fs::exists(factory.script_path(task_id, role))) {
    return nullptr;
  }
  return factory.backend_for(task_id, role);
}

StageOutcome Pipeline::generate() {
  fs::create_directories(config_.output_dir);
  const auto all = tasks();
  return run_tasks(all, config_.worker_count, config_.output_dir / artifacts::kTrees,
                   [&](const VisualTask& task) {
                     auto backend = backend_for(task.task_id, Role::kGenerator);
                     auto result = expand_tree(task, *backend, config_.generation);
                     Json row;
                     row["tree"] = to_json(result.tree);
                     Json diags = Json::array();
                     for (const auto& d : result.diagnostics) {
                       Json dj;
                       dj["parent_id"] = d.parent_id;
                       dj["ordinal"] = d.ordinal;
                       dj["reason"] = d.reason;
                       diags.push_back(std::move(dj));
                     }
                     row["diagnostics"] = std::move(diags);
                     return std::vector<Json>{row};
                   });
}

StageOutcome Pipeline::execute() {
  const auto trees = read_trees(config_.output_dir / artifacts::kTrees);
  const auto todo = tasks_in(tasks(), keys_of(trees));
  return run_tasks(todo, config_.worker_count, config_.output_dir / artifacts::kTraces,
                   [&](const VisualTask& task) {
                     const auto& tree = trees.at(task.task_id);
                     const auto stubs = ModuleStubSet::load_for_task(config_.fixtures_dir, task.task_id);
                     std::vector<Json> rows;
                     for (const auto& [leaf, final_code] : tree.terminal_leaves) {
                       const auto run = run_path(tree.blocks_on_path(leaf), task, stubs,
                                                 config_.sandbox, final_code);
                       Json row;
                       row["task_id"] = task.task_id;
                       row["path_id"] = leaf;
                       Json traces = Json::array();
                       for (const auto& t : run.traces) traces.push_back(to_json(t));
                       row["traces"] = std::move(traces);
                       const auto answer = resolve_final_answer(run);
                       row["final_answer"] = answer ? Json(*answer) : Json(nullptr);
                       row["timed_out"] = run.timed_out;
                       rows.push_back(std::move(row));
                     }
                     return rows;
                   });
}

StageOutcome Pipeline::label() {
  const auto trees = read_trees(config_.output_dir / artifacts::kTrees);
  const auto traces = read_traces(config_.output_dir / artifacts::kTraces);
  const auto todo = tasks_in(tasks(), keys_of(trees));
  return run_tasks(todo, config_.worker_count, config_.output_dir / artifacts::kLabels,
                   [&](const VisualTask& task) {
                     const auto& tree = trees.at(task.task_id);
                     auto verifier = backend_for(task.task_id, Role::kVerifier);
                     const auto stubs = ModuleStubSet::load_for_task(config_.fixtures_dir, task.task_id);
                     PropTestOptions proptest;
                     proptest.enabled = config_.proptest && verifier != nullptr;
                     proptest.backend = verifier.get();
                     proptest.stubs = &stubs;
                     proptest.policy = config_.sandbox;

                     std::vector<Json> rows;
                     const auto task_traces = traces.find(task.task_id);
                     if (task_traces == traces.end()) return rows;
                     for (const auto& [node_id, visit] : first_visits(tree)) {
                       const auto& path_traces = task_traces->second.at(visit.leaf).traces;
                       const auto blocks = tree.blocks_on_path(visit.leaf);
                       const std::vector<BlockTrace> earlier(path_traces.begin(),
                                                             path_traces.begin() + visit.position);
                       const std::vector<CodeBlock> earlier_blocks(blocks.begin(),
                                                                   blocks.begin() + visit.position);
                       const auto labeling =
                           label_step(task, blocks[visit.position], path_traces.at(visit.position),
                                      earlier, verifier.get(), proptest, earlier_blocks);
                       Json row;
                       row["task_id"] = task.task_id;
                       row["node_id"] = node_id;
                       row["labels"] = to_json(labeling.labels);
                       if (labeling.logic) {
                         Json checks = Json::array();
                         for (const auto& c : labeling.logic->checks_run) {
                           Json cj;
                           cj["name"] = c.name;
                           cj["passed"] = c.passed;
                           cj["detail"] = c.detail;
                           checks.push_back(std::move(cj));
                         }
                         row["logic_checks"] = std::move(checks);
                       } else {
                         row["logic_checks"] = nullptr;
                       }
                       if (labeling.attribute) {
                         Json checks = Json::array();
                         for (const auto& c : labeling.attribute->calls_checked) {
                           Json cj;
                           cj["function"] = c.function_name;
                           cj["args"] = c.args_text;
                           cj["return"] = c.return_text;
                           cj["verdict"] = c.verifier_verdict;
                           cj["detail"] = c.detail;
                           checks.push_back(std::move(cj));
                         }
                         row["attribute_checks"] = std::move(checks);
                       } else {
                         row["attribute_checks"] = nullptr;
                       }
                       rows.push_back(std::move(row));
                     }
                     return rows;
                   });
}

StageOutcome Pipeline::convert() {
  const auto trees = read_trees(config_.output_dir / artifacts::kTrees);
  const auto traces = read_traces(config_.output_dir / artifacts::kTraces);
  const auto labels = read_labels(config_.output_dir / artifacts::kLabels);
  const auto all_tasks = tasks();
  const auto todo = tasks_in(all_tasks, keys_of(trees));

  std::mutex records_mutex;
  std::map<std::string, std::vector<StepRecord>> records_by_task;
  std::map<std::string, std::size_t> invalid_by_task;

  auto outcome = run_tasks(
      todo, config_.worker_count, config_.output_dir / artifacts::kCoT,
      [&](const VisualTask& task) {
        const auto& tree = trees.at(task.task_id);
        auto converter = backend_for(task.task_id, Role::kConverter);
        std::vector<Json> rows;
        std::map<std::string, CoTStep> cot_by_node;
        std::size_t invalid = 0;
        const auto task_traces = traces.find(task.task_id);
        const auto task_labels = labels.find(task.task_id);
        if (task_traces == traces.end() || task_labels == labels.end()) return rows;
        for (const auto& [node_id, visit] : first_visits(tree)) {
          const auto& block = tree.nodes.at(node_id);
          const auto& trace = task_traces->second.at(visit.leaf).traces.at(visit.position);
          Json row;
          row["task_id"] = task.task_id;
          row["node_id"] = node_id;
          row["step_index"] = block.step_index;
          try {
            auto step = to_cot_step(task, block, trace, task_labels->second.at(node_id), *converter);
            row["cot"] = step.text;
            row["error"] = nullptr;
            cot_by_node.emplace(node_id, std::move(step));
          } catch (const InvalidCoT& e) {
            ++invalid;
            row["cot"] = nullptr;
            row["error"] = e.what();
          }
          rows.push_back(std::move(row));
        }
        auto records = to_records(task, tree, task_traces->second, cot_by_node,
                                  [](const std::string& id) { return default_split(id); });
        std::lock_guard lock(records_mutex);
        records_by_task[task.task_id] = std::move(records);
        invalid_by_task[task.task_id] = invalid;
        return rows;
      });

  std::vector<StepRecord> records;
  for (auto& [id, rs] : records_by_task) {
    for (auto& r : rs) records.push_back(std::move(r));
  }

  Json report;
  report["tasks"] = all_tasks.size();
  report["trees"] = trees.size();
  std::size_t paths = 0;
  for (const auto& [id, tree] : trees) paths += tree.program_count();
  report["paths"] = paths;
  report["records"] = records.size();
  std::size_t invalid = 0;
  for (const auto& [id, n] : invalid_by_task) invalid += n;
  report["invalid_cot"] = invalid;
  Json dist;
  for (const char* code : {"TTT", "TTF", "TFT", "FTT", "TFF", "FTF", "FFT", "FFF"}) dist[code] = 0;
  for (const auto& r : records) dist[r.labels.code()] = dist[r.labels.code()].get<int>() + 1;
  report["label_distribution"] = std::move(dist);

  emit_records(std::move(records), config_.output_dir / artifacts::kRecords);
  std::ofstream(config_.output_dir / artifacts::kReport, std::ios::trunc) << report.dump(2) << "\n";
  return outcome;
}

StageOutcome Pipeline::run_all() {
  StageOutcome total;
  merge(total, generate());
  merge(total, execute());
  merge(total, label());
  merge(total, convert());
  return total;
}

StageOutcome Pipeline::scale() {
  fs::create_directories(config_.output_dir);
  std::unique_ptr<ScoringClient> external;
  if (config_.scaler.scorer_mode == ScorerMode::kExternal) {
    if (!config_.scorer_url.empty()) {
      external = std::make_unique<HttpScoringClient>(config_.scorer_url);
    } else {
      external = std::make_unique<StdioScoringClient>(config_.scorer_command);
    }
  }
  const auto all = tasks();
  return run_tasks(all, config_.worker_count, config_.output_dir / artifacts::kScale,
                   [&](const VisualTask& task) {
                     auto generator = backend_for(task.task_id, Role::kGenerator, true);
                     auto verifier = backend_for(task.task_id, Role::kVerifier, true);
                     auto tiebreak = backend_for(task.task_id, Role::kTieBreak, true);
                     auto converter = external ? backend_for(task.task_id, Role::kConverter, true)
                                               : nullptr;
                     const auto stubs = ModuleStubSet::load_for_task(config_.fixtures_dir, task.task_id);
                     ScoringDeps deps;
                     deps.stubs = &stubs;
                     deps.policy = config_.sandbox;
                     deps.verifier = verifier.get();
                     deps.external = external.get();
                     deps.converter = converter.get();
                     deps.tiebreak = tiebreak.get();
                     const auto result = run_inference(task, *generator, deps, config_.scaler);

                     Json row;
                     row["task_id"] = task.task_id;
                     row["final_answer"] = result.final_answer;
                     row["no_answer"] = result.no_answer;
                     row["aborted"] = result.aborted;
                     if (task.gold_answer && !result.no_answer) {
                       row["correct"] = to_lower(trim(result.final_answer)) ==
                                        to_lower(trim(*task.gold_answer));
                     } else if (task.gold_answer) {
                       row["correct"] = false;
                     } else {
                       row["correct"] = nullptr;
                     }
                     Json path = Json::array();
                     for (const auto& b : result.chosen_path) path.push_back(b.node_id);
                     row["chosen_path"] = std::move(path);
                     Json steps = Json::array();
                     for (const auto& s : result.steps) {
                       Json sj;
                       sj["candidates"] = s.candidate_ids;
                       Json codes = Json::array();
                       for (const auto& v : s.verdicts) codes.push_back(v.thresholded_labels.code());
                       sj["labels"] = std::move(codes);
                       sj["chosen"] = s.chosen;
                       sj["terminal"] = s.chose_terminal;
                       steps.push_back(std::move(sj));
                     }
                     row["steps"] = std::move(steps);
                     return std::vector<Json>{row};
                   });
}

std::size_t rank_label_list(std::string_view list) {
  std::vector<Candidate> candidates;
  std::string item;
  std::istringstream in{std::string(list)};
  while (std::getline(in, item, ',')) {
    const auto code = trim(item);
    candidates.push_back(Candidate{std::to_string(candidates.size()), StepLabels::from_code(code), ""});
  }
  return select_best(candidates).index;
}

}  // namespace steplabel
