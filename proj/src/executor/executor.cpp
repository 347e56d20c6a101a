#include "steplabel/executor.hpp"

#include <fcntl.h>
#include <poll.h>
#include <sched.h>
#include <signal.h>
#include <sys/resource.h>
#include <sys/wait.h>
#include <unistd.h>

#include <array>
#include <atomic>
#include <cerrno>
#include <charconv>
#include <cstring>
#include <fstream>
#include <map>
#include <random>

#include "steplabel/prompts.hpp"

extern char** environ;

namespace steplabel {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

constexpr int kSnapshotFd = 3;
constexpr std::size_t kStderrCap = 64 * 1024;
constexpr std::size_t kSnapshotCap = 64 * 1024 * 1024;
constexpr std::size_t kExcerptChars = 512;

class Fd {
 public:
  Fd() = default;
  explicit Fd(int fd) : fd_(fd) {}
  ~Fd() { reset(); }
  Fd(Fd&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
  Fd& operator=(Fd&& o) noexcept {
    if (this != &o) {
      reset();
      fd_ = std::exchange(o.fd_, -1);
    }
    return *this;
  }
  int get() const { return fd_; }
  void reset() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }

 private:
  int fd_ = -1;
};

struct Pipe {
  Fd read;
  Fd write;
};

Pipe make_pipe() {
  int fds[2];
  if (::pipe2(fds, O_CLOEXEC) != 0) {
    throw SandboxSpawnFailure(std::string("pipe2 failed: ") + std::strerror(errno));
  }
  return Pipe{Fd(fds[0]), Fd(fds[1])};
}

// Scratch directory for one guest run; removed on scope exit.
class ScratchDir {
 public:
  ScratchDir() {
    static std::atomic<unsigned> counter{0};
    std::random_device rd;
    for (int attempt = 0; attempt < 16; ++attempt) {
      auto candidate = fs::temp_directory_path() /
                       ("steplabel-" + std::to_string(::getpid()) + "-" +
                        std::to_string(counter++) + "-" + std::to_string(rd() % 100000));
      std::error_code ec;
      if (fs::create_directory(candidate, ec)) {
        path_ = candidate;
        return;
      }
    }
    throw SandboxSpawnFailure("cannot create a sandbox scratch directory");
  }
  ~ScratchDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  ScratchDir(const ScratchDir&) = delete;
  ScratchDir& operator=(const ScratchDir&) = delete;
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

std::string resolve_executable(const std::string& name) {
  if (name.find('/') != std::string::npos) return name;
  const char* path_env = std::getenv("PATH");
  std::string paths = path_env ? path_env : "/usr/local/bin:/usr/bin:/bin";
  std::size_t start = 0;
  while (start <= paths.size()) {
    auto end = paths.find(':', start);
    if (end == std::string::npos) end = paths.size();
    fs::path candidate = fs::path(paths.substr(start, end - start)) / name;
    if (::access(candidate.c_str(), X_OK) == 0) return candidate.string();
    start = end + 1;
  }
  throw SandboxSpawnFailure("interpreter '" + name + "' not found on PATH");
}

std::string format_seconds(double s) {
  std::array<char, 32> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), s);
  return std::string(buf.data(), ptr);
}

std::string excerpt(std::string_view s) {
  std::string t = trim(s);
  if (t.size() > kExcerptChars) t = t.substr(0, kExcerptChars) + "...";
  return t;
}

// Reads whatever is available on `fd` into `sink`, keeping at most `cap`
// bytes. Returns false on EOF.
bool drain(int fd, std::string& sink, std::size_t cap) {
  std::array<char, 8192> buf{};
  ssize_t n = ::read(fd, buf.data(), buf.size());
  if (n < 0) return errno == EINTR || errno == EAGAIN;
  if (n == 0) return false;
  if (sink.size() < cap) {
    sink.append(buf.data(), std::min<std::size_t>(static_cast<std::size_t>(n), cap - sink.size()));
  }
  return true;
}

struct GuestRecords {
  std::map<std::string, Clock::time_point> begun;
  std::map<std::string, VariableMap> vars;
  std::map<std::string, Json> ended;
  std::map<std::string, Json> failed;
  std::optional<Json> final;
};

void absorb_line(const std::string& line, GuestRecords& records) {
  Json j;
  try {
    j = Json::parse(line);
  } catch (const Json::parse_error&) {
    return;  // a record cut short by a kill
  }
  if (!j.is_object()) return;
  if (j.contains("begin")) {
    records.begun[j["begin"].get<std::string>()] = Clock::now();
  } else if (j.contains("vars") && j.contains("block")) {
    records.vars[j["block"].get<std::string>()] = variables_from_json(j["vars"]);
  } else if (j.contains("end")) {
    records.ended[j["end"].get<std::string>()] = j;
  } else if (j.contains("fail")) {
    records.failed[j["fail"].get<std::string>()] = j;
  } else if (j.contains("final")) {
    records.final = j["final"];
  }
}

}  // namespace

void SandboxPolicy::validate() const {
  if (!(wall_timeout_s > 0)) throw ValidationError("sandbox wall_timeout_s must be positive");
  if (memory_cap_mb == 0) throw ValidationError("sandbox memory_cap_mb must be positive");
  if (output_cap_bytes == 0) throw ValidationError("sandbox output_cap_bytes must be positive");
}

const std::vector<std::string>& ModuleStubSet::declared_functions() {
  static const std::vector<std::string> fns{"find", "exists", "vqa", "llm_query", "compute"};
  return fns;
}

ModuleStubSet ModuleStubSet::load(const fs::path& path) {
  ModuleStubSet set;
  if (!fs::exists(path)) return set;
  std::size_t line = 0;
  for (const auto& row : read_jsonl(path)) {
    ++line;
    if (!row.contains("fn") || !row.at("fn").is_string()) {
      throw ValidationError(path.string() + ": entry " + std::to_string(line) + " needs 'fn'");
    }
    Entry e;
    e.function = row.at("fn").get<std::string>();
    e.args = row.value("args", Json::array());
    e.ret = row.contains("ret") ? row.at("ret") : Json(nullptr);
    set.entries.push_back(std::move(e));
  }
  return set;
}

ModuleStubSet ModuleStubSet::load_for_task(const fs::path& fixtures_dir, const std::string& task_id) {
  return load(fixtures_dir / task_id / "stubs.jsonl");
}

bool is_answer_variable(std::string_view name) {
  return name == "answer" || name == "final_answer" ||
         (name.size() > 7 && name.substr(name.size() - 7) == "_answer");
}

std::optional<std::string> resolve_final_answer(const PathExecution& run) {
  if (run.final_output && run.final_output->ok) {
    auto printed = trim(run.final_output->output);
    if (!printed.empty()) return printed;
  }
  for (auto it = run.traces.rbegin(); it != run.traces.rend(); ++it) {
    for (auto v = it->variables.rbegin(); v != it->variables.rend(); ++v) {
      if (is_answer_variable(v->first)) return v->second.text;
    }
  }
  return std::nullopt;
}

PathExecution run_path(const std::vector<CodeBlock>& path, const VisualTask& task,
                       const ModuleStubSet& stubs, const SandboxPolicy& policy,
                       const std::optional<std::string>& epilogue) {
  policy.validate();
  const auto started = Clock::now();

  ScratchDir scratch;
  const fs::path job_path = scratch.path() / "job.json";
  {
    Json job;
    job["snapshot_fd"] = kSnapshotFd;
    job["visual_ref"] = task.visual_ref;
    Json blocks = Json::array();
    for (const auto& b : path) blocks.push_back(Json{{"id", b.node_id}, {"source", b.source}});
    job["blocks"] = std::move(blocks);
    Json stub_rows = Json::array();
    for (const auto& e : stubs.entries) {
      stub_rows.push_back(Json{{"fn", e.function}, {"args", e.args}, {"ret", e.ret}});
    }
    job["stubs"] = std::move(stub_rows);
    job["epilogue"] = epilogue ? Json(*epilogue) : Json(nullptr);
    std::ofstream out(job_path, std::ios::binary);
    out << job.dump();
    if (!out) throw SandboxSpawnFailure("cannot write job file " + job_path.string());
  }

  // Everything the child needs is prepared before fork.
  const std::string python = resolve_executable(policy.python);
  const std::string runner(embedded_resource("runner.py"));
  std::vector<std::string> argv_store{python, "-I", "-S", "-c", runner, job_path.string()};
  std::vector<std::string> env_store{"PYTHONHASHSEED=0", "PYTHONDONTWRITEBYTECODE=1",
                                     "PYTHONIOENCODING=utf-8", "LC_ALL=C.UTF-8",
                                     "PATH=/usr/local/bin:/usr/bin:/bin"};
  std::vector<char*> argv, envp;
  for (auto& s : argv_store) argv.push_back(s.data());
  argv.push_back(nullptr);
  for (auto& s : env_store) envp.push_back(s.data());
  envp.push_back(nullptr);
  const std::string cwd = scratch.path().string();
  const rlim_t mem_bytes = static_cast<rlim_t>(policy.memory_cap_mb) * 1024 * 1024;

  Pipe out_pipe = make_pipe();
  Pipe err_pipe = make_pipe();
  Pipe snap_pipe = make_pipe();
  Pipe exec_pipe = make_pipe();

  const pid_t pid = ::fork();
  if (pid < 0) throw SandboxSpawnFailure(std::string("fork failed: ") + std::strerror(errno));
  if (pid == 0) {
    // Child: async-signal-safe calls only.
    ::setpgid(0, 0);
    ::unshare(CLONE_NEWNET);  // best effort; the guest prelude also blocks sockets
    struct rlimit mem{mem_bytes, mem_bytes};
    ::setrlimit(RLIMIT_AS, &mem);
    struct rlimit core{0, 0};
    ::setrlimit(RLIMIT_CORE, &core);
    if (::dup2(out_pipe.write.get(), 1) < 0 || ::dup2(err_pipe.write.get(), 2) < 0 ||
        ::dup2(snap_pipe.write.get(), kSnapshotFd) < 0 || ::chdir(cwd.c_str()) != 0) {
      int e = errno;
      [[maybe_unused]] auto w = ::write(exec_pipe.write.get(), &e, sizeof e);
      ::_exit(127);
    }
    int devnull = ::open("/dev/null", O_RDONLY);
    if (devnull >= 0) ::dup2(devnull, 0);
    ::execve(argv[0], argv.data(), envp.data());
    int e = errno;
    [[maybe_unused]] auto w = ::write(exec_pipe.write.get(), &e, sizeof e);
    ::_exit(127);
  }

  out_pipe.write.reset();
  err_pipe.write.reset();
  snap_pipe.write.reset();
  exec_pipe.write.reset();

  int child_errno = 0;
  if (::read(exec_pipe.read.get(), &child_errno, sizeof child_errno) ==
      static_cast<ssize_t>(sizeof child_errno)) {
    int status = 0;
    ::waitpid(pid, &status, 0);
    throw SandboxSpawnFailure("cannot start " + python + ": " + std::strerror(child_errno));
  }

  const auto deadline =
      started + std::chrono::duration_cast<Clock::duration>(
                    std::chrono::duration<double>(policy.wall_timeout_s));
  std::string out_buf, err_buf, snap_buf;
  GuestRecords records;
  std::size_t consumed = 0;
  bool out_open = true, err_open = true, snap_open = true;
  bool timed_out = false;

  while (out_open || err_open || snap_open) {
    std::vector<pollfd> fds;
    if (out_open) fds.push_back({out_pipe.read.get(), POLLIN, 0});
    if (err_open) fds.push_back({err_pipe.read.get(), POLLIN, 0});
    if (snap_open) fds.push_back({snap_pipe.read.get(), POLLIN, 0});

    int wait_ms = 100;
    if (!timed_out) {
      auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now());
      if (left.count() <= 0) {
        timed_out = true;
        ::kill(-pid, SIGKILL);
        ::kill(pid, SIGKILL);
        continue;
      }
      wait_ms = static_cast<int>(std::min<long long>(left.count(), 100));
    }
    int n = ::poll(fds.data(), fds.size(), wait_ms);
    if (n < 0 && errno != EINTR) break;
    for (const auto& p : fds) {
      if (!(p.revents & (POLLIN | POLLHUP | POLLERR))) continue;
      if (p.fd == out_pipe.read.get()) {
        out_open = drain(p.fd, out_buf, policy.output_cap_bytes);
      } else if (p.fd == err_pipe.read.get()) {
        err_open = drain(p.fd, err_buf, kStderrCap);
      } else {
        snap_open = drain(p.fd, snap_buf, kSnapshotCap);
        std::size_t nl;
        while ((nl = snap_buf.find('\n', consumed)) != std::string::npos) {
          absorb_line(snap_buf.substr(consumed, nl - consumed), records);
          consumed = nl + 1;
        }
      }
    }
  }
  if (consumed < snap_buf.size()) absorb_line(snap_buf.substr(consumed), records);

  int status = 0;
  ::waitpid(pid, &status, 0);
  const auto finished = Clock::now();

  if (records.begun.empty() && !path.empty()) {
    throw SandboxSpawnFailure("guest runner exited before executing any block: " +
                              excerpt(err_buf));
  }

  PathExecution result;
  result.timed_out = timed_out;
  result.elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(finished - started);

  bool failed = false;
  for (const auto& block : path) {
    BlockTrace trace;
    trace.node_id = block.node_id;
    if (failed) {
      trace.status = BlockStatus::kSkipped;
    } else if (auto end = records.ended.find(block.node_id); end != records.ended.end()) {
      trace.status = BlockStatus::kOk;
      trace.variables = records.vars[block.node_id];
      trace.wall_time_ms = end->second.value("wall_ms", std::int64_t{0});
      for (const auto& c : end->second.value("calls", Json::array())) {
        trace.calls.push_back(ModuleCall{c.value("fn", ""), c.value("args", ""), c.value("ret", "")});
      }
    } else if (auto fail = records.failed.find(block.node_id); fail != records.failed.end()) {
      trace.status = block_status_from_string(fail->second.value("status", "runtime_error"));
      trace.stderr_excerpt = excerpt(fail->second.value("message", ""));
      trace.wall_time_ms = fail->second.value("wall_ms", std::int64_t{0});
      failed = true;
    } else {
      // Began (or never began) without finishing: killed or crashed.
      trace.status = BlockStatus::kRuntimeError;
      auto begun = records.begun.find(block.node_id);
      const auto since = begun != records.begun.end() ? begun->second : finished;
      trace.wall_time_ms =
          std::chrono::duration_cast<std::chrono::milliseconds>(finished - since).count();
      if (timed_out) {
        trace.stderr_excerpt =
            "TimeoutError: path exceeded the " + format_seconds(policy.wall_timeout_s) + " s limit";
      } else if (WIFSIGNALED(status)) {
        trace.stderr_excerpt = "guest terminated by signal " + std::to_string(WTERMSIG(status));
      } else {
        trace.stderr_excerpt = "guest exited with status " +
                               std::to_string(WIFEXITED(status) ? WEXITSTATUS(status) : -1) +
                               (err_buf.empty() ? "" : ": " + excerpt(err_buf));
      }
      failed = true;
    }
    result.traces.push_back(std::move(trace));
  }

  if (epilogue && !failed) {
    if (records.final) {
      FinalOutput fo;
      fo.ok = records.final->value("status", "") == "ok";
      fo.output = records.final->value("output", "");
      fo.message = records.final->value("message", "");
      result.final_output = std::move(fo);
    } else {
      FinalOutput fo;
      fo.ok = false;
      fo.message = timed_out ? "TimeoutError: final segment exceeded the time limit"
                             : "final segment produced no result";
      result.final_output = std::move(fo);
    }
  }
  return result;
}

}  // namespace steplabel
