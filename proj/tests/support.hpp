#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

#include "steplabel/backend.hpp"
#include "steplabel/core.hpp"

namespace steplabel::fx {

inline std::filesystem::path source_dir() { return STEPLABEL_SOURCE_DIR; }

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::filesystem::create_directories(p.parent_path());
  std::ofstream(p, std::ios::binary | std::ios::trunc) << text;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> n{0};
    path_ = std::filesystem::temp_directory_path() /
            ("steplabel_test_" + std::to_string(::getpid()) + "_" + std::to_string(n++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline std::shared_ptr<FixtureBackend> scripted(const std::vector<std::string>& responses) {
  std::vector<FixtureEntry> entries;
  for (const auto& r : responses) entries.push_back({std::nullopt, r});
  return std::make_shared<FixtureBackend>(FixtureScript(std::move(entries)));
}

inline VisualTask make_task(std::string id = "t", std::string query = "How many dogs are there?") {
  VisualTask t;
  t.task_id = std::move(id);
  t.query = std::move(query);
  t.visual_ref = "img.jpg";
  return t;
}

/// Chain of blocks "1", "1.1", "1.1.1", ... with the given sources.
inline std::vector<CodeBlock> chain(const std::vector<std::string>& sources) {
  std::vector<CodeBlock> out;
  std::string id;
  for (std::size_t i = 0; i < sources.size(); ++i) {
    CodeBlock b;
    b.node_id = id.empty() ? "1" : id + ".1";
    if (!id.empty()) b.parent_id = id;
    b.step_index = static_cast<int>(i) + 1;
    b.description = "step " + std::to_string(i + 1);
    b.source = "# Step " + std::to_string(i + 1) + ": " + b.description + "\n" + sources[i];
    id = b.node_id;
    out.push_back(std::move(b));
  }
  return out;
}

}  // namespace steplabel::fx

namespace steplabel::fx {

/// Answers through a callback and keeps every prompt it saw.
class LambdaBackend : public Backend {
 public:
  using Fn = std::function<std::string(const std::string& prompt)>;
  explicit LambdaBackend(Fn fn, bool concurrent = false) : fn_(std::move(fn)), concurrent_(concurrent) {}

  BackendResponse complete(const BackendRequest& request) override {
    request.validate();
    {
      std::lock_guard lock(mutex_);
      prompts.push_back(request.last_user_message());
    }
    return finish_response(fn_(request.last_user_message()), request.max_output_chars);
  }
  bool supports_concurrency() const override { return concurrent_; }

  std::vector<std::string> prompts;

 private:
  Fn fn_;
  bool concurrent_;
  std::mutex mutex_;
};

}  // namespace steplabel::fx
