#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <vector>

#include "steplabel/core.hpp"
#include "steplabel/json_io.hpp"

namespace steplabel {

class BackendTimeout : public Error {
 public:
  using Error::Error;
};

class RateLimited : public Error {
 public:
  using Error::Error;
};

class BackendFailure : public Error {
 public:
  using Error::Error;
};

class FixtureMiss : public Error {
 public:
  using Error::Error;
};

class FixtureExhausted : public Error {
 public:
  using Error::Error;
};

class ConcurrentFixtureUse : public Error {
 public:
  using Error::Error;
};

/// Pipeline role that issued a request.
enum class Role { kGenerator, kConverter, kVerifier, kTieBreak };

std::string_view to_string(Role r);

enum class MessageRole { kSystem, kUser };

struct Message {
  MessageRole role = MessageRole::kUser;
  std::string content;
};

struct BackendRequest {
  std::vector<Message> messages;
  std::vector<std::string> visual_refs;
  std::size_t max_output_chars = 16384;
  Role tag = Role::kGenerator;

  /// At least one user message; no empty content; positive output budget.
  void validate() const;
  const std::string& last_user_message() const;

  static BackendRequest user(std::string content, Role tag,
                             std::vector<std::string> visual_refs = {});
};

struct BackendResponse {
  std::string text;
  std::map<std::string, std::string> provider_meta;
};

class Backend {
 public:
  virtual ~Backend() = default;
  virtual BackendResponse complete(const BackendRequest& request) = 0;
  /// Whether independent requests may be issued from several threads.
  virtual bool supports_concurrency() const { return false; }
};

// ---------------------------------------------------------------------------
// Fixture mode
// ---------------------------------------------------------------------------

struct FixtureEntry {
  std::optional<std::string> substring;  // nullopt matches any request
  std::string response;
};

/// Ordered scripted responses. Entries are consumed strictly in order; a
/// substring guard is checked against the last user message of the request.
class FixtureScript {
 public:
  FixtureScript() = default;
  explicit FixtureScript(std::vector<FixtureEntry> entries) : entries_(std::move(entries)) {}

  /// One `{"match": "any" | {"substring": "..."}, "response": "..."}` per line.
  /// A missing file yields an empty script.
  static FixtureScript load(const std::filesystem::path& path);
  static FixtureEntry parse_entry(const Json& j);

  const std::string& next(const std::string& last_user_message);

  std::size_t cursor() const { return cursor_; }
  std::size_t size() const { return entries_.size(); }
  bool exhausted() const { return cursor_ >= entries_.size(); }

 private:
  std::vector<FixtureEntry> entries_;
  std::size_t cursor_ = 0;
};

/// Detects overlapping use of a single-consumer resource.
class SingleConsumerGuard {
 public:
  class Lease {
   public:
    explicit Lease(SingleConsumerGuard& g);
    ~Lease();
    Lease(const Lease&) = delete;
    Lease& operator=(const Lease&) = delete;

   private:
    SingleConsumerGuard& guard_;
  };

  Lease acquire(const std::string& what) {
    what_ = what;
    return Lease(*this);
  }

 private:
  std::atomic<bool> busy_{false};
  std::string what_;
};

class FixtureBackend : public Backend {
 public:
  explicit FixtureBackend(FixtureScript script, std::string name = "fixture")
      : script_(std::move(script)), name_(std::move(name)) {}

  BackendResponse complete(const BackendRequest& request) override;

  const FixtureScript& script() const { return script_; }

 private:
  FixtureScript script_;
  std::string name_;
  SingleConsumerGuard guard_;
};

// ---------------------------------------------------------------------------
// Live mode
// ---------------------------------------------------------------------------

struct LiveBackendConfig {
  std::string endpoint;  // e.g. http://localhost:8000/v1/chat/completions
  std::string model;
  std::string api_key;  // usually from SVIP_API_KEY
  std::chrono::milliseconds timeout{60000};
  int max_retries = 3;
  std::chrono::milliseconds backoff_base{1000};
  int max_in_flight = 4;
  Json params = Json::object();  // decoding passthrough (temperature, seed, ...)
};

/// Translates between BackendRequest and a provider's JSON wire shape.
class ChatAdapter {
 public:
  virtual ~ChatAdapter() = default;
  virtual Json encode(const BackendRequest& request, const LiveBackendConfig& config) const = 0;
  virtual std::string decode(const Json& response) const = 0;
};

/// `{"model", "messages": [{"role", "content"}], ...params}` in,
/// `choices[0].message.content` out. Visual refs become image_url parts of
/// the last user message.
class ChatCompletionsAdapter : public ChatAdapter {
 public:
  Json encode(const BackendRequest& request, const LiveBackendConfig& config) const override;
  std::string decode(const Json& response) const override;
};

class LiveBackend : public Backend {
 public:
  explicit LiveBackend(LiveBackendConfig config,
                       std::shared_ptr<const ChatAdapter> adapter = nullptr);

  BackendResponse complete(const BackendRequest& request) override;
  bool supports_concurrency() const override { return true; }

  int attempts_made() const { return attempts_.load(); }

 private:
  LiveBackendConfig config_;
  std::shared_ptr<const ChatAdapter> adapter_;
  std::counting_semaphore<1024> in_flight_;
  std::atomic<int> attempts_{0};
};

/// Truncates to the budget and flags it in provider_meta["truncated"].
BackendResponse finish_response(std::string text, std::size_t max_output_chars,
                                std::map<std::string, std::string> meta = {});

// ---------------------------------------------------------------------------
// Per-task, per-role backend provisioning
// ---------------------------------------------------------------------------

class BackendFactory {
 public:
  virtual ~BackendFactory() = default;
  virtual std::shared_ptr<Backend> backend_for(const std::string& task_id, Role role) = 0;
};

/// Loads `<dir>/<task_id>/<prefix><role>.jsonl` fresh for every call.
class FixtureBackendFactory : public BackendFactory {
 public:
  FixtureBackendFactory(std::filesystem::path dir, std::string prefix = "")
      : dir_(std::move(dir)), prefix_(std::move(prefix)) {}
  std::shared_ptr<Backend> backend_for(const std::string& task_id, Role role) override;

  std::filesystem::path script_path(const std::string& task_id, Role role) const;

 private:
  std::filesystem::path dir_;
  std::string prefix_;
};

/// Hands out one shared live backend for every task and role.
class SharedBackendFactory : public BackendFactory {
 public:
  explicit SharedBackendFactory(std::shared_ptr<Backend> backend) : backend_(std::move(backend)) {}
  std::shared_ptr<Backend> backend_for(const std::string&, Role) override { return backend_; }

 private:
  std::shared_ptr<Backend> backend_;
};

}  // namespace steplabel
