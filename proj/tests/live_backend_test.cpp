// Live backend against an in-process chat-completions stand-in.
#include <gtest/gtest.h>

#include <httplib.h>

#include <atomic>
#include <future>
#include <thread>

#include "steplabel/backend.hpp"
#include "steplabel/generator.hpp"
#include "steplabel/prompts.hpp"
#include "support.hpp"

using namespace steplabel;
using namespace std::chrono_literals;

namespace {

std::string reply_json(const std::string& text) {
  Json j;
  j["choices"] = Json::array({Json{{"message", Json{{"role", "assistant"}, {"content", text}}}}});
  return j.dump();
}

class FakeProvider {
 public:
  FakeProvider() {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      const int now = ++in_flight_;
      int seen = max_in_flight_.load();
      while (now > seen && !max_in_flight_.compare_exchange_weak(seen, now)) {
      }
      {
        std::lock_guard lock(mutex_);
        bodies_.push_back(req.body);
        auth_ = req.get_header_value("Authorization");
      }
      if (delay_.count() > 0) std::this_thread::sleep_for(delay_);
      const int n = ++calls_;
      if (n <= rate_limited_first_) {
        res.status = 429;
      } else if (fail_status_ != 0) {
        res.status = fail_status_;
      } else {
        res.set_content(reply_json("echo"), "application/json");
      }
      --in_flight_;
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeProvider() {
    server_.stop();
    thread_.join();
  }

  LiveBackendConfig config() const {
    LiveBackendConfig c;
    c.endpoint = "http://127.0.0.1:" + std::to_string(port_) + "/v1/chat/completions";
    c.model = "test-model";
    c.api_key = "secret";
    c.backoff_base = 1ms;
    return c;
  }

  std::vector<std::string> bodies() {
    std::lock_guard lock(mutex_);
    return bodies_;
  }

  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::mutex mutex_;
  std::vector<std::string> bodies_;
  std::string auth_;
  std::atomic<int> calls_{0};
  std::atomic<int> in_flight_{0};
  std::atomic<int> max_in_flight_{0};
  int rate_limited_first_ = 0;
  int fail_status_ = 0;
  std::chrono::milliseconds delay_{0};
};

}  // namespace

TEST(LiveBackend, PayloadCarriesRenderedTemplateVerbatim) {
  FakeProvider provider;
  LiveBackend backend(provider.config());
  auto task = fx::make_task("t", "How many dogs are in the picture?");
  const std::string prompt = render_first_step_prompt(task);
  const auto resp = backend.complete(BackendRequest::user(prompt, Role::kGenerator));
  EXPECT_EQ(resp.text, "echo");
  ASSERT_EQ(provider.bodies().size(), 1u);
  const auto body = Json::parse(provider.bodies()[0]);
  EXPECT_EQ(body.at("model"), "test-model");
  const std::string sent = body.at("messages").at(0).at("content").get<std::string>();
  EXPECT_EQ(sent, prompt_template("first_step").render({{"[QUESTION]", task.query}}));
  EXPECT_NE(sent.find("Determine the first step for implementing this question"), std::string::npos);
  EXPECT_EQ(provider.auth_, "Bearer secret");
}

TEST(LiveBackend, VisualRefsBecomeImageParts) {
  FakeProvider provider;
  auto cfg = provider.config();
  cfg.params = Json{{"temperature", 0.7}, {"seed", 7}};
  LiveBackend backend(cfg);
  backend.complete(BackendRequest::user("look", Role::kVerifier, {"file:///img.jpg"}));
  const auto body = Json::parse(provider.bodies().at(0));
  const auto& content = body.at("messages").at(0).at("content");
  ASSERT_TRUE(content.is_array());
  EXPECT_EQ(content.at(0).at("text"), "look");
  EXPECT_EQ(content.at(1).at("image_url").at("url"), "file:///img.jpg");
  EXPECT_EQ(body.at("seed"), 7);
}

TEST(LiveBackend, RetriesRateLimitThenSucceeds) {
  FakeProvider provider;
  provider.rate_limited_first_ = 3;
  LiveBackend backend(provider.config());
  const auto resp = backend.complete(BackendRequest::user("x", Role::kGenerator));
  EXPECT_EQ(resp.text, "echo");
  EXPECT_EQ(backend.attempts_made(), 4);
  EXPECT_EQ(resp.provider_meta.at("attempts"), "4");
}

TEST(LiveBackend, RateLimitSurfacesAfterRetryBudget) {
  FakeProvider provider;
  provider.rate_limited_first_ = 100;
  LiveBackend backend(provider.config());
  EXPECT_THROW(backend.complete(BackendRequest::user("x", Role::kGenerator)), RateLimited);
  EXPECT_EQ(backend.attempts_made(), 4);
  EXPECT_EQ(provider.calls_.load(), 4);
}

TEST(LiveBackend, SlowProviderTimesOut) {
  FakeProvider provider;
  provider.delay_ = 600ms;
  auto cfg = provider.config();
  cfg.timeout = 150ms;
  LiveBackend backend(cfg);
  EXPECT_THROW(backend.complete(BackendRequest::user("x", Role::kGenerator)), BackendTimeout);
}

TEST(LiveBackend, ServerErrorIsBackendFailure) {
  FakeProvider provider;
  provider.fail_status_ = 500;
  LiveBackend backend(provider.config());
  EXPECT_THROW(backend.complete(BackendRequest::user("x", Role::kGenerator)), BackendFailure);
}

TEST(LiveBackend, InFlightCapHolds) {
  FakeProvider provider;
  provider.delay_ = 60ms;
  auto cfg = provider.config();
  cfg.max_in_flight = 2;
  LiveBackend backend(cfg);
  std::vector<std::future<BackendResponse>> pending;
  for (int i = 0; i < 6; ++i) {
    pending.push_back(std::async(std::launch::async, [&] {
      return backend.complete(BackendRequest::user("x", Role::kGenerator));
    }));
  }
  for (auto& p : pending) EXPECT_EQ(p.get().text, "echo");
  EXPECT_LE(provider.max_in_flight_.load(), 2);
  EXPECT_GE(provider.max_in_flight_.load(), 1);
}

TEST(LiveBackend, RejectsMalformedEndpoint) {
  LiveBackendConfig cfg;
  cfg.endpoint = "not a url";
  EXPECT_THROW(LiveBackend{cfg}, ValidationError);
}
