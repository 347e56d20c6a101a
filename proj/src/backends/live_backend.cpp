#include <algorithm>
#include <regex>
#include <thread>

#include <httplib.h>

#include "steplabel/backend.hpp"

namespace steplabel {

namespace {

struct Endpoint {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

Endpoint split_endpoint(const std::string& url) {
  static const std::regex re(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(url, m, re)) throw ValidationError("malformed endpoint URL: " + url);
  return Endpoint{m[1].str(), m[2].matched ? m[2].str() : std::string("/")};
}

// Releases a semaphore slot on scope exit.
class Slot {
 public:
  explicit Slot(std::counting_semaphore<1024>& s) : s_(s) { s_.acquire(); }
  ~Slot() { s_.release(); }
  Slot(const Slot&) = delete;
  Slot& operator=(const Slot&) = delete;

 private:
  std::counting_semaphore<1024>& s_;
};

}  // namespace

Json ChatCompletionsAdapter::encode(const BackendRequest& request,
                                    const LiveBackendConfig& config) const {
  Json body;
  if (!config.model.empty()) body["model"] = config.model;
  Json messages = Json::array();
  std::size_t last_user = 0;
  for (std::size_t i = 0; i < request.messages.size(); ++i) {
    if (request.messages[i].role == MessageRole::kUser) last_user = i;
  }
  for (std::size_t i = 0; i < request.messages.size(); ++i) {
    const auto& m = request.messages[i];
    Json msg;
    msg["role"] = m.role == MessageRole::kSystem ? "system" : "user";
    if (i == last_user && !request.visual_refs.empty()) {
      Json parts = Json::array();
      parts.push_back(Json{{"type", "text"}, {"text", m.content}});
      for (const auto& ref : request.visual_refs) {
        parts.push_back(Json{{"type", "image_url"}, {"image_url", Json{{"url", ref}}}});
      }
      msg["content"] = std::move(parts);
    } else {
      msg["content"] = m.content;
    }
    messages.push_back(std::move(msg));
  }
  body["messages"] = std::move(messages);
  for (const auto& [key, value] : config.params.items()) body[key] = value;
  return body;
}

std::string ChatCompletionsAdapter::decode(const Json& response) const {
  try {
    return response.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const Json::exception& e) {
    throw BackendFailure(std::string("unexpected response shape: ") + e.what());
  }
}

LiveBackend::LiveBackend(LiveBackendConfig config, std::shared_ptr<const ChatAdapter> adapter)
    : config_(std::move(config)),
      adapter_(adapter ? std::move(adapter) : std::make_shared<ChatCompletionsAdapter>()),
      in_flight_(std::clamp(config_.max_in_flight, 1, 1024)) {
  if (config_.endpoint.empty()) throw ValidationError("live backend needs an endpoint URL");
  split_endpoint(config_.endpoint);
}

BackendResponse LiveBackend::complete(const BackendRequest& request) {
  request.validate();
  Slot slot(in_flight_);

  const auto endpoint = split_endpoint(config_.endpoint);
  const std::string payload = adapter_->encode(request, config_).dump();

  httplib::Client client(endpoint.origin);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(config_.timeout);
  const auto usecs =
      std::chrono::duration_cast<std::chrono::microseconds>(config_.timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());

  httplib::Headers headers;
  if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);

  for (int attempt = 0;; ++attempt) {
    ++attempts_;
    auto result = client.Post(endpoint.path, headers, payload, "application/json");
    if (!result) {
      const auto err = result.error();
      if (err == httplib::Error::Read || err == httplib::Error::ConnectionTimeout) {
        throw BackendTimeout("no response from " + config_.endpoint + " within " +
                             std::to_string(config_.timeout.count()) + " ms");
      }
      throw BackendFailure("request to " + config_.endpoint + " failed: " + httplib::to_string(err));
    }
    if (result->status == 429) {
      if (attempt >= config_.max_retries) {
        throw RateLimited("rate limited by " + config_.endpoint + " after " +
                          std::to_string(attempt + 1) + " attempts");
      }
      std::this_thread::sleep_for(config_.backoff_base * (1 << attempt));
      continue;
    }
    if (result->status < 200 || result->status >= 300) {
      throw BackendFailure("HTTP " + std::to_string(result->status) + " from " + config_.endpoint);
    }
    Json body;
    try {
      body = Json::parse(result->body);
    } catch (const Json::parse_error& e) {
      throw BackendFailure(std::string("response is not JSON: ") + e.what());
    }
    return finish_response(adapter_->decode(body), request.max_output_chars,
                           {{"provider", "live"}, {"attempts", std::to_string(attempt + 1)}});
  }
}

}  // namespace steplabel
