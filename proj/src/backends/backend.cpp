#include "steplabel/backend.hpp"

#include <fstream>

namespace steplabel {

std::string_view to_string(Role r) {
  switch (r) {
    case Role::kGenerator: return "generator";
    case Role::kConverter: return "converter";
    case Role::kVerifier: return "verifier";
    case Role::kTieBreak: return "tiebreak";
  }
  return "?";
}

void BackendRequest::validate() const {
  bool has_user = false;
  for (const auto& m : messages) {
    if (m.content.empty()) throw ValidationError("backend request carries an empty message");
    if (m.role == MessageRole::kUser) has_user = true;
  }
  if (!has_user) throw ValidationError("backend request needs at least one user message");
  if (max_output_chars == 0) throw ValidationError("max_output_chars must be positive");
}

const std::string& BackendRequest::last_user_message() const {
  for (auto it = messages.rbegin(); it != messages.rend(); ++it) {
    if (it->role == MessageRole::kUser) return it->content;
  }
  throw ValidationError("backend request has no user message");
}

BackendRequest BackendRequest::user(std::string content, Role tag,
                                    std::vector<std::string> visual_refs) {
  BackendRequest r;
  r.messages.push_back(Message{MessageRole::kUser, std::move(content)});
  r.visual_refs = std::move(visual_refs);
  r.tag = tag;
  return r;
}

BackendResponse finish_response(std::string text, std::size_t max_output_chars,
                                std::map<std::string, std::string> meta) {
  if (text.size() > max_output_chars) {
    text.resize(max_output_chars);
    meta["truncated"] = "true";
  }
  return BackendResponse{std::move(text), std::move(meta)};
}

FixtureEntry FixtureScript::parse_entry(const Json& j) {
  if (!j.is_object() || !j.contains("response") || !j.at("response").is_string()) {
    throw ValidationError("fixture entry needs a string 'response'");
  }
  FixtureEntry entry;
  entry.response = j.at("response").get<std::string>();
  const Json match = j.value("match", Json("any"));
  if (match.is_string() && match.get<std::string>() == "any") {
    entry.substring = std::nullopt;
  } else if (match.is_object() && match.contains("substring") && match.at("substring").is_string()) {
    entry.substring = match.at("substring").get<std::string>();
  } else {
    throw ValidationError("fixture 'match' must be \"any\" or {\"substring\": \"...\"}");
  }
  return entry;
}

FixtureScript FixtureScript::load(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) return FixtureScript{};
  std::vector<FixtureEntry> entries;
  std::size_t line = 0;
  for (const auto& row : read_jsonl(path)) {
    ++line;
    try {
      entries.push_back(parse_entry(row));
    } catch (const Error& e) {
      throw ValidationError(path.string() + ": entry " + std::to_string(line) + ": " + e.what());
    }
  }
  return FixtureScript(std::move(entries));
}

const std::string& FixtureScript::next(const std::string& last_user_message) {
  if (cursor_ >= entries_.size()) {
    throw FixtureExhausted("fixture script exhausted after " + std::to_string(entries_.size()) +
                           " responses");
  }
  const auto& entry = entries_[cursor_];
  if (entry.substring && last_user_message.find(*entry.substring) == std::string::npos) {
    throw FixtureMiss("fixture entry " + std::to_string(cursor_ + 1) + " expects substring '" +
                      *entry.substring + "' in the request");
  }
  ++cursor_;
  return entry.response;
}

SingleConsumerGuard::Lease::Lease(SingleConsumerGuard& g) : guard_(g) {
  if (guard_.busy_.exchange(true)) {
    throw ConcurrentFixtureUse("concurrent use of single-consumer " + guard_.what_);
  }
}

SingleConsumerGuard::Lease::~Lease() { guard_.busy_.store(false); }

BackendResponse FixtureBackend::complete(const BackendRequest& request) {
  request.validate();
  auto lease = guard_.acquire(name_);
  const std::string& text = script_.next(request.last_user_message());
  return finish_response(text, request.max_output_chars, {{"provider", "fixture"}});
}

std::filesystem::path FixtureBackendFactory::script_path(const std::string& task_id,
                                                         Role role) const {
  return dir_ / task_id / (prefix_ + std::string(to_string(role)) + ".jsonl");
}

std::shared_ptr<Backend> FixtureBackendFactory::backend_for(const std::string& task_id,
                                                            Role role) {
  const auto path = script_path(task_id, role);
  return std::make_shared<FixtureBackend>(FixtureScript::load(path), path.string());
}

}  // namespace steplabel
