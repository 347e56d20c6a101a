#include <gtest/gtest.h>

#include "steplabel/backend.hpp"
#include "support.hpp"

using namespace steplabel;

namespace {
BackendRequest ask(const std::string& text) { return BackendRequest::user(text, Role::kGenerator); }
}  // namespace

TEST(FixtureBackend, EchoesScriptedText) {
  auto b = fx::scripted({"# Step 1: Add numbers\nresult = 2 + 3"});
  EXPECT_EQ(b->complete(ask("anything")).text, "# Step 1: Add numbers\nresult = 2 + 3");
}

TEST(FixtureBackend, ExhaustionRaises) {
  auto b = fx::scripted({"one"});
  b->complete(ask("a"));
  EXPECT_THROW(b->complete(ask("b")), FixtureExhausted);
}

TEST(FixtureBackend, SubstringGuardChecksLastUserMessage) {
  FixtureScript script({{std::string("dog"), "ok"}, {std::string("cat"), "ok2"}});
  FixtureBackend b(std::move(script));
  BackendRequest r;
  r.messages = {{MessageRole::kUser, "the dog"}, {MessageRole::kSystem, "cat"}};
  EXPECT_EQ(b.complete(r).text, "ok");
  EXPECT_THROW(b.complete(ask("a dog")), FixtureMiss);
  EXPECT_EQ(b.script().cursor(), 1u);
}

TEST(FixtureBackend, DeterministicAcrossRuns) {
  const std::vector<std::string> responses = {"a", "b", "c"};
  std::vector<std::string> first, second;
  for (auto* out : {&first, &second}) {
    auto b = fx::scripted(responses);
    for (int i = 0; i < 3; ++i) out->push_back(b->complete(ask("q" + std::to_string(i))).text);
  }
  EXPECT_EQ(first, second);
  EXPECT_EQ(first, responses);
}

TEST(FixtureBackend, TruncatesToBudget) {
  auto b = fx::scripted({"abcdef"});
  auto r = ask("x");
  r.max_output_chars = 3;
  const auto resp = b->complete(r);
  EXPECT_EQ(resp.text, "abc");
  EXPECT_EQ(resp.provider_meta.at("truncated"), "true");
}

TEST(FixtureBackend, RejectsInvalidRequests) {
  auto b = fx::scripted({"a"});
  BackendRequest r;
  EXPECT_THROW(b->complete(r), ValidationError);
  EXPECT_THROW(b->complete(ask("")), ValidationError);
}

TEST(FixtureScript, LoadsFileAndMissingFileIsEmpty) {
  fx::TempDir dir;
  const auto p = dir.path() / "s.jsonl";
  fx::write_file(p, R"({"match":"any","response":"r1"})" "\n"
                         R"({"match":{"substring":"x"},"response":"r2"})" "\n");
  auto s = FixtureScript::load(p);
  EXPECT_EQ(s.size(), 2u);
  EXPECT_EQ(s.next("q"), "r1");
  EXPECT_EQ(s.next("xx"), "r2");
  EXPECT_TRUE(FixtureScript::load(dir.path() / "none.jsonl").exhausted());
  fx::write_file(p, R"({"match":"some","response":"r"})" "\n");
  EXPECT_THROW(FixtureScript::load(p), ValidationError);
}

TEST(SingleConsumerGuard, DetectsOverlap) {
  SingleConsumerGuard guard;
  {
    auto lease = guard.acquire("script");
    EXPECT_THROW(guard.acquire("script"), ConcurrentFixtureUse);
  }
  EXPECT_NO_THROW(guard.acquire("script"));
}

TEST(FixtureBackendFactory, PathsPerTaskAndRole) {
  FixtureBackendFactory f("/fx", "scale_");
  EXPECT_EQ(f.script_path("t1", Role::kVerifier), std::filesystem::path("/fx/t1/scale_verifier.jsonl"));
  EXPECT_EQ(f.script_path("t1", Role::kTieBreak), std::filesystem::path("/fx/t1/scale_tiebreak.jsonl"));
}
