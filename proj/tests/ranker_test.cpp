#include <gtest/gtest.h>

#include <algorithm>
#include <array>

#include "steplabel/ranker.hpp"
#include "support.hpp"

using namespace steplabel;

namespace {

StepLabels L(std::string_view code) { return StepLabels::from_code(code); }

const std::array<std::string_view, 8> kOrder = {"TTT", "TTF", "TFT", "FTT", "TFF", "FTF", "FFT", "FFF"};

std::vector<Candidate> cands(const std::vector<std::string>& codes) {
  std::vector<Candidate> out;
  for (std::size_t i = 0; i < codes.size(); ++i) out.push_back({"c" + std::to_string(i), L(codes[i]), ""});
  return out;
}

}  // namespace

TEST(RankKey, Components) {
  const auto k = rank_key(L("TFT"));
  EXPECT_EQ(k.count_true, 2);
  EXPECT_TRUE(k.relevance);
  EXPECT_FALSE(k.logic);
  EXPECT_TRUE(k.attribute);
}

TEST(RankKey, TotalOrderMatchesTable) {
  for (std::size_t i = 0; i + 1 < kOrder.size(); ++i) {
    EXPECT_GT(rank_key(L(kOrder[i])), rank_key(L(kOrder[i + 1]))) << kOrder[i] << " vs " << kOrder[i + 1];
  }
}

TEST(Compare, Examples) {
  EXPECT_EQ(compare(L("TTF"), L("TFT")), Comparison::kAWins);
  EXPECT_EQ(compare(L("FTT"), L("TFF")), Comparison::kAWins);
  EXPECT_EQ(compare(L("TFF"), L("TTT")), Comparison::kBWins);
  EXPECT_EQ(compare(L("FFF"), L("FFF")), Comparison::kTie);
}

TEST(SelectBest, Examples) {
  EXPECT_EQ(select_best(cands({"TTF", "TFT"})).index, 0u);
  EXPECT_EQ(select_best(cands({"FFF", "TFF", "FTT"})).id, "c2");
  const auto tie = select_best(cands({"TFF", "TTF", "TTF"}));
  EXPECT_EQ(tie.index, 1u);
  EXPECT_EQ(tie.tied, (std::vector<std::string>{"c1", "c2"}));
  EXPECT_FALSE(tie.tie_broken_by_backend);
  EXPECT_THROW(select_best({}), EmptyCandidates);
}

TEST(SelectBest, BackendBreaksTies) {
  auto backend = fx::scripted({"I prefer c2."});
  const auto s = select_best(cands({"TTF", "TTF", "TTF"}), backend.get(), "How many dogs?");
  EXPECT_EQ(s.id, "c2");
  EXPECT_EQ(s.index, 2u);
  EXPECT_TRUE(s.tie_broken_by_backend);
}

TEST(SelectBest, UnusableTieBreakFallsBackToLowestIndex) {
  auto backend = fx::scripted({"either c1 or c2"});
  const auto s = select_best(cands({"FFF", "TTF", "TTF"}), backend.get(), "q");
  EXPECT_EQ(s.index, 1u);
  EXPECT_FALSE(s.tie_broken_by_backend);
  auto empty = fx::scripted({});
  EXPECT_EQ(select_best(cands({"TTF", "TTF"}), empty.get(), "q").index, 0u);
}

TEST(SelectBest, NoTieNoBackendCall) {
  fx::LambdaBackend backend([](const std::string&) { return "c0"; });
  select_best(cands({"TTT", "TTF"}), &backend, "q");
  EXPECT_TRUE(backend.prompts.empty());
}

TEST(TieBreakChoice, Parsing) {
  const std::vector<std::string> tied = {"1.1", "1.2", "1.12"};
  EXPECT_EQ(parse_tiebreak_choice("The best is 1.2", tied), "1.2");
  EXPECT_EQ(parse_tiebreak_choice("1.12", tied), "1.12");
  EXPECT_FALSE(parse_tiebreak_choice("1.1 or 1.2", tied).has_value());
  EXPECT_FALSE(parse_tiebreak_choice("none", tied).has_value());
}

// Every triple of label codes: the selected candidate is maximal and the
// lowest index among the maximal ones.
TEST(SelectBest, BruteForceTriples) {
  for (auto a : kOrder)
    for (auto b : kOrder)
      for (auto c : kOrder) {
        const auto list = cands({std::string(a), std::string(b), std::string(c)});
        const auto s = select_best(list);
        std::size_t expect = 0;
        for (std::size_t i = 1; i < 3; ++i) {
          if (rank_key(list[i].labels) > rank_key(list[expect].labels)) expect = i;
        }
        ASSERT_EQ(s.index, expect) << a << b << c;
      }
}
