#include <gtest/gtest.h>

#include "steplabel/labeler.hpp"
#include "support.hpp"

using namespace steplabel;

namespace {

CodeBlock block_of(const std::string& body, int step = 1) {
  return CodeBlock{"1", std::nullopt, step, "s", "# Step " + std::to_string(step) + ": s\n" + body};
}

BlockTrace ok_trace(VariableMap vars, std::vector<ModuleCall> calls = {}) {
  BlockTrace t;
  t.node_id = "1";
  t.status = BlockStatus::kOk;
  t.variables = std::move(vars);
  t.calls = std::move(calls);
  return t;
}

VarValue B(bool b) { return {VarKind::kBoolean, b ? "true" : "false"}; }
VarValue N(const std::string& n) { return {VarKind::kNumber, n}; }
VarValue S(const std::string& s) { return {VarKind::kText, s}; }

const VisualTask kCount = fx::make_task("t", "How many dogs are there?");

}  // namespace

TEST(Relevance, FollowsStatus) {
  BlockTrace t;
  t.status = BlockStatus::kOk;
  EXPECT_TRUE(label_relevance(t));
  t.status = BlockStatus::kCompileError;
  EXPECT_FALSE(label_relevance(t));
  t.status = BlockStatus::kSkipped;
  EXPECT_FALSE(label_relevance(t));
  t.status = BlockStatus::kRuntimeError;
  EXPECT_FALSE(label_relevance(t));
}

TEST(Logic, ConjunctionMatchesCapture) {
  const auto block = block_of("ok = is_dog and is_brown");
  auto report = label_logic(kCount, block, ok_trace({{"ok", B(true)}}),
                            {ok_trace({{"is_dog", B(true)}, {"is_brown", B(true)}})});
  EXPECT_TRUE(report.verdict());
  ASSERT_EQ(report.checks_run.size(), 1u);
  report = label_logic(kCount, block, ok_trace({{"ok", B(false)}}),
                       {ok_trace({{"is_dog", B(true)}, {"is_brown", B(true)}})});
  EXPECT_FALSE(report.verdict());
}

TEST(Logic, OperandsFromSameBlock) {
  const auto block = block_of("a = x > 3\nb = not a or y == 'red'");
  const auto trace = ok_trace({{"a", B(true)}, {"b", B(false)}, {"x", N("5")}, {"y", S("blue")}});
  const auto report = label_logic(kCount, block, trace, {});
  EXPECT_TRUE(report.verdict());
  EXPECT_EQ(report.checks_run.size(), 2u);
}

TEST(Logic, ChainedComparisonAndNumbers) {
  const auto block = block_of("inside = 0 <= x < 10 and y != 2.5");
  EXPECT_TRUE(label_logic(kCount, block, ok_trace({{"inside", B(true)}}),
                          {ok_trace({{"x", N("3")}, {"y", N("1")}})})
                  .verdict());
  EXPECT_FALSE(label_logic(kCount, block, ok_trace({{"inside", B(true)}}),
                           {ok_trace({{"x", N("30")}, {"y", N("1")}})})
                   .verdict());
}

TEST(Logic, MissingOperandIsSkippedAsPassed) {
  const auto block = block_of("ok = is_dog and unknown_flag");
  const auto report = label_logic(kCount, block, ok_trace({{"ok", B(false)}}),
                                  {ok_trace({{"is_dog", B(true)}})});
  ASSERT_EQ(report.checks_run.size(), 1u);
  EXPECT_TRUE(report.checks_run[0].passed);
  EXPECT_TRUE(report.checks_run[0].detail.starts_with("skipped: operand missing"));
}

TEST(Logic, CallsAreNotReplayed) {
  const auto block = block_of("ok = exists(image, 'dog') and flag");
  const auto report = label_logic(kCount, block, ok_trace({{"ok", B(false)}}), {ok_trace({{"flag", B(true)}})});
  EXPECT_TRUE(report.verdict());
  EXPECT_TRUE(report.checks_run.at(0).detail.starts_with("skipped"));
}

TEST(Logic, ReboundTargetChecksOnlyLastAssignment) {
  const auto block = block_of("ok = a and b\nok = a or b");
  const auto report = label_logic(kCount, block, ok_trace({{"ok", B(true)}}),
                                  {ok_trace({{"a", B(true)}, {"b", B(false)}})});
  EXPECT_TRUE(report.verdict());
  EXPECT_EQ(report.checks_run.size(), 2u);
}

TEST(Logic, BooleanQueryNeedsYesOrNo) {
  const auto task = fx::make_task("t", "Is there a dog in the image?");
  EXPECT_FALSE(label_logic(task, block_of("answer = 'maybe'"), ok_trace({{"answer", S("maybe")}}), {}).verdict());
  EXPECT_TRUE(label_logic(task, block_of("answer = 'Yes'"), ok_trace({{"answer", S("Yes")}}), {}).verdict());
  EXPECT_FALSE(label_logic(task, block_of("answer = True"), ok_trace({{"answer", B(true)}}), {}).verdict());
}

TEST(Logic, OptionQueryNeedsAnOption) {
  const auto task = fx::make_task("t", "Is the cat black or white?");
  EXPECT_FALSE(is_boolean_query(task.query));
  EXPECT_EQ(query_options(task.query), (std::vector<std::string>{"black", "white"}));
  EXPECT_TRUE(label_logic(task, block_of("answer = 'White'"), ok_trace({{"answer", S("White")}}), {}).verdict());
  EXPECT_FALSE(label_logic(task, block_of("answer = 'gray'"), ok_trace({{"answer", S("gray")}}), {}).verdict());
}

TEST(Logic, NoConnectivesNoAnswerIsVacuous) {
  const auto report = label_logic(kCount, block_of("n = len(boxes)"), ok_trace({{"n", N("2")}}), {});
  EXPECT_TRUE(report.checks_run.empty());
  EXPECT_TRUE(report.verdict());
}

TEST(QueryShape, Helpers) {
  EXPECT_TRUE(is_boolean_query("Does the man wear a hat?"));
  EXPECT_FALSE(is_boolean_query("What is on the table?"));
  EXPECT_EQ(query_options("Which is larger, the red ball or the blue box?"),
            (std::vector<std::string>{"the red ball", "the blue box"}));
  EXPECT_TRUE(query_options("How many cats?").empty());
}

TEST(ConnectiveScan, FindsTopLevelAssignments) {
  const auto found = find_connective_assignments(
      "# Step 1: s\na = b and c\nif a:\n    z = b or c\nd = e == f\ng = h");
  ASSERT_EQ(found.size(), 2u);
  EXPECT_EQ(found[0].target, "a");
  EXPECT_EQ(found[1].target, "d");
  EXPECT_EQ(assigned_names("x = 1\ny, z = 2, 3\nx += 1"), (std::vector<std::string>{"x", "y", "z"}));
}

TEST(Attribute, NoCallsIsVacuouslyTrue) {
  auto verifier = fx::scripted({});
  const auto report = label_attribute(kCount, block_of("n = 1 + 1"), ok_trace({{"n", N("2")}}), verifier.get());
  EXPECT_TRUE(report.calls_checked.empty());
  EXPECT_TRUE(report.verdict());
}

TEST(Attribute, LandmarkRejectedByVerifier) {
  const auto task = fx::make_task("t", "What is the name of the island?");
  const auto block = block_of("answer = vqa(image, 'What island is this?')");
  const auto trace = ok_trace({{"answer", S("I don't know what island it is")}},
                              {{"vqa", "image, \"What island is this?\"", "\"I don't know what island it is\""}});
  auto verifier = fx::scripted({"incorrect"});
  const auto labeling = label_step(task, block, trace, {}, verifier.get());
  EXPECT_EQ(labeling.labels.code(), "TTF");
}

TEST(Attribute, OneRejectedCallFailsTheBlock) {
  const auto trace = ok_trace({}, {{"find", "image, \"dog\"", "[]"}, {"vqa", "image, \"q\"", "\"a\""}});
  auto verifier = fx::scripted({"correct", "incorrect"});
  const auto report = label_attribute(kCount, block_of("x = 1"), trace, verifier.get());
  ASSERT_EQ(report.calls_checked.size(), 2u);
  EXPECT_TRUE(report.calls_checked[0].verifier_verdict);
  EXPECT_FALSE(report.verdict());
}

TEST(Attribute, EvaluatorPromptCarriesCallAndCode) {
  fx::LambdaBackend verifier([](const std::string&) { return "correct"; });
  const auto block = block_of("n = vqa(image, 'How many?')");
  label_attribute(kCount, block, ok_trace({{"n", N("2")}}, {{"vqa", "image, \"How many?\"", "2"}}), &verifier);
  ASSERT_EQ(verifier.prompts.size(), 1u);
  const auto& p = verifier.prompts[0];
  EXPECT_TRUE(p.starts_with("You are a program evaluator."));
  EXPECT_NE(p.find(block.source), std::string::npos);
  EXPECT_NE(p.find("vqa(image, \"How many?\") returned 2"), std::string::npos);
  EXPECT_NE(p.find("{\"n\": 2}"), std::string::npos);
}

TEST(Attribute, BackendFailureIsConservative) {
  auto verifier = fx::scripted({});
  const auto report = label_attribute(kCount, block_of("x = 1"), ok_trace({}, {{"find", "a", "b"}}), verifier.get());
  EXPECT_FALSE(report.verdict());
  EXPECT_NE(report.calls_checked[0].detail.find("verifier failure"), std::string::npos);
}

TEST(Attribute, NoVerifierAcceptsAndMarksUnverified) {
  const auto report = label_attribute(kCount, block_of("x = 1"), ok_trace({}, {{"find", "a", "b"}}), nullptr);
  EXPECT_TRUE(report.verdict());
  EXPECT_NE(report.calls_checked[0].detail.find("not verified"), std::string::npos);
}

TEST(VerifierVerdict, Parsing) {
  EXPECT_TRUE(parse_verifier_verdict("Correct."));
  EXPECT_FALSE(parse_verifier_verdict("Incorrect: wrong island"));
  EXPECT_FALSE(parse_verifier_verdict("no"));
  EXPECT_TRUE(parse_verifier_verdict("Yes, it matches"));
  EXPECT_FALSE(parse_verifier_verdict("The output is not correct"));
  EXPECT_FALSE(parse_verifier_verdict("unclear"));
}

TEST(LabelStep, AllChecksPass) {
  const auto labeling = label_step(kCount, block_of("n = 2"), ok_trace({{"n", N("2")}}), {}, nullptr);
  EXPECT_EQ(labeling.labels.code(), "TTT");
}

TEST(LabelStep, FailedBlockShortCircuits) {
  BlockTrace t;
  t.status = BlockStatus::kCompileError;
  fx::LambdaBackend verifier([](const std::string&) -> std::string {
    ADD_FAILURE() << "verifier must not be called";
    return "correct";
  });
  const auto labeling = label_step(kCount, block_of("x = ("), t, {}, &verifier);
  EXPECT_EQ(labeling.labels.code(), "FFF");
  EXPECT_FALSE(labeling.logic.has_value());
  EXPECT_FALSE(labeling.attribute.has_value());
}

TEST(LabelStep, ContradictionWithAcceptedCallIsTFT) {
  const auto block = block_of("seen = exists(image, 'dog')\nok = seen and flag");
  const auto trace = ok_trace({{"ok", B(false)}, {"seen", B(true)}},
                              {{"exists", "image, \"dog\"", "true"}});
  auto verifier = fx::scripted({"correct"});
  const auto labeling = label_step(kCount, block, trace, {ok_trace({{"flag", B(true)}})}, verifier.get());
  EXPECT_EQ(labeling.labels.code(), "TFT");
}

// Adding a failing check never turns a false verdict true, and turns a true
// one false.
TEST(LogicReport, ConjunctionMonotonicity) {
  for (int mask = 0; mask < 16; ++mask) {
    LogicCheckReport r;
    for (int i = 0; i < 4; ++i) r.checks_run.push_back({"c", (mask >> i & 1) != 0, ""});
    const bool before = r.verdict();
    r.checks_run.push_back({"extra", false, ""});
    EXPECT_FALSE(r.verdict());
    if (!before) EXPECT_FALSE(r.verdict());
  }
  EXPECT_TRUE(LogicCheckReport{}.verdict());
  EXPECT_TRUE(AttributeCheckReport{}.verdict());
}

TEST(PropTest, GeneratedTestRunsInSandbox) {
  const auto task = fx::make_task("t", "Is there a dog?");
  ModuleStubSet stubs;
  PropTestOptions opts;
  opts.enabled = true;
  opts.stubs = &stubs;
  opts.policy.wall_timeout_s = 5;
  fx::LambdaBackend passing([](const std::string& prompt) {
    EXPECT_NE(prompt.find("Is there a dog?"), std::string::npos);
    return std::string("```python\ndef execute_test(image):\n    assert solve_query(image) in ('yes', 'no')\n```");
  });
  opts.backend = &passing;
  const auto block = block_of("answer = 'yes'");
  auto report = label_logic(task, block, ok_trace({{"answer", S("yes")}}), {}, opts);
  ASSERT_FALSE(report.checks_run.empty());
  EXPECT_EQ(report.checks_run.back().name, "proptest");
  EXPECT_TRUE(report.checks_run.back().passed) << report.checks_run.back().detail;

  fx::LambdaBackend failing([](const std::string&) {
    return std::string("def execute_test(image):\n    assert solve_query(image) == 'no'\n");
  });
  opts.backend = &failing;
  report = label_logic(task, block, ok_trace({{"answer", S("yes")}}), {}, opts);
  EXPECT_FALSE(report.checks_run.back().passed);
  EXPECT_FALSE(report.verdict());
}
