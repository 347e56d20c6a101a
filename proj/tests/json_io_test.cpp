#include <gtest/gtest.h>

#include "steplabel/json_io.hpp"
#include "support.hpp"

using namespace steplabel;

TEST(JsonIo, TaskRoundTrip) {
  auto t = fx::make_task("a", "Is it red?");
  t.modality = Modality::kVideo;
  t.gold_answer = "no";
  const auto back = task_from_json(to_json(t));
  EXPECT_EQ(back.task_id, "a");
  EXPECT_EQ(back.modality, Modality::kVideo);
  EXPECT_EQ(back.gold_answer, std::optional<std::string>("no"));
}

TEST(JsonIo, TreeRoundTrip) {
  ProgramTree tree;
  tree.task_id = "t";
  tree.nodes["1"] = CodeBlock{"1", std::nullopt, 1, "a", "# Step 1: a\nx = 1"};
  tree.nodes["1.1"] = CodeBlock{"1.1", std::string("1"), 2, "b", "# Step 2: b\ny = x"};
  tree.roots = {"1"};
  tree.children["1"] = {"1.1"};
  tree.terminal_leaves["1.1"] = "print(y)";
  EXPECT_EQ(tree_from_json(to_json(tree)), tree);
}

TEST(JsonIo, TraceRoundTripOmitsTimingByDefault) {
  BlockTrace t;
  t.node_id = "1";
  t.status = BlockStatus::kOk;
  t.variables["n"] = {VarKind::kNumber, "2"};
  t.wall_time_ms = 17;
  t.calls.push_back({"find", "image, \"dog\"", "[]"});
  const auto j = to_json(t);
  EXPECT_FALSE(j.contains("wall_time_ms"));
  auto back = trace_from_json(j);
  EXPECT_EQ(back.wall_time_ms, 0);
  back.wall_time_ms = 17;
  EXPECT_EQ(back, t);
  EXPECT_EQ(to_json(t, true).at("wall_time_ms"), 17);
}

TEST(JsonIo, LabelsMustBeBooleans) {
  EXPECT_THROW(labels_from_json(Json::parse(R"({"relevance":1,"logic":true,"attribute":true})")),
               ValidationError);
  EXPECT_THROW(labels_from_json(Json::parse(R"({"relevance":true,"logic":true})")), ValidationError);
}

TEST(JsonIo, DictTextQuotesTextOnly) {
  VariableMap v;
  v["label"] = {VarKind::kText, "dog"};
  v["count"] = {VarKind::kNumber, "2"};
  v["box"] = {VarKind::kImageRegion, "region(1,2,3,4)"};
  EXPECT_EQ(variables_as_dict_text(v), R"({"box": region(1,2,3,4), "count": 2, "label": "dog"})");
  EXPECT_EQ(variables_as_dict_text({}), "{}");
}

TEST(JsonIo, ReadJsonlReportsLineNumber) {
  fx::TempDir dir;
  const auto p = dir.path() / "x.jsonl";
  fx::write_file(p, "{\"a\":1}\n\n{broken\n");
  try {
    read_jsonl(p);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("x.jsonl:3:"), std::string::npos) << e.what();
  }
}

TEST(JsonIo, LoadTasksRejectsDuplicates) {
  fx::TempDir dir;
  const auto p = dir.path() / "tasks.jsonl";
  fx::write_file(p, R"({"task_id":"a","query":"q?"})" "\n" R"({"task_id":"a","query":"r?"})" "\n");
  EXPECT_THROW(load_tasks(p), ValidationError);
}
