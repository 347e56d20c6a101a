#include <gtest/gtest.h>

#include <sys/wait.h>

#include <array>
#include <cstdio>

#include "steplabel/dataset.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using namespace steplabel;

namespace {

struct RunResult {
  int exit_code = -1;
  std::string out;
};

RunResult run(const std::string& args) {
  const std::string cmd = std::string(STEPLABEL_CLI) + " " + args + " 2>&1";
  RunResult r;
  FILE* p = ::popen(cmd.c_str(), "r");
  if (!p) return r;
  std::array<char, 4096> buf{};
  std::size_t n;
  while ((n = std::fread(buf.data(), 1, buf.size(), p)) > 0) r.out.append(buf.data(), n);
  const int status = ::pclose(p);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string demo_cfg() { return (fx::source_dir() / "fixtures/demo.cfg").string(); }

std::string golden() { return fx::read_file(fx::source_dir() / "fixtures/golden/demo_records.jsonl"); }

}  // namespace

TEST(Cli, RankPrintsWinnerIndex) {
  auto r = run("rank --labels TTF,TFT");
  EXPECT_EQ(r.exit_code, 0);
  EXPECT_EQ(r.out, "0\n");
  r = run("rank --labels FFF,TFF,FTT");
  EXPECT_EQ(r.out, "2\n");
}

TEST(Cli, MissingConfigIsAConfigError) {
  const auto r = run("pipeline --config /nonexistent/run.cfg");
  EXPECT_EQ(r.exit_code, 2);
  EXPECT_NE(r.out.find("config error"), std::string::npos);
}

TEST(Cli, BadFlagValue) {
  EXPECT_EQ(run("pipeline --config " + demo_cfg() + " --branch-X 0").exit_code, 2);
  EXPECT_EQ(run("pipeline --backend sideways").exit_code, 2);
  EXPECT_NE(run("").exit_code, 0);
}

TEST(Cli, PipelineMatchesGolden) {
  fx::TempDir out;
  const auto r = run("pipeline --config " + demo_cfg() + " --out " + out.path().string());
  ASSERT_EQ(r.exit_code, 0) << r.out;
  EXPECT_EQ(fx::read_file(out.path() / "records.jsonl"), golden());
  const auto report = Json::parse(fx::read_file(out.path() / "report.json"));
  EXPECT_EQ(report.at("records"), 26);
  EXPECT_EQ(report.at("invalid_cot"), 1);
}

TEST(Cli, StagesComposeAndRerunsAreIdempotent) {
  fx::TempDir out;
  const std::string flags = " --config " + demo_cfg() + " --out " + out.path().string() + " --workers 3";
  for (const char* stage : {"generate", "execute", "label", "convert"}) {
    const auto r = run(std::string(stage) + flags);
    ASSERT_EQ(r.exit_code, 0) << stage << ": " << r.out;
  }
  const auto first = fx::read_file(out.path() / "records.jsonl");
  EXPECT_EQ(first, golden());
  const auto labels = fx::read_file(out.path() / "labels.jsonl");
  ASSERT_EQ(run("pipeline" + flags).exit_code, 0);
  EXPECT_EQ(fx::read_file(out.path() / "records.jsonl"), first);
  EXPECT_EQ(fx::read_file(out.path() / "labels.jsonl"), labels);
}

TEST(Cli, LaterStageWithoutInputsFails) {
  fx::TempDir out;
  const auto r = run("label --config " + demo_cfg() + " --out " + out.path().string());
  EXPECT_EQ(r.exit_code, 1);
}

TEST(Cli, EvalReportsAccuracy) {
  fx::TempDir dir;
  const auto records_path = fx::source_dir() / "fixtures/golden/demo_records.jsonl";
  const auto records = load_records(records_path);
  std::string preds;
  for (const auto& rec : records) {
    Json j;
    j["task_id"] = rec.task_id;
    j["path_id"] = rec.path_id;
    j["step_index"] = rec.step_index;
    j["labels"] = to_json(rec.labels);
    preds += j.dump() + "\n";
  }
  fx::write_file(dir.path() / "p.jsonl", preds);
  const auto r = run("eval --records " + records_path.string() + " --predictions " + (dir.path() / "p.jsonl").string());
  ASSERT_EQ(r.exit_code, 0) << r.out;
  const auto rep = Json::parse(r.out);
  EXPECT_DOUBLE_EQ(rep.at("dimension_average").get<double>(), 1.0);
  EXPECT_TRUE(rep.at("overall_correctness_accuracy").is_null());
}

TEST(Cli, ScaleOnDemo) {
  fx::TempDir out;
  const auto r = run("scale --config " + demo_cfg() + " --out " + out.path().string());
  ASSERT_EQ(r.exit_code, 0) << r.out;
  std::istringstream in(fx::read_file(out.path() / "scale.jsonl"));
  int rows = 0;
  for (std::string line; std::getline(in, line); ++rows) {
    const auto j = Json::parse(line);
    EXPECT_EQ(j.at("correct"), true) << line;
  }
  EXPECT_EQ(rows, 5);
}
