// Command-line entry point: pipeline stages, ranking, scaling and evaluation.
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "steplabel/dataset.hpp"
#include "steplabel/pipeline.hpp"

namespace fs = std::filesystem;
using namespace steplabel;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitPipeline = 1;
constexpr int kExitConfig = 2;

struct Overrides {
  std::string config;
  std::string tasks;
  std::string out;
  std::string backend;
  std::string fixture_dir;
  std::optional<int> branch;
  std::optional<int> candidates;
  std::optional<int> max_depth;
  std::optional<int> workers;
  std::optional<long long> seed;
};

void add_run_flags(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "JSON run config");
  cmd->add_option("--tasks", o.tasks, "Task file (JSON lines)");
  cmd->add_option("--out", o.out, "Output directory");
  cmd->add_option("--backend", o.backend, "live or fixture")->check(CLI::IsMember({"live", "fixture"}));
  cmd->add_option("--fixture-dir", o.fixture_dir, "Fixture directory");
  cmd->add_option("--branch-X", o.branch, "Children requested per expanded node");
  cmd->add_option("--candidates-N", o.candidates, "Candidates per inference step");
  cmd->add_option("--max-depth", o.max_depth, "Maximum program depth");
  cmd->add_option("--workers", o.workers, "Tasks processed in parallel");
  cmd->add_option("--seed", o.seed, "Decoding seed passed to live backends");
}

RunConfig build_config(const Overrides& o) {
  RunConfig c;
  if (!o.config.empty()) {
    if (!fs::exists(o.config)) throw ConfigError("config file not found: " + o.config);
    c = load_run_config(o.config);
  }
  if (!o.tasks.empty()) c.tasks_path = fs::absolute(o.tasks);
  if (!o.out.empty()) c.output_dir = fs::absolute(o.out);
  if (!o.fixture_dir.empty()) c.fixtures_dir = fs::absolute(o.fixture_dir);
  if (o.backend == "live") c.backend_mode = BackendMode::kLive;
  if (o.backend == "fixture") c.backend_mode = BackendMode::kFixture;
  if (o.branch) c.generation.branch_factor = *o.branch;
  if (o.candidates) c.scaler.candidates = *o.candidates;
  if (o.max_depth) {
    c.generation.max_depth = *o.max_depth;
    c.scaler.max_depth = *o.max_depth;
  }
  if (o.workers) c.worker_count = *o.workers;
  if (o.seed) c.live.params["seed"] = *o.seed;
  c.validate();
  return c;
}

int report(const std::string& stage, const StageOutcome& outcome) {
  for (const auto& f : outcome.failures) std::cerr << stage << ": " << f << "\n";
  return outcome.ok() ? kExitOk : kExitPipeline;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Step-labeled reasoning data pipeline"};
  app.require_subcommand(1);

  Overrides o;
  std::string labels;
  std::string records_path, predictions_path;

  const char* stages[] = {"generate", "execute", "label", "convert", "pipeline", "scale"};
  std::map<std::string, CLI::App*> cmds;
  for (const char* s : stages) {
    cmds[s] = app.add_subcommand(s);
    add_run_flags(cmds[s], o);
  }
  cmds["generate"]->description("Build program trees");
  cmds["execute"]->description("Run every complete program in the sandbox");
  cmds["label"]->description("Label executed steps");
  cmds["convert"]->description("Convert steps to CoT and write records");
  cmds["pipeline"]->description("All four stages in sequence");
  cmds["scale"]->description("Best-of-N inference with step scoring");

  auto* rank = app.add_subcommand("rank", "Index of the best label triple in a list");
  rank->add_option("--labels", labels, "Comma-separated codes such as TTF,TFT")->required();

  auto* eval = app.add_subcommand("eval", "Accuracy of predicted labels against records");
  eval->add_option("--records", records_path, "Records file")->required();
  eval->add_option("--predictions", predictions_path, "Predictions file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (rank->parsed()) {
      std::cout << rank_label_list(labels) << "\n";
      return kExitOk;
    }
    if (eval->parsed()) {
      const auto records = load_records(records_path);
      const auto preds = load_predictions(predictions_path);
      std::cout << evaluate(preds, records).to_json().dump(2) << "\n";
      return kExitOk;
    }

    Pipeline pipeline(build_config(o));
    if (cmds["generate"]->parsed()) return report("generate", pipeline.generate());
    if (cmds["execute"]->parsed()) return report("execute", pipeline.execute());
    if (cmds["label"]->parsed()) return report("label", pipeline.label());
    if (cmds["convert"]->parsed()) return report("convert", pipeline.convert());
    if (cmds["pipeline"]->parsed()) return report("pipeline", pipeline.run_all());
    if (cmds["scale"]->parsed()) return report("scale", pipeline.scale());
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ValidationError& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitPipeline;
  }
  return kExitPipeline;
}
