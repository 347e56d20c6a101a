#include "steplabel/json_io.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace steplabel {

namespace {

std::optional<std::string> optional_string(const Json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<std::string>();
}

Json optional_to_json(const std::optional<std::string>& v) {
  return v ? Json(*v) : Json(nullptr);
}

}  // namespace

Json to_json(const VisualTask& task) {
  Json j;
  j["task_id"] = task.task_id;
  j["query"] = task.query;
  j["visual_ref"] = task.visual_ref;
  j["modality"] = std::string(to_string(task.modality));
  j["gold_answer"] = optional_to_json(task.gold_answer);
  return j;
}

VisualTask task_from_json(const Json& j) {
  VisualTask t;
  t.task_id = j.at("task_id").get<std::string>();
  t.query = j.at("query").get<std::string>();
  t.visual_ref = j.value("visual_ref", std::string{});
  t.modality = modality_from_string(j.value("modality", std::string{"single-image"}));
  t.gold_answer = optional_string(j, "gold_answer");
  t.validate();
  return t;
}

Json to_json(const CodeBlock& block) {
  Json j;
  j["node_id"] = block.node_id;
  j["parent_id"] = optional_to_json(block.parent_id);
  j["step_index"] = block.step_index;
  j["description"] = block.description;
  j["source"] = block.source;
  return j;
}

CodeBlock block_from_json(const Json& j) {
  CodeBlock b;
  b.node_id = j.at("node_id").get<std::string>();
  b.parent_id = optional_string(j, "parent_id");
  b.step_index = j.at("step_index").get<int>();
  b.description = j.value("description", std::string{});
  b.source = j.at("source").get<std::string>();
  return b;
}

Json to_json(const ProgramTree& tree) {
  Json j;
  j["task_id"] = tree.task_id;
  j["roots"] = tree.roots;
  Json nodes = Json::array();
  for (const auto& [id, block] : tree.nodes) nodes.push_back(to_json(block));
  j["nodes"] = std::move(nodes);
  Json children = Json::object();
  for (const auto& [id, kids] : tree.children) children[id] = kids;
  j["children"] = std::move(children);
  Json leaves = Json::object();
  for (const auto& [id, code] : tree.terminal_leaves) leaves[id] = code;
  j["terminal_leaves"] = std::move(leaves);
  return j;
}

ProgramTree tree_from_json(const Json& j) {
  ProgramTree tree;
  tree.task_id = j.at("task_id").get<std::string>();
  tree.roots = j.at("roots").get<std::vector<std::string>>();
  for (const auto& n : j.at("nodes")) {
    auto block = block_from_json(n);
    tree.nodes.emplace(block.node_id, std::move(block));
  }
  for (const auto& [id, kids] : j.at("children").items()) {
    tree.children[id] = kids.get<std::vector<std::string>>();
  }
  for (const auto& [id, code] : j.at("terminal_leaves").items()) {
    tree.terminal_leaves[id] = code.get<std::string>();
  }
  return tree;
}

Json to_json(const VariableMap& vars) {
  Json j = Json::object();
  for (const auto& [name, value] : vars) {
    Json v;
    v["kind"] = std::string(to_string(value.kind));
    v["value"] = value.text;
    j[name] = std::move(v);
  }
  return j;
}

VariableMap variables_from_json(const Json& j) {
  if (!j.is_object()) throw ValidationError("variables must be an object");
  VariableMap vars;
  for (const auto& [name, v] : j.items()) {
    if (!v.is_object() || !v.contains("kind") || !v.contains("value")) {
      throw ValidationError("variable '" + name + "' needs kind and value");
    }
    vars[name] = VarValue{var_kind_from_string(v.at("kind").get<std::string>()),
                          v.at("value").get<std::string>()};
  }
  return vars;
}

Json to_json(const BlockTrace& trace, bool with_timing) {
  Json j;
  j["node_id"] = trace.node_id;
  j["status"] = std::string(to_string(trace.status));
  j["variables"] = to_json(trace.variables);
  j["stderr_excerpt"] = trace.stderr_excerpt;
  if (with_timing) j["wall_time_ms"] = trace.wall_time_ms;
  Json calls = Json::array();
  for (const auto& c : trace.calls) {
    calls.push_back(Json{{"fn", c.function}, {"args", c.args_text}, {"ret", c.return_text}});
  }
  j["calls"] = std::move(calls);
  return j;
}

BlockTrace trace_from_json(const Json& j) {
  BlockTrace t;
  t.node_id = j.at("node_id").get<std::string>();
  t.status = block_status_from_string(j.at("status").get<std::string>());
  t.variables = variables_from_json(j.at("variables"));
  t.stderr_excerpt = j.value("stderr_excerpt", std::string{});
  t.wall_time_ms = j.value("wall_time_ms", std::int64_t{0});
  if (j.contains("calls")) {
    for (const auto& c : j.at("calls")) {
      t.calls.push_back(ModuleCall{c.at("fn").get<std::string>(), c.at("args").get<std::string>(),
                                   c.at("ret").get<std::string>()});
    }
  }
  t.validate();
  return t;
}

Json to_json(const StepLabels& labels) {
  Json j;
  j["relevance"] = labels.relevance;
  j["logic"] = labels.logic;
  j["attribute"] = labels.attribute;
  return j;
}

StepLabels labels_from_json(const Json& j) {
  if (!j.is_object()) throw ValidationError("labels must be an object");
  auto flag = [&](const char* key) {
    if (!j.contains(key) || !j.at(key).is_boolean()) {
      throw ValidationError(std::string("labels.") + key + " must be a boolean");
    }
    return j.at(key).get<bool>();
  };
  return StepLabels{flag("relevance"), flag("logic"), flag("attribute")};
}

std::string variables_as_dict_text(const VariableMap& vars) {
  std::string out = "{";
  bool first = true;
  for (const auto& [name, value] : vars) {
    if (!first) out += ", ";
    first = false;
    out += Json(name).dump();
    out += ": ";
    out += value.kind == VarKind::kText ? Json(value.text).dump() : value.text;
  }
  out += "}";
  return out;
}

std::vector<Json> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<Json> rows;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (trim(line).empty()) continue;
    try {
      rows.push_back(Json::parse(line));
    } catch (const Json::parse_error& e) {
      throw Error(path.string() + ":" + std::to_string(number) + ": " + e.what());
    }
  }
  return rows;
}

void write_jsonl(const std::filesystem::path& path, const std::vector<Json>& rows) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& row : rows) out << row.dump() << '\n';
  if (!out) throw Error("write failed for " + path.string());
}

std::vector<VisualTask> load_tasks(const std::filesystem::path& path) {
  std::vector<VisualTask> tasks;
  std::set<std::string> ids;
  for (const auto& row : read_jsonl(path)) {
    auto task = task_from_json(row);
    if (!ids.insert(task.task_id).second) {
      throw ValidationError("duplicate task_id " + task.task_id + " in " + path.string());
    }
    tasks.push_back(std::move(task));
  }
  return tasks;
}

}  // namespace steplabel
