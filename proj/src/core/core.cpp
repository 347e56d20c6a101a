#include "steplabel/core.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <set>

#include "steplabel/block_header.hpp"

namespace steplabel {

namespace {

template <typename Enum, std::size_t N>
Enum lookup(const std::array<std::pair<Enum, std::string_view>, N>& table, std::string_view s,
            std::string_view what) {
  for (const auto& [value, name] : table) {
    if (name == s) return value;
  }
  throw ValidationError("unknown " + std::string(what) + ": '" + std::string(s) + "'");
}

template <typename Enum, std::size_t N>
std::string_view name_of(const std::array<std::pair<Enum, std::string_view>, N>& table, Enum e) {
  for (const auto& [value, name] : table) {
    if (value == e) return name;
  }
  return "?";
}

constexpr std::array<std::pair<Modality, std::string_view>, 3> kModalities{{
    {Modality::kSingleImage, "single-image"},
    {Modality::kMultiImage, "multi-image"},
    {Modality::kVideo, "video"},
}};

constexpr std::array<std::pair<BlockStatus, std::string_view>, 4> kStatuses{{
    {BlockStatus::kOk, "ok"},
    {BlockStatus::kCompileError, "compile_error"},
    {BlockStatus::kRuntimeError, "runtime_error"},
    {BlockStatus::kSkipped, "skipped"},
}};

constexpr std::array<std::pair<VarKind, std::string_view>, 7> kKinds{{
    {VarKind::kText, "text"},
    {VarKind::kNumber, "number"},
    {VarKind::kBoolean, "boolean"},
    {VarKind::kList, "list"},
    {VarKind::kMap, "map"},
    {VarKind::kImageRegion, "image_region"},
    {VarKind::kOpaque, "opaque"},
}};

constexpr std::array<std::pair<Split, std::string_view>, 2> kSplits{{
    {Split::kTrain, "train"},
    {Split::kTest, "test"},
}};

}  // namespace

std::string_view to_string(Modality m) { return name_of(kModalities, m); }
Modality modality_from_string(std::string_view s) { return lookup(kModalities, s, "modality"); }
std::string_view to_string(BlockStatus s) { return name_of(kStatuses, s); }
BlockStatus block_status_from_string(std::string_view s) { return lookup(kStatuses, s, "status"); }
std::string_view to_string(VarKind k) { return name_of(kKinds, k); }
VarKind var_kind_from_string(std::string_view s) { return lookup(kKinds, s, "kind"); }
std::string_view to_string(Split s) { return name_of(kSplits, s); }
Split split_from_string(std::string_view s) { return lookup(kSplits, s, "split"); }

void VisualTask::validate() const {
  if (task_id.empty()) throw ValidationError("task_id must be non-empty");
  if (trim(query).empty()) throw ValidationError("task " + task_id + ": query must be non-empty");
}

std::vector<std::string> ProgramTree::path_to(const std::string& leaf_id) const {
  std::vector<std::string> path;
  std::set<std::string> seen;
  std::optional<std::string> current = leaf_id;
  while (current) {
    if (!seen.insert(*current).second) throw ValidationError("cycle through node " + *current);
    auto it = nodes.find(*current);
    if (it == nodes.end()) throw ValidationError("unknown node " + *current);
    path.push_back(*current);
    current = it->second.parent_id;
  }
  std::reverse(path.begin(), path.end());
  return path;
}

std::vector<CodeBlock> ProgramTree::blocks_on_path(const std::string& leaf_id) const {
  std::vector<CodeBlock> blocks;
  for (const auto& id : path_to(leaf_id)) blocks.push_back(nodes.at(id));
  return blocks;
}

TreeValidation validate_tree(const ProgramTree& tree) {
  TreeValidation report;
  auto add = [&](std::string kind, const std::string& node, std::string detail) {
    report.violations.push_back({std::move(kind), node, std::move(detail)});
  };

  // How many times each node is listed as somebody's child (or as a root).
  std::map<std::string, int> listed;
  for (const auto& id : tree.roots) ++listed[id];
  for (const auto& [parent, kids] : tree.children) {
    if (!tree.nodes.contains(parent)) add("orphan", parent, "children listed for unknown node");
    for (const auto& kid : kids) ++listed[kid];
  }

  for (const auto& [id, block] : tree.nodes) {
    if (block.node_id != id) add("id mismatch", id, "node stored under a different id");

    if (!block.parent_id) {
      if (block.step_index != 1) {
        add("index mismatch", id, "root block has step_index " + std::to_string(block.step_index));
      }
      if (std::find(tree.roots.begin(), tree.roots.end(), id) == tree.roots.end()) {
        add("orphan", id, "parentless node missing from roots");
      }
    } else {
      auto parent = tree.nodes.find(*block.parent_id);
      if (parent == tree.nodes.end()) {
        add("orphan", id, "parent " + *block.parent_id + " does not exist");
      } else {
        if (block.step_index != parent->second.step_index + 1) {
          add("index mismatch", id,
              "step_index " + std::to_string(block.step_index) + " under parent with step_index " +
                  std::to_string(parent->second.step_index));
        }
        auto kids = tree.children.find(*block.parent_id);
        if (kids == tree.children.end() ||
            std::find(kids->second.begin(), kids->second.end(), id) == kids->second.end()) {
          add("orphan", id, "not listed among the children of " + *block.parent_id);
        }
      }
    }

    if (listed[id] > 1) add("multiple parents", id, "listed " + std::to_string(listed[id]) + " times");

    try {
      const auto header = parse_block_header(block.source);
      if (header.step_index != block.step_index) {
        add("header mismatch", id,
            "header says step " + std::to_string(header.step_index) + ", node says " +
                std::to_string(block.step_index));
      }
    } catch (const Error& e) {
      add("header", id, e.what());
    }
  }

  for (const auto& [id, count] : listed) {
    if (!tree.nodes.contains(id)) add("orphan", id, "listed but not present in nodes");
  }

  // Cycle detection along parent pointers.
  for (const auto& [id, block] : tree.nodes) {
    std::set<std::string> seen{id};
    auto current = block.parent_id;
    while (current) {
      if (!seen.insert(*current).second) {
        add("cycle", id, "parent chain revisits " + *current);
        break;
      }
      auto it = tree.nodes.find(*current);
      if (it == tree.nodes.end()) break;
      current = it->second.parent_id;
    }
  }

  for (const auto& [leaf, code] : tree.terminal_leaves) {
    if (!tree.nodes.contains(leaf)) add("terminal", leaf, "terminal leaf is not a node");
  }
  return report;
}

void BlockTrace::validate() const {
  if (status != BlockStatus::kOk && !variables.empty()) {
    throw ValidationError("trace " + node_id + ": failed or skipped block carries variables");
  }
  if (status == BlockStatus::kSkipped && !stderr_excerpt.empty()) {
    throw ValidationError("trace " + node_id + ": skipped block carries an error excerpt");
  }
  if (wall_time_ms < 0) throw ValidationError("trace " + node_id + ": negative wall time");
}

std::string StepLabels::code() const {
  std::string out;
  out += relevance ? 'T' : 'F';
  out += logic ? 'T' : 'F';
  out += attribute ? 'T' : 'F';
  return out;
}

StepLabels StepLabels::from_code(std::string_view code) {
  const std::string c = trim(code);
  if (c.size() != 3) throw ValidationError("label code must have three letters: '" + c + "'");
  auto bit = [&](char ch) {
    switch (ch) {
      case 'T': case 't': return true;
      case 'F': case 'f': return false;
      default: throw ValidationError("label code letters must be T or F: '" + c + "'");
    }
  };
  return StepLabels{bit(c[0]), bit(c[1]), bit(c[2])};
}

ScorerVerdict ScorerVerdict::from_scores(double relevance, double logic, double attribute) {
  ScorerVerdict v;
  v.relevance_score = relevance;
  v.logic_score = logic;
  v.attribute_score = attribute;
  v.thresholded_labels = StepLabels{relevance > kLabelThreshold, logic > kLabelThreshold,
                                    attribute > kLabelThreshold};
  return v;
}

ScorerVerdict ScorerVerdict::from_labels(const StepLabels& labels) {
  return from_scores(labels.relevance ? 1.0 : 0.0, labels.logic ? 1.0 : 0.0,
                     labels.attribute ? 1.0 : 0.0);
}

std::string trim(std::string_view s) {
  auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
  std::size_t b = 0, e = s.size();
  while (b < e && is_space(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && is_space(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::vector<std::string> split_lines(std::string_view s) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start <= s.size()) {
    auto nl = s.find('\n', start);
    if (nl == std::string_view::npos) {
      lines.emplace_back(s.substr(start));
      break;
    }
    std::string line(s.substr(start, nl - start));
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
    start = nl + 1;
  }
  return lines;
}

std::string to_lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

bool starts_with_ci(std::string_view s, std::string_view prefix) {
  return s.size() >= prefix.size() && to_lower(s.substr(0, prefix.size())) == to_lower(prefix);
}

}  // namespace steplabel
