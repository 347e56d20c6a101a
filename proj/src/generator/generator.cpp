#include "steplabel/generator.hpp"

#include <deque>
#include <future>

#include "steplabel/block_header.hpp"
#include "steplabel/prompts.hpp"

namespace steplabel {

namespace {

// Parses a raw response into a block at `step_index`; throws on any header
// problem, including a header whose index disagrees with the position.
CodeBlock to_block(const std::string& response, int step_index, std::string node_id,
                   std::optional<std::string> parent_id) {
  std::string source = strip_code_fence(response);
  while (!source.empty() && (source.back() == '\n' || source.back() == ' ')) source.pop_back();
  // Drop leading blank lines so the header is the first line.
  auto first = source.find_first_not_of("\r\n");
  source = first == std::string::npos ? std::string{} : source.substr(first);
  const auto header = parse_block_header(source);
  if (header.step_index != step_index) {
    throw MalformedIndex("expected step " + std::to_string(step_index) + " but header says " +
                         std::to_string(header.step_index));
  }
  return CodeBlock{std::move(node_id), std::move(parent_id), step_index, header.description,
                   std::move(source)};
}

BackendRequest request_for(const VisualTask& task, std::string prompt,
                           const GenerationConfig& config) {
  auto req = BackendRequest::user(std::move(prompt), Role::kGenerator,
                                  task.visual_ref.empty() ? std::vector<std::string>{}
                                                          : std::vector<std::string>{task.visual_ref});
  req.max_output_chars = config.max_output_chars;
  return req;
}

}  // namespace

void GenerationConfig::validate() const {
  if (branch_factor < 1) throw ValidationError("branch factor must be at least 1");
  if (max_depth < 1) throw ValidationError("max_depth must be at least 1");
  if (termination_marker.empty()) throw ValidationError("termination marker must be non-empty");
}

std::string strip_code_fence(std::string_view response) {
  auto open = response.find("```");
  if (open == std::string_view::npos) return std::string(response);
  auto body_start = response.find('\n', open);
  if (body_start == std::string_view::npos) return std::string(response);
  ++body_start;
  auto close = response.find("```", body_start);
  std::string_view body = close == std::string_view::npos
                              ? response.substr(body_start)
                              : response.substr(body_start, close - body_start);
  // Keep anything after the fence (e.g. a termination marker).
  std::string out(body);
  if (close != std::string_view::npos) {
    std::string tail = trim(response.substr(close + 3));
    if (!tail.empty()) out += "\n" + tail;
  }
  return out;
}

std::string render_first_step_prompt(const VisualTask& task) {
  return prompt_template(prompt_names::kFirstStep).render({{"[QUESTION]", task.query}});
}

std::string render_next_step_prompt(const VisualTask& task, const std::vector<CodeBlock>& path) {
  std::string code;
  for (const auto& b : path) {
    if (!code.empty()) code += "\n";
    code += b.source;
  }
  return prompt_template(prompt_names::kNextStep)
      .render({{"[QUESTION]", task.query}, {"[All the code steps completed so far]", code}});
}

CodeBlock first_block(const VisualTask& task, Backend& backend, const GenerationConfig& config,
                      const std::string& node_id) {
  auto response = backend.complete(request_for(task, render_first_step_prompt(task), config));
  return to_block(response.text, 1, node_id, std::nullopt);
}

std::vector<Continuation> next_blocks(const VisualTask& task, const std::vector<CodeBlock>& path,
                                      Backend& backend, const GenerationConfig& config,
                                      std::vector<GenerationDiagnostic>* diagnostics) {
  if (path.empty()) throw ValidationError("next_blocks needs a non-empty path");
  config.validate();
  const auto& parent = path.back();
  const std::string prompt = render_next_step_prompt(task, path);

  std::vector<std::string> responses(static_cast<std::size_t>(config.branch_factor));
  if (backend.supports_concurrency() && config.branch_factor > 1) {
    std::vector<std::future<BackendResponse>> pending;
    for (int i = 0; i < config.branch_factor; ++i) {
      pending.push_back(std::async(std::launch::async, [&] {
        return backend.complete(request_for(task, prompt, config));
      }));
    }
    for (std::size_t i = 0; i < pending.size(); ++i) responses[i] = pending[i].get().text;
  } else {
    for (auto& r : responses) r = backend.complete(request_for(task, prompt, config)).text;
  }

  std::vector<Continuation> out;
  const int step_index = static_cast<int>(path.size()) + 1;
  for (std::size_t i = 0; i < responses.size(); ++i) {
    const auto& text = responses[i];
    const int ordinal = static_cast<int>(i) + 1;
    if (auto pos = text.find(config.termination_marker); pos != std::string::npos) {
      out.emplace_back(Terminal{trim(strip_code_fence(text.substr(0, pos)))});
      continue;
    }
    try {
      out.emplace_back(to_block(text, step_index, parent.node_id + "." + std::to_string(ordinal),
                                parent.node_id));
    } catch (const Error& e) {
      if (diagnostics) diagnostics->push_back({parent.node_id, ordinal, e.what()});
    }
  }
  return out;
}

GenerationResult expand_tree(const VisualTask& task, Backend& backend,
                             const GenerationConfig& config) {
  task.validate();
  config.validate();
  GenerationResult result;
  auto& tree = result.tree;
  tree.task_id = task.task_id;

  for (int i = 1; i <= config.branch_factor; ++i) {
    const std::string id = std::to_string(i);
    try {
      auto block = first_block(task, backend, config, id);
      tree.roots.push_back(id);
      tree.nodes.emplace(id, std::move(block));
    } catch (const MissingHeader& e) {
      result.diagnostics.push_back({"", i, e.what()});
    } catch (const MalformedIndex& e) {
      result.diagnostics.push_back({"", i, e.what()});
    }
  }
  if (tree.roots.empty()) throw EmptyTree("no level-1 block parsed for task " + task.task_id);

  std::deque<std::string> frontier(tree.roots.begin(), tree.roots.end());
  while (!frontier.empty()) {
    const std::string id = frontier.front();
    frontier.pop_front();
    const auto& node = tree.nodes.at(id);
    if (node.step_index >= config.max_depth) continue;

    const auto path = tree.blocks_on_path(id);
    const auto before = result.diagnostics.size();
    auto continuations = next_blocks(task, path, backend, config, &result.diagnostics);
    if (continuations.empty()) {
      result.diagnostics.push_back(
          {id, 0, "path pruned: none of " + std::to_string(result.diagnostics.size() - before) +
                      " responses parsed"});
      continue;
    }
    for (auto& c : continuations) {
      if (auto* t = std::get_if<Terminal>(&c)) {
        tree.terminal_leaves.emplace(id, t->final_code);
        continue;
      }
      auto& block = std::get<CodeBlock>(c);
      tree.children[id].push_back(block.node_id);
      frontier.push_back(block.node_id);
      tree.nodes.emplace(block.node_id, std::move(block));
    }
  }
  return result;
}

}  // namespace steplabel
