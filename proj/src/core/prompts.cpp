#include "steplabel/prompts.hpp"

#include <algorithm>

#include "steplabel/core.hpp"

namespace steplabel {

namespace resources {
const std::map<std::string, std::string_view>& all();
}

namespace {

const std::map<std::string, std::vector<std::string>, std::less<>>& declared_placeholders() {
  static const std::map<std::string, std::vector<std::string>, std::less<>> table = {
      {"first_step", {"[QUESTION]"}},
      {"next_step", {"[QUESTION]", "[All the code steps completed so far]"}},
      {"cot_convert", {"[CODE_BLOCK]", "[Values of intermediate variables]"}},
      {"proptest", {"[QUERY]", "INSERT_QUERY_HERE"}},
      {"define_evaluator",
       {"[QUERY]", "[ORIGIN_CODE]", "[Values of intermediate variables]", "[FEEDBACK_V]",
        "[FEEDBACK_T]", "[FEEDBACK_C]"}},
      {"tiebreak", {"[QUESTION]", "[CANDIDATES]"}},
  };
  return table;
}

}  // namespace

std::string PromptTemplate::render(const std::map<std::string, std::string>& values) const {
  for (const auto& [marker, value] : values) {
    if (std::find(placeholders.begin(), placeholders.end(), marker) == placeholders.end()) {
      throw Error("prompt " + name + ": undeclared placeholder " + marker);
    }
    if (body.find(marker) == std::string::npos) {
      throw Error("prompt " + name + ": placeholder " + marker + " not present in body");
    }
  }
  for (const auto& marker : placeholders) {
    if (!values.contains(marker)) throw Error("prompt " + name + ": no value for " + marker);
  }

  std::string out;
  out.reserve(body.size());
  std::size_t i = 0;
  while (i < body.size()) {
    bool substituted = false;
    for (const auto& marker : placeholders) {
      if (body.compare(i, marker.size(), marker) == 0) {
        out += values.at(marker);
        i += marker.size();
        substituted = true;
        break;
      }
    }
    if (!substituted) out += body[i++];
  }
  return out;
}

std::string_view embedded_resource(std::string_view file_name) {
  const auto& table = resources::all();
  auto it = table.find(std::string(file_name));
  if (it == table.end()) throw Error("no embedded resource named " + std::string(file_name));
  return it->second;
}

const PromptTemplate& prompt_template(std::string_view name) {
  static const std::map<std::string, PromptTemplate, std::less<>> templates = [] {
    std::map<std::string, PromptTemplate, std::less<>> out;
    for (const auto& [n, markers] : declared_placeholders()) {
      PromptTemplate t{n, std::string(embedded_resource(n + ".txt")), markers};
      out.emplace(n, std::move(t));
    }
    return out;
  }();
  auto it = templates.find(name);
  if (it == templates.end()) throw Error("unknown prompt template " + std::string(name));
  return it->second;
}

std::vector<std::string> prompt_template_names() {
  std::vector<std::string> names;
  for (const auto& [n, markers] : declared_placeholders()) names.push_back(n);
  return names;
}

}  // namespace steplabel
