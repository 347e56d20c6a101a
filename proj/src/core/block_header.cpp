#include "steplabel/block_header.hpp"

#include <charconv>
#include <regex>

#include "steplabel/core.hpp"

namespace steplabel {

namespace {

const std::regex& header_shape() {
  static const std::regex re(R"(^\s*#\s*[Ss]tep\b(.*)$)");
  return re;
}

const std::regex& header_body() {
  static const std::regex re(R"(^\s*([^:\s]*)\s*:(.*)$)");
  return re;
}

}  // namespace

BlockHeader parse_block_header(std::string_view source) {
  if (trim(source).empty()) throw MissingHeader("empty code block");

  std::string first;
  for (const auto& line : split_lines(source)) {
    if (!trim(line).empty()) {
      first = line;
      break;
    }
  }

  std::smatch shape;
  if (!std::regex_match(first, shape, header_shape())) {
    throw MissingHeader("first line is not a '# Step N: ...' header: " + first);
  }
  const std::string rest = shape[1].str();
  std::smatch body;
  if (!std::regex_match(rest, body, header_body())) {
    throw MissingHeader("header lacks 'N:' after 'Step': " + first);
  }

  const std::string index_text = body[1].str();
  int index = 0;
  const auto* begin = index_text.data();
  const auto* end = begin + index_text.size();
  auto [ptr, ec] = std::from_chars(begin, end, index);
  if (index_text.empty() || ec != std::errc{} || ptr != end || index < 1) {
    throw MalformedIndex("step index is not a positive integer: '" + index_text + "'");
  }
  return BlockHeader{index, trim(body[2].str())};
}

std::string render_block_header(int step_index, std::string_view description) {
  return "# Step " + std::to_string(step_index) + ": " + std::string(description);
}

}  // namespace steplabel
