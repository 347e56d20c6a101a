#pragma once

#include <string>
#include <string_view>

namespace steplabel {

struct BlockHeader {
  int step_index = 0;
  std::string description;

  bool operator==(const BlockHeader&) const = default;
};

/// Parses the `# Step N: description` header of a generated code block.
///
/// The first non-blank line must be the header. Whitespace around `#`, after
/// `Step`, and after `:` is tolerated; the description is trimmed. Throws
/// MissingHeader when the first non-blank line is not a header and
/// MalformedIndex when N is not a positive integer.
BlockHeader parse_block_header(std::string_view source);

/// Canonical header line, without a trailing newline.
std::string render_block_header(int step_index, std::string_view description);

}  // namespace steplabel
