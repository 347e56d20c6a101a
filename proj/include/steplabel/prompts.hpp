#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace steplabel {

/// A named prompt body with bracketed placeholder markers.
///
/// Only the declared placeholders are substituted; any other bracketed text in
/// the body is literal. Substitution is a single left-to-right pass, so values
/// containing marker text are never expanded again.
struct PromptTemplate {
  std::string name;
  std::string body;
  std::vector<std::string> placeholders;

  /// Throws Error when a declared placeholder has no value, or a value is
  /// supplied for a marker that is not declared or not present in the body.
  std::string render(const std::map<std::string, std::string>& values) const;
};

namespace prompt_names {
inline constexpr std::string_view kFirstStep = "first_step";
inline constexpr std::string_view kNextStep = "next_step";
inline constexpr std::string_view kCoTConvert = "cot_convert";
inline constexpr std::string_view kPropTest = "proptest";
inline constexpr std::string_view kDefineEvaluator = "define_evaluator";
inline constexpr std::string_view kTieBreak = "tiebreak";
}  // namespace prompt_names

/// Templates compiled into the binary from prompts/*.txt.
const PromptTemplate& prompt_template(std::string_view name);
std::vector<std::string> prompt_template_names();

/// Raw embedded resource (prompt file or guest runner) by file name.
std::string_view embedded_resource(std::string_view file_name);

}  // namespace steplabel
