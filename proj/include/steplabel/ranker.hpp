#pragma once

#include <compare>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "steplabel/backend.hpp"
#include "steplabel/core.hpp"

namespace steplabel {

class EmptyCandidates : public Error {
 public:
  using Error::Error;
};

/// Ordering key for a label triple: more true labels first, then relevance,
/// logic and attribute in that priority, true above false.
struct RankKey {
  int count_true = 0;
  bool relevance = false;
  bool logic = false;
  bool attribute = false;

  auto operator<=>(const RankKey&) const = default;
};

RankKey rank_key(const StepLabels& labels);

enum class Comparison { kAWins, kBWins, kTie };

Comparison compare(const StepLabels& a, const StepLabels& b);

struct Candidate {
  std::string id;
  StepLabels labels;
  std::string text;  // shown to the tie-break backend; optional
};

struct Selection {
  std::string id;
  std::size_t index = 0;
  std::vector<std::string> tied;  // ids sharing the maximal key
  bool tie_broken_by_backend = false;
};

/// Picks the maximal candidate. Ties go to the backend when one is given and
/// it names a tied candidate; otherwise to the lowest list index.
Selection select_best(const std::vector<Candidate>& candidates, Backend* tiebreak = nullptr,
                      const std::string& question = "");

/// Picks a candidate id out of a tie-break reply. Returns nullopt unless
/// exactly one of `tied` is named.
std::optional<std::string> parse_tiebreak_choice(std::string_view reply,
                                                 const std::vector<std::string>& tied);

}  // namespace steplabel
