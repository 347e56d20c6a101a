#include "steplabel/ranker.hpp"

#include <cctype>

#include "steplabel/prompts.hpp"

namespace steplabel {

RankKey rank_key(const StepLabels& labels) {
  return RankKey{static_cast<int>(labels.relevance) + static_cast<int>(labels.logic) +
                     static_cast<int>(labels.attribute),
                 labels.relevance, labels.logic, labels.attribute};
}

Comparison compare(const StepLabels& a, const StepLabels& b) {
  const auto order = rank_key(a) <=> rank_key(b);
  if (order > 0) return Comparison::kAWins;
  if (order < 0) return Comparison::kBWins;
  return Comparison::kTie;
}

std::optional<std::string> parse_tiebreak_choice(std::string_view reply,
                                                 const std::vector<std::string>& tied) {
  auto is_word = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.'; };
  std::optional<std::string> found;
  for (const auto& id : tied) {
    std::size_t pos = 0;
    bool named = false;
    while ((pos = reply.find(id, pos)) != std::string_view::npos) {
      const bool left_ok = pos == 0 || !is_word(reply[pos - 1]);
      const std::size_t end = pos + id.size();
      // A trailing full stop still counts as a word boundary.
      const bool right_ok = end >= reply.size() || !is_word(reply[end]) ||
                            (reply[end] == '.' && (end + 1 >= reply.size() || !is_word(reply[end + 1])));
      if (left_ok && right_ok) {
        named = true;
        break;
      }
      pos = end;
    }
    if (named) {
      if (found) return std::nullopt;
      found = id;
    }
  }
  return found;
}

Selection select_best(const std::vector<Candidate>& candidates, Backend* tiebreak,
                      const std::string& question) {
  if (candidates.empty()) throw EmptyCandidates("select_best needs at least one candidate");

  RankKey best = rank_key(candidates.front().labels);
  for (const auto& c : candidates) best = std::max(best, rank_key(c.labels));

  Selection sel;
  std::vector<std::size_t> tied_index;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (rank_key(candidates[i].labels) == best) {
      tied_index.push_back(i);
      sel.tied.push_back(candidates[i].id);
    }
  }
  sel.index = tied_index.front();
  sel.id = candidates[sel.index].id;
  if (tied_index.size() == 1 || tiebreak == nullptr) return sel;

  std::string listing;
  for (auto i : tied_index) {
    if (!listing.empty()) listing += "\n\n";
    listing += "Candidate " + candidates[i].id + ":\n" +
               (candidates[i].text.empty() ? std::string("(no text)") : candidates[i].text);
  }
  try {
    const auto prompt = prompt_template(prompt_names::kTieBreak)
                            .render({{"[QUESTION]", question.empty() ? "(not given)" : question},
                                     {"[CANDIDATES]", listing}});
    const auto reply = tiebreak->complete(BackendRequest::user(prompt, Role::kTieBreak));
    if (auto choice = parse_tiebreak_choice(reply.text, sel.tied)) {
      for (auto i : tied_index) {
        if (candidates[i].id == *choice) {
          sel.index = i;
          sel.id = *choice;
          sel.tie_broken_by_backend = true;
        }
      }
    }
  } catch (const Error&) {
    // fall back to the lowest index
  }
  return sel;
}

}  // namespace steplabel
