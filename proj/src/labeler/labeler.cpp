#include "steplabel/labeler.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <map>
#include <memory>
#include <regex>
#include <set>
#include <sstream>
#include <variant>

#include "steplabel/generator.hpp"
#include "steplabel/json_io.hpp"
#include "steplabel/prompts.hpp"

namespace steplabel {

namespace {

// ---------------------------------------------------------------------------
// Tokenizer for a single line of guest source.
// ---------------------------------------------------------------------------

enum class Tok { kName, kNumber, kString, kKeyword, kCompare, kLParen, kRParen, kAssign, kOther };

struct Token {
  Tok kind;
  std::string text;
};

bool is_keyword(std::string_view w) {
  static const std::set<std::string_view> kw{"and", "or", "not", "True", "False", "None", "is",
                                             "in"};
  return kw.contains(w);
}

// Returns nullopt when the line holds an unterminated string.
std::optional<std::vector<Token>> tokenize(std::string_view line) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < line.size()) {
    const char c = line[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
    } else if (c == '#') {
      break;
    } else if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t j = i;
      while (j < line.size() && (std::isalnum(static_cast<unsigned char>(line[j])) || line[j] == '_')) ++j;
      std::string w(line.substr(i, j - i));
      out.push_back({is_keyword(w) ? Tok::kKeyword : Tok::kName, w});
      i = j;
    } else if (std::isdigit(static_cast<unsigned char>(c)) ||
               (c == '.' && i + 1 < line.size() && std::isdigit(static_cast<unsigned char>(line[i + 1])))) {
      std::size_t j = i;
      while (j < line.size() && (std::isalnum(static_cast<unsigned char>(line[j])) || line[j] == '.' ||
                                 ((line[j] == '+' || line[j] == '-') && j > i &&
                                  (line[j - 1] == 'e' || line[j - 1] == 'E')))) {
        ++j;
      }
      out.push_back({Tok::kNumber, std::string(line.substr(i, j - i))});
      i = j;
    } else if (c == '\'' || c == '"') {
      std::string value;
      std::size_t j = i + 1;
      bool closed = false;
      while (j < line.size()) {
        if (line[j] == '\\' && j + 1 < line.size()) {
          const char e = line[j + 1];
          value += e == 'n' ? '\n' : e == 't' ? '\t' : e;
          j += 2;
        } else if (line[j] == c) {
          closed = true;
          ++j;
          break;
        } else {
          value += line[j++];
        }
      }
      if (!closed) return std::nullopt;
      out.push_back({Tok::kString, value});
      i = j;
    } else if (line.substr(i, 2) == "==" || line.substr(i, 2) == "!=" ||
               line.substr(i, 2) == "<=" || line.substr(i, 2) == ">=") {
      out.push_back({Tok::kCompare, std::string(line.substr(i, 2))});
      i += 2;
    } else if (c == '<' || c == '>') {
      out.push_back({Tok::kCompare, std::string(1, c)});
      ++i;
    } else if (c == '=') {
      out.push_back({Tok::kAssign, "="});
      ++i;
    } else if (c == '(') {
      out.push_back({Tok::kLParen, "("});
      ++i;
    } else if (c == ')') {
      out.push_back({Tok::kRParen, ")"});
      ++i;
    } else {
      out.push_back({Tok::kOther, std::string(1, c)});
      ++i;
    }
  }
  return out;
}

bool has_connective(const std::vector<Token>& toks) {
  return std::any_of(toks.begin(), toks.end(), [](const Token& t) {
    return t.kind == Tok::kCompare ||
           (t.kind == Tok::kKeyword && (t.text == "and" || t.text == "or" || t.text == "not"));
  });
}

bool is_top_level(std::string_view line) {
  return !line.empty() && !std::isspace(static_cast<unsigned char>(line.front()));
}

// ---------------------------------------------------------------------------
// Expression tree and evaluation.
// ---------------------------------------------------------------------------

using Value = std::variant<std::monostate, bool, double, std::string>;

struct Expr;
using ExprPtr = std::unique_ptr<Expr>;

struct Expr {
  enum class Kind { kName, kLiteral, kNot, kAnd, kOr, kCompare } kind;
  std::string name;
  Value literal;
  std::vector<ExprPtr> operands;
  std::vector<std::string> ops;  // comparison operators between operands
};

class Parser {
 public:
  explicit Parser(const std::vector<Token>& toks) : toks_(toks) {}

  ExprPtr parse() {
    auto e = parse_or();
    if (!e || pos_ != toks_.size()) return nullptr;
    return e;
  }

 private:
  const Token* peek() const { return pos_ < toks_.size() ? &toks_[pos_] : nullptr; }
  bool accept_keyword(std::string_view kw) {
    if (auto* t = peek(); t && t->kind == Tok::kKeyword && t->text == kw) {
      ++pos_;
      return true;
    }
    return false;
  }

  ExprPtr parse_or() {
    auto left = parse_and();
    if (!left) return nullptr;
    if (auto* t = peek(); !(t && t->kind == Tok::kKeyword && t->text == "or")) return left;
    auto node = std::make_unique<Expr>(Expr{Expr::Kind::kOr});
    node->operands.push_back(std::move(left));
    while (accept_keyword("or")) {
      auto right = parse_and();
      if (!right) return nullptr;
      node->operands.push_back(std::move(right));
    }
    return node;
  }

  ExprPtr parse_and() {
    auto left = parse_not();
    if (!left) return nullptr;
    if (auto* t = peek(); !(t && t->kind == Tok::kKeyword && t->text == "and")) return left;
    auto node = std::make_unique<Expr>(Expr{Expr::Kind::kAnd});
    node->operands.push_back(std::move(left));
    while (accept_keyword("and")) {
      auto right = parse_not();
      if (!right) return nullptr;
      node->operands.push_back(std::move(right));
    }
    return node;
  }

  ExprPtr parse_not() {
    if (accept_keyword("not")) {
      auto inner = parse_not();
      if (!inner) return nullptr;
      auto node = std::make_unique<Expr>(Expr{Expr::Kind::kNot});
      node->operands.push_back(std::move(inner));
      return node;
    }
    return parse_compare();
  }

  std::optional<std::string> compare_op() {
    auto* t = peek();
    if (!t) return std::nullopt;
    if (t->kind == Tok::kCompare) {
      ++pos_;
      return t->text;
    }
    if (t->kind == Tok::kKeyword && t->text == "is") {
      ++pos_;
      if (accept_keyword("not")) return "!=";
      return "==";
    }
    return std::nullopt;
  }

  ExprPtr parse_compare() {
    auto first = parse_atom();
    if (!first) return nullptr;
    auto op = compare_op();
    if (!op) return first;
    auto node = std::make_unique<Expr>(Expr{Expr::Kind::kCompare});
    node->operands.push_back(std::move(first));
    while (op) {
      auto next = parse_atom();
      if (!next) return nullptr;
      node->ops.push_back(*op);
      node->operands.push_back(std::move(next));
      op = compare_op();
    }
    return node;
  }

  ExprPtr parse_atom() {
    auto* t = peek();
    if (!t) return nullptr;
    auto literal = [](Value v) {
      auto e = std::make_unique<Expr>(Expr{Expr::Kind::kLiteral});
      e->literal = std::move(v);
      return e;
    };
    switch (t->kind) {
      case Tok::kName: {
        ++pos_;
        auto e = std::make_unique<Expr>(Expr{Expr::Kind::kName});
        e->name = t->text;
        return e;
      }
      case Tok::kNumber: {
        ++pos_;
        char* end = nullptr;
        double d = std::strtod(t->text.c_str(), &end);
        if (end != t->text.c_str() + t->text.size()) return nullptr;
        return literal(d);
      }
      case Tok::kString:
        ++pos_;
        return literal(t->text);
      case Tok::kKeyword:
        if (t->text == "True" || t->text == "False") {
          ++pos_;
          return literal(t->text == "True");
        }
        if (t->text == "None") {
          ++pos_;
          return literal(std::monostate{});
        }
        return nullptr;
      case Tok::kLParen: {
        ++pos_;
        auto inner = parse_or();
        if (!inner) return nullptr;
        if (auto* close = peek(); !close || close->kind != Tok::kRParen) return nullptr;
        ++pos_;
        return inner;
      }
      default:
        return nullptr;
    }
  }

  const std::vector<Token>& toks_;
  std::size_t pos_ = 0;
};

struct MissingOperand {
  std::string name;
};
struct NotReplayable {
  std::string why;
};

using Lookup = std::function<std::optional<Value>(const std::string&)>;

bool truthy(const Value& v) {
  return std::visit(
      [](const auto& x) -> bool {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, std::monostate>) return false;
        else if constexpr (std::is_same_v<T, bool>) return x;
        else if constexpr (std::is_same_v<T, double>) return x != 0.0;
        else return !x.empty();
      },
      v);
}

std::optional<double> as_number(const Value& v) {
  if (auto* b = std::get_if<bool>(&v)) return *b ? 1.0 : 0.0;
  if (auto* d = std::get_if<double>(&v)) return *d;
  return std::nullopt;
}

bool compare(const Value& a, const std::string& op, const Value& b) {
  auto na = as_number(a), nb = as_number(b);
  if (na && nb) {
    if (op == "==") return *na == *nb;
    if (op == "!=") return *na != *nb;
    if (op == "<") return *na < *nb;
    if (op == "<=") return *na <= *nb;
    if (op == ">") return *na > *nb;
    if (op == ">=") return *na >= *nb;
  }
  auto* sa = std::get_if<std::string>(&a);
  auto* sb = std::get_if<std::string>(&b);
  if (sa && sb) {
    if (op == "==") return *sa == *sb;
    if (op == "!=") return *sa != *sb;
    if (op == "<") return *sa < *sb;
    if (op == "<=") return *sa <= *sb;
    if (op == ">") return *sa > *sb;
    if (op == ">=") return *sa >= *sb;
  }
  const bool both_none = std::holds_alternative<std::monostate>(a) &&
                         std::holds_alternative<std::monostate>(b);
  if (op == "==") return both_none;
  if (op == "!=") return !both_none;
  throw NotReplayable{"ordering between incompatible values"};
}

Value evaluate(const Expr& e, const Lookup& lookup) {
  switch (e.kind) {
    case Expr::Kind::kLiteral:
      return e.literal;
    case Expr::Kind::kName: {
      auto v = lookup(e.name);
      if (!v) throw MissingOperand{e.name};
      return *v;
    }
    case Expr::Kind::kNot:
      return !truthy(evaluate(*e.operands[0], lookup));
    case Expr::Kind::kAnd: {
      Value v;
      for (const auto& op : e.operands) {
        v = evaluate(*op, lookup);
        if (!truthy(v)) return v;
      }
      return v;
    }
    case Expr::Kind::kOr: {
      Value v;
      for (const auto& op : e.operands) {
        v = evaluate(*op, lookup);
        if (truthy(v)) return v;
      }
      return v;
    }
    case Expr::Kind::kCompare: {
      Value left = evaluate(*e.operands[0], lookup);
      for (std::size_t i = 0; i < e.ops.size(); ++i) {
        Value right = evaluate(*e.operands[i + 1], lookup);
        if (!compare(left, e.ops[i], right)) return false;
        left = std::move(right);
      }
      return true;
    }
  }
  return std::monostate{};
}

std::optional<Value> captured_value(const VarValue& v) {
  switch (v.kind) {
    case VarKind::kBoolean:
      if (v.text == "true") return true;
      if (v.text == "false") return false;
      return std::nullopt;
    case VarKind::kNumber: {
      char* end = nullptr;
      double d = std::strtod(v.text.c_str(), &end);
      if (end != v.text.c_str() + v.text.size()) return std::nullopt;
      return d;
    }
    case VarKind::kText:
      return v.text;
    default:
      return std::nullopt;
  }
}

std::string value_text(const Value& v) {
  return std::visit(
      [](const auto& x) -> std::string {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, std::monostate>) return "None";
        else if constexpr (std::is_same_v<T, bool>) return x ? "true" : "false";
        else if constexpr (std::is_same_v<T, double>) {
          std::ostringstream os;
          os << x;
          return os.str();
        } else return Json(x).dump();
      },
      v);
}

bool same_value(const Value& replayed, const Value& captured) {
  if (std::holds_alternative<bool>(captured) && !std::holds_alternative<bool>(replayed)) {
    return false;
  }
  auto nr = as_number(replayed), nc = as_number(captured);
  if (nr && nc) return *nr == *nc;
  return replayed == captured;
}

const VarValue* find_earlier(const std::vector<BlockTrace>& earlier, const std::string& name) {
  for (auto it = earlier.rbegin(); it != earlier.rend(); ++it) {
    auto v = it->variables.find(name);
    if (v != it->variables.end()) return &v->second;
  }
  return nullptr;
}

// Names bound by a plain, augmented, tuple or for-loop assignment on one line.
std::vector<std::string> targets_on_line(const std::string& line) {
  static const std::regex assign(
      R"(^\s*\(?\s*([A-Za-z_]\w*(?:\s*,\s*[A-Za-z_]\w*)*)\s*,?\s*\)?\s*(?:[-+*/%]|//|\*\*)?=(?!=))");
  static const std::regex for_target(
      R"(^\s*for\s+\(?\s*([A-Za-z_]\w*(?:\s*,\s*[A-Za-z_]\w*)*)\s*\)?\s+in\b)");
  static const std::regex name(R"([A-Za-z_]\w*)");
  std::smatch m;
  if (!std::regex_search(line, m, assign) && !std::regex_search(line, m, for_target)) return {};
  std::vector<std::string> out;
  const std::string list = m[1].str();
  for (std::sregex_iterator it(list.begin(), list.end(), name), end; it != end; ++it) out.push_back(it->str());
  return out;
}

// Lines (0-based) on which each name is assigned anywhere in the block.
std::map<std::string, std::vector<int>> assignment_lines(std::string_view source) {
  std::map<std::string, std::vector<int>> out;
  const auto lines = split_lines(source);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    for (const auto& n : targets_on_line(lines[i])) out[n].push_back(static_cast<int>(i));
  }
  return out;
}

std::string normalize_option(std::string_view s) {
  std::string t;
  for (char c : to_lower(trim(s))) {
    if (std::isalnum(static_cast<unsigned char>(c)) || c == ' ' || c == '-') t += c;
  }
  t = trim(t);
  for (std::string_view article : {"the ", "a ", "an "}) {
    if (t.rfind(article, 0) == 0) {
      t = trim(t.substr(article.size()));
      break;
    }
  }
  return t;
}

std::vector<std::string> words(std::string_view s) {
  std::vector<std::string> out;
  std::istringstream in{std::string(s)};
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------

bool LogicCheckReport::verdict() const {
  return std::all_of(checks_run.begin(), checks_run.end(),
                     [](const LogicCheck& c) { return c.passed; });
}

bool AttributeCheckReport::verdict() const {
  return std::all_of(calls_checked.begin(), calls_checked.end(),
                     [](const AttributeCheck& c) { return c.verifier_verdict; });
}

bool label_relevance(const BlockTrace& trace) { return trace.status == BlockStatus::kOk; }

std::vector<ConnectiveAssignment> find_connective_assignments(std::string_view source) {
  std::vector<ConnectiveAssignment> out;
  const auto lines = split_lines(source);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto& line = lines[i];
    if (!is_top_level(line)) continue;
    auto toks = tokenize(line);
    if (!toks || toks->size() < 3) continue;
    if ((*toks)[0].kind != Tok::kName || (*toks)[1].kind != Tok::kAssign) continue;
    std::vector<Token> rhs(toks->begin() + 2, toks->end());
    if (!has_connective(rhs)) continue;
    // Expression text after the first '=' sign, without any trailing comment.
    auto eq = line.find('=');
    std::string expr = line.substr(eq + 1);
    out.push_back({(*toks)[0].text, trim(expr), static_cast<int>(i), true});
  }
  // Mark superseded assignments: only the last top-level binding of a target
  // can be compared with the end-of-block snapshot.
  const auto lines_by_name = assignment_lines(source);
  for (auto& a : out) {
    const auto& at = lines_by_name.at(a.target);
    a.last_assignment = at.back() == a.line;
  }
  return out;
}

std::vector<std::string> assigned_names(std::string_view source) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& line : split_lines(source)) {
    for (auto& n : targets_on_line(line)) {
      if (seen.insert(n).second) out.push_back(std::move(n));
    }
  }
  return out;
}

bool is_boolean_query(std::string_view query) {
  static const std::set<std::string> aux{
      "is",    "are",   "was",    "were",  "do",     "does",   "did",     "can",
      "could", "has",   "have",   "had",   "will",   "would",  "should",  "shall",
      "may",   "might", "must",   "isn't", "aren't", "doesn't", "don't",  "didn't",
      "wasn't", "weren't", "can't", "hasn't", "haven't"};
  const auto w = words(query);
  if (w.empty()) return false;
  return aux.contains(to_lower(w.front())) && query_options(query).empty();
}

std::vector<std::string> query_options(std::string_view query) {
  std::string q = trim(query);
  while (!q.empty() && (q.back() == '?' || q.back() == '.')) q.pop_back();
  const std::string lower = to_lower(q);
  const auto pos = lower.rfind(" or ");
  if (pos == std::string::npos) return {};
  std::string right = trim(q.substr(pos + 4));
  std::string left = q.substr(0, pos);
  if (auto comma = left.rfind(','); comma != std::string::npos) {
    left = trim(left.substr(comma + 1));
  } else {
    const auto lw = words(left);
    const auto n = std::max<std::size_t>(1, words(right).size());
    std::string picked;
    for (std::size_t i = lw.size() > n ? lw.size() - n : 0; i < lw.size(); ++i) {
      if (!picked.empty()) picked += ' ';
      picked += lw[i];
    }
    left = picked;
  }
  if (left.empty() || right.empty()) return {};
  return {left, right};
}

bool parse_verifier_verdict(std::string_view reply) {
  const std::string r = to_lower(trim(reply));
  for (std::string_view neg : {"incorrect", "not correct", "no", "false", "wrong"}) {
    if (r.rfind(neg, 0) == 0) return false;
  }
  for (std::string_view pos : {"correct", "yes", "true", "right"}) {
    if (r.rfind(pos, 0) == 0) return true;
  }
  if (r.find("incorrect") != std::string::npos || r.find("not correct") != std::string::npos) {
    return false;
  }
  return r.find("correct") != std::string::npos;
}

LogicCheckReport label_logic(const VisualTask& task, const CodeBlock& block,
                             const BlockTrace& trace, const std::vector<BlockTrace>& earlier,
                             const PropTestOptions& proptest,
                             const std::vector<CodeBlock>& earlier_blocks) {
  LogicCheckReport report;
  const auto lines_by_name = assignment_lines(block.source);

  for (const auto& a : find_connective_assignments(block.source)) {
    const std::string check = "truth-table line " + std::to_string(a.line + 1) + ": " + a.target;
    if (!a.last_assignment) {
      report.checks_run.push_back({check, true, "skipped: target rebound later in block"});
      continue;
    }
    auto toks = tokenize(split_lines(block.source)[a.line]);
    std::vector<Token> rhs(toks->begin() + 2, toks->end());
    auto expr = Parser(rhs).parse();
    if (!expr) {
      report.checks_run.push_back({check, true, "skipped: expression not replayable"});
      continue;
    }

    auto target = trace.variables.find(a.target);
    std::optional<Value> captured;
    if (target != trace.variables.end()) captured = captured_value(target->second);
    if (!captured) {
      report.checks_run.push_back({check, true, "skipped: operand missing"});
      continue;
    }

    auto assigned_before = [&](const std::string& name, int line) {
      auto it = lines_by_name.find(name);
      if (it == lines_by_name.end()) return false;
      return std::any_of(it->second.begin(), it->second.end(), [&](int l) { return l < line; });
    };
    auto assigned_after = [&](const std::string& name, int line) {
      auto it = lines_by_name.find(name);
      if (it == lines_by_name.end()) return false;
      return std::any_of(it->second.begin(), it->second.end(), [&](int l) { return l > line; });
    };

    std::optional<std::string> unusable;
    Lookup lookup = [&](const std::string& name) -> std::optional<Value> {
      if (name != a.target && assigned_after(name, a.line)) {
        unusable = name;
        return std::nullopt;
      }
      const VarValue* v = nullptr;
      if (name != a.target && assigned_before(name, a.line)) {
        auto it = trace.variables.find(name);
        if (it != trace.variables.end()) v = &it->second;
      } else {
        v = find_earlier(earlier, name);
        if (!v && name != a.target) {
          auto it = trace.variables.find(name);
          if (it != trace.variables.end()) v = &it->second;
        }
      }
      if (!v) return std::nullopt;
      return captured_value(*v);
    };

    try {
      const Value replayed = evaluate(*expr, lookup);
      const bool match = same_value(replayed, *captured);
      report.checks_run.push_back(
          {check, match,
           match ? "replayed " + value_text(replayed)
                 : "replayed " + value_text(replayed) + " but captured " + value_text(*captured)});
    } catch (const MissingOperand& m) {
      report.checks_run.push_back({check, true, "skipped: operand missing (" + m.name + ")"});
    } catch (const NotReplayable& n) {
      report.checks_run.push_back({check, true, "skipped: " + n.why});
    }
  }

  // Answer-format checks.
  const auto options = query_options(task.query);
  const bool boolean_query = is_boolean_query(task.query);
  for (const auto& [name, value] : trace.variables) {
    if (!is_answer_variable(name)) continue;
    if (boolean_query) {
      const auto v = to_lower(trim(value.text));
      const bool ok = value.kind == VarKind::kText && (v == "yes" || v == "no");
      report.checks_run.push_back({"format yes/no: " + name, ok,
                                   ok ? "answer is " + v : "expected yes or no, got " + value.text});
    } else if (!options.empty()) {
      const auto v = normalize_option(value.text);
      const bool ok = std::any_of(options.begin(), options.end(),
                                  [&](const std::string& o) { return normalize_option(o) == v; });
      std::string listed;
      for (const auto& o : options) listed += (listed.empty() ? "" : " | ") + o;
      report.checks_run.push_back({"format options: " + name, ok,
                                   (ok ? "answer among " : "answer not among ") + listed});
    }
  }

  if (proptest.enabled && proptest.backend && proptest.stubs) {
    LogicCheck check{"proptest", false, ""};
    try {
      const auto prompt = prompt_template(prompt_names::kPropTest)
                              .render({{"[QUERY]", task.query}, {"INSERT_QUERY_HERE", task.query}});
      auto response = proptest.backend->complete(BackendRequest::user(prompt, Role::kVerifier));
      std::string answer_name = "None";
      for (const auto* vars : {&trace.variables}) {
        for (const auto& [name, v] : *vars) {
          if (is_answer_variable(name)) answer_name = name;
        }
      }
      if (answer_name == "None") {
        for (auto it = earlier.rbegin(); it != earlier.rend() && answer_name == "None"; ++it) {
          for (const auto& [name, v] : it->variables) {
            if (is_answer_variable(name)) answer_name = name;
          }
        }
      }
      CodeBlock harness;
      harness.node_id = block.node_id + ".proptest";
      harness.source = "def solve_query(image):\n    return " + answer_name + "\n\n" +
                       strip_code_fence(response.text) + "\n\nexecute_test(image)\n";
      std::vector<CodeBlock> program = earlier_blocks;
      program.push_back(block);
      program.push_back(harness);
      const auto run = run_path(program, task, *proptest.stubs, proptest.policy);
      const auto& last = run.traces.back();
      check.passed = last.ok();
      check.detail = last.ok() ? "generated tests passed"
                               : "generated tests failed: " + last.stderr_excerpt;
    } catch (const std::exception& e) {
      check.passed = false;
      check.detail = std::string("proptest error: ") + e.what();
    }
    report.checks_run.push_back(std::move(check));
  }
  return report;
}

AttributeCheckReport label_attribute(const VisualTask& task, const CodeBlock& block,
                                     const BlockTrace& trace, Backend* verifier) {
  AttributeCheckReport report;
  const auto& tmpl = prompt_template(prompt_names::kDefineEvaluator);
  const std::string vars = variables_as_dict_text(trace.variables);
  for (const auto& call : trace.calls) {
    AttributeCheck check{call.function, call.args_text, call.return_text, false, ""};
    if (!verifier) {
      check.verifier_verdict = true;
      check.detail = "not verified: no verifier configured";
      report.calls_checked.push_back(std::move(check));
      continue;
    }
    const std::string prompt = tmpl.render({
        {"[QUERY]", task.query},
        {"[ORIGIN_CODE]", block.source},
        {"[Values of intermediate variables]", vars},
        {"[FEEDBACK_V]", call.function + "(" + call.args_text + ") returned " + call.return_text},
        {"[FEEDBACK_T]", "Step " + std::to_string(block.step_index) + ": " + block.description},
        {"[FEEDBACK_C]", "The code block compiled and executed without errors."},
    });
    try {
      auto reply = verifier->complete(BackendRequest::user(
          prompt, Role::kVerifier,
          task.visual_ref.empty() ? std::vector<std::string>{} : std::vector<std::string>{task.visual_ref}));
      check.verifier_verdict = parse_verifier_verdict(reply.text);
      check.detail = trim(reply.text);
    } catch (const std::exception& e) {
      check.verifier_verdict = false;
      check.detail = std::string("verifier failure: ") + e.what();
    }
    report.calls_checked.push_back(std::move(check));
  }
  return report;
}

StepLabeling label_step(const VisualTask& task, const CodeBlock& block, const BlockTrace& trace,
                        const std::vector<BlockTrace>& earlier, Backend* verifier,
                        const PropTestOptions& proptest,
                        const std::vector<CodeBlock>& earlier_blocks) {
  StepLabeling out;
  out.labels.relevance = label_relevance(trace);
  if (!out.labels.relevance) return out;
  out.logic = label_logic(task, block, trace, earlier, proptest, earlier_blocks);
  out.attribute = label_attribute(task, block, trace, verifier);
  out.labels.logic = out.logic->verdict();
  out.labels.attribute = out.attribute->verdict();
  return out;
}

}  // namespace steplabel
