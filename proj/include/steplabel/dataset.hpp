#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "steplabel/core.hpp"
#include "steplabel/json_io.hpp"

namespace steplabel {

class SchemaViolation : public Error {
 public:
  SchemaViolation(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class UnknownKey : public Error {
 public:
  using Error::Error;
};

/// Field order of an emitted record line.
inline constexpr const char* kRecordFields[] = {
    "task_id", "query", "visual_ref", "step_index", "code", "variables",
    "cot", "labels", "path_id", "split", "gold_answer", "final_answer"};

struct RecordKey {
  std::string task_id;
  std::string path_id;
  int step_index = 0;

  auto operator<=>(const RecordKey&) const = default;
};

RecordKey key_of(const StepRecord& r);

Json record_to_json(const StepRecord& r);
StepRecord record_from_json(const Json& j);  // throws ValidationError

/// Sorts by (task_id, path_id, step_index) and writes one record per line.
void emit_records(std::vector<StepRecord> records, const std::filesystem::path& path);
std::string records_to_text(std::vector<StepRecord> records);

/// Parses and revalidates every line. Throws SchemaViolation with the 1-based
/// line number.
std::vector<StepRecord> load_records(const std::filesystem::path& path);

struct Prediction {
  RecordKey key;
  StepLabels labels;
  std::optional<bool> answer_correct;
};

/// `{"task_id", "path_id", "step_index", "labels": {...}, "answer_correct"?}`
/// per line.
std::vector<Prediction> load_predictions(const std::filesystem::path& path);

struct DimensionCount {
  std::size_t correct = 0;
  std::size_t total = 0;
};

struct EvalReport {
  // Absent when the dimension had nothing to score.
  std::optional<double> relevance;
  std::optional<double> logic;
  std::optional<double> attribute;
  std::optional<double> dimension_average;
  std::optional<double> overall_correctness_accuracy;
  DimensionCount relevance_count, logic_count, attribute_count, overall_count;

  Json to_json() const;
};

/// Per-dimension accuracy of predicted labels against record labels, plus
/// their unweighted mean. Overall correctness counts only predictions that
/// carry answer_correct on records with a gold answer.
EvalReport evaluate(const std::vector<Prediction>& predictions,
                    const std::vector<StepRecord>& records);

}  // namespace steplabel
