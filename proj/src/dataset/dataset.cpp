#include "steplabel/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace steplabel {

RecordKey key_of(const StepRecord& r) { return {r.task_id, r.path_id, r.step_index}; }

namespace {

Json optional_text(const std::optional<std::string>& s) {
  return s ? Json(*s) : Json(nullptr);
}

std::optional<std::string> optional_text_from(const Json& j, const char* key) {
  const auto& v = j.at(key);
  if (v.is_null()) return std::nullopt;
  if (!v.is_string()) throw ValidationError(std::string(key) + " must be a string or null");
  return v.get<std::string>();
}

const std::string& required_text(const Json& j, const char* key) {
  if (!j.at(key).is_string()) throw ValidationError(std::string(key) + " must be a string");
  return j.at(key).get_ref<const std::string&>();
}

std::string read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

Json record_to_json(const StepRecord& r) {
  Json j;
  j["task_id"] = r.task_id;
  j["query"] = r.query;
  j["visual_ref"] = r.visual_ref;
  j["step_index"] = r.step_index;
  j["code"] = r.code;
  j["variables"] = to_json(r.variables);
  j["cot"] = r.cot;
  j["labels"] = to_json(r.labels);
  j["path_id"] = r.path_id;
  j["split"] = std::string(to_string(r.split));
  j["gold_answer"] = optional_text(r.gold_answer);
  j["final_answer"] = optional_text(r.final_answer);
  return j;
}

StepRecord record_from_json(const Json& j) {
  if (!j.is_object()) throw ValidationError("record must be an object");
  for (const char* f : kRecordFields) {
    if (!j.contains(f)) throw ValidationError(std::string("missing field '") + f + "'");
  }
  if (j.size() != std::size(kRecordFields)) throw ValidationError("unexpected extra fields");
  StepRecord r;
  r.task_id = required_text(j, "task_id");
  r.query = required_text(j, "query");
  r.visual_ref = required_text(j, "visual_ref");
  if (!j.at("step_index").is_number_integer()) throw ValidationError("step_index must be an integer");
  r.step_index = j.at("step_index").get<int>();
  r.code = required_text(j, "code");
  r.variables = variables_from_json(j.at("variables"));
  r.cot = required_text(j, "cot");
  r.labels = labels_from_json(j.at("labels"));
  r.path_id = required_text(j, "path_id");
  r.split = split_from_string(required_text(j, "split"));
  r.gold_answer = optional_text_from(j, "gold_answer");
  r.final_answer = optional_text_from(j, "final_answer");

  if (r.task_id.empty() || r.path_id.empty()) throw ValidationError("empty task_id or path_id");
  if (r.step_index < 1) throw ValidationError("step_index must be positive");
  if (!r.cot.starts_with(kCoTPrefix)) throw ValidationError("cot lacks the required prefix");
  if (!r.labels.lattice_ok()) {
    throw ValidationError("labels " + r.labels.code() + " break the relevance lattice");
  }
  return r;
}

std::string records_to_text(std::vector<StepRecord> records) {
  std::stable_sort(records.begin(), records.end(),
                   [](const StepRecord& a, const StepRecord& b) { return key_of(a) < key_of(b); });
  std::string out;
  for (const auto& r : records) {
    out += record_to_json(r).dump();
    out += '\n';
  }
  return out;
}

void emit_records(std::vector<StepRecord> records, const std::filesystem::path& path) {
  const std::string text = records_to_text(std::move(records));
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("write failed for " + path.string());
}

std::vector<StepRecord> load_records(const std::filesystem::path& path) {
  const std::string text = read_all(path);
  std::vector<StepRecord> records;
  std::set<RecordKey> seen;
  std::map<std::string, Split> split_of_task;
  std::size_t line_no = 0;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (trim(line).empty()) continue;
    StepRecord r;
    try {
      r = record_from_json(Json::parse(line));
    } catch (const Json::exception& e) {
      throw SchemaViolation(line_no, e.what());
    } catch (const Error& e) {
      throw SchemaViolation(line_no, e.what());
    }
    if (!seen.insert(key_of(r)).second) throw SchemaViolation(line_no, "duplicate record key");
    auto [it, fresh] = split_of_task.emplace(r.task_id, r.split);
    if (!fresh && it->second != r.split) {
      throw SchemaViolation(line_no, "task '" + r.task_id + "' appears in both splits");
    }
    records.push_back(std::move(r));
  }
  return records;
}

std::vector<Prediction> load_predictions(const std::filesystem::path& path) {
  std::vector<Prediction> out;
  std::size_t line_no = 0;
  for (const auto& j : read_jsonl(path)) {
    ++line_no;
    try {
      Prediction p;
      p.key.task_id = j.at("task_id").get<std::string>();
      p.key.path_id = j.at("path_id").get<std::string>();
      p.key.step_index = j.at("step_index").get<int>();
      p.labels = labels_from_json(j.at("labels"));
      if (j.contains("answer_correct") && !j.at("answer_correct").is_null()) {
        p.answer_correct = j.at("answer_correct").get<bool>();
      }
      out.push_back(std::move(p));
    } catch (const Json::exception& e) {
      throw SchemaViolation(line_no, e.what());
    } catch (const ValidationError& e) {
      throw SchemaViolation(line_no, e.what());
    }
  }
  return out;
}

namespace {

std::optional<double> ratio(const DimensionCount& c) {
  if (c.total == 0) return std::nullopt;
  return static_cast<double>(c.correct) / static_cast<double>(c.total);
}

Json optional_number(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

Json count_json(const DimensionCount& c) {
  Json j;
  j["correct"] = c.correct;
  j["total"] = c.total;
  return j;
}

}  // namespace

Json EvalReport::to_json() const {
  Json j;
  j["relevance"] = optional_number(relevance);
  j["logic"] = optional_number(logic);
  j["attribute"] = optional_number(attribute);
  j["dimension_average"] = optional_number(dimension_average);
  j["overall_correctness_accuracy"] = optional_number(overall_correctness_accuracy);
  Json counts;
  counts["relevance"] = count_json(relevance_count);
  counts["logic"] = count_json(logic_count);
  counts["attribute"] = count_json(attribute_count);
  counts["overall_correctness"] = count_json(overall_count);
  j["counts"] = std::move(counts);
  return j;
}

EvalReport evaluate(const std::vector<Prediction>& predictions,
                    const std::vector<StepRecord>& records) {
  std::map<RecordKey, const StepRecord*> by_key;
  for (const auto& r : records) by_key.emplace(key_of(r), &r);

  EvalReport rep;
  for (const auto& p : predictions) {
    auto it = by_key.find(p.key);
    if (it == by_key.end()) {
      throw UnknownKey("no record for (" + p.key.task_id + ", " + p.key.path_id + ", " +
                       std::to_string(p.key.step_index) + ")");
    }
    const StepLabels& gold = it->second->labels;
    auto tally = [](DimensionCount& c, bool hit) {
      ++c.total;
      if (hit) ++c.correct;
    };
    tally(rep.relevance_count, p.labels.relevance == gold.relevance);
    tally(rep.logic_count, p.labels.logic == gold.logic);
    tally(rep.attribute_count, p.labels.attribute == gold.attribute);
    if (p.answer_correct && it->second->gold_answer) {
      const auto& rec = *it->second;
      const bool truth = rec.final_answer &&
                         to_lower(trim(*rec.final_answer)) == to_lower(trim(*rec.gold_answer));
      tally(rep.overall_count, *p.answer_correct == truth);
    }
  }
  rep.relevance = ratio(rep.relevance_count);
  rep.logic = ratio(rep.logic_count);
  rep.attribute = ratio(rep.attribute_count);
  if (rep.relevance && rep.logic && rep.attribute) {
    rep.dimension_average = (*rep.relevance + *rep.logic + *rep.attribute) / 3.0;
  }
  rep.overall_correctness_accuracy = ratio(rep.overall_count);
  return rep;
}

}  // namespace steplabel
