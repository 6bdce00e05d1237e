#include "mpo/eval.hpp"

#include <omp.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <regex>
#include <sstream>
#include <unordered_set>

#include "mpo/critic.hpp"
#include "mpo/text.hpp"

namespace mpo {

namespace {

std::optional<char> normalize_label(std::string_view raw) {
  const auto t = text::trim(raw);
  if (t.size() == 1 && std::isalpha(static_cast<unsigned char>(t[0]))) {
    return static_cast<char>(std::toupper(static_cast<unsigned char>(t[0])));
  }
  if (!t.empty() && t.size() <= 2 && std::all_of(t.begin(), t.end(), [](char c) { return std::isdigit(c); })) {
    const int n = std::stoi(std::string(t));
    if (n >= 1 && n <= 26) return static_cast<char>('A' + n - 1);
  }
  return std::nullopt;
}

Error format_error(const std::string& where, const std::string& what) {
  return Error(ErrorCode::FormatError, where + ": " + what);
}

std::string json_id(const nlohmann::json& j) {
  if (j.is_string()) return j.get<std::string>();
  if (j.is_number_integer()) return std::to_string(j.get<long long>());
  throw Error(ErrorCode::FormatError, "id must be a string or integer");
}

void finish_choices(McqItem& item, std::vector<Choice> choices, const std::string& where) {
  std::sort(choices.begin(), choices.end(), [](const Choice& a, const Choice& b) { return a.letter < b.letter; });
  item.choices = std::move(choices);
  try {
    item.validate();
  } catch (const Error& e) {
    throw Error(e.code(), where + ": " + e.what());
  }
}

char parse_answer(const nlohmann::json& j, const std::string& where) {
  if (j.is_null()) throw Error(ErrorCode::MissingAnswerKey, where + ": no answer key");
  const auto s = j.is_string() ? j.get<std::string>() : j.is_number_integer() ? std::to_string(j.get<int>()) : "";
  const auto letter = normalize_label(s);
  if (!letter) throw Error(ErrorCode::MissingAnswerKey, where + ": unusable answer key '" + s + "'");
  return *letter;
}

McqItem parse_generic_line(const nlohmann::json& j, const std::string& where) {
  McqItem item;
  if (!j.contains("id")) throw format_error(where, "missing id");
  item.id = json_id(j["id"]);
  if (!j.contains("question") || !j["question"].is_string()) throw format_error(where, "missing question");
  item.question = j["question"].get<std::string>();
  if (!j.contains("answer")) throw Error(ErrorCode::MissingAnswerKey, where + ": no answer key");
  item.answer_key = parse_answer(j["answer"], where);
  item.subject = j.value("subject", "");

  std::vector<Choice> choices;
  const auto& cj = j.contains("choices") ? j["choices"] : nlohmann::json();
  if (cj.is_object()) {
    for (const auto& [key, value] : cj.items()) {
      const auto letter = normalize_label(key);
      if (!letter || !value.is_string()) throw format_error(where, "bad choice '" + key + "'");
      choices.push_back({*letter, value.get<std::string>()});
    }
  } else if (cj.is_array()) {
    for (std::size_t i = 0; i < cj.size(); ++i) {
      if (!cj[i].is_string()) throw format_error(where, "choices must be strings");
      choices.push_back({static_cast<char>('A' + i), cj[i].get<std::string>()});
    }
  } else {
    throw format_error(where, "missing choices");
  }
  finish_choices(item, std::move(choices), where);
  return item;
}

McqItem parse_arc_line(const nlohmann::json& j, const std::string& where) {
  McqItem item;
  if (!j.contains("id")) throw format_error(where, "missing id");
  item.id = json_id(j["id"]);
  if (!j.contains("question") || !j["question"].is_object()) throw format_error(where, "missing question object");
  const auto& q = j["question"];
  if (!q.contains("stem") || !q["stem"].is_string()) throw format_error(where, "missing question.stem");
  item.question = q["stem"].get<std::string>();
  if (!q.contains("choices") || !q["choices"].is_array()) throw format_error(where, "missing question.choices");
  std::vector<Choice> choices;
  for (const auto& c : q["choices"]) {
    if (!c.contains("label") || !c.contains("text") || !c["text"].is_string()) {
      throw format_error(where, "choice needs label and text");
    }
    const auto raw = c["label"].is_string() ? c["label"].get<std::string>() : c["label"].dump();
    const auto letter = normalize_label(raw);
    if (!letter) throw format_error(where, "bad choice label '" + raw + "'");
    choices.push_back({*letter, c["text"].get<std::string>()});
  }
  if (!j.contains("answerKey")) throw Error(ErrorCode::MissingAnswerKey, where + ": no answerKey");
  item.answer_key = parse_answer(j["answerKey"], where);
  finish_choices(item, std::move(choices), where);
  return item;
}

struct CsvRow {
  std::size_t line = 0;
  std::vector<std::string> fields;
};

// RFC 4180: quoted fields may hold commas, doubled quotes and newlines.
std::vector<CsvRow> parse_csv(std::string_view s) {
  std::vector<CsvRow> rows;
  CsvRow row;
  std::string field;
  bool quoted = false, field_started = false, row_has_data = false;
  std::size_t line = 1;
  row.line = 1;
  auto end_field = [&] {
    row.fields.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_row = [&] {
    if (row_has_data || field_started || !field.empty() || !row.fields.empty()) {
      end_field();
      rows.push_back(std::move(row));
    }
    row = CsvRow{};
    row_has_data = false;
  };
  for (std::size_t i = 0; i < s.size(); ++i) {
    const char c = s[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < s.size() && s[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        if (c == '\n') ++line;
        field += c;
      }
      continue;
    }
    if (row.fields.empty() && !field_started && field.empty() && !row_has_data) row.line = line;
    if (c == '"' && field.empty()) {
      quoted = true;
      field_started = row_has_data = true;
    } else if (c == ',') {
      end_field();
      row_has_data = true;
    } else if (c == '\n') {
      end_row();
      ++line;
    } else if (c == '\r') {
      // CRLF
    } else {
      field += c;
      field_started = row_has_data = true;
    }
  }
  if (quoted) throw Error(ErrorCode::FormatError, "row " + std::to_string(row.line) + ": unterminated quote");
  end_row();
  return rows;
}

std::string strip_split_suffix(std::string stem) {
  for (const char* suffix : {"_test", "_dev", "_val", "_train"}) {
    if (stem.ends_with(suffix)) return stem.substr(0, stem.size() - std::strlen(suffix));
  }
  return stem;
}

Split split_from_name(const std::string& stem) {
  const auto lower = text::to_lower_ascii(stem);
  if (lower.find("train") != std::string::npos || lower.ends_with("_dev") || lower.ends_with("_val") ||
      lower.find("-dev") != std::string::npos) {
    return Split::Train;
  }
  return Split::Test;
}

}  // namespace

std::set<char> McqItem::valid_letters() const {
  std::set<char> out;
  for (const auto& c : choices) out.insert(c.letter);
  return out;
}

void McqItem::validate() const {
  if (choices.size() < 2 || choices.size() > 26) {
    throw Error(ErrorCode::FormatError, "item " + id + ": needs 2-26 choices, has " + std::to_string(choices.size()));
  }
  for (std::size_t i = 0; i < choices.size(); ++i) {
    if (choices[i].letter != static_cast<char>('A' + i)) {
      throw Error(ErrorCode::FormatError, "item " + id + ": choice letters must run consecutively from A");
    }
    if (text::is_blank(choices[i].text)) {
      throw Error(ErrorCode::FormatError, "item " + id + ": choice " + choices[i].letter + " is empty");
    }
  }
  if (!valid_letters().contains(answer_key)) {
    throw Error(ErrorCode::MissingAnswerKey, "item " + id + ": answer key " + answer_key + " is not a choice");
  }
}

std::string_view split_name(Split split) { return split == Split::Train ? "train" : "test"; }

std::string Dataset::item_set_digest() const {
  std::vector<std::string> ids;
  ids.reserve(items.size());
  for (const auto& it : items) ids.push_back(it.id);
  std::sort(ids.begin(), ids.end());
  return text::sha256_hex(text::join_lines(ids));
}

std::optional<DatasetFormat> parse_dataset_format(std::string_view name) {
  if (name == "arc_jsonl") return DatasetFormat::ArcJsonl;
  if (name == "mmlu_csv") return DatasetFormat::MmluCsv;
  if (name == "generic_jsonl") return DatasetFormat::GenericJsonl;
  return std::nullopt;
}

Dataset parse_dataset(std::string_view content, DatasetFormat format, std::string name, Split split,
                      std::string subject) {
  Dataset ds{std::move(name), split, {}};
  if (format == DatasetFormat::MmluCsv) {
    for (const auto& row : parse_csv(content)) {
      const auto where = "row at line " + std::to_string(row.line);
      if (row.fields.size() != 6) {
        throw format_error(where, "expected 6 columns, found " + std::to_string(row.fields.size()));
      }
      McqItem item;
      item.id = (subject.empty() ? ds.name : subject) + "-" + std::to_string(ds.items.size());
      item.question = row.fields[0];
      item.subject = subject;
      std::vector<Choice> choices;
      for (int c = 0; c < 4; ++c) choices.push_back({static_cast<char>('A' + c), row.fields[1 + c]});
      if (text::is_blank(row.fields[5])) throw Error(ErrorCode::MissingAnswerKey, where + ": no answer key");
      item.answer_key = parse_answer(nlohmann::json(row.fields[5]), where);
      finish_choices(item, std::move(choices), where);
      ds.items.push_back(std::move(item));
    }
  } else {
    std::size_t n = 0;
    for (const auto& line : text::split_lines(content)) {
      ++n;
      if (text::is_blank(line)) continue;
      const auto where = "line " + std::to_string(n);
      const auto j = nlohmann::json::parse(line, nullptr, false);
      if (j.is_discarded() || !j.is_object()) throw format_error(where, "not a JSON object");
      try {
        ds.items.push_back(format == DatasetFormat::ArcJsonl ? parse_arc_line(j, where) : parse_generic_line(j, where));
      } catch (const nlohmann::json::exception& e) {
        throw format_error(where, e.what());
      }
    }
  }

  std::unordered_set<std::string> ids;
  for (const auto& item : ds.items) {
    if (!ids.insert(item.id).second) throw Error(ErrorCode::DuplicateId, "duplicate item id '" + item.id + "'");
  }
  if (ds.items.empty()) spdlog::warn("dataset {} has no items", ds.name);
  return ds;
}

Dataset load_dataset(const std::string& path, DatasetFormat format) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::IoError, "cannot read dataset " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  const auto stem = std::filesystem::path(path).stem().string();
  const auto subject = format == DatasetFormat::MmluCsv ? strip_split_suffix(stem) : std::string{};
  return parse_dataset(ss.str(), format, stem, split_from_name(stem), subject);
}

Dataset subsample(const Dataset& dataset, std::size_t limit, std::uint64_t seed) {
  if (limit >= dataset.items.size()) return dataset;
  // Hand-rolled Fisher-Yates over mt19937_64: the std distributions are not
  // specified bit-for-bit across standard libraries.
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> idx(dataset.items.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  for (std::size_t i = 0; i < limit; ++i) {
    const auto j = i + static_cast<std::size_t>(rng() % (idx.size() - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(limit);
  std::sort(idx.begin(), idx.end());
  Dataset out{dataset.name, dataset.split, {}};
  for (auto i : idx) out.items.push_back(dataset.items[i]);
  return out;
}

std::string pose_question(const PromptState& state, const McqItem& item) {
  std::string out = render_prompt(state);
  out += '\n';
  out += item.question;
  out += '\n';
  for (const auto& c : item.choices) {
    out += c.letter;
    out += ". ";
    out += c.text;
    out += '\n';
  }
  out += templates::kAnswerElicitation;
  out += '\n';
  return out;
}

// ---- answer extraction ------------------------------------------------------

std::optional<char> extract_answer(std::string_view response, const std::set<char>& valid) {
  auto accept = [&](char c) -> std::optional<char> {
    const auto up = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    if (valid.contains(up)) return up;
    return std::nullopt;
  };

  // 1. "Answer: B" on some line.
  static const std::regex kAnswerLine(
      R"(^[^A-Za-z0-9]*(?:final\s+|correct\s+)?answer\b(?:\s*is\b)?\s*[:=\-]?[\s\*_"'\(\[]*([A-Za-z])(?![A-Za-z0-9]))",
      std::regex::icase | std::regex::ECMAScript);
  for (const auto& line : text::split_lines(response)) {
    std::smatch m;
    if (std::regex_search(line, m, kAnswerLine)) {
      if (const auto c = accept(m[1].str()[0])) return c;
    }
  }

  // 2. The whole response is a single letter.
  auto t = text::trim(response);
  while (!t.empty() && std::string_view("([*\"'").find(t.front()) != std::string_view::npos) t.remove_prefix(1);
  while (!t.empty() && std::string_view(")]*\"'.,;:!").find(t.back()) != std::string_view::npos) t.remove_suffix(1);
  if (t.size() == 1) {
    if (const auto c = accept(t[0])) return c;
  }

  // 3. First standalone uppercase valid letter in the first line.
  const auto lines = text::split_lines(text::trim(response));
  if (lines.empty()) return std::nullopt;
  const std::string& first = lines.front();
  auto is_word = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; };
  for (std::size_t i = 0; i < first.size(); ++i) {
    const char c = first[i];
    if (c < 'A' || c > 'Z' || !valid.contains(c)) continue;
    if (i > 0 && is_word(first[i - 1])) continue;
    if (i + 1 < first.size() && is_word(first[i + 1])) continue;
    return c;
  }
  return std::nullopt;
}

// ---- evaluation -------------------------------------------------------------

namespace {

ItemRecord evaluate_item(const PromptState& state, const McqItem& item, ChatBackend& solver,
                         const GenerationParams& params) noexcept {
  ItemRecord rec;
  rec.id = item.id;
  rec.gold = item.answer_key;
  rec.subject = item.subject;
  try {
    const ChatTurn turn{Role::User, pose_question(state, item)};
    rec.raw_response = solver.complete(std::span(&turn, 1), params);
    rec.extracted = extract_answer(rec.raw_response, item.valid_letters());
  } catch (const Error& e) {
    rec.error = e.what();
    rec.error_code = e.code();
  } catch (const std::exception& e) {
    rec.error = e.what();
  }
  rec.correct = rec.extracted && *rec.extracted == rec.gold;
  return rec;
}

EvalResult aggregate(const PromptState& state, const Dataset& dataset, std::vector<ItemRecord> records) {
  EvalResult r;
  r.dataset = dataset.name;
  r.split = dataset.split;
  r.prompt_digest = content_digest(state);
  r.item_set_digest = dataset.item_set_digest();
  r.total = records.size();
  std::map<std::string, SubjectScore> by_subject;
  bool all_have_subject = true;
  for (const auto& rec : records) {
    if (rec.correct) ++r.correct;
    if (!rec.extracted) ++r.unparseable;
    if (!rec.error.empty()) ++r.errors;
    if (rec.subject.empty()) {
      all_have_subject = false;
    } else {
      auto& s = by_subject[rec.subject];
      s.subject = rec.subject;
      ++s.total;
      if (rec.correct) ++s.correct;
    }
  }
  for (const auto& rec : records) {
    if (!rec.error.empty() && rec.error_code == ErrorCode::ReplayMiss) {
      throw Error(ErrorCode::EvalAborted, "replay diverged at item " + rec.id + ": " + rec.error);
    }
  }
  r.items = std::move(records);
  r.accuracy = static_cast<double>(r.correct) / static_cast<double>(r.total);
  if (all_have_subject && !by_subject.empty()) {
    double sum = 0.0;
    for (auto& [_, s] : by_subject) {
      s.accuracy = static_cast<double>(s.correct) / static_cast<double>(s.total);
      sum += s.accuracy;
      r.subjects.push_back(s);
    }
    r.macro_accuracy = sum / static_cast<double>(r.subjects.size());
  }
  if (r.errors * 2 > r.total) {
    throw Error(ErrorCode::EvalAborted, std::to_string(r.errors) + " of " + std::to_string(r.total) +
                                            " solver calls failed");
  }
  return r;
}

void require_items(const Dataset& dataset) {
  if (dataset.items.empty()) throw Error(ErrorCode::InvalidArgument, "dataset " + dataset.name + " is empty");
}

}  // namespace

EvalResult evaluate_serial(const PromptState& state, const Dataset& dataset, ChatBackend& solver,
                           const EvalOptions& options) {
  require_items(dataset);
  std::vector<ItemRecord> records;
  records.reserve(dataset.items.size());
  for (const auto& item : dataset.items) records.push_back(evaluate_item(state, item, solver, options.params));
  return aggregate(state, dataset, std::move(records));
}

EvalResult evaluate(const PromptState& state, const Dataset& dataset, ChatBackend& solver,
                    const EvalOptions& options) {
  require_items(dataset);
  if (options.concurrency_width <= 1) return evaluate_serial(state, dataset, solver, options);
  const auto n = static_cast<long>(dataset.items.size());
  std::vector<ItemRecord> records(dataset.items.size());
#pragma omp parallel for num_threads(options.concurrency_width) schedule(dynamic, 1)
  for (long i = 0; i < n; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    records[idx] = evaluate_item(state, dataset.items[idx], solver, options.params);
  }
  return aggregate(state, dataset, std::move(records));
}

nlohmann::json to_json(const EvalResult& r) {
  auto items = nlohmann::json::array();
  for (const auto& rec : r.items) {
    nlohmann::json j{{"id", rec.id},
                     {"raw_response", rec.raw_response},
                     {"extracted", rec.extracted ? std::string(1, *rec.extracted) : std::string("Unparseable")},
                     {"gold", std::string(1, rec.gold)},
                     {"correct", rec.correct}};
    if (!rec.error.empty()) j["error"] = rec.error;
    if (!rec.subject.empty()) j["subject"] = rec.subject;
    items.push_back(std::move(j));
  }
  nlohmann::json j{{"dataset", r.dataset},
                   {"split", split_name(r.split)},
                   {"prompt_digest", r.prompt_digest},
                   {"item_set_digest", r.item_set_digest},
                   {"accuracy", r.accuracy},
                   {"counts", {{"total", r.total}, {"correct", r.correct}, {"unparseable", r.unparseable},
                               {"errors", r.errors}}},
                   {"items", std::move(items)}};
  if (r.macro_accuracy) {
    auto subjects = nlohmann::json::array();
    for (const auto& s : r.subjects) {
      subjects.push_back({{"subject", s.subject}, {"total", s.total}, {"correct", s.correct}, {"accuracy", s.accuracy}});
    }
    j["subjects"] = std::move(subjects);
    j["macro_accuracy"] = *r.macro_accuracy;
  }
  return j;
}

EvalResult eval_result_from_json(const nlohmann::json& j) {
  try {
    EvalResult r;
    r.dataset = j.at("dataset").get<std::string>();
    r.split = j.value("split", "test") == "train" ? Split::Train : Split::Test;
    r.prompt_digest = j.value("prompt_digest", "");
    r.item_set_digest = j.at("item_set_digest").get<std::string>();
    r.accuracy = j.at("accuracy").get<double>();
    const auto& c = j.at("counts");
    r.total = c.at("total").get<std::size_t>();
    r.correct = c.at("correct").get<std::size_t>();
    r.unparseable = c.at("unparseable").get<std::size_t>();
    r.errors = c.value("errors", std::size_t{0});
    for (const auto& it : j.value("items", nlohmann::json::array())) {
      ItemRecord rec;
      rec.id = it.at("id").get<std::string>();
      rec.raw_response = it.value("raw_response", "");
      const auto ex = it.value("extracted", "Unparseable");
      if (ex.size() == 1) rec.extracted = ex[0];
      const auto gold = it.at("gold").get<std::string>();
      rec.gold = gold.empty() ? 'A' : gold[0];
      rec.correct = it.value("correct", false);
      rec.error = it.value("error", "");
      rec.subject = it.value("subject", "");
      r.items.push_back(std::move(rec));
    }
    if (j.contains("macro_accuracy")) r.macro_accuracy = j["macro_accuracy"].get<double>();
    for (const auto& s : j.value("subjects", nlohmann::json::array())) {
      r.subjects.push_back({s.at("subject").get<std::string>(), s.at("total").get<std::size_t>(),
                            s.at("correct").get<std::size_t>(), s.at("accuracy").get<double>()});
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::FormatError, std::string("bad result file: ") + e.what());
  }
}

// ---- comparison -------------------------------------------------------------

namespace {

double round2(double x) { return std::round(x * 100.0) / 100.0; }

}  // namespace

std::string format_percent(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", round2(fraction * 100.0));
  return buf;
}

std::string format_delta(double delta_pct) {
  const double r = round2(delta_pct);
  if (r == 0.0) return "0.00";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%+.2f", r);
  return buf;
}

ComparisonReport compare(const std::vector<std::pair<std::string, EvalResult>>& results) {
  if (results.size() < 2) throw Error(ErrorCode::InvalidArgument, "comparison needs at least two results");
  const auto& base = results.front().second;
  for (const auto& [label, r] : results) {
    if (r.item_set_digest != base.item_set_digest) {
      throw Error(ErrorCode::DatasetMismatch, "'" + label + "' was evaluated on a different item set than '" +
                                                  results.front().first + "'");
    }
  }
  ComparisonReport report{base.dataset, base.split, {}};
  const double base_pct = round2(base.accuracy * 100.0);
  for (const auto& [label, r] : results) {
    ComparisonRow row;
    row.label = label;
    row.accuracy_pct = round2(r.accuracy * 100.0);
    row.delta_pct = round2(row.accuracy_pct - base_pct);
    row.accuracy_text = format_percent(r.accuracy);
    row.delta_text = format_delta(row.accuracy_pct - base_pct);
    row.unparseable = r.unparseable;
    row.total = r.total;
    report.rows.push_back(std::move(row));
  }
  return report;
}

std::string render_comparison_text(const ComparisonReport& report) {
  std::size_t width = 6;
  for (const auto& r : report.rows) width = std::max(width, r.label.size());
  std::ostringstream os;
  const auto total = report.rows.empty() ? 0 : report.rows.front().total;
  os << "dataset: " << report.dataset << " (" << split_name(report.split) << ", " << total << " items)\n";
  char line[256];
  std::snprintf(line, sizeof line, "%-*s  %8s  %7s  %11s\n", static_cast<int>(width), "method", "accuracy",
                "delta", "unparseable");
  os << line;
  for (const auto& r : report.rows) {
    std::snprintf(line, sizeof line, "%-*s  %8s  %7s  %11zu\n", static_cast<int>(width), r.label.c_str(),
                  r.accuracy_text.c_str(), r.delta_text.c_str(), r.unparseable);
    os << line;
  }
  return os.str();
}

nlohmann::json to_json(const ComparisonReport& report) {
  auto rows = nlohmann::json::array();
  for (const auto& r : report.rows) {
    rows.push_back({{"label", r.label},
                    {"accuracy_pct", r.accuracy_text},
                    {"delta_pct", r.delta_text},
                    {"unparseable", r.unparseable},
                    {"total", r.total}});
  }
  return {{"dataset", report.dataset}, {"split", split_name(report.split)}, {"rows", std::move(rows)}};
}

}  // namespace mpo
