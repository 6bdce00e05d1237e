#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "mpo/backend.hpp"
#include "mpo/schema.hpp"

namespace mpo {

struct Choice {
  char letter;
  std::string text;
  friend bool operator==(const Choice&, const Choice&) = default;
};

struct McqItem {
  std::string id;
  std::string question;
  std::vector<Choice> choices;  // letters A, B, C, ... in order
  char answer_key = 'A';
  std::string subject;          // empty when unknown

  std::set<char> valid_letters() const;
  // Throws Error{FormatError | MissingAnswerKey}.
  void validate() const;
};

enum class Split : std::uint8_t { Train, Test };
std::string_view split_name(Split split);

struct Dataset {
  std::string name;
  Split split = Split::Test;
  std::vector<McqItem> items;

  // Hash of the sorted item ids.
  std::string item_set_digest() const;
};

enum class DatasetFormat : std::uint8_t { ArcJsonl, MmluCsv, GenericJsonl };
std::optional<DatasetFormat> parse_dataset_format(std::string_view name);

// Throws Error{FormatError | MissingAnswerKey | DuplicateId | IoError}.
Dataset load_dataset(const std::string& path, DatasetFormat format);
Dataset parse_dataset(std::string_view content, DatasetFormat format, std::string name,
                      Split split = Split::Test, std::string subject = {});

// Deterministic subsample of `limit` items (dataset order kept).
Dataset subsample(const Dataset& dataset, std::size_t limit, std::uint64_t seed);

std::string pose_question(const PromptState& state, const McqItem& item);

// Returns the extracted letter (always in `valid`) or nullopt for Unparseable.
std::optional<char> extract_answer(std::string_view response, const std::set<char>& valid);

struct ItemRecord {
  std::string id;
  std::string raw_response;
  std::optional<char> extracted;
  char gold = 'A';
  bool correct = false;
  std::string error;  // solver failure note
  ErrorCode error_code = ErrorCode::BackendError;  // meaningful when error is set
  std::string subject;
};

struct SubjectScore {
  std::string subject;
  std::size_t total = 0;
  std::size_t correct = 0;
  double accuracy = 0.0;
};

struct EvalResult {
  std::string dataset;
  Split split = Split::Test;
  std::string prompt_digest;
  std::string item_set_digest;
  std::vector<ItemRecord> items;
  std::size_t total = 0;
  std::size_t correct = 0;
  std::size_t unparseable = 0;
  std::size_t errors = 0;
  double accuracy = 0.0;  // correct / total, micro-averaged
  std::vector<SubjectScore> subjects;
  std::optional<double> macro_accuracy;  // present when subjects are known
};

struct EvalOptions {
  GenerationParams params = GenerationParams::for_answers();
  int concurrency_width = 8;
};

// Items fan out over OpenMP threads; records keep dataset order.
// Throws Error{InvalidArgument} on an empty dataset and Error{EvalAborted} if
// more than half of the solver calls fail or a replayed call has no recording.
EvalResult evaluate(const PromptState& state, const Dataset& dataset, ChatBackend& solver,
                    const EvalOptions& options = {});
EvalResult evaluate_serial(const PromptState& state, const Dataset& dataset, ChatBackend& solver,
                           const EvalOptions& options = {});

nlohmann::json to_json(const EvalResult& result);
EvalResult eval_result_from_json(const nlohmann::json& j);

struct ComparisonRow {
  std::string label;
  double accuracy_pct = 0.0;
  double delta_pct = 0.0;
  std::string accuracy_text;  // "79.10"
  std::string delta_text;     // "+4.10", "0.00", "-0.90"
  std::size_t unparseable = 0;
  std::size_t total = 0;
};

struct ComparisonReport {
  std::string dataset;
  Split split = Split::Test;
  std::vector<ComparisonRow> rows;  // first row is the baseline
};

std::string format_percent(double fraction);
std::string format_delta(double delta_pct);

// Throws Error{InvalidArgument} for fewer than two results and
// Error{DatasetMismatch} when item sets differ.
ComparisonReport compare(const std::vector<std::pair<std::string, EvalResult>>& results);
std::string render_comparison_text(const ComparisonReport& report);
nlohmann::json to_json(const ComparisonReport& report);

}  // namespace mpo
