#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "mpo/backend.hpp"
#include "mpo/critic.hpp"
#include "mpo/schema.hpp"

namespace mpo {

enum class DedupMode : std::uint8_t { Lexical, Llm, LexicalThenLlm };

std::string_view dedup_mode_name(DedupMode mode);
std::optional<DedupMode> parse_dedup_mode(std::string_view name);

struct OptimizerConfig {
  int iterations = 3;
  DedupMode dedup_mode = DedupMode::Lexical;
  // Informational; sections are always processed as kCanonicalOrder.
  std::array<SectionKind, kSectionCount> section_order = kCanonicalOrder;
  int concurrency_width = 5;
  std::size_t max_section_tokens = 800;

  PromptTemplate gradient_template = templates::gradient();
  PromptTemplate consolidation_template = templates::consolidation();
  PromptTemplate rewrite_template = templates::global_rewrite();
  GenerationParams gradient_params = GenerationParams::for_gradients();
  GenerationParams consolidation_params = GenerationParams::for_consolidation();
  // Optional solver failure cases passed through {FAILURE_EXAMPLES}; off by default.
  std::string failure_examples;

  // Throws Error{InvalidArgument}.
  void validate() const;
};

// s ⊕ Δs: the gradient's directives appended after a blank line.
// Throws Error{TargetMismatch}.
Section apply_gradient(const Section& section, const TextualGradient& gradient);

// Normalized comparison key of a line: lowercased, list markers stripped,
// whitespace collapsed, trailing punctuation removed.
std::string dedup_key(std::string_view line);

// Drops lines whose key repeats an earlier line's key, keeping first
// occurrences in order. Blank lines separate blocks: runs collapse to one and
// leading/trailing blanks go. Idempotent.
std::string lexical_dedup(std::string_view content);

// Non-blank lines whose key repeats an earlier line's key.
std::size_t count_duplicate_lines(std::string_view content);

// Keeps whole lines while the token count stays within `max_tokens`. A first
// line that alone exceeds the cap is cut at a token boundary.
std::string truncate_to_tokens(std::string_view content, std::size_t max_tokens, bool* truncated = nullptr);

struct SectionFailure {
  SectionKind kind;
  std::string stage;  // "gradient" or "consolidation"
  std::string message;
  ErrorCode code = ErrorCode::BackendError;
};

struct SectionStats {
  std::size_t tokens = 0;
  std::size_t duplicates_before_dedup = 0;
  std::size_t duplicates_after_dedup = 0;
  bool truncated = false;
};

struct StepResult {
  PromptState state;
  std::array<TextualGradient, kSectionCount> gradients;  // canonical order
  std::array<SectionStats, kSectionCount> stats;
  std::vector<SectionFailure> failures;
};

// One synchronous refinement step. Every gradient is conditioned on `state`;
// the five critic calls run concurrently up to config.concurrency_width.
StepResult step(const PromptState& state, ChatBackend& critic, const OptimizerConfig& config);

// Serial reference for step(): same semantics, sections visited in `order`.
StepResult step_serial(const PromptState& state, ChatBackend& critic, const OptimizerConfig& config,
                       const std::array<SectionKind, kSectionCount>& order = kCanonicalOrder);

struct IterationRecord {
  std::array<TextualGradient, kSectionCount> gradients;
  std::array<SectionStats, kSectionCount> stats;
  std::vector<SectionFailure> failures;
};

struct RunHistory {
  std::vector<PromptState> states;          // p_0 .. p_n
  std::vector<std::string> digests;         // content_digest(states[i])
  std::vector<IterationRecord> iterations;  // iterations[t] produced states[t + 1]
  std::array<SectionStats, kSectionCount> initial_stats{};
  bool aborted = false;
  std::string abort_reason;

  const PromptState& final_state() const { return states.back(); }
  // Hash over the per-state digests and iteration numbers.
  std::string history_digest() const;
};

// n synchronous steps. A step where every section fails, or a replay miss,
// aborts the run with the history gathered so far.
RunHistory optimize(const PromptState& initial, ChatBackend& critic, const OptimizerConfig& config);

// Simplified global-rewrite baseline: the whole prompt is critiqued and
// rewritten in one call. Untagged responses land in TaskDetails.
PromptState baseline_global_step(const PromptState& state, ChatBackend& critic, const OptimizerConfig& config);

struct GrowthRow {
  std::uint32_t iteration = 0;
  std::array<std::size_t, kSectionCount> section_tokens{};
  std::size_t total_tokens = 0;
  long total_delta = 0;
  std::array<long, kSectionCount> section_delta{};
  std::array<std::size_t, kSectionCount> duplicates_before{};
  std::array<std::size_t, kSectionCount> duplicates_after{};
};

struct GrowthReport {
  std::vector<GrowthRow> rows;
};

GrowthReport growth_metrics(const RunHistory& history);

nlohmann::json to_json(const GrowthReport& report);
nlohmann::json state_to_json(const PromptState& state);
PromptState state_from_json(const nlohmann::json& j);
nlohmann::json to_json(const TextualGradient& gradient);

// Writes history.jsonl, gradients.jsonl, metrics.json and final_prompt.txt.
void write_run_artifacts(const RunHistory& history, const std::string& dir);

}  // namespace mpo
