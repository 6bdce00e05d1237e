#include "mpo/optimizer.hpp"

#include <omp.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <unordered_set>

#include "mpo/text.hpp"

namespace mpo {

std::string_view dedup_mode_name(DedupMode mode) {
  switch (mode) {
    case DedupMode::Lexical: return "lexical";
    case DedupMode::Llm: return "llm";
    case DedupMode::LexicalThenLlm: return "lexical_then_llm";
  }
  return "lexical";
}

std::optional<DedupMode> parse_dedup_mode(std::string_view name) {
  for (auto m : {DedupMode::Lexical, DedupMode::Llm, DedupMode::LexicalThenLlm}) {
    if (name == dedup_mode_name(m)) return m;
  }
  return std::nullopt;
}

void OptimizerConfig::validate() const {
  if (iterations < 1) throw Error(ErrorCode::InvalidArgument, "iterations must be >= 1");
  if (concurrency_width < 1) throw Error(ErrorCode::InvalidArgument, "concurrency width must be >= 1");
  if (max_section_tokens < 1) throw Error(ErrorCode::InvalidArgument, "max_section_tokens must be >= 1");
  if (section_order != kCanonicalOrder) throw Error(ErrorCode::InvalidArgument, "section order is fixed");
  validate_gradient_template(gradient_template);
}

// ---- aggregation and D ------------------------------------------------------

Section apply_gradient(const Section& section, const TextualGradient& gradient) {
  if (gradient.target != section.kind()) {
    throw Error(ErrorCode::TargetMismatch, "gradient for " + std::string(kind_name(gradient.target)) +
                                               " applied to " + std::string(kind_name(section.kind())));
  }
  if (gradient.is_empty()) return section;
  std::string content = section.content();
  if (!content.empty()) content += "\n\n";
  content += text::join_lines(gradient.directives);
  return Section(section.kind(), content, Provenance::Refined);
}

std::string dedup_key(std::string_view line) {
  const auto body = text::to_lower_ascii(text::strip_list_marker(line));
  std::string key;
  bool pending_space = false;
  for (char c : body) {
    if (c == ' ' || c == '\t' || c == '\r' || c == '\f' || c == '\v') {
      pending_space = !key.empty();
      continue;
    }
    if (pending_space) key += ' ';
    pending_space = false;
    key += c;
  }
  static constexpr std::string_view kTrailing = ".,;:!? ";
  while (!key.empty() && kTrailing.find(key.back()) != std::string_view::npos) key.pop_back();
  return key;
}

std::string lexical_dedup(std::string_view content) {
  std::unordered_set<std::string> seen;
  std::vector<std::string> out;
  for (auto& line : text::split_lines(content)) {
    if (text::is_blank(line)) {
      if (!out.empty() && !text::is_blank(out.back())) out.push_back(std::move(line));
      continue;
    }
    if (seen.insert(dedup_key(line)).second) out.push_back(std::move(line));
  }
  while (!out.empty() && text::is_blank(out.back())) out.pop_back();
  return text::join_lines(out);
}

std::size_t count_duplicate_lines(std::string_view content) {
  std::unordered_set<std::string> seen;
  std::size_t dups = 0;
  for (const auto& line : text::split_lines(content)) {
    if (text::is_blank(line)) continue;
    if (!seen.insert(dedup_key(line)).second) ++dups;
  }
  return dups;
}

std::string truncate_to_tokens(std::string_view content, std::size_t max_tokens, bool* truncated) {
  if (truncated) *truncated = false;
  if (text::count_tokens(content) <= max_tokens) return std::string(content);
  if (truncated) *truncated = true;

  const auto lines = text::split_lines(content);
  std::vector<std::string> kept;
  std::size_t used = 0;
  for (const auto& line : lines) {
    const auto n = text::count_tokens(line);
    if (used + n > max_tokens) break;
    kept.push_back(line);
    used += n;
  }
  if (kept.empty() && !lines.empty()) {
    // The first line alone is over the cap.
    std::string cut;
    std::size_t taken = 0;
    std::size_t i = 0;
    const std::string& first = lines.front();
    while (i < first.size() && taken < max_tokens) {
      while (i < first.size() && (first[i] == ' ' || first[i] == '\t')) cut += first[i++];
      while (i < first.size() && first[i] != ' ' && first[i] != '\t') cut += first[i++];
      ++taken;
    }
    kept.emplace_back(text::trim_right(cut));
  }
  return text::canonicalize_block(text::join_lines(kept));
}

// ---- step -------------------------------------------------------------------

namespace {

struct SectionOutcome {
  Section section{SectionKind::SystemRole};
  TextualGradient gradient;
  SectionStats stats;
  std::optional<SectionFailure> failure;
};

SectionFailure make_failure(SectionKind kind, std::string stage, const std::exception& e) {
  const auto* err = dynamic_cast<const Error*>(&e);
  return {kind, std::move(stage), e.what(), err ? err->code() : ErrorCode::BackendError};
}

SectionOutcome carry_over(const Section& s, TextualGradient gradient, SectionFailure failure) {
  SectionOutcome out;
  out.section = s;
  out.gradient = std::move(gradient);
  out.stats.tokens = text::count_tokens(s.content());
  out.stats.duplicates_before_dedup = out.stats.duplicates_after_dedup = count_duplicate_lines(s.content());
  out.failure = std::move(failure);
  spdlog::warn("section {} carried over unchanged after {} failure: {}", kind_name(s.kind()),
               out.failure->stage, out.failure->message);
  return out;
}

// Everything one section needs in a step. Reads only `state` and never throws,
// so sections can be processed in any order or concurrently.
SectionOutcome refine_section(const PromptState& state, SectionKind kind, ChatBackend& critic,
                              const OptimizerConfig& config) noexcept {
  const Section& current = state.section(kind);
  TextualGradient gradient;
  gradient.target = kind;
  try {
    gradient = request_gradient(critic, current, section_context(state, kind), config.gradient_template,
                                config.gradient_params, config.failure_examples);
  } catch (const std::exception& e) {
    gradient.critic_identity = critic.identity();
    return carry_over(current, std::move(gradient), make_failure(kind, "gradient", e));
  }

  SectionOutcome out;
  if (gradient.is_empty()) {
    out.section = current;
    out.stats.tokens = text::count_tokens(current.content());
    out.stats.duplicates_before_dedup = out.stats.duplicates_after_dedup = count_duplicate_lines(current.content());
    out.gradient = std::move(gradient);
    return out;
  }

  try {
    const Section aggregated = apply_gradient(current, gradient);
    out.stats.duplicates_before_dedup = count_duplicate_lines(aggregated.content());

    std::string content = aggregated.content();
    if (config.dedup_mode != DedupMode::Llm) content = lexical_dedup(content);
    if (config.dedup_mode != DedupMode::Lexical) {
      content = consolidate(critic, Section(kind, content, Provenance::Refined), config.consolidation_template,
                            config.consolidation_params)
                    .content();
    }
    bool truncated = false;
    content = truncate_to_tokens(content, config.max_section_tokens, &truncated);
    if (truncated) {
      spdlog::warn("section {} exceeded {} tokens and was truncated at a line boundary", kind_name(kind),
                   config.max_section_tokens);
    }
    out.section = Section(kind, content, Provenance::Refined);
    out.stats.truncated = truncated;
  } catch (const std::exception& e) {
    return carry_over(current, std::move(gradient), make_failure(kind, "consolidation", e));
  }
  out.stats.tokens = text::count_tokens(out.section.content());
  out.stats.duplicates_after_dedup = count_duplicate_lines(out.section.content());
  out.gradient = std::move(gradient);
  return out;
}

StepResult assemble(const PromptState& state, std::array<SectionOutcome, kSectionCount>& outcomes) {
  PromptState::Sections sections{outcomes[0].section, outcomes[1].section, outcomes[2].section,
                                 outcomes[3].section, outcomes[4].section};
  StepResult result{PromptState(std::move(sections), state.iteration() + 1, content_digest(state)), {}, {}, {}};
  for (std::size_t i = 0; i < kSectionCount; ++i) {
    result.gradients[i] = std::move(outcomes[i].gradient);
    result.stats[i] = outcomes[i].stats;
    if (outcomes[i].failure) result.failures.push_back(std::move(*outcomes[i].failure));
  }
  return result;
}

}  // namespace

StepResult step_serial(const PromptState& state, ChatBackend& critic, const OptimizerConfig& config,
                       const std::array<SectionKind, kSectionCount>& order) {
  std::array<SectionOutcome, kSectionCount> outcomes;
  for (auto kind : order) outcomes[index_of(kind)] = refine_section(state, kind, critic, config);
  return assemble(state, outcomes);
}

StepResult step(const PromptState& state, ChatBackend& critic, const OptimizerConfig& config) {
  const int width = std::min<int>(config.concurrency_width, static_cast<int>(kSectionCount));
  if (width <= 1) return step_serial(state, critic, config);

  std::array<SectionOutcome, kSectionCount> outcomes;
#pragma omp parallel for num_threads(width) schedule(dynamic, 1)
  for (int i = 0; i < static_cast<int>(kSectionCount); ++i) {
    outcomes[static_cast<std::size_t>(i)] = refine_section(state, kCanonicalOrder[static_cast<std::size_t>(i)],
                                                           critic, config);
  }
  return assemble(state, outcomes);
}

// ---- run loop ---------------------------------------------------------------

std::string RunHistory::history_digest() const {
  std::string joined;
  for (std::size_t i = 0; i < digests.size(); ++i) {
    joined += std::to_string(states[i].iteration()) + ":" + digests[i] + "\n";
  }
  return text::sha256_hex(joined);
}

RunHistory optimize(const PromptState& initial, ChatBackend& critic, const OptimizerConfig& config) {
  config.validate();
  if (initial.iteration() != 0) throw Error(ErrorCode::InvalidArgument, "initial state must have iteration 0");

  RunHistory history;
  history.states.push_back(initial);
  history.digests.push_back(content_digest(initial));
  for (std::size_t i = 0; i < kSectionCount; ++i) {
    const auto& c = initial.sections()[i].content();
    history.initial_stats[i].tokens = text::count_tokens(c);
    history.initial_stats[i].duplicates_before_dedup = history.initial_stats[i].duplicates_after_dedup =
        count_duplicate_lines(c);
  }

  for (int t = 0; t < config.iterations; ++t) {
    auto result = step(history.states.back(), critic, config);

    const auto miss = std::find_if(result.failures.begin(), result.failures.end(),
                                   [](const SectionFailure& f) { return f.code == ErrorCode::ReplayMiss; });
    if (miss != result.failures.end() || result.failures.size() == kSectionCount) {
      history.aborted = true;
      const auto& f = miss != result.failures.end() ? *miss : result.failures.front();
      history.abort_reason = "iteration " + std::to_string(t + 1) + ": " + std::string(kind_name(f.kind)) +
                             " " + f.stage + ": " + f.message;
      spdlog::error("optimization aborted at {}", history.abort_reason);
      break;
    }

    history.iterations.push_back({std::move(result.gradients), result.stats, std::move(result.failures)});
    history.digests.push_back(content_digest(result.state));
    history.states.push_back(std::move(result.state));
  }
  return history;
}

PromptState baseline_global_step(const PromptState& state, ChatBackend& critic, const OptimizerConfig& config) {
  const ChatTurn turn{Role::User, config.rewrite_template.fill({{"PROMPT", render_prompt(state)}})};
  const auto response = critic.complete(std::span(&turn, 1), config.consolidation_params);

  PromptState parsed;
  bool structured = false;
  if (looks_structured(response)) {
    try {
      // Chatter before the first tag is tolerated.
      auto lines = text::split_lines(response);
      auto first = std::find_if(lines.begin(), lines.end(),
                                [](const std::string& l) { return classify_line(l).cls == LineClass::Tag; });
      lines.erase(lines.begin(), first);
      parsed = parse_structured_prompt(text::join_lines(lines));
      structured = true;
    } catch (const Error& e) {
      spdlog::warn("global rewrite is not a valid structured prompt ({}); falling back to Task", e.what());
    }
  }
  if (!structured) {
    std::vector<std::string> kept;
    for (auto& line : text::split_lines(response)) {
      if (classify_line(line).cls == LineClass::Content && !contains_schema_markup(line)) kept.push_back(line);
    }
    parsed = parsed.with_section(Section(SectionKind::TaskDetails, text::join_lines(kept)));
  }

  PromptState::Sections sections{parsed.sections()[0], parsed.sections()[1], parsed.sections()[2],
                                 parsed.sections()[3], parsed.sections()[4]};
  for (auto& s : sections) s = s.with_content(s.content(), Provenance::Refined);
  return PromptState(std::move(sections), state.iteration() + 1, content_digest(state));
}

// ---- metrics and artifacts --------------------------------------------------

GrowthReport growth_metrics(const RunHistory& history) {
  if (history.states.empty()) throw Error(ErrorCode::InvalidArgument, "empty history");
  GrowthReport report;
  for (std::size_t i = 0; i < history.states.size(); ++i) {
    GrowthRow row;
    row.iteration = history.states[i].iteration();
    const auto& stats = i == 0 ? history.initial_stats : history.iterations[i - 1].stats;
    for (std::size_t k = 0; k < kSectionCount; ++k) {
      row.section_tokens[k] = text::count_tokens(history.states[i].sections()[k].content());
      row.total_tokens += row.section_tokens[k];
      row.duplicates_before[k] = stats[k].duplicates_before_dedup;
      row.duplicates_after[k] = stats[k].duplicates_after_dedup;
      if (i > 0) {
        row.section_delta[k] = static_cast<long>(row.section_tokens[k]) -
                               static_cast<long>(report.rows.back().section_tokens[k]);
      }
    }
    if (i > 0) row.total_delta = static_cast<long>(row.total_tokens) - static_cast<long>(report.rows.back().total_tokens);
    report.rows.push_back(row);
  }
  return report;
}

nlohmann::json to_json(const GrowthReport& report) {
  auto rows = nlohmann::json::array();
  for (const auto& r : report.rows) {
    nlohmann::json sections = nlohmann::json::object();
    for (auto kind : kCanonicalOrder) {
      const auto k = index_of(kind);
      sections[std::string(kind_name(kind))] = {{"tokens", r.section_tokens[k]},
                                                {"delta", r.section_delta[k]},
                                                {"duplicates_before_dedup", r.duplicates_before[k]},
                                                {"duplicates_after_dedup", r.duplicates_after[k]}};
    }
    rows.push_back({{"iteration", r.iteration},
                    {"total_tokens", r.total_tokens},
                    {"total_delta", r.total_delta},
                    {"sections", std::move(sections)}});
  }
  return {{"iterations", std::move(rows)}};
}

nlohmann::json state_to_json(const PromptState& state) {
  auto sections = nlohmann::json::array();
  for (const auto& s : state.sections()) {
    sections.push_back(
        {{"kind", kind_name(s.kind())}, {"content", s.content()}, {"provenance", provenance_name(s.provenance())}});
  }
  return {{"iteration", state.iteration()},
          {"digest", content_digest(state)},
          {"parent_digest", state.parent_digest() ? nlohmann::json(*state.parent_digest()) : nlohmann::json(nullptr)},
          {"sections", std::move(sections)}};
}

PromptState state_from_json(const nlohmann::json& j) {
  PromptState state;
  for (const auto& s : j.at("sections")) {
    const auto kind = parse_kind(s.at("kind").get<std::string>());
    const auto prov = parse_provenance(s.value("provenance", "Original"));
    if (!kind || !prov) throw Error(ErrorCode::FormatError, "bad section entry in state JSON");
    state = state.with_section(Section(*kind, s.at("content").get<std::string>(), *prov));
  }
  std::optional<std::string> parent;
  if (j.contains("parent_digest") && !j["parent_digest"].is_null()) parent = j["parent_digest"].get<std::string>();
  PromptState::Sections sections{state.sections()[0], state.sections()[1], state.sections()[2],
                                 state.sections()[3], state.sections()[4]};
  return PromptState(std::move(sections), j.value("iteration", 0u), std::move(parent));
}

nlohmann::json to_json(const TextualGradient& g) {
  return {{"target", kind_name(g.target)},
          {"directives", g.directives},
          {"raw_response", g.raw_response},
          {"critic", g.critic_identity}};
}

namespace {

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  os << content;
  if (!os) throw Error(ErrorCode::IoError, "failed writing " + path.string());
}

}  // namespace

void write_run_artifacts(const RunHistory& history, const std::string& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create " + dir + ": " + ec.message());
  const fs::path root(dir);

  std::string lines;
  for (const auto& s : history.states) lines += state_to_json(s).dump() + "\n";
  write_file(root / "history.jsonl", lines);

  lines.clear();
  for (std::size_t t = 0; t < history.iterations.size(); ++t) {
    const auto& it = history.iterations[t];
    for (const auto& g : it.gradients) {
      auto j = to_json(g);
      j["iteration"] = t;
      const auto f = std::find_if(it.failures.begin(), it.failures.end(),
                                  [&](const SectionFailure& sf) { return sf.kind == g.target; });
      j["failed"] = f != it.failures.end();
      if (f != it.failures.end()) j["error"] = f->stage + ": " + f->message;
      lines += j.dump() + "\n";
    }
  }
  write_file(root / "gradients.jsonl", lines);

  auto metrics = to_json(growth_metrics(history));
  metrics["history_digest"] = history.history_digest();
  metrics["aborted"] = history.aborted;
  if (history.aborted) metrics["abort_reason"] = history.abort_reason;
  auto truncations = nlohmann::json::array();
  for (std::size_t t = 0; t < history.iterations.size(); ++t) {
    for (auto kind : kCanonicalOrder) {
      if (history.iterations[t].stats[index_of(kind)].truncated) {
        truncations.push_back({{"iteration", t + 1}, {"section", kind_name(kind)}});
      }
    }
  }
  metrics["truncations"] = std::move(truncations);
  write_file(root / "metrics.json", metrics.dump(2) + "\n");

  write_file(root / "final_prompt.txt", render_prompt(history.final_state()));
}

}  // namespace mpo
