#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mpo/error.hpp"

namespace mpo {

class ChatBackend;
struct PromptTemplate;

// The five semantic sections, in canonical order. The set is closed.
enum class SectionKind : std::uint8_t {
  SystemRole,
  RelevantContext,
  TaskDetails,
  Constraints,
  OutputFormat,
};

inline constexpr std::size_t kSectionCount = 5;

inline constexpr std::array<SectionKind, kSectionCount> kCanonicalOrder{
    SectionKind::SystemRole, SectionKind::RelevantContext, SectionKind::TaskDetails,
    SectionKind::Constraints, SectionKind::OutputFormat};

constexpr std::size_t index_of(SectionKind kind) { return static_cast<std::size_t>(kind); }

// "SystemRole", "RelevantContext", ... (identifier form used in JSON artifacts).
std::string_view kind_name(SectionKind kind);
// "System Role", "Context", "Task", "Constraints", "Output Format" (wire form).
std::string_view tag_label(SectionKind kind);
// "<System Role>" etc.
std::string tag_line(SectionKind kind);
// Accepts either the identifier or the wire label.
std::optional<SectionKind> parse_kind(std::string_view name);

enum class Provenance : std::uint8_t { Original, Inferred, Refined };

std::string_view provenance_name(Provenance p);
std::optional<Provenance> parse_provenance(std::string_view name);

enum class LineClass { Content, Tag, MalformedTag };

struct ClassifiedLine {
  LineClass cls = LineClass::Content;
  SectionKind kind = SectionKind::SystemRole;  // valid when cls == Tag
};

// How the parser sees a single line. Known tags must sit alone on their line;
// a bracketed title-like line that is not a known tag, or a known tag that is
// unclosed or followed by text, is malformed.
ClassifiedLine classify_line(std::string_view line);

// True when the text could not be stored in a section without breaking a
// re-parse (it contains a tag string or a line the parser would not treat as
// content).
bool contains_schema_markup(std::string_view content);

class Section {
 public:
  // Content is canonicalized (CRLF -> LF, leading/trailing blank lines
  // dropped). Throws Error{TagInContent} if the content contains schema markup.
  explicit Section(SectionKind kind, std::string_view content = {},
                   Provenance provenance = Provenance::Original);

  SectionKind kind() const noexcept { return kind_; }
  const std::string& content() const noexcept { return content_; }
  Provenance provenance() const noexcept { return provenance_; }
  bool empty() const noexcept { return content_.empty(); }

  Section with_content(std::string_view content, Provenance provenance) const {
    return Section(kind_, content, provenance);
  }

  friend bool operator==(const Section&, const Section&) = default;

 private:
  SectionKind kind_;
  std::string content_;
  Provenance provenance_;
};

class PromptState {
 public:
  using Sections = std::array<Section, kSectionCount>;

  // All five sections empty, iteration 0.
  PromptState();
  // Throws Error{InvalidArgument} if sections are not in canonical order.
  explicit PromptState(Sections sections, std::uint32_t iteration = 0,
                       std::optional<std::string> parent_digest = std::nullopt);

  const Section& section(SectionKind kind) const { return sections_[index_of(kind)]; }
  std::span<const Section, kSectionCount> sections() const { return sections_; }
  std::uint32_t iteration() const noexcept { return iteration_; }
  const std::optional<std::string>& parent_digest() const noexcept { return parent_digest_; }

  PromptState with_section(Section section) const;

  // Equality of section contents only (iteration, lineage and provenance ignored).
  bool same_content(const PromptState& other) const;

  friend bool operator==(const PromptState&, const PromptState&) = default;

 private:
  Sections sections_;
  std::uint32_t iteration_ = 0;
  std::optional<std::string> parent_digest_;
};

// SHA-256 over the rendered prompt; depends on section contents only.
std::string content_digest(const PromptState& state);

// Throws Error{DuplicateSectionTag | MalformedTag | UntaggedLeadingContent}.
PromptState parse_structured_prompt(std::string_view text);

// True if any line of text is a recognized section tag.
bool looks_structured(std::string_view text);

std::string render_prompt(const PromptState& state);

// Every section except `excluded`, tagged, in canonical order.
std::string section_context(const PromptState& state, SectionKind excluded);

// Free-form prompt -> sections via an extractor model. Tagged input bypasses the
// extractor. Throws Error{EmptyInput | ExtractorFailure}.
PromptState decompose_unstructured(std::string_view text, ChatBackend& extractor);
PromptState decompose_unstructured(std::string_view text, ChatBackend& extractor,
                                   const PromptTemplate& extract_template);

// Words of the state that never occur in source. Empty means the decomposition
// introduced no new vocabulary.
std::vector<std::string> vocabulary_violations(const PromptState& state, std::string_view source);

// ---- diff -------------------------------------------------------------------

enum class DiffOp : std::uint8_t { Unchanged, Added, Removed };

std::string_view diff_op_name(DiffOp op);

struct DiffLine {
  DiffOp op;
  std::string line;
  friend bool operator==(const DiffLine&, const DiffLine&) = default;
};

struct SectionDiff {
  SectionKind kind;
  std::vector<DiffLine> lines;
  long token_delta = 0;
  bool changed() const;
};

// A line removed from one section that reappears, mostly word-for-word, inside
// a line added to another section.
struct Relocation {
  std::string line;
  SectionKind from;
  SectionKind to;
  double overlap = 0.0;
};

struct DiffReport {
  std::array<SectionDiff, kSectionCount> sections;
  std::vector<Relocation> relocations;

  bool identical() const;
  const SectionDiff& section(SectionKind kind) const { return sections[index_of(kind)]; }
};

DiffReport diff_states(const PromptState& a, const PromptState& b);
std::string render_diff_text(const DiffReport& report);
std::string render_diff_json(const DiffReport& report);

}  // namespace mpo
