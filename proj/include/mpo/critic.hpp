#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "mpo/backend.hpp"
#include "mpo/schema.hpp"

namespace mpo {

// Text with {NAME} placeholders. Unknown placeholders are left untouched so
// literal braces in a template survive substitution.
struct PromptTemplate {
  std::string text;

  bool has_placeholder(std::string_view name) const;
  std::string fill(const std::map<std::string, std::string, std::less<>>& values) const;

  static PromptTemplate load(const std::string& path);
};

namespace templates {

// Block markers shared by the default templates and the mock backends.
inline constexpr std::string_view kSectionBegin = "----- BEGIN SECTION -----";
inline constexpr std::string_view kSectionEnd = "----- END SECTION -----";
inline constexpr std::string_view kContextBegin = "----- BEGIN CONTEXT -----";
inline constexpr std::string_view kContextEnd = "----- END CONTEXT -----";
inline constexpr std::string_view kPromptBegin = "----- BEGIN PROMPT -----";
inline constexpr std::string_view kPromptEnd = "----- END PROMPT -----";
inline constexpr std::string_view kReviewLine = "Section under review: ";
inline constexpr std::string_view kNoChange = "NO CHANGE";

// {SECTION_KIND} {SECTION_CONTENT} {CONTEXT} [{FAILURE_EXAMPLES}]
const PromptTemplate& gradient();
// {SECTION_KIND} {SECTION_CONTENT}
const PromptTemplate& consolidation();
// {SOURCE_PROMPT}
const PromptTemplate& extraction();
// {PROMPT}
const PromptTemplate& global_rewrite();

inline constexpr std::string_view kAnswerElicitation = "Answer with the letter of the correct choice.";

// Text between `begin` and `end` marker lines, or nullopt when absent.
std::optional<std::string> extract_block(std::string_view text, std::string_view begin,
                                         std::string_view end);

}  // namespace templates

// Throws Error{InvalidArgument} if a gradient template lacks a required placeholder.
void validate_gradient_template(const PromptTemplate& tmpl);

struct TextualGradient {
  SectionKind target = SectionKind::SystemRole;
  std::vector<std::string> directives;  // empty: the "no change" sentinel
  std::string raw_response;
  std::string critic_identity;

  bool is_empty() const noexcept { return directives.empty(); }
  friend bool operator==(const TextualGradient&, const TextualGradient&) = default;
};

// One directive per nonblank line with list markers stripped. Lines that would
// read back as schema tags and a lone "NO CHANGE" are dropped.
std::vector<std::string> parse_directives(std::string_view response);

TextualGradient request_gradient(ChatBackend& backend, const Section& section, std::string_view context,
                                 const PromptTemplate& tmpl = templates::gradient(),
                                 const GenerationParams& params = GenerationParams::for_gradients(),
                                 std::string_view failure_examples = {});

// LLM consolidation. Throws Error{ConsolidationRejected} if the response carries
// schema markup or erases a non-empty section.
Section consolidate(ChatBackend& backend, const Section& section,
                    const PromptTemplate& tmpl = templates::consolidation(),
                    const GenerationParams& params = GenerationParams::for_consolidation());

}  // namespace mpo
