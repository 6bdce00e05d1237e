#include "mpo/schema.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "mpo/backend.hpp"
#include "mpo/critic.hpp"
#include "mpo/text.hpp"

namespace mpo {

namespace {

constexpr std::array<std::string_view, kSectionCount> kKindNames{
    "SystemRole", "RelevantContext", "TaskDetails", "Constraints", "OutputFormat"};
constexpr std::array<std::string_view, kSectionCount> kTagLabels{
    "System Role", "Context", "Task", "Constraints", "Output Format"};

bool iequals(std::string_view a, std::string_view b) {
  return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
           return std::tolower(static_cast<unsigned char>(x)) == std::tolower(static_cast<unsigned char>(y));
         });
}

bool istarts_with(std::string_view s, std::string_view prefix) {
  return s.size() >= prefix.size() && iequals(s.substr(0, prefix.size()), prefix);
}

// "<Word Word>" with only letters and spaces inside.
bool is_bracketed_title(std::string_view t) {
  if (t.size() < 3 || t.front() != '<' || t.back() != '>') return false;
  const auto inner = t.substr(1, t.size() - 2);
  if (!std::isalpha(static_cast<unsigned char>(inner.front()))) return false;
  return std::all_of(inner.begin(), inner.end(),
                     [](char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == ' '; });
}

PromptState::Sections empty_sections() {
  return {Section(SectionKind::SystemRole), Section(SectionKind::RelevantContext),
          Section(SectionKind::TaskDetails), Section(SectionKind::Constraints),
          Section(SectionKind::OutputFormat)};
}

void render_section(std::string& out, const Section& s, bool first) {
  if (!first) out += '\n';
  out += tag_line(s.kind());
  out += '\n';
  if (!s.content().empty()) {
    out += s.content();
    out += '\n';
  }
}

}  // namespace

std::string_view kind_name(SectionKind kind) { return kKindNames[index_of(kind)]; }
std::string_view tag_label(SectionKind kind) { return kTagLabels[index_of(kind)]; }
std::string tag_line(SectionKind kind) { return "<" + std::string(tag_label(kind)) + ">"; }

std::optional<SectionKind> parse_kind(std::string_view name) {
  for (auto kind : kCanonicalOrder) {
    if (name == kind_name(kind) || name == tag_label(kind)) return kind;
  }
  return std::nullopt;
}

std::string_view provenance_name(Provenance p) {
  switch (p) {
    case Provenance::Original: return "Original";
    case Provenance::Inferred: return "Inferred";
    case Provenance::Refined: return "Refined";
  }
  return "Original";
}

std::optional<Provenance> parse_provenance(std::string_view name) {
  for (auto p : {Provenance::Original, Provenance::Inferred, Provenance::Refined}) {
    if (name == provenance_name(p)) return p;
  }
  return std::nullopt;
}

ClassifiedLine classify_line(std::string_view line) {
  const auto t = text::trim(line);
  if (t.empty() || t.front() != '<') return {};
  for (auto kind : kCanonicalOrder) {
    const auto label = tag_label(kind);
    if (t.size() == label.size() + 2 && t.back() == '>' && t.substr(1, label.size()) == label) {
      return {LineClass::Tag, kind};
    }
  }
  for (auto kind : kCanonicalOrder) {
    if (istarts_with(t.substr(1), tag_label(kind))) return {LineClass::MalformedTag, kind};
  }
  if (is_bracketed_title(t)) return {LineClass::MalformedTag, SectionKind::SystemRole};
  return {};
}

bool contains_schema_markup(std::string_view content) {
  for (auto kind : kCanonicalOrder) {
    if (content.find(tag_line(kind)) != std::string_view::npos) return true;
  }
  for (const auto& line : text::split_lines(content)) {
    if (classify_line(line).cls != LineClass::Content) return true;
  }
  return false;
}

// ---- Section / PromptState --------------------------------------------------

Section::Section(SectionKind kind, std::string_view content, Provenance provenance)
    : kind_(kind), content_(text::canonicalize_block(content)), provenance_(provenance) {
  if (contains_schema_markup(content_)) {
    throw Error(ErrorCode::TagInContent,
                "content of section " + std::string(kind_name(kind)) + " contains a schema tag");
  }
}

PromptState::PromptState() : sections_(empty_sections()) {}

PromptState::PromptState(Sections sections, std::uint32_t iteration, std::optional<std::string> parent_digest)
    : sections_(std::move(sections)), iteration_(iteration), parent_digest_(std::move(parent_digest)) {
  for (std::size_t i = 0; i < kSectionCount; ++i) {
    if (sections_[i].kind() != kCanonicalOrder[i]) {
      throw Error(ErrorCode::InvalidArgument, "sections must be given in canonical order");
    }
  }
}

PromptState PromptState::with_section(Section section) const {
  PromptState copy = *this;
  const auto idx = index_of(section.kind());
  copy.sections_[idx] = std::move(section);
  return copy;
}

bool PromptState::same_content(const PromptState& other) const {
  for (std::size_t i = 0; i < kSectionCount; ++i) {
    if (sections_[i].content() != other.sections_[i].content()) return false;
  }
  return true;
}

std::string content_digest(const PromptState& state) { return text::sha256_hex(render_prompt(state)); }

// ---- parse / render ---------------------------------------------------------

bool looks_structured(std::string_view text) {
  for (const auto& line : text::split_lines(text)) {
    if (classify_line(line).cls == LineClass::Tag) return true;
  }
  return false;
}

PromptState parse_structured_prompt(std::string_view input) {
  const auto lines = text::split_lines(input);
  std::array<std::vector<std::string>, kSectionCount> bodies;
  std::array<bool, kSectionCount> seen{};
  std::optional<SectionKind> current;

  for (std::size_t n = 0; n < lines.size(); ++n) {
    std::string line = lines[n];
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto cls = classify_line(line);
    const auto where = "line " + std::to_string(n + 1);
    switch (cls.cls) {
      case LineClass::Tag:
        if (seen[index_of(cls.kind)]) {
          throw Error(ErrorCode::DuplicateSectionTag, where + ": " + tag_line(cls.kind) + " appears twice");
        }
        seen[index_of(cls.kind)] = true;
        current = cls.kind;
        break;
      case LineClass::MalformedTag:
        throw Error(ErrorCode::MalformedTag, where + ": unrecognized or unclosed tag '" +
                                                 std::string(text::trim(line)) + "'");
      case LineClass::Content:
        if (!current) {
          if (!text::is_blank(line)) {
            throw Error(ErrorCode::UntaggedLeadingContent, where + ": text before the first section tag");
          }
        } else {
          bodies[index_of(*current)].push_back(std::move(line));
        }
        break;
    }
  }

  PromptState::Sections sections = empty_sections();
  for (auto kind : kCanonicalOrder) {
    try {
      sections[index_of(kind)] = Section(kind, text::join_lines(bodies[index_of(kind)]));
    } catch (const Error& e) {
      throw Error(ErrorCode::MalformedTag,
                  std::string("tag text embedded in ") + std::string(tag_label(kind)) + " body");
    }
  }
  return PromptState(std::move(sections));
}

std::string render_prompt(const PromptState& state) {
  std::string out;
  bool first = true;
  for (const auto& s : state.sections()) {
    render_section(out, s, first);
    first = false;
  }
  return out;
}

std::string section_context(const PromptState& state, SectionKind excluded) {
  std::string out;
  bool first = true;
  for (const auto& s : state.sections()) {
    if (s.kind() == excluded) continue;
    render_section(out, s, first);
    first = false;
  }
  return out;
}

// ---- decomposition ----------------------------------------------------------

std::vector<std::string> vocabulary_violations(const PromptState& state, std::string_view source) {
  const auto src_words = text::words(source);
  const std::unordered_set<std::string> vocab(src_words.begin(), src_words.end());
  std::vector<std::string> out;
  std::unordered_set<std::string> reported;
  for (const auto& s : state.sections()) {
    for (auto& w : text::words(s.content())) {
      if (!vocab.contains(w) && reported.insert(w).second) out.push_back(std::move(w));
    }
  }
  return out;
}

PromptState decompose_unstructured(std::string_view input, ChatBackend& extractor) {
  return decompose_unstructured(input, extractor, templates::extraction());
}

PromptState decompose_unstructured(std::string_view input, ChatBackend& extractor,
                                   const PromptTemplate& extract_template) {
  if (text::is_blank(input)) throw Error(ErrorCode::EmptyInput, "prompt is empty");
  if (looks_structured(input)) return parse_structured_prompt(input);

  const auto source = text::canonicalize_block(input);
  const ChatTurn turn{Role::User, extract_template.fill({{"SOURCE_PROMPT", source}})};
  std::string response;
  try {
    response = extractor.complete(std::span(&turn, 1), GenerationParams::for_consolidation());
  } catch (const Error& e) {
    throw Error(ErrorCode::ExtractorFailure, e.what());
  }

  // Tolerate chatter before the first tag.
  auto lines = text::split_lines(response);
  auto first_tag = std::find_if(lines.begin(), lines.end(),
                                [](const std::string& l) { return classify_line(l).cls == LineClass::Tag; });
  if (first_tag == lines.end()) {
    throw Error(ErrorCode::ExtractorFailure, "extractor response contains no section tags");
  }
  lines.erase(lines.begin(), first_tag);

  PromptState parsed;
  try {
    parsed = parse_structured_prompt(text::join_lines(lines));
  } catch (const Error& e) {
    throw Error(ErrorCode::ExtractorFailure, std::string("unusable extractor response: ") + e.what());
  }

  PromptState::Sections sections = empty_sections();
  for (const auto& s : parsed.sections()) {
    bool verbatim = true;
    for (const auto& line : text::split_lines(s.content())) {
      const auto t = text::trim(line);
      if (!t.empty() && source.find(t) == std::string::npos) {
        verbatim = false;
        break;
      }
    }
    const auto prov = (!s.empty() && !verbatim) ? Provenance::Inferred : Provenance::Original;
    sections[index_of(s.kind())] = Section(s.kind(), s.content(), prov);
  }
  PromptState state(std::move(sections));

  if (const auto extra = vocabulary_violations(state, source); !extra.empty()) {
    std::string sample;
    for (std::size_t i = 0; i < extra.size() && i < 8; ++i) sample += (i ? ", " : "") + extra[i];
    spdlog::warn("decomposition introduced {} word(s) absent from the source prompt: {}", extra.size(), sample);
  }
  return state;
}

// ---- diff -------------------------------------------------------------------

std::string_view diff_op_name(DiffOp op) {
  switch (op) {
    case DiffOp::Unchanged: return "unchanged";
    case DiffOp::Added: return "added";
    case DiffOp::Removed: return "removed";
  }
  return "unchanged";
}

bool SectionDiff::changed() const {
  return std::any_of(lines.begin(), lines.end(), [](const DiffLine& l) { return l.op != DiffOp::Unchanged; });
}

bool DiffReport::identical() const {
  return std::none_of(sections.begin(), sections.end(), [](const SectionDiff& s) { return s.changed(); });
}

namespace {

std::vector<DiffLine> line_diff(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  const auto n = a.size(), m = b.size();
  std::vector<std::vector<std::size_t>> lcs(n + 1, std::vector<std::size_t>(m + 1, 0));
  for (std::size_t i = n; i-- > 0;) {
    for (std::size_t j = m; j-- > 0;) {
      lcs[i][j] = a[i] == b[j] ? lcs[i + 1][j + 1] + 1 : std::max(lcs[i + 1][j], lcs[i][j + 1]);
    }
  }
  std::vector<DiffLine> out;
  std::size_t i = 0, j = 0;
  while (i < n && j < m) {
    if (a[i] == b[j]) {
      out.push_back({DiffOp::Unchanged, a[i]});
      ++i, ++j;
    } else if (lcs[i + 1][j] >= lcs[i][j + 1]) {
      out.push_back({DiffOp::Removed, a[i++]});
    } else {
      out.push_back({DiffOp::Added, b[j++]});
    }
  }
  while (i < n) out.push_back({DiffOp::Removed, a[i++]});
  while (j < m) out.push_back({DiffOp::Added, b[j++]});
  return out;
}

std::vector<std::string> significant_words(std::string_view s) {
  auto ws = text::words(s);
  std::erase_if(ws, [](const std::string& w) { return w.size() < 3; });
  return ws;
}

constexpr double kRelocationOverlap = 0.75;
constexpr std::size_t kRelocationMinWords = 3;

}  // namespace

DiffReport diff_states(const PromptState& a, const PromptState& b) {
  DiffReport report;
  for (auto kind : kCanonicalOrder) {
    auto& sd = report.sections[index_of(kind)];
    sd.kind = kind;
    const auto& ca = a.section(kind).content();
    const auto& cb = b.section(kind).content();
    sd.lines = line_diff(text::split_lines(ca), text::split_lines(cb));
    sd.token_delta = static_cast<long>(text::count_tokens(cb)) - static_cast<long>(text::count_tokens(ca));
  }

  for (const auto& from : report.sections) {
    for (const auto& removed : from.lines) {
      if (removed.op != DiffOp::Removed) continue;
      const auto needle = significant_words(removed.line);
      if (needle.size() < kRelocationMinWords) continue;
      std::optional<Relocation> best;
      for (const auto& to : report.sections) {
        if (to.kind == from.kind) continue;
        for (const auto& added : to.lines) {
          if (added.op != DiffOp::Added) continue;
          const auto hay = significant_words(added.line);
          const std::unordered_set<std::string> hay_set(hay.begin(), hay.end());
          const auto hits = std::count_if(needle.begin(), needle.end(),
                                          [&](const std::string& w) { return hay_set.contains(w); });
          const double overlap = static_cast<double>(hits) / static_cast<double>(needle.size());
          if (overlap >= kRelocationOverlap && (!best || overlap > best->overlap)) {
            best = Relocation{removed.line, from.kind, to.kind, overlap};
          }
        }
      }
      if (best) report.relocations.push_back(*best);
    }
  }
  return report;
}

std::string render_diff_text(const DiffReport& report) {
  std::ostringstream os;
  for (const auto& sd : report.sections) {
    char delta[32];
    std::snprintf(delta, sizeof delta, "%+ld", sd.token_delta);
    os << "== " << tag_label(sd.kind) << " (" << (sd.changed() ? "changed" : "unchanged")
       << ", token delta " << delta << ")\n";
    if (!sd.changed()) continue;
    for (const auto& l : sd.lines) {
      switch (l.op) {
        case DiffOp::Unchanged: os << "    " << l.line << '\n'; break;
        case DiffOp::Added: os << "  + " << l.line << '\n'; break;
        case DiffOp::Removed: os << "  - " << l.line << '\n'; break;
      }
    }
  }
  for (const auto& r : report.relocations) {
    char overlap[16];
    std::snprintf(overlap, sizeof overlap, "%.2f", r.overlap);
    os << "relocated: \"" << r.line << "\" " << tag_label(r.from) << " -> " << tag_label(r.to)
       << " (overlap " << overlap << ")\n";
  }
  return os.str();
}

std::string render_diff_json(const DiffReport& report) {
  nlohmann::json j;
  j["identical"] = report.identical();
  j["sections"] = nlohmann::json::array();
  for (const auto& sd : report.sections) {
    nlohmann::json lines = nlohmann::json::array();
    for (const auto& l : sd.lines) lines.push_back({{"op", diff_op_name(l.op)}, {"line", l.line}});
    j["sections"].push_back({{"section", kind_name(sd.kind)},
                             {"changed", sd.changed()},
                             {"token_delta", sd.token_delta},
                             {"lines", std::move(lines)}});
  }
  j["relocations"] = nlohmann::json::array();
  for (const auto& r : report.relocations) {
    j["relocations"].push_back(
        {{"line", r.line}, {"from", kind_name(r.from)}, {"to", kind_name(r.to)}, {"overlap", r.overlap}});
  }
  return j.dump(2);
}

}  // namespace mpo
