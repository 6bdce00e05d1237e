#include "mpo/critic.hpp"

#include <fstream>
#include <sstream>

#include "mpo/text.hpp"

namespace mpo {

bool PromptTemplate::has_placeholder(std::string_view name) const {
  return text.find("{" + std::string(name) + "}") != std::string::npos;
}

std::string PromptTemplate::fill(const std::map<std::string, std::string, std::less<>>& values) const {
  std::string out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    if (text[i] == '{') {
      const auto close = text.find('}', i + 1);
      if (close != std::string::npos) {
        const auto key = std::string_view(text).substr(i + 1, close - i - 1);
        if (const auto it = values.find(key); it != values.end()) {
          out += it->second;
          i = close + 1;
          continue;
        }
      }
    }
    out += text[i++];
  }
  return out;
}

PromptTemplate PromptTemplate::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::IoError, "cannot read template " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return PromptTemplate{ss.str()};
}

namespace templates {

const PromptTemplate& gradient() {
  static const PromptTemplate t{
      "You are reviewing one section of a structured prompt. The prompt has five fixed sections: "
      "System Role, Context, Task, Constraints and Output Format. Only the section under review may change.\n"
      "\n"
      "Section under review: {SECTION_KIND}\n"
      "\n"
      "----- BEGIN SECTION -----\n"
      "{SECTION_CONTENT}\n"
      "----- END SECTION -----\n"
      "\n"
      "The rest of the prompt, for reference only:\n"
      "----- BEGIN CONTEXT -----\n"
      "{CONTEXT}\n"
      "----- END CONTEXT -----\n"
      "{FAILURE_EXAMPLES}\n"
      "Propose concrete improvements to the section under review that would help a model follow the prompt "
      "more reliably. Do not introduce task information that the prompt does not already contain or imply. "
      "Write each improvement as one standalone instruction that can be appended to the section, one per line, "
      "with no commentary and no section tags. If the section needs no change, reply with NO CHANGE.\n"};
  return t;
}

const PromptTemplate& consolidation() {
  static const PromptTemplate t{
      "The text below is the {SECTION_KIND} section of a structured prompt. Some lines may repeat or overlap "
      "in meaning. Remove redundant lines and merge overlapping instructions, but keep every distinct "
      "instruction and fact. Reply with the consolidated section text only, without section tags or "
      "commentary.\n"
      "\n"
      "----- BEGIN SECTION -----\n"
      "{SECTION_CONTENT}\n"
      "----- END SECTION -----\n"};
  return t;
}

const PromptTemplate& extraction() {
  static const PromptTemplate t{
      "Rewrite the prompt below into exactly these five tagged sections, each tag on its own line and in this "
      "order:\n"
      "<System Role>\n<Context>\n<Task>\n<Constraints>\n<Output Format>\n"
      "Copy or minimally rephrase text from the prompt into the section where it belongs. Do not add task "
      "information that the prompt does not contain. Leave a section empty if nothing in the prompt fits it. "
      "Reply with the tagged prompt only.\n"
      "\n"
      "----- BEGIN PROMPT -----\n"
      "{SOURCE_PROMPT}\n"
      "----- END PROMPT -----\n"};
  return t;
}

const PromptTemplate& global_rewrite() {
  static const PromptTemplate t{
      "Critique the prompt below as a whole and then rewrite it so that a model answers more accurately. "
      "Reply with the rewritten prompt only.\n"
      "\n"
      "----- BEGIN PROMPT -----\n"
      "{PROMPT}\n"
      "----- END PROMPT -----\n"};
  return t;
}

std::optional<std::string> extract_block(std::string_view body, std::string_view begin, std::string_view end) {
  const auto b = body.find(begin);
  if (b == std::string_view::npos) return std::nullopt;
  auto start = b + begin.size();
  if (start < body.size() && body[start] == '\n') ++start;
  const auto e = body.find(end, start);
  if (e == std::string_view::npos) return std::nullopt;
  auto inner = body.substr(start, e - start);
  if (inner.ends_with('\n')) inner.remove_suffix(1);
  return std::string(inner);
}

}  // namespace templates

void validate_gradient_template(const PromptTemplate& tmpl) {
  for (const char* name : {"SECTION_KIND", "SECTION_CONTENT", "CONTEXT"}) {
    if (!tmpl.has_placeholder(name)) {
      throw Error(ErrorCode::InvalidArgument, std::string("gradient template lacks {") + name + "}");
    }
  }
}

std::vector<std::string> parse_directives(std::string_view response) {
  std::vector<std::string> out;
  for (const auto& line : text::split_lines(response)) {
    if (classify_line(line).cls != LineClass::Content || contains_schema_markup(line)) continue;
    const auto d = text::trim(text::strip_list_marker(line));
    if (d.empty()) continue;
    out.emplace_back(d);
  }
  if (out.size() == 1) {
    auto lowered = text::to_lower_ascii(out.front());
    while (!lowered.empty() && (lowered.back() == '.' || lowered.back() == '!')) lowered.pop_back();
    if (lowered == "no change" || lowered == "no changes") out.clear();
  }
  return out;
}

TextualGradient request_gradient(ChatBackend& backend, const Section& section, std::string_view context,
                                 const PromptTemplate& tmpl, const GenerationParams& params,
                                 std::string_view failure_examples) {
  std::string examples;
  if (!failure_examples.empty()) {
    examples = "\nExamples the solver answered incorrectly with the current prompt:\n" +
               std::string(failure_examples) + "\n";
  }
  const ChatTurn turn{Role::User, tmpl.fill({{"SECTION_KIND", std::string(tag_label(section.kind()))},
                                             {"SECTION_CONTENT", section.content()},
                                             {"CONTEXT", std::string(context)},
                                             {"FAILURE_EXAMPLES", examples}})};
  TextualGradient g;
  g.target = section.kind();
  g.raw_response = backend.complete(std::span(&turn, 1), params);
  g.directives = parse_directives(g.raw_response);
  g.critic_identity = backend.identity();
  return g;
}

Section consolidate(ChatBackend& backend, const Section& section, const PromptTemplate& tmpl,
                    const GenerationParams& params) {
  const ChatTurn turn{Role::User, tmpl.fill({{"SECTION_KIND", std::string(tag_label(section.kind()))},
                                             {"SECTION_CONTENT", section.content()}})};
  const auto response = backend.complete(std::span(&turn, 1), params);
  if (contains_schema_markup(response)) {
    throw Error(ErrorCode::ConsolidationRejected,
                "consolidated " + std::string(kind_name(section.kind())) + " contains schema markup");
  }
  if (!section.empty() && text::is_blank(response)) {
    throw Error(ErrorCode::ConsolidationRejected,
                "consolidation erased the non-empty " + std::string(kind_name(section.kind())) + " section");
  }
  return Section(section.kind(), response, Provenance::Refined);
}

}  // namespace mpo
