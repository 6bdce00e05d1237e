#include <gtest/gtest.h>

#include <nlohmann/json.hpp>

#include "mpo/mock.hpp"
#include "mpo/schema.hpp"
#include "support/test_support.hpp"

namespace mpo {
namespace {

using testing::read_fixture;

TEST(SectionKindTest, CanonicalOrderAndNames) {
  ASSERT_EQ(kCanonicalOrder.size(), 5u);
  EXPECT_EQ(tag_line(SectionKind::SystemRole), "<System Role>");
  EXPECT_EQ(tag_line(SectionKind::RelevantContext), "<Context>");
  EXPECT_EQ(tag_line(SectionKind::TaskDetails), "<Task>");
  EXPECT_EQ(tag_line(SectionKind::Constraints), "<Constraints>");
  EXPECT_EQ(tag_line(SectionKind::OutputFormat), "<Output Format>");
  for (auto k : kCanonicalOrder) {
    EXPECT_EQ(parse_kind(kind_name(k)), k);
    EXPECT_EQ(parse_kind(tag_label(k)), k);
  }
  EXPECT_FALSE(parse_kind("Examples"));
}

TEST(SectionTest, RejectsTagStrings) {
  EXPECT_THROW(Section(SectionKind::Constraints, "keep <Task> intact"), Error);
  EXPECT_THROW(Section(SectionKind::Constraints, "ok\n<Examples>\nmore"), Error);
  try {
    Section(SectionKind::TaskDetails, "<Output Format>");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::TagInContent);
  }
  EXPECT_NO_THROW(Section(SectionKind::OutputFormat, "End with 'Answer: <letter>'."));
  EXPECT_NO_THROW(Section(SectionKind::OutputFormat, "<tool_call> stays literal"));
}

TEST(SectionTest, CanonicalizesBlankEdges) {
  const Section s(SectionKind::TaskDetails, "\n  \nA\r\n\nB\n\n");
  EXPECT_EQ(s.content(), "A\n\nB");
}

TEST(ParseTest, TaggedPrompt) {
  const auto state = parse_structured_prompt(read_fixture("tagged_prompt.txt"));
  EXPECT_EQ(state.iteration(), 0u);
  EXPECT_EQ(state.section(SectionKind::SystemRole).content(), "You are a helpful, creative, and smart assistant.");
  EXPECT_EQ(text::split_lines(state.section(SectionKind::TaskDetails).content()).size(), 6u);
  EXPECT_EQ(text::split_lines(state.section(SectionKind::Constraints).content()).size(), 8u);
  EXPECT_EQ(text::split_lines(state.section(SectionKind::OutputFormat).content()).size(), 6u);
  for (const auto& s : state.sections()) EXPECT_EQ(s.provenance(), Provenance::Original);
}

TEST(ParseTest, EmptyTextGivesEmptySections) {
  const auto state = parse_structured_prompt("");
  for (const auto& s : state.sections()) EXPECT_TRUE(s.empty());
  EXPECT_TRUE(parse_structured_prompt("\n  \n").same_content(state));
}

TEST(ParseTest, MissingSectionsAreEmpty) {
  const auto state = parse_structured_prompt("<Constraints>\n- be brief\n");
  EXPECT_EQ(state.section(SectionKind::Constraints).content(), "- be brief");
  EXPECT_TRUE(state.section(SectionKind::TaskDetails).empty());
}

TEST(ParseTest, TagsOutOfOrderStillMapToKinds) {
  const auto state = parse_structured_prompt("<Task>\nt\n<System Role>\nr\n");
  EXPECT_EQ(state.section(SectionKind::SystemRole).content(), "r");
  EXPECT_EQ(state.section(SectionKind::TaskDetails).content(), "t");
}

TEST(ParseTest, Errors) {
  auto code_of = [](std::string_view text) {
    try {
      parse_structured_prompt(text);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::IoError;
  };
  EXPECT_EQ(code_of("<Task>\na\n<Task>\nb\n"), ErrorCode::DuplicateSectionTag);
  EXPECT_EQ(code_of("<Task\nbody\n"), ErrorCode::MalformedTag);
  EXPECT_EQ(code_of("<Task> inline body\n"), ErrorCode::MalformedTag);
  EXPECT_EQ(code_of("<Examples>\nbody\n"), ErrorCode::MalformedTag);
  EXPECT_EQ(code_of("<Task>\nsee <Context> above\n"), ErrorCode::MalformedTag);
  EXPECT_EQ(code_of("preamble\n<Task>\nbody\n"), ErrorCode::UntaggedLeadingContent);
  EXPECT_EQ(code_of("just some text"), ErrorCode::UntaggedLeadingContent);
}

TEST(RenderTest, EmptyStateShowsAllTags) {
  EXPECT_EQ(render_prompt(PromptState{}),
            "<System Role>\n\n<Context>\n\n<Task>\n\n<Constraints>\n\n<Output Format>\n");
}

TEST(RenderTest, TaggedPromptIsByteStable) {
  const auto text = read_fixture("tagged_prompt.txt");
  EXPECT_EQ(render_prompt(parse_structured_prompt(text)), text);
}

TEST(RenderTest, SingleSectionEcho) {
  const auto state = PromptState{}.with_section(Section(SectionKind::Constraints, "- no lists"));
  const auto out = render_prompt(state);
  EXPECT_NE(out.find("<Constraints>\n- no lists\n"), std::string::npos);
  EXPECT_EQ(out.find("- no lists"), out.rfind("- no lists"));
}

TEST(RenderTest, RoundTripProperty) {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 300; ++i) {
    const auto s = testing::random_state(rng);
    const auto text = render_prompt(s);
    const auto back = parse_structured_prompt(text);
    ASSERT_TRUE(back.same_content(s)) << text;
    ASSERT_EQ(render_prompt(back), text);
  }
}

TEST(SectionContextTest, ExcludesTargetSection) {
  const auto state = parse_structured_prompt(read_fixture("tagged_prompt.txt"));
  const auto ctx = section_context(state, SectionKind::SystemRole);
  EXPECT_EQ(ctx.find("helpful, creative"), std::string::npos);
  EXPECT_EQ(ctx.find("<System Role>"), std::string::npos);
  EXPECT_NE(ctx.find("<Task>\n" + state.section(SectionKind::TaskDetails).content() + "\n"), std::string::npos);

  const auto c2 = section_context(state, SectionKind::Constraints);
  int tags = 0;
  for (const auto& line : text::split_lines(c2)) tags += classify_line(line).cls == LineClass::Tag;
  EXPECT_EQ(tags, 4);
  EXPECT_EQ(c2.find("<Constraints>"), std::string::npos);
}

TEST(SectionContextTest, AllEmpty) {
  EXPECT_EQ(section_context(PromptState{}, SectionKind::TaskDetails),
            "<System Role>\n\n<Context>\n\n<Constraints>\n\n<Output Format>\n");
}

TEST(SectionContextTest, SentinelNeverLeaks) {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 200; ++i) {
    auto s = testing::random_state(rng);
    const auto kind = kCanonicalOrder[rng() % kSectionCount];
    const std::string sentinel = "SENTINEL_" + std::to_string(rng());
    s = s.with_section(Section(kind, sentinel));
    const auto ctx = section_context(s, kind);
    ASSERT_EQ(ctx.find(sentinel), std::string::npos);
    ASSERT_EQ(ctx.find(tag_line(kind)), std::string::npos);
  }
}

TEST(DecomposeTest, RawPromptWithHeadingExtractor) {
  auto extractor = mock::heading_extractor();
  const auto source = read_fixture("raw_prompt.txt");
  const auto state = decompose_unstructured(source, *extractor);
  const auto b = parse_structured_prompt(read_fixture("tagged_prompt.txt"));
  // The mock copies text only, so the invented system role from the tagged
  // version cannot appear; every other section matches it exactly.
  EXPECT_TRUE(state.section(SectionKind::SystemRole).empty());
  for (auto k : {SectionKind::RelevantContext, SectionKind::TaskDetails, SectionKind::Constraints,
                 SectionKind::OutputFormat}) {
    EXPECT_EQ(state.section(k).content(), b.section(k).content()) << kind_name(k);
  }
  EXPECT_TRUE(vocabulary_violations(state, source).empty());
}

TEST(DecomposeTest, TaggedInputBypassesExtractor) {
  auto never = std::make_shared<ScriptedBackend>("never", [](auto, const auto&) -> std::string {
    throw Error(ErrorCode::BackendError, "must not be called");
  });
  const auto text = read_fixture("tagged_prompt.txt");
  EXPECT_EQ(decompose_unstructured(text, *never), parse_structured_prompt(text));
}

TEST(DecomposeTest, InlineHeadingRoutesToConstraints) {
  auto extractor = mock::heading_extractor();
  const std::string source =
      "Summarize the report.\n\nRules to stick to: X\n\nOutput format: one paragraph\n\nYou are an analyst.\n";
  const auto state = decompose_unstructured(source, *extractor);
  EXPECT_EQ(state.section(SectionKind::Constraints).content(), "X");
  EXPECT_EQ(state.section(SectionKind::OutputFormat).content(), "one paragraph");
  EXPECT_EQ(state.section(SectionKind::SystemRole).content(), "You are an analyst.");
  EXPECT_EQ(state.section(SectionKind::RelevantContext).content(), "Summarize the report.");
}

TEST(DecomposeTest, ProvenanceMarksInferredContent) {
  auto extractor = mock::constant("<System Role>\nYou are a tutor.\n<Task>\nSolve 2 + 2.\n");
  const auto state = decompose_unstructured("Solve 2 + 2.", *extractor);
  EXPECT_EQ(state.section(SectionKind::SystemRole).provenance(), Provenance::Inferred);
  EXPECT_EQ(state.section(SectionKind::TaskDetails).provenance(), Provenance::Original);
  EXPECT_EQ(vocabulary_violations(state, "Solve 2 + 2."), (std::vector<std::string>{"you", "are", "a", "tutor"}));
}

TEST(DecomposeTest, Errors) {
  auto extractor = mock::heading_extractor();
  try {
    decompose_unstructured("  \n", *extractor);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyInput);
  }
  auto failing = std::make_shared<ScriptedBackend>("down", [](auto, const auto&) -> std::string {
    throw Error(ErrorCode::BackendError, "503");
  });
  try {
    decompose_unstructured("free text", *failing);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ExtractorFailure);
  }
  auto chatty = mock::constant("I cannot do that.");
  EXPECT_THROW(decompose_unstructured("free text", *chatty), Error);
}

TEST(DecomposeTest, MockNeverIntroducesVocabulary) {
  std::mt19937_64 rng(3);
  auto extractor = mock::heading_extractor();
  static const std::vector<std::string> headings{"Rules to stick to:", "Your tasks:", "Output format:",
                                                 "Background:", "Important instructions:", ""};
  for (int i = 0; i < 100; ++i) {
    std::string source;
    const int blocks = 1 + static_cast<int>(rng() % 5);
    for (int b = 0; b < blocks; ++b) {
      const auto& h = headings[rng() % headings.size()];
      if (!h.empty()) source += h + (rng() % 2 ? " " : "\n");
      source += testing::random_content(rng, 4) + "\nfiller line\n\n";
    }
    const auto state = decompose_unstructured(source, *extractor);
    ASSERT_TRUE(vocabulary_violations(state, source).empty()) << source;
  }
}

TEST(DiffTest, IdentityHasNoChanges) {
  const auto a = parse_structured_prompt(read_fixture("tagged_prompt.txt"));
  const auto report = diff_states(a, a);
  EXPECT_TRUE(report.identical());
  for (const auto& s : report.sections) EXPECT_EQ(s.token_delta, 0);
  EXPECT_TRUE(report.relocations.empty());
}

TEST(DiffTest, OneAppendedLine) {
  const auto a = parse_structured_prompt(read_fixture("tagged_prompt.txt"));
  const auto& c = a.section(SectionKind::Constraints).content();
  const auto b = a.with_section(Section(SectionKind::Constraints, c + "\nAnswer with one letter only."));
  const auto report = diff_states(a, b);
  int changed = 0;
  for (const auto& s : report.sections) changed += s.changed();
  EXPECT_EQ(changed, 1);
  const auto& sd = report.section(SectionKind::Constraints);
  EXPECT_EQ(sd.token_delta, 5);
  EXPECT_EQ(sd.lines.back(), (DiffLine{DiffOp::Added, "Answer with one letter only."}));
}

TEST(DiffTest, TaggedToRefined) {
  const auto b = parse_structured_prompt(read_fixture("tagged_prompt.txt"));
  const auto c = parse_structured_prompt(read_fixture("refined_prompt.txt"));
  const auto report = diff_states(b, c);
  EXPECT_FALSE(report.identical());
  const std::string moved = "- For every task give me multiple questions for further thought.";
  const auto& out = report.section(SectionKind::OutputFormat).lines;
  EXPECT_NE(std::find(out.begin(), out.end(), DiffLine{DiffOp::Removed, moved}), out.end());
  const auto reloc = std::find_if(report.relocations.begin(), report.relocations.end(),
                                  [&](const Relocation& r) { return r.line == moved; });
  ASSERT_NE(reloc, report.relocations.end());
  EXPECT_EQ(reloc->from, SectionKind::OutputFormat);
  EXPECT_EQ(reloc->to, SectionKind::TaskDetails);

  const auto json = nlohmann::json::parse(render_diff_json(report));
  EXPECT_FALSE(json["identical"].get<bool>());
  EXPECT_EQ(json["sections"].size(), 5u);
  EXPECT_EQ(json["sections"][4]["section"], "OutputFormat");
  EXPECT_EQ(json["sections"][4]["lines"][0]["op"], "removed");
  EXPECT_NE(render_diff_text(report).find("relocated: \"" + moved + "\" Output Format -> Task"), std::string::npos);
}

}  // namespace
}  // namespace mpo
