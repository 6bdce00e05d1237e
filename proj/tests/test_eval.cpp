#include <gtest/gtest.h>

#include <nlohmann/json.hpp>

#include "mpo/eval.hpp"
#include "support/test_support.hpp"

namespace mpo {
namespace {

using testing::fixture_path;
using testing::read_fixture;

const std::set<char> kABCD{'A', 'B', 'C', 'D'};

PromptState tagged_prompt() { return parse_structured_prompt(read_fixture("tagged_prompt.txt")); }

ErrorCode load_error(const std::string& fixture, DatasetFormat format) {
  try {
    load_dataset(fixture_path(fixture), format);
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::IoError;
}

TEST(DatasetTest, GenericJsonl) {
  const auto ds = load_dataset(fixture_path("mcq10.jsonl"), DatasetFormat::GenericJsonl);
  EXPECT_EQ(ds.name, "mcq10");
  EXPECT_EQ(ds.split, Split::Test);
  ASSERT_EQ(ds.items.size(), 10u);
  EXPECT_EQ(ds.items[0].id, "q1");
  EXPECT_EQ(ds.items[0].choices, (std::vector<Choice>{{'A', "3"}, {'B', "4"}}));
  EXPECT_EQ(ds.items[0].answer_key, 'B');
  EXPECT_EQ(ds.items[1].valid_letters(), kABCD);
}

TEST(DatasetTest, GenericJsonlVariants) {
  const auto ds = parse_dataset(
      R"({"id":"x","question":"q","choices":{"2":"two","1":"one"},"answer":"2"}
{"id":"y","question":"q","choices":["p","q","r"],"answer":"c","subject":"misc"}
)",
      DatasetFormat::GenericJsonl, "v");
  EXPECT_EQ(ds.items[0].choices, (std::vector<Choice>{{'A', "one"}, {'B', "two"}}));
  EXPECT_EQ(ds.items[0].answer_key, 'B');
  EXPECT_EQ(ds.items[1].answer_key, 'C');
  EXPECT_EQ(ds.items[1].subject, "misc");
}

TEST(DatasetTest, ArcLabelsMapToLetters) {
  const auto ds = load_dataset(fixture_path("arc_sample.jsonl"), DatasetFormat::ArcJsonl);
  ASSERT_EQ(ds.items.size(), 5u);
  std::string keys;
  for (const auto& it : ds.items) keys += it.answer_key;
  EXPECT_EQ(keys, "DCBBC");
  EXPECT_EQ(ds.items[0].choices[3], (Choice{'D', "sound"}));
  EXPECT_EQ(ds.items[4].choices.size(), 5u);
  EXPECT_EQ(ds.items[0].id, "ARC_FIX_001");
}

TEST(DatasetTest, MmluCsv) {
  const auto ds = load_dataset(fixture_path("astronomy_test.csv"), DatasetFormat::MmluCsv);
  ASSERT_EQ(ds.items.size(), 3u);
  EXPECT_EQ(ds.split, Split::Test);
  EXPECT_EQ(ds.items[0].subject, "astronomy");
  EXPECT_EQ(ds.items[0].id, "astronomy-0");
  EXPECT_EQ(ds.items[1].question, "Which planet has the most moons, as of recent counts?");
  EXPECT_EQ(ds.items[2].question, "Which statement is true?\n(multi-line question)");
  std::string keys;
  for (const auto& it : ds.items) keys += it.answer_key;
  EXPECT_EQ(keys, "BCC");
  EXPECT_THROW(parse_dataset("q,a,b,c,D\n", DatasetFormat::MmluCsv, "bad"), Error);
  EXPECT_THROW(parse_dataset("\"q,a,b,c,d,A\n", DatasetFormat::MmluCsv, "bad"), Error);
}

TEST(DatasetTest, Errors) {
  EXPECT_EQ(load_error("missing_answer.jsonl", DatasetFormat::GenericJsonl), ErrorCode::MissingAnswerKey);
  EXPECT_EQ(load_error("duplicate_id.jsonl", DatasetFormat::GenericJsonl), ErrorCode::DuplicateId);
  EXPECT_EQ(load_error("no_such_file.jsonl", DatasetFormat::GenericJsonl), ErrorCode::IoError);
  EXPECT_EQ(load_error("raw_prompt.txt", DatasetFormat::GenericJsonl), ErrorCode::FormatError);
  EXPECT_TRUE(load_dataset(fixture_path("empty.jsonl"), DatasetFormat::GenericJsonl).items.empty());
  EXPECT_THROW(parse_dataset(R"({"id":"z","question":"q","choices":{"A":"","B":"b"},"answer":"A"})",
                             DatasetFormat::GenericJsonl, "z"),
               Error);
  EXPECT_THROW(parse_dataset(R"({"id":"z","question":"q","choices":{"A":"a","B":"b"},"answer":"E"})",
                             DatasetFormat::GenericJsonl, "z"),
               Error);
}

TEST(DatasetTest, SubsampleIsDeterministic) {
  const auto ds = load_dataset(fixture_path("mcq10.jsonl"), DatasetFormat::GenericJsonl);
  const auto a = subsample(ds, 4, 7);
  const auto b = subsample(ds, 4, 7);
  ASSERT_EQ(a.items.size(), 4u);
  EXPECT_EQ(a.item_set_digest(), b.item_set_digest());
  EXPECT_NE(a.item_set_digest(), ds.item_set_digest());
  // Dataset order is kept.
  for (std::size_t i = 1; i < a.items.size(); ++i) {
    const auto pos = [&](const std::string& id) {
      return std::find_if(ds.items.begin(), ds.items.end(), [&](const McqItem& it) { return it.id == id; });
    };
    EXPECT_LT(pos(a.items[i - 1].id), pos(a.items[i].id));
  }
  EXPECT_EQ(subsample(ds, 50, 7).item_set_digest(), ds.item_set_digest());
  int differs = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) differs += subsample(ds, 4, seed).item_set_digest() != a.item_set_digest();
  EXPECT_GT(differs, 0);
}

TEST(DatasetTest, ItemSetDigestIgnoresOrder) {
  auto ds = load_dataset(fixture_path("mcq10.jsonl"), DatasetFormat::GenericJsonl);
  const auto d = ds.item_set_digest();
  std::reverse(ds.items.begin(), ds.items.end());
  EXPECT_EQ(ds.item_set_digest(), d);
}

TEST(PoseQuestionTest, Layout) {
  const auto ds = load_dataset(fixture_path("mcq10.jsonl"), DatasetFormat::GenericJsonl);
  const auto p = tagged_prompt();
  const auto q = pose_question(p, ds.items[0]);
  EXPECT_EQ(q, render_prompt(p) + "\n2+2?\nA. 3\nB. 4\n" + std::string(templates::kAnswerElicitation) + "\n");
}

TEST(ExtractTest, HandLabeledFixtures) {
  int agree = 0, total = 0;
  for (const auto& line : text::split_lines(read_fixture("extraction_cases.jsonl"))) {
    if (text::is_blank(line)) continue;
    const auto j = nlohmann::json::parse(line);
    std::set<char> valid;
    for (char c : j["valid"].get<std::string>()) valid.insert(c);
    const std::optional<char> expected =
        j["expected"].is_null() ? std::nullopt : std::optional<char>(j["expected"].get<std::string>()[0]);
    const auto got = extract_answer(j["response"].get<std::string>(), valid);
    ++total;
    if (got == expected) {
      ++agree;
    } else {
      ADD_FAILURE() << j["response"] << " expected " << j["expected"] << " got " << (got ? std::string(1, *got) : "null");
    }
  }
  EXPECT_EQ(total, 20);
  EXPECT_EQ(agree, 20);
}

TEST(ExtractTest, RuleOrder) {
  EXPECT_EQ(extract_answer("A is tempting.\nAnswer: C", kABCD), 'C');
  EXPECT_EQ(extract_answer("answer: d", kABCD), 'D');
  EXPECT_EQ(extract_answer("**Answer:** B", kABCD), 'B');
  EXPECT_EQ(extract_answer("  c  ", kABCD), 'C');
  EXPECT_EQ(extract_answer("I think B is right", kABCD), 'B');
  EXPECT_EQ(extract_answer("i think b is right", kABCD), std::nullopt);
  EXPECT_EQ(extract_answer("Answer: E", kABCD), std::nullopt);
  EXPECT_EQ(extract_answer("Z", kABCD), std::nullopt);
  EXPECT_EQ(extract_answer("", kABCD), std::nullopt);
  EXPECT_EQ(extract_answer("The answers vary.\nB", kABCD), std::nullopt);
}

TEST(ExtractTest, NeverLeavesValidSet) {
  std::mt19937_64 rng(31);
  const std::string alphabet = "ABCDEFGHabcdefgh :.()*\n-Answer";
  for (int i = 0; i < 5000; ++i) {
    std::set<char> valid;
    const int n = 2 + static_cast<int>(rng() % 5);
    for (int k = 0; k < n; ++k) valid.insert(static_cast<char>('A' + k));
    std::string s;
    const int len = static_cast<int>(rng() % 24);
    for (int k = 0; k < len; ++k) s += alphabet[rng() % alphabet.size()];
    const auto got = extract_answer(s, valid);
    if (got) ASSERT_TRUE(valid.contains(*got)) << s;
  }
}

EvalResult run_fixture(bool parallel) {
  const auto ds = load_dataset(fixture_path("mcq10.jsonl"), DatasetFormat::GenericJsonl);
  auto solver = mock::scripted_solver(testing::load_solver_script("mcq10_solver.jsonl"));
  return parallel ? evaluate(tagged_prompt(), ds, *solver) : evaluate_serial(tagged_prompt(), ds, *solver);
}

TEST(EvaluateTest, SevenOfTen) {
  const auto r = run_fixture(true);
  EXPECT_EQ(r.total, 10u);
  EXPECT_EQ(r.correct, 7u);
  EXPECT_EQ(r.accuracy, 0.7);
  EXPECT_EQ(r.unparseable, 2u);
  EXPECT_EQ(r.errors, 0u);
  std::size_t recount = 0;
  for (const auto& rec : r.items) recount += rec.extracted.has_value() && *rec.extracted == rec.gold;
  EXPECT_EQ(recount, r.correct);
  EXPECT_FALSE(r.macro_accuracy);
  EXPECT_EQ(r.items[8].id, "q9");
  EXPECT_FALSE(r.items[8].extracted);
  EXPECT_FALSE(r.items[8].correct);
  EXPECT_EQ(r.prompt_digest, content_digest(tagged_prompt()));
}

TEST(EvaluateTest, ParallelMatchesSerial) {
  const auto a = run_fixture(true);
  const auto b = run_fixture(false);
  EXPECT_EQ(to_json(a), to_json(b));
}

TEST(EvaluateTest, OrderIndependence) {
  auto ds = load_dataset(fixture_path("mcq10.jsonl"), DatasetFormat::GenericJsonl);
  auto solver = mock::with_latency(mock::scripted_solver(testing::load_solver_script("mcq10_solver.jsonl")),
                                   std::chrono::microseconds(200));
  const auto base = evaluate(tagged_prompt(), ds, *solver);
  std::mt19937_64 rng(9);
  for (int i = 0; i < 10; ++i) {
    std::shuffle(ds.items.begin(), ds.items.end(), rng);
    const auto r = evaluate(tagged_prompt(), ds, *solver);
    EXPECT_EQ(r.accuracy, base.accuracy);
    EXPECT_EQ(r.item_set_digest, base.item_set_digest);
    for (std::size_t k = 0; k < ds.items.size(); ++k) EXPECT_EQ(r.items[k].id, ds.items[k].id);
  }
}

TEST(EvaluateTest, AllUnparseable) {
  const auto ds = load_dataset(fixture_path("mcq10.jsonl"), DatasetFormat::GenericJsonl);
  auto solver = mock::constant("I refuse.");
  const auto r = evaluate(tagged_prompt(), ds, *solver);
  EXPECT_EQ(r.accuracy, 0.0);
  EXPECT_EQ(r.unparseable, r.total);
}

TEST(EvaluateTest, SolverFailures) {
  const auto ds = load_dataset(fixture_path("mcq10.jsonl"), DatasetFormat::GenericJsonl);
  std::atomic<int> n = 0;
  ScriptedBackend some_fail("solver@flaky", [&](std::span<const ChatTurn> turns, const GenerationParams&) {
    if (turns.back().content.find("2+2?") != std::string::npos) throw Error(ErrorCode::BackendError, "503");
    ++n;
    return std::string("Answer: A");
  });
  const auto r = evaluate(tagged_prompt(), ds, some_fail);
  EXPECT_EQ(r.errors, 1u);
  EXPECT_FALSE(r.items[0].correct);
  EXPECT_FALSE(r.items[0].error.empty());
  EXPECT_EQ(r.total, 10u);

  ScriptedBackend down("solver@down", [](auto, const auto&) -> std::string {
    throw Error(ErrorCode::BackendError, "503");
  });
  try {
    evaluate(tagged_prompt(), ds, down);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EvalAborted);
  }
  EXPECT_THROW(evaluate(tagged_prompt(), Dataset{"e", Split::Test, {}}, down), Error);
}

TEST(EvaluateTest, ReplayMissAborts) {
  const auto ds = load_dataset(fixture_path("mcq10.jsonl"), DatasetFormat::GenericJsonl);
  ReplayBackend empty{Transcript{}};
  try {
    evaluate(tagged_prompt(), ds, empty);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EvalAborted);
  }
}

TEST(EvaluateTest, SolverParams) {
  const auto ds = parse_dataset(R"({"id":"x","question":"q","choices":{"A":"a","B":"b"},"answer":"A"})",
                                DatasetFormat::GenericJsonl, "one");
  GenerationParams seen;
  ScriptedBackend solver("solver@probe", [&](std::span<const ChatTurn>, const GenerationParams& p) {
    seen = p;
    return std::string("A");
  });
  evaluate(PromptState{}, ds, solver);
  EXPECT_EQ(seen.max_output_tokens, 64);
  EXPECT_EQ(seen.temperature, 0.0);
}

TEST(EvaluateTest, MicroAndMacro) {
  auto ds = load_dataset(fixture_path("astronomy_test.csv"), DatasetFormat::MmluCsv);
  auto other = parse_dataset("\"2+2?\",3,4,5,6,B\n", DatasetFormat::MmluCsv, "math_test", Split::Test, "math");
  ds.items.insert(ds.items.end(), other.items.begin(), other.items.end());
  auto solver = mock::constant("Answer: C");
  const auto r = evaluate(PromptState{}, ds, *solver);
  EXPECT_EQ(r.correct, 2u);
  EXPECT_EQ(r.accuracy, 0.5);
  ASSERT_TRUE(r.macro_accuracy);
  EXPECT_DOUBLE_EQ(*r.macro_accuracy, (2.0 / 3.0 + 0.0) / 2.0);
  ASSERT_EQ(r.subjects.size(), 2u);
}

TEST(EvaluateTest, JsonRoundTrip) {
  const auto r = run_fixture(true);
  const auto j = to_json(r);
  EXPECT_EQ(j["items"][9]["extracted"], "Unparseable");
  const auto back = eval_result_from_json(nlohmann::json::parse(j.dump()));
  EXPECT_EQ(to_json(back), j);
}

EvalResult synthetic(double accuracy, std::string digest = "d") {
  EvalResult r;
  r.dataset = "ARC-Challenge";
  r.accuracy = accuracy;
  r.total = 1000;
  r.item_set_digest = std::move(digest);
  return r;
}

TEST(CompareTest, TableFormatting) {
  const auto report = compare({{"untuned", synthetic(0.750)}, {"mpo", synthetic(0.791)}});
  ASSERT_EQ(report.rows.size(), 2u);
  EXPECT_EQ(report.rows[0].accuracy_text, "75.00");
  EXPECT_EQ(report.rows[0].delta_text, "0.00");
  EXPECT_EQ(report.rows[1].accuracy_text, "79.10");
  EXPECT_EQ(report.rows[1].delta_text, "+4.10");
  const auto text = render_comparison_text(report);
  EXPECT_NE(text.find("79.10"), std::string::npos);
  EXPECT_NE(text.find("+4.10"), std::string::npos);
  EXPECT_EQ(to_json(report)["rows"][1]["delta_pct"], "+4.10");
}

TEST(CompareTest, DeltaCases) {
  EXPECT_EQ(compare({{"a", synthetic(0.5)}, {"b", synthetic(0.5)}}).rows[1].delta_text, "0.00");
  EXPECT_EQ(compare({{"a", synthetic(0.7073)}, {"b", synthetic(0.7304)}}).rows[1].delta_text, "+2.31");
  EXPECT_EQ(compare({{"a", synthetic(0.5721)}, {"b", synthetic(0.5631)}}).rows[1].delta_text, "-0.90");
  EXPECT_EQ(format_percent(0.5379), "53.79");
  EXPECT_EQ(format_percent(1.0), "100.00");
  EXPECT_EQ(format_delta(-0.0), "0.00");
}

TEST(CompareTest, Errors) {
  try {
    compare({{"a", synthetic(0.5, "x")}, {"b", synthetic(0.5, "y")}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DatasetMismatch);
  }
  EXPECT_THROW(compare({{"a", synthetic(0.5)}}), Error);
}

}  // namespace
}  // namespace mpo
