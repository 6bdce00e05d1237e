#include <benchmark/benchmark.h>
#include <spdlog/spdlog.h>

#include <chrono>
#include <fstream>
#include <random>
#include <sstream>

#include "mpo/eval.hpp"
#include "mpo/mock.hpp"
#include "mpo/optimizer.hpp"

using namespace mpo;

namespace {

constexpr std::chrono::microseconds kLatency{2000};

std::string read_fixture(const std::string& name) {
  std::ifstream in(std::string(MPO_FIXTURE_DIR) + "/" + name);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const PromptState& prompt() {
  static const PromptState p = parse_structured_prompt(read_fixture("tagged_prompt.txt"));
  return p;
}

const Dataset& dataset() {
  static const Dataset d = load_dataset(std::string(MPO_FIXTURE_DIR) + "/mcq10.jsonl", DatasetFormat::GenericJsonl);
  return d;
}

std::shared_ptr<ChatBackend> slow_critic() { return mock::with_latency(mock::default_critic(), kLatency); }

void BM_StepSerial(benchmark::State& state) {
  auto critic = slow_critic();
  OptimizerConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(step_serial(prompt(), *critic, cfg));
}
BENCHMARK(BM_StepSerial)->Unit(benchmark::kMillisecond)->UseRealTime();

void BM_StepParallel(benchmark::State& state) {
  auto critic = slow_critic();
  OptimizerConfig cfg;
  cfg.concurrency_width = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(step(prompt(), *critic, cfg));
}
BENCHMARK(BM_StepParallel)->Arg(1)->Arg(5)->Unit(benchmark::kMillisecond)->UseRealTime();

void BM_EvaluateSerial(benchmark::State& state) {
  auto solver = mock::with_latency(mock::constant("Answer: B"), kLatency);
  for (auto _ : state) benchmark::DoNotOptimize(evaluate_serial(prompt(), dataset(), *solver));
}
BENCHMARK(BM_EvaluateSerial)->Unit(benchmark::kMillisecond)->UseRealTime();

void BM_EvaluateParallel(benchmark::State& state) {
  auto solver = mock::with_latency(mock::constant("Answer: B"), kLatency);
  EvalOptions opts;
  opts.concurrency_width = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(evaluate(prompt(), dataset(), *solver, opts));
}
BENCHMARK(BM_EvaluateParallel)->Arg(1)->Arg(4)->Arg(10)->Unit(benchmark::kMillisecond)->UseRealTime();

void BM_LexicalDedup(benchmark::State& state) {
  std::mt19937_64 rng(7);
  const char* pool[] = {"- Show your reasoning.", "Be concise.", "* be concise", "1. Cite the passage.",
                        "", "Use plain language.", "  USE PLAIN LANGUAGE.  "};
  std::string text;
  for (int i = 0; i < state.range(0); ++i) text += std::string(pool[rng() % 7]) + "\n";
  for (auto _ : state) benchmark::DoNotOptimize(lexical_dedup(text));
  state.SetBytesProcessed(static_cast<int64_t>(state.iterations()) * static_cast<int64_t>(text.size()));
}
BENCHMARK(BM_LexicalDedup)->Range(16, 4096);

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_level(spdlog::level::off);
  benchmark::Initialize(&argc, argv);
  if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
  benchmark::RunSpecifiedBenchmarks();
  benchmark::Shutdown();
  return 0;
}
