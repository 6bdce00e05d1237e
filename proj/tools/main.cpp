#include <CLI11.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "mpo/backend.hpp"
#include "mpo/critic.hpp"
#include "mpo/eval.hpp"
#include "mpo/mock.hpp"
#include "mpo/optimizer.hpp"
#include "mpo/schema.hpp"
#include "mpo/text.hpp"

namespace fs = std::filesystem;
using namespace mpo;

namespace {

enum ExitCode : int { kOk = 0, kDifferent = 1, kInputError = 2, kAborted = 3 };

enum class Mode { Live, Mock, Replay };

// Effective settings after defaults, config file, environment and flags.
struct RunConfig {
  Mode mode = Mode::Live;
  std::string replay_path;
  bool record = false;
  std::string out_dir;
  std::uint64_t seed = 0;

  std::string base_url;
  std::string api_key;
  std::map<std::string, std::string> models;  // role -> model id
  int max_retries = 3;
  int timeout_seconds = 300;

  OptimizerConfig optimizer;
  std::string method = "mpo";
  PromptTemplate extraction_template = templates::extraction();

  std::string dataset;
  std::string format = "generic_jsonl";
  std::size_t limit = 0;
  int eval_width = 8;
  std::string solver_script;
};

// Command-line values; unset optionals leave the config value in place.
struct Flags {
  std::optional<std::string> config;
  std::optional<std::string> out;
  bool record = false;
  std::optional<std::string> replay;
  bool mock = false;
  std::optional<std::size_t> limit;
  std::optional<std::uint64_t> seed;
  std::optional<int> iterations;
  std::optional<std::string> dedup;
  std::optional<std::string> base_url;
  std::optional<std::string> critic_model;
  std::optional<std::string> solver_model;
  std::optional<std::string> extractor_model;
  std::optional<int> width;
  std::optional<std::string> method;
  std::optional<std::string> dataset;
  std::optional<std::string> format;
  std::optional<std::string> solver_script;
  std::optional<std::string> output;
  std::vector<std::string> labels;
  bool json = false;
  bool verbose = false;
};

std::string read_text(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::IoError, "cannot read " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_text(const std::string& path, const std::string& content) {
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream os(p, std::ios::binary | std::ios::trunc);
  if (!os) throw Error(ErrorCode::IoError, "cannot write " + path);
  os << content;
  if (!os) throw Error(ErrorCode::IoError, "failed writing " + path);
}

Mode parse_mode(const std::string& s) {
  if (s == "live") return Mode::Live;
  if (s == "mock") return Mode::Mock;
  if (s == "replay") return Mode::Replay;
  throw Error(ErrorCode::InvalidArgument, "run.mode must be live, mock or replay, not '" + s + "'");
}

const std::map<std::string, std::set<std::string>>& known_config_keys() {
  static const std::map<std::string, std::set<std::string>> keys{
      {"backend",
       {"base_url", "api_key", "critic_model", "solver_model", "extractor_model", "max_retries", "timeout_seconds"}},
      {"optimizer", {"iterations", "dedup", "concurrency_width", "max_section_tokens", "method", "failure_examples"}},
      {"templates", {"gradient", "consolidation", "extraction", "rewrite"}},
      {"eval", {"dataset", "format", "limit", "concurrency_width", "solver_script"}},
      {"run", {"mode", "replay", "record", "out", "seed"}},
  };
  return keys;
}

template <typename T>
T config_value(const boost::property_tree::ptree& pt, const std::string& key) {
  try {
    return pt.get<T>(key);
  } catch (const boost::property_tree::ptree_error&) {
    throw Error(ErrorCode::InvalidArgument, "config key " + key + " has an invalid value");
  }
}

void apply_config_file(RunConfig& cfg, const std::string& path) {
  boost::property_tree::ptree pt;
  try {
    boost::property_tree::ini_parser::read_ini(path, pt);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw Error(ErrorCode::InvalidArgument, "config " + path + ": " + e.message());
  }
  const auto& known = known_config_keys();
  for (const auto& [section, body] : pt) {
    const auto it = known.find(section);
    if (it == known.end()) throw Error(ErrorCode::InvalidArgument, "config " + path + ": unknown section [" + section + "]");
    for (const auto& [key, _] : body) {
      if (!it->second.contains(key)) {
        throw Error(ErrorCode::InvalidArgument, "config " + path + ": unknown key " + section + "." + key);
      }
    }
  }
  auto str = [&](const std::string& key) { return pt.get_optional<std::string>(key); };

  if (auto v = str("backend.base_url")) cfg.base_url = *v;
  if (auto v = str("backend.api_key")) cfg.api_key = *v;
  for (const char* role : {"critic", "solver", "extractor"}) {
    if (auto v = str(std::string("backend.") + role + "_model")) cfg.models[role] = *v;
  }
  if (str("backend.max_retries")) cfg.max_retries = config_value<int>(pt, "backend.max_retries");
  if (str("backend.timeout_seconds")) cfg.timeout_seconds = config_value<int>(pt, "backend.timeout_seconds");

  if (str("optimizer.iterations")) cfg.optimizer.iterations = config_value<int>(pt, "optimizer.iterations");
  if (auto v = str("optimizer.dedup")) {
    const auto m = parse_dedup_mode(*v);
    if (!m) throw Error(ErrorCode::InvalidArgument, "optimizer.dedup: unknown mode '" + *v + "'");
    cfg.optimizer.dedup_mode = *m;
  }
  if (str("optimizer.concurrency_width")) {
    cfg.optimizer.concurrency_width = config_value<int>(pt, "optimizer.concurrency_width");
  }
  if (str("optimizer.max_section_tokens")) {
    cfg.optimizer.max_section_tokens = config_value<std::size_t>(pt, "optimizer.max_section_tokens");
  }
  if (auto v = str("optimizer.method")) cfg.method = *v;
  if (auto v = str("optimizer.failure_examples")) cfg.optimizer.failure_examples = read_text(*v);

  if (auto v = str("templates.gradient")) cfg.optimizer.gradient_template = PromptTemplate::load(*v);
  if (auto v = str("templates.consolidation")) cfg.optimizer.consolidation_template = PromptTemplate::load(*v);
  if (auto v = str("templates.extraction")) cfg.extraction_template = PromptTemplate::load(*v);
  if (auto v = str("templates.rewrite")) cfg.optimizer.rewrite_template = PromptTemplate::load(*v);

  if (auto v = str("eval.dataset")) cfg.dataset = *v;
  if (auto v = str("eval.format")) cfg.format = *v;
  if (str("eval.limit")) cfg.limit = config_value<std::size_t>(pt, "eval.limit");
  if (str("eval.concurrency_width")) cfg.eval_width = config_value<int>(pt, "eval.concurrency_width");
  if (auto v = str("eval.solver_script")) cfg.solver_script = *v;

  if (auto v = str("run.mode")) cfg.mode = parse_mode(*v);
  if (auto v = str("run.replay")) cfg.replay_path = *v;
  if (str("run.record")) cfg.record = config_value<bool>(pt, "run.record");
  if (auto v = str("run.out")) cfg.out_dir = *v;
  if (str("run.seed")) cfg.seed = config_value<std::uint64_t>(pt, "run.seed");
}

RunConfig resolve(const Flags& f) {
  RunConfig cfg;
  if (f.config) apply_config_file(cfg, *f.config);

  if (const char* env = std::getenv("MPO_BASE_URL"); env && *env) cfg.base_url = env;
  if (const char* env = std::getenv("MPO_API_KEY"); env && *env) cfg.api_key = env;

  if (f.mock && f.replay) throw Error(ErrorCode::InvalidArgument, "--mock and --replay are mutually exclusive");
  if (f.mock) cfg.mode = Mode::Mock;
  if (f.replay) {
    cfg.mode = Mode::Replay;
    cfg.replay_path = *f.replay;
  }
  if (f.record) cfg.record = true;
  if (f.out) cfg.out_dir = *f.out;
  if (f.seed) cfg.seed = *f.seed;
  if (f.limit) cfg.limit = *f.limit;
  if (f.iterations) cfg.optimizer.iterations = *f.iterations;
  if (f.dedup) {
    const auto m = parse_dedup_mode(*f.dedup);
    if (!m) throw Error(ErrorCode::InvalidArgument, "--dedup: unknown mode '" + *f.dedup + "'");
    cfg.optimizer.dedup_mode = *m;
  }
  if (f.base_url) cfg.base_url = *f.base_url;
  if (f.critic_model) cfg.models["critic"] = *f.critic_model;
  if (f.solver_model) cfg.models["solver"] = *f.solver_model;
  if (f.extractor_model) cfg.models["extractor"] = *f.extractor_model;
  if (f.width) cfg.optimizer.concurrency_width = cfg.eval_width = *f.width;
  if (f.method) cfg.method = *f.method;
  if (f.dataset) cfg.dataset = *f.dataset;
  if (f.format) cfg.format = *f.format;
  if (f.solver_script) cfg.solver_script = *f.solver_script;

  if (cfg.mode == Mode::Replay && cfg.replay_path.empty()) {
    throw Error(ErrorCode::InvalidArgument, "replay mode needs a transcript path (--replay PATH)");
  }
  if (cfg.mode == Mode::Replay && cfg.record) {
    throw Error(ErrorCode::InvalidArgument, "--record cannot be combined with replay");
  }
  if (cfg.record && cfg.out_dir.empty()) throw Error(ErrorCode::InvalidArgument, "--record needs --out DIR");
  if (cfg.method != "mpo" && cfg.method != "global") {
    throw Error(ErrorCode::InvalidArgument, "--method must be mpo or global");
  }
  return cfg;
}

// One backend per role ("critic", "solver", "extractor"), all sharing the
// run's transcript or replay store.
class Backends {
 public:
  explicit Backends(const RunConfig& cfg) : cfg_(cfg) {
    if (cfg.mode == Mode::Replay) store_ = std::make_shared<ReplayStore>(Transcript::load(cfg.replay_path));
    if (cfg.record) transcript_ = std::make_shared<Transcript>();
  }

  std::shared_ptr<ChatBackend> get(const std::string& role) {
    std::shared_ptr<ChatBackend> backend;
    const auto prefix = role + "@";
    if (role == "solver" && !cfg_.solver_script.empty() && cfg_.mode != Mode::Replay) {
      backend = scripted_solver(prefix + "script");
    } else if (cfg_.mode == Mode::Replay) {
      backend = std::make_shared<ReplayBackend>(store_, store_->recorded_identity(prefix).value_or(prefix + "replay"));
    } else if (cfg_.mode == Mode::Mock) {
      backend = mock_for(role, prefix + "mock");
    } else {
      backend = live(role);
    }
    if (transcript_) backend = std::make_shared<RecordingBackend>(backend, transcript_);
    return backend;
  }

  void save_transcript() const {
    if (!transcript_) return;
    fs::create_directories(cfg_.out_dir);
    transcript_->save((fs::path(cfg_.out_dir) / "transcript.jsonl").string());
  }

 private:
  std::shared_ptr<ChatBackend> mock_for(const std::string& role, std::string identity) const {
    if (role == "critic") return mock::default_critic(std::move(identity));
    if (role == "extractor") return mock::heading_extractor(std::move(identity));
    return mock::scripted_solver({}, "Answer: A", std::move(identity));
  }

  std::shared_ptr<ChatBackend> scripted_solver(std::string identity) const {
    std::vector<std::pair<std::string, std::string>> script;
    std::size_t n = 0;
    for (const auto& line : text::split_lines(read_text(cfg_.solver_script))) {
      ++n;
      if (text::is_blank(line)) continue;
      const auto j = nlohmann::json::parse(line, nullptr, false);
      if (j.is_discarded() || !j.contains("question") || !j.contains("response")) {
        throw Error(ErrorCode::FormatError, cfg_.solver_script + " line " + std::to_string(n) +
                                                ": expected {\"question\": ..., \"response\": ...}");
      }
      script.emplace_back(j["question"].get<std::string>(), j["response"].get<std::string>());
    }
    return mock::scripted_solver(std::move(script), "(no scripted response)", std::move(identity));
  }

  std::shared_ptr<ChatBackend> live(const std::string& role) const {
    if (cfg_.base_url.empty()) {
      throw Error(ErrorCode::InvalidArgument, "no backend URL: set MPO_BASE_URL, backend.base_url or --base-url "
                                              "(or use --mock / --replay)");
    }
    const auto it = cfg_.models.find(role);
    if (it == cfg_.models.end() || it->second.empty()) {
      throw Error(ErrorCode::InvalidArgument, "no model for the " + role + " role: set backend." + role +
                                                  "_model or --" + role + "-model");
    }
    HttpBackendConfig hc;
    hc.base_url = cfg_.base_url;
    hc.model = it->second;
    hc.api_key = cfg_.api_key;
    hc.label = role;
    hc.retry.max_retries = cfg_.max_retries;
    hc.read_timeout = std::chrono::seconds(cfg_.timeout_seconds);
    return std::make_shared<HttpBackend>(hc);
  }

  const RunConfig& cfg_;
  std::shared_ptr<ReplayStore> store_;
  std::shared_ptr<Transcript> transcript_;
};

std::string tokens_label(std::size_t n) { return std::to_string(n) + (n == 1 ? " token" : " tokens"); }

// ---- commands ---------------------------------------------------------------

int cmd_decompose(const Flags& flags, const std::string& input) {
  const auto cfg = resolve(flags);
  Backends backends(cfg);
  const auto source = read_text(input);
  auto extractor = backends.get("extractor");
  PromptState state;
  try {
    state = decompose_unstructured(source, *extractor, cfg.extraction_template);
  } catch (...) {
    backends.save_transcript();
    throw;
  }
  backends.save_transcript();

  const auto rendered = render_prompt(state);
  std::ostream& summary = flags.output ? std::cout : std::cerr;
  if (flags.output) {
    write_text(*flags.output, rendered);
  } else {
    std::cout << rendered;
  }
  for (const auto& s : state.sections()) {
    summary << tag_label(s.kind()) << ": ";
    if (s.empty()) {
      summary << "empty\n";
    } else {
      summary << provenance_name(s.provenance()) << ", " << tokens_label(text::count_tokens(s.content())) << '\n';
    }
  }
  return kOk;
}

RunHistory run_global(const PromptState& initial, ChatBackend& critic, const OptimizerConfig& config) {
  config.validate();
  RunHistory history;
  history.states.push_back(initial);
  history.digests.push_back(content_digest(initial));
  for (std::size_t i = 0; i < kSectionCount; ++i) {
    history.initial_stats[i].tokens = text::count_tokens(initial.sections()[i].content());
  }
  for (int t = 0; t < config.iterations; ++t) {
    PromptState next;
    try {
      next = baseline_global_step(history.states.back(), critic, config);
    } catch (const Error& e) {
      history.aborted = true;
      history.abort_reason = "iteration " + std::to_string(t + 1) + ": global rewrite: " + e.what();
      break;
    }
    IterationRecord rec;
    for (auto kind : kCanonicalOrder) {
      rec.gradients[index_of(kind)].target = kind;
      rec.gradients[index_of(kind)].critic_identity = critic.identity();
      rec.stats[index_of(kind)].tokens = text::count_tokens(next.section(kind).content());
    }
    history.iterations.push_back(std::move(rec));
    history.digests.push_back(content_digest(next));
    history.states.push_back(std::move(next));
  }
  return history;
}

int cmd_optimize(const Flags& flags, const std::string& input) {
  auto cfg = resolve(flags);
  if (cfg.out_dir.empty()) cfg.out_dir = "mpo-run";
  const auto initial = parse_structured_prompt(read_text(input));
  cfg.optimizer.validate();

  Backends backends(cfg);
  auto critic = backends.get("critic");
  const auto history = cfg.method == "global" ? run_global(initial, *critic, cfg.optimizer)
                                              : optimize(initial, *critic, cfg.optimizer);
  write_run_artifacts(history, cfg.out_dir);
  backends.save_transcript();

  const auto growth = growth_metrics(history);
  for (const auto& row : growth.rows) {
    std::cout << "iteration " << row.iteration << ": " << tokens_label(row.total_tokens);
    if (row.iteration > 0) std::cout << " (" << (row.total_delta >= 0 ? "+" : "") << row.total_delta << ")";
    std::cout << ", digest " << history.digests[row.iteration].substr(0, 12);
    if (row.iteration > 0) {
      const auto& failures = history.iterations[row.iteration - 1].failures;
      if (!failures.empty()) std::cout << ", " << failures.size() << " section(s) carried over after failure";
    }
    std::cout << '\n';
  }
  std::cout << "artifacts: " << cfg.out_dir << '\n';
  if (history.aborted) {
    std::cerr << "optimization aborted: " << history.abort_reason << '\n';
    return kAborted;
  }
  return kOk;
}

int cmd_eval(const Flags& flags, const std::string& prompt_path) {
  const auto cfg = resolve(flags);
  const auto state = parse_structured_prompt(read_text(prompt_path));
  if (cfg.dataset.empty()) throw Error(ErrorCode::InvalidArgument, "no dataset: pass --dataset PATH");
  const auto format = parse_dataset_format(cfg.format);
  if (!format) throw Error(ErrorCode::InvalidArgument, "unknown dataset format '" + cfg.format + "'");
  auto dataset = load_dataset(cfg.dataset, *format);
  if (cfg.limit > 0) dataset = subsample(dataset, cfg.limit, cfg.seed);

  Backends backends(cfg);
  auto solver = backends.get("solver");
  EvalOptions options;
  options.concurrency_width = cfg.eval_width;
  EvalResult result;
  try {
    result = evaluate(state, dataset, *solver, options);
  } catch (...) {
    backends.save_transcript();
    throw;
  }
  backends.save_transcript();

  auto j = to_json(result);
  j["label"] = flags.labels.empty() ? fs::path(prompt_path).stem().string() : flags.labels.front();
  const auto out_path = flags.output ? *flags.output
                                     : (fs::path(cfg.out_dir.empty() ? "." : cfg.out_dir) / "eval_result.json").string();
  write_text(out_path, j.dump(2) + "\n");

  std::cout << "accuracy: " << format_percent(result.accuracy) << "%\n";
  if (result.macro_accuracy) std::cout << "macro accuracy: " << format_percent(*result.macro_accuracy) << "%\n";
  std::cout << "correct: " << result.correct << "/" << result.total << '\n';
  std::cout << "unparseable: " << result.unparseable << "/" << result.total << '\n';
  if (result.errors > 0) std::cout << "solver errors: " << result.errors << "/" << result.total << '\n';
  std::cout << "result: " << out_path << '\n';
  return kOk;
}

int cmd_compare(const Flags& flags, const std::vector<std::string>& files) {
  if (!flags.labels.empty() && flags.labels.size() != files.size()) {
    throw Error(ErrorCode::InvalidArgument, "--label must be given once per result file");
  }
  std::vector<std::pair<std::string, EvalResult>> results;
  for (std::size_t i = 0; i < files.size(); ++i) {
    const auto j = nlohmann::json::parse(read_text(files[i]), nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw Error(ErrorCode::FormatError, files[i] + " is not a result file");
    EvalResult r;
    try {
      r = eval_result_from_json(j);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::FormatError, files[i] + ": " + e.what());
    }
    std::string label = !flags.labels.empty() ? flags.labels[i]
                        : j.contains("label")  ? j["label"].get<std::string>()
                                               : fs::path(files[i]).stem().string();
    results.emplace_back(std::move(label), std::move(r));
  }
  const auto report = compare(results);
  const auto rendered = flags.json ? to_json(report).dump(2) + "\n" : render_comparison_text(report);
  std::cout << rendered;
  if (flags.output) write_text(*flags.output, rendered);
  return kOk;
}

int cmd_diff(const Flags& flags, const std::string& a, const std::string& b) {
  const auto sa = parse_structured_prompt(read_text(a));
  const auto sb = parse_structured_prompt(read_text(b));
  const auto report = diff_states(sa, sb);
  std::cout << (flags.json ? render_diff_json(report) + "\n" : render_diff_text(report));
  return report.identical() ? kOk : kDifferent;
}

void add_shared(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "INI config file; flags override it")->check(CLI::ExistingFile);
  cmd->add_option("--out", f.out, "output directory");
  cmd->add_flag("--record", f.record, "record backend calls to <out>/transcript.jsonl");
  cmd->add_option("--replay", f.replay, "replay backend calls from a recorded transcript");
  cmd->add_flag("--mock", f.mock, "use deterministic offline backends");
  cmd->add_option("--limit", f.limit, "evaluate a deterministic subsample of N items");
  cmd->add_option("--seed", f.seed, "seed for all sampling");
  cmd->add_option("--iterations", f.iterations, "optimization iterations");
  cmd->add_option("--dedup", f.dedup, "lexical, llm or lexical_then_llm");
  cmd->add_option("--base-url", f.base_url, "OpenAI-compatible endpoint (default: $MPO_BASE_URL)");
  cmd->add_option("--critic-model", f.critic_model, "critic model id");
  cmd->add_option("--solver-model", f.solver_model, "solver model id");
  cmd->add_option("--extractor-model", f.extractor_model, "extractor model id");
  cmd->add_option("--width", f.width, "maximum concurrent backend calls");
  cmd->add_flag("-v,--verbose", f.verbose, "debug logging");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Section-wise prompt optimization: decompose, optimize, evaluate, compare and diff prompts."};
  app.require_subcommand(1);
  app.set_version_flag("--version", "mpo 0.1.0");
  Flags flags;

  std::string input;
  auto* decompose = app.add_subcommand("decompose", "split a prompt into the five tagged sections");
  add_shared(decompose, flags);
  decompose->add_option("input", input, "prompt file")->required();
  decompose->add_option("-o,--output", flags.output, "write the tagged prompt here instead of stdout");

  auto* optimize_cmd = app.add_subcommand("optimize", "refine a tagged prompt section by section");
  add_shared(optimize_cmd, flags);
  optimize_cmd->add_option("input", input, "tagged prompt file")->required();
  optimize_cmd->add_option("--method", flags.method, "mpo (section-wise) or global (whole-prompt rewrite)");

  auto* eval = app.add_subcommand("eval", "score a tagged prompt on a multiple-choice dataset");
  add_shared(eval, flags);
  eval->add_option("prompt", input, "tagged prompt file")->required();
  eval->add_option("--dataset", flags.dataset, "dataset file");
  eval->add_option("--format", flags.format, "generic_jsonl, arc_jsonl or mmlu_csv");
  eval->add_option("--solver-script", flags.solver_script, "JSONL {question, response} script for an offline solver");
  eval->add_option("-o,--output", flags.output, "result file (default <out>/eval_result.json)");
  eval->add_option("--label", flags.labels, "method label stored in the result");

  std::vector<std::string> results;
  auto* compare_cmd = app.add_subcommand("compare", "compare evaluation results on the same items");
  compare_cmd->add_option("results", results, "result files; the first is the baseline")->required()->expected(2, -1);
  compare_cmd->add_option("--label", flags.labels, "row label, once per result file");
  compare_cmd->add_flag("--json", flags.json, "emit JSON");
  compare_cmd->add_option("-o,--output", flags.output, "also write the report here");

  std::string other;
  auto* diff = app.add_subcommand("diff", "per-section diff of two tagged prompts");
  diff->add_option("a", input, "first prompt")->required();
  diff->add_option("b", other, "second prompt")->required();
  diff->add_flag("--json", flags.json, "emit JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kInputError;
  }

  spdlog::set_level(flags.verbose ? spdlog::level::debug : spdlog::level::warn);
  spdlog::set_pattern("%^%l%$: %v");

  try {
    if (decompose->parsed()) return cmd_decompose(flags, input);
    if (optimize_cmd->parsed()) return cmd_optimize(flags, input);
    if (eval->parsed()) return cmd_eval(flags, input);
    if (compare_cmd->parsed()) return cmd_compare(flags, results);
    if (diff->parsed()) return cmd_diff(flags, input, other);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.code() == ErrorCode::EvalAborted ? kAborted : kInputError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInputError;
  }
  return kInputError;
}
