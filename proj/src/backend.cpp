#include "mpo/backend.hpp"

#include <spdlog/spdlog.h>

#include <cmath>
#include <ctime>
#include <fstream>
#include <sstream>
#include <thread>

#include "mpo/text.hpp"

namespace mpo {

std::string_view role_name(Role role) {
  switch (role) {
    case Role::System: return "system";
    case Role::User: return "user";
    case Role::Assistant: return "assistant";
  }
  return "user";
}

std::optional<Role> parse_role(std::string_view name) {
  for (auto r : {Role::System, Role::User, Role::Assistant}) {
    if (name == role_name(r)) return r;
  }
  return std::nullopt;
}

nlohmann::json turns_to_json(std::span<const ChatTurn> turns) {
  auto arr = nlohmann::json::array();
  for (const auto& t : turns) arr.push_back({{"role", role_name(t.role)}, {"content", t.content}});
  return arr;
}

std::vector<ChatTurn> turns_from_json(const nlohmann::json& j) {
  std::vector<ChatTurn> out;
  for (const auto& t : j) {
    const auto role = parse_role(t.at("role").get<std::string>());
    if (!role) throw Error(ErrorCode::FormatError, "unknown chat role");
    out.push_back({*role, t.at("content").get<std::string>()});
  }
  return out;
}

nlohmann::json params_to_json(const GenerationParams& params) {
  nlohmann::json j{{"temperature", params.temperature}, {"max_tokens", params.max_output_tokens}};
  j["seed"] = params.seed ? nlohmann::json(*params.seed) : nlohmann::json(nullptr);
  return j;
}

GenerationParams params_from_json(const nlohmann::json& j) {
  GenerationParams p;
  p.temperature = j.at("temperature").get<double>();
  p.max_output_tokens = j.at("max_tokens").get<int>();
  if (j.contains("seed") && !j["seed"].is_null()) p.seed = j["seed"].get<std::int64_t>();
  return p;
}

std::string request_digest(std::span<const ChatTurn> turns, const GenerationParams& params) {
  // nlohmann::json objects keep keys sorted, so dump() is canonical.
  const nlohmann::json canonical{{"messages", turns_to_json(turns)}, {"params", params_to_json(params)}};
  return text::sha256_hex(canonical.dump());
}

// ---- transcript -------------------------------------------------------------

std::string iso8601_now() {
  const auto now = std::chrono::system_clock::now();
  const auto secs = std::chrono::system_clock::to_time_t(now);
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&secs, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
  char out[48];
  std::snprintf(out, sizeof out, "%s.%03lldZ", buf, static_cast<long long>(ms));
  return out;
}

nlohmann::json to_json(const TranscriptEntry& e) {
  nlohmann::json j{{"request_digest", e.request_digest}, {"request", turns_to_json(e.request)},
                   {"params", params_to_json(e.params)},  {"response", e.response},
                   {"timestamp", e.timestamp},            {"backend", e.backend}};
  if (e.error) j["error"] = {{"code", to_string(e.error->code)}, {"message", e.error->message}};
  return j;
}

TranscriptEntry entry_from_json(const nlohmann::json& j) {
  TranscriptEntry e;
  e.request_digest = j.at("request_digest").get<std::string>();
  e.request = turns_from_json(j.at("request"));
  e.params = params_from_json(j.at("params"));
  e.response = j.at("response").get<std::string>();
  e.timestamp = j.value("timestamp", "");
  e.backend = j.value("backend", "");
  if (j.contains("error") && !j["error"].is_null()) {
    const auto code = parse_error_code(j["error"].at("code").get<std::string>());
    if (!code) throw Error(ErrorCode::FormatError, "unknown error code in transcript entry");
    e.error = RecordedError{*code, j["error"].value("message", "")};
  }
  return e;
}

Transcript::Transcript() : clock_(iso8601_now) {}
Transcript::Transcript(Clock clock) : clock_(std::move(clock)) {}

Transcript::Transcript(const Transcript& other) {
  std::lock_guard lock(other.mu_);
  clock_ = other.clock_;
  entries_ = other.entries_;
}

Transcript::Transcript(Transcript&& other) noexcept {
  std::lock_guard lock(other.mu_);
  clock_ = std::move(other.clock_);
  entries_ = std::move(other.entries_);
}

void Transcript::append(std::span<const ChatTurn> turns, const GenerationParams& params, std::string response,
                        std::string backend) {
  TranscriptEntry e;
  e.request_digest = request_digest(turns, params);
  e.request.assign(turns.begin(), turns.end());
  e.params = params;
  e.response = std::move(response);
  e.backend = std::move(backend);
  std::lock_guard lock(mu_);
  e.timestamp = clock_();
  entries_.push_back(std::move(e));
}

void Transcript::append_failure(std::span<const ChatTurn> turns, const GenerationParams& params,
                                const Error& error, std::string backend) {
  TranscriptEntry e;
  e.request_digest = request_digest(turns, params);
  e.request.assign(turns.begin(), turns.end());
  e.params = params;
  e.backend = std::move(backend);
  e.error = RecordedError{error.code(), error.message()};
  std::lock_guard lock(mu_);
  e.timestamp = clock_();
  entries_.push_back(std::move(e));
}

void Transcript::append(TranscriptEntry entry) {
  std::lock_guard lock(mu_);
  entries_.push_back(std::move(entry));
}

std::vector<TranscriptEntry> Transcript::entries() const {
  std::lock_guard lock(mu_);
  return entries_;
}

std::size_t Transcript::size() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

std::string Transcript::to_jsonl() const {
  std::lock_guard lock(mu_);
  std::string out;
  for (const auto& e : entries_) {
    out += to_json(e).dump();
    out += '\n';
  }
  return out;
}

void Transcript::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error(ErrorCode::IoError, "cannot write transcript " + path);
  os << to_jsonl();
  if (!os) throw Error(ErrorCode::IoError, "failed writing transcript " + path);
}

Transcript Transcript::from_jsonl(std::string_view content) {
  Transcript t;
  std::size_t n = 0;
  for (const auto& line : text::split_lines(content)) {
    ++n;
    if (text::is_blank(line)) continue;
    try {
      t.entries_.push_back(entry_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::FormatError, "transcript line " + std::to_string(n) + ": " + e.what());
    }
  }
  return t;
}

Transcript Transcript::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::IoError, "cannot read transcript " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return from_jsonl(ss.str());
}

std::string RecordingBackend::complete(std::span<const ChatTurn> turns, const GenerationParams& params) {
  std::string response;
  try {
    response = inner_->complete(turns, params);
  } catch (const Error& e) {
    store_->append_failure(turns, params, e, inner_->identity());
    throw;
  }
  store_->append(turns, params, response, inner_->identity());
  return response;
}

ReplayStore::ReplayStore(const Transcript& transcript)
    : entries_(transcript.entries()), consumed_(entries_.size(), false) {}

std::string ReplayStore::take(std::span<const ChatTurn> turns, const GenerationParams& params) {
  const auto digest = request_digest(turns, params);
  std::lock_guard lock(mu_);
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (!consumed_[i] && entries_[i].request_digest == digest) {
      consumed_[i] = true;
      if (const auto& err = entries_[i].error) throw Error(err->code, err->message);
      return entries_[i].response;
    }
  }
  throw Error(ErrorCode::ReplayMiss, "no unconsumed recorded response for request " + digest.substr(0, 16));
}

std::optional<std::string> ReplayStore::recorded_identity(std::string_view prefix) const {
  std::lock_guard lock(mu_);
  for (const auto& e : entries_) {
    if (e.backend.starts_with(prefix)) return e.backend;
  }
  return std::nullopt;
}

std::size_t ReplayStore::remaining() const {
  std::lock_guard lock(mu_);
  return static_cast<std::size_t>(std::count(consumed_.begin(), consumed_.end(), false));
}

}  // namespace mpo
