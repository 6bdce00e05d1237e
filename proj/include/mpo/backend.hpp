#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "mpo/error.hpp"

namespace mpo {

enum class Role : std::uint8_t { System, User, Assistant };

std::string_view role_name(Role role);
std::optional<Role> parse_role(std::string_view name);

struct ChatTurn {
  Role role = Role::User;
  std::string content;
  friend bool operator==(const ChatTurn&, const ChatTurn&) = default;
};

struct GenerationParams {
  double temperature = 0.0;
  int max_output_tokens = 512;
  std::optional<std::int64_t> seed;

  static GenerationParams for_gradients() { return {0.0, 512, std::nullopt}; }
  static GenerationParams for_consolidation() { return {0.0, 1024, std::nullopt}; }
  static GenerationParams for_answers() { return {0.0, 64, std::nullopt}; }

  friend bool operator==(const GenerationParams&, const GenerationParams&) = default;
};

// A chat-completion provider. complete() returns the response text or throws
// Error (BackendError, ReplayMiss); it never reports failure as an empty string.
// Implementations must be callable from several threads at once.
class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual std::string complete(std::span<const ChatTurn> turns, const GenerationParams& params) = 0;
  virtual std::string identity() const = 0;
};

// Deterministic content hash of a request; the replay lookup key.
std::string request_digest(std::span<const ChatTurn> turns, const GenerationParams& params);

nlohmann::json turns_to_json(std::span<const ChatTurn> turns);
std::vector<ChatTurn> turns_from_json(const nlohmann::json& j);
nlohmann::json params_to_json(const GenerationParams& params);
GenerationParams params_from_json(const nlohmann::json& j);

// Backend driven by a plain function. The function must be thread-safe.
class ScriptedBackend final : public ChatBackend {
 public:
  using Fn = std::function<std::string(std::span<const ChatTurn>, const GenerationParams&)>;

  ScriptedBackend(std::string identity, Fn fn) : identity_(std::move(identity)), fn_(std::move(fn)) {}

  std::string complete(std::span<const ChatTurn> turns, const GenerationParams& params) override {
    return fn_(turns, params);
  }
  std::string identity() const override { return identity_; }

 private:
  std::string identity_;
  Fn fn_;
};

// ---- transcripts ------------------------------------------------------------

// A call that failed with a library error; replay raises it again.
struct RecordedError {
  ErrorCode code = ErrorCode::BackendError;
  std::string message;
  friend bool operator==(const RecordedError&, const RecordedError&) = default;
};

struct TranscriptEntry {
  std::string request_digest;
  std::vector<ChatTurn> request;
  GenerationParams params;
  std::string response;
  std::string timestamp;  // ISO-8601, UTC
  std::string backend;    // identity of the backend that produced the response
  std::optional<RecordedError> error;
};

nlohmann::json to_json(const TranscriptEntry& entry);
TranscriptEntry entry_from_json(const nlohmann::json& j);

// Append-only, internally synchronized log of backend calls.
class Transcript {
 public:
  using Clock = std::function<std::string()>;

  Transcript();
  explicit Transcript(Clock clock);
  Transcript(const Transcript& other);
  Transcript(Transcript&& other) noexcept;
  Transcript& operator=(const Transcript&) = delete;

  void append(std::span<const ChatTurn> turns, const GenerationParams& params, std::string response,
              std::string backend);
  void append(TranscriptEntry entry);
  void append_failure(std::span<const ChatTurn> turns, const GenerationParams& params, const Error& error,
                      std::string backend);

  std::vector<TranscriptEntry> entries() const;
  std::size_t size() const;

  // JSON Lines, one entry per line.
  std::string to_jsonl() const;
  void save(const std::string& path) const;
  static Transcript from_jsonl(std::string_view text);
  static Transcript load(const std::string& path);

 private:
  mutable std::mutex mu_;
  Clock clock_;
  std::vector<TranscriptEntry> entries_;
};

std::string iso8601_now();

// Forwards to `inner` and appends every call to `store`, including calls that
// fail with an Error.
class RecordingBackend final : public ChatBackend {
 public:
  RecordingBackend(std::shared_ptr<ChatBackend> inner, std::shared_ptr<Transcript> store)
      : inner_(std::move(inner)), store_(std::move(store)) {}

  std::string complete(std::span<const ChatTurn> turns, const GenerationParams& params) override;
  std::string identity() const override { return inner_->identity(); }

 private:
  std::shared_ptr<ChatBackend> inner_;
  std::shared_ptr<Transcript> store_;
};

// Shared consumption state over one recorded transcript; several ReplayBackend
// views (one per role) may draw from the same cursor.
class ReplayStore {
 public:
  explicit ReplayStore(const Transcript& transcript);

  // First unconsumed entry with a matching digest; throws Error{ReplayMiss}.
  // A recorded failure is thrown again.
  std::string take(std::span<const ChatTurn> turns, const GenerationParams& params);
  // Identity of the first recorded entry whose backend starts with prefix.
  std::optional<std::string> recorded_identity(std::string_view prefix) const;
  std::size_t remaining() const;

 private:
  mutable std::mutex mu_;
  std::vector<TranscriptEntry> entries_;
  std::vector<bool> consumed_;
};

class ReplayBackend final : public ChatBackend {
 public:
  ReplayBackend(std::shared_ptr<ReplayStore> store, std::string identity = "replay")
      : store_(std::move(store)), identity_(std::move(identity)) {}
  explicit ReplayBackend(const Transcript& transcript)
      : ReplayBackend(std::make_shared<ReplayStore>(transcript)) {}

  std::string complete(std::span<const ChatTurn> turns, const GenerationParams& params) override {
    return store_->take(turns, params);
  }
  std::string identity() const override { return identity_; }

 private:
  std::shared_ptr<ReplayStore> store_;
  std::string identity_;
};

// ---- live HTTP --------------------------------------------------------------

struct RetryPolicy {
  int max_retries = 3;
  std::chrono::milliseconds initial_backoff{1000};
  double multiplier = 2.0;

  std::chrono::milliseconds delay_before_retry(int retry_index) const;
};

struct HttpBackendConfig {
  std::string base_url;  // e.g. "http://localhost:8000" or "https://api.example.com/v1"
  std::string model;
  std::string api_key;   // bearer token; empty sends no Authorization header
  std::string label;     // identity prefix, e.g. "critic"
  RetryPolicy retry;
  std::chrono::seconds connect_timeout{10};
  std::chrono::seconds read_timeout{300};
};

// POST {base}/v1/chat/completions. Retries transport failures and 5xx only.
class HttpBackend final : public ChatBackend {
 public:
  explicit HttpBackend(HttpBackendConfig config);

  std::string complete(std::span<const ChatTurn> turns, const GenerationParams& params) override;
  std::string identity() const override;

  std::string endpoint_path() const { return path_; }
  nlohmann::json build_request(std::span<const ChatTurn> turns, const GenerationParams& params) const;
  // Extracts choices[0].message.content; throws Error{BackendError}.
  static std::string parse_response(std::string_view body);

 private:
  HttpBackendConfig config_;
  std::string scheme_host_port_;
  std::string path_;
};

}  // namespace mpo
