#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <spdlog/spdlog.h>

#include <cmath>
#include <thread>

#include "mpo/backend.hpp"

namespace mpo {

std::chrono::milliseconds RetryPolicy::delay_before_retry(int retry_index) const {
  const double scale = std::pow(multiplier, retry_index);
  return std::chrono::milliseconds(static_cast<long long>(static_cast<double>(initial_backoff.count()) * scale));
}

HttpBackend::HttpBackend(HttpBackendConfig config) : config_(std::move(config)) {
  const auto& url = config_.base_url;
  const auto scheme_end = url.find("://");
  if (url.empty() || scheme_end == std::string::npos) {
    throw Error(ErrorCode::InvalidArgument, "base URL must look like http(s)://host[:port][/path]: '" + url + "'");
  }
  const auto path_start = url.find('/', scheme_end + 3);
  scheme_host_port_ = url.substr(0, path_start);
  std::string prefix = path_start == std::string::npos ? "" : url.substr(path_start);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  path_ = prefix.ends_with("/v1") ? prefix + "/chat/completions" : prefix + "/v1/chat/completions";
}

std::string HttpBackend::identity() const {
  const auto base = "openai:" + config_.model;
  return config_.label.empty() ? base : config_.label + "@" + base;
}

nlohmann::json HttpBackend::build_request(std::span<const ChatTurn> turns, const GenerationParams& params) const {
  nlohmann::json j;
  j["model"] = config_.model;
  j["messages"] = turns_to_json(turns);
  j["temperature"] = params.temperature;
  j["max_tokens"] = params.max_output_tokens;
  if (params.seed) j["seed"] = *params.seed;
  return j;
}

std::string HttpBackend::parse_response(std::string_view body) {
  const auto j = nlohmann::json::parse(body, nullptr, false);
  if (j.is_discarded()) throw Error(ErrorCode::BackendError, "response is not JSON");
  if (!j.contains("choices") || !j["choices"].is_array() || j["choices"].empty()) {
    throw Error(ErrorCode::BackendError, "response has no choices");
  }
  const auto& choice = j["choices"][0];
  if (!choice.contains("message") || !choice["message"].is_object() || !choice["message"].contains("content") ||
      !choice["message"]["content"].is_string()) {
    throw Error(ErrorCode::BackendError, "response choice has no message content");
  }
  return choice["message"]["content"].get<std::string>();
}

std::string HttpBackend::complete(std::span<const ChatTurn> turns, const GenerationParams& params) {
  const auto body = build_request(turns, params).dump();
  httplib::Headers headers;
  if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);

  std::string last_error;
  for (int attempt = 0; attempt <= config_.retry.max_retries; ++attempt) {
    if (attempt > 0) {
      const auto delay = config_.retry.delay_before_retry(attempt - 1);
      spdlog::warn("{}: retry {}/{} in {} ms after: {}", identity(), attempt, config_.retry.max_retries,
                   delay.count(), last_error);
      std::this_thread::sleep_for(delay);
    }
    httplib::Client cli(scheme_host_port_);
    cli.set_connection_timeout(config_.connect_timeout);
    cli.set_read_timeout(config_.read_timeout);
    cli.set_write_timeout(std::chrono::seconds(30));

    auto res = cli.Post(path_, headers, body, "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status < 200 || res->status >= 300) {
      throw Error(ErrorCode::BackendError, identity() + ": HTTP " + std::to_string(res->status) + ": " +
                                               res->body.substr(0, 200));
    }
    return parse_response(res->body);
  }
  throw Error(ErrorCode::BackendError, identity() + ": giving up after " +
                                           std::to_string(config_.retry.max_retries + 1) +
                                           " attempts: " + last_error);
}

}  // namespace mpo
