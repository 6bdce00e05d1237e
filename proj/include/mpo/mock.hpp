#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mpo/backend.hpp"
#include "mpo/schema.hpp"

// Deterministic stand-ins for the critic, extractor, consolidator and solver
// roles. All of them are pure functions of the request and safe to share.
namespace mpo::mock {

// The section a gradient request is about, read from the default template.
std::optional<SectionKind> section_under_review(std::span<const ChatTurn> turns);
std::string last_user_message(std::span<const ChatTurn> turns);

// Answers every request with the same text.
std::shared_ptr<ChatBackend> constant(std::string response, std::string identity = "mock-constant");

// Answers gradient requests with responses[kind]; kinds not in the map get "".
std::shared_ptr<ChatBackend> per_section(std::map<SectionKind, std::string> responses,
                                         std::string identity = "mock-per-section");

// A rule-based critic with one canned directive per section kind.
std::shared_ptr<ChatBackend> rule_critic(std::string identity = "mock-critic");

// rule_critic for gradient requests, exact-line dedup for consolidation
// requests and an echo for global rewrites. The CLI's --mock critic.
std::shared_ptr<ChatBackend> default_critic(std::string identity = "mock-critic");

// Maps paragraph headings ("Rules to stick to:", "Your tasks ...:", ...) onto
// sections. Only ever copies text from the source prompt.
std::shared_ptr<ChatBackend> heading_extractor(std::string identity = "mock-extractor");
// The pure routing used by heading_extractor; returns tagged text.
std::string extract_by_headings(std::string_view source);

// Consolidation stand-ins working on the SECTION block of the request.
std::shared_ptr<ChatBackend> exact_dedup_consolidator(std::string identity = "mock-consolidator");
std::shared_ptr<ChatBackend> identity_consolidator(std::string identity = "mock-consolidator");

// Global rewrite stand-in returning the PROMPT block unchanged.
std::shared_ptr<ChatBackend> echo_rewriter(std::string identity = "mock-rewriter");

// A solver answering from a question->response script; unmatched questions get
// `fallback`. The question is matched as a substring of the request.
std::shared_ptr<ChatBackend> scripted_solver(std::vector<std::pair<std::string, std::string>> script,
                                             std::string fallback = "Answer: A",
                                             std::string identity = "mock-solver");

// Delegates to `inner` after sleeping; used to simulate network latency.
std::shared_ptr<ChatBackend> with_latency(std::shared_ptr<ChatBackend> inner,
                                          std::chrono::microseconds delay);

}  // namespace mpo::mock
