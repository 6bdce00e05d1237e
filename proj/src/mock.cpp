#include "mpo/mock.hpp"

#include <thread>
#include <unordered_set>

#include "mpo/critic.hpp"
#include "mpo/text.hpp"

namespace mpo::mock {

namespace {

using Turns = std::span<const ChatTurn>;

std::string section_block(Turns turns) {
  return templates::extract_block(last_user_message(turns), templates::kSectionBegin, templates::kSectionEnd)
      .value_or("");
}

// Which section a paragraph heading points at.
std::optional<SectionKind> route_heading(std::string_view heading) {
  const auto h = text::to_lower_ascii(heading);
  auto has = [&](std::string_view w) { return h.find(w) != std::string::npos; };
  if (has("output") || has("format") || has("structured as")) return SectionKind::OutputFormat;
  if (has("rule") || has("constraint") || has("instruction")) return SectionKind::Constraints;
  if (has("task")) return SectionKind::TaskDetails;
  if (has("role") || has("persona")) return SectionKind::SystemRole;
  if (has("context") || has("background")) return SectionKind::RelevantContext;
  return std::nullopt;
}

constexpr std::size_t kMaxHeadingWords = 8;

}  // namespace

std::string last_user_message(Turns turns) {
  for (auto it = turns.rbegin(); it != turns.rend(); ++it) {
    if (it->role == Role::User) return it->content;
  }
  return {};
}

std::optional<SectionKind> section_under_review(Turns turns) {
  for (const auto& line : text::split_lines(last_user_message(turns))) {
    if (line.starts_with(templates::kReviewLine)) {
      return parse_kind(text::trim(std::string_view(line).substr(templates::kReviewLine.size())));
    }
  }
  return std::nullopt;
}

std::shared_ptr<ChatBackend> constant(std::string response, std::string identity) {
  return std::make_shared<ScriptedBackend>(std::move(identity),
                                           [response = std::move(response)](Turns, const GenerationParams&) {
                                             return response;
                                           });
}

std::shared_ptr<ChatBackend> per_section(std::map<SectionKind, std::string> responses, std::string identity) {
  return std::make_shared<ScriptedBackend>(
      std::move(identity), [responses = std::move(responses)](Turns turns, const GenerationParams&) {
        const auto kind = section_under_review(turns);
        if (!kind) return std::string{};
        const auto it = responses.find(*kind);
        return it == responses.end() ? std::string{} : it->second;
      });
}

std::shared_ptr<ChatBackend> rule_critic(std::string identity) {
  return per_section(
      {
          {SectionKind::SystemRole, "- Act as a careful expert who reasons about each question before answering."},
          {SectionKind::RelevantContext, "NO CHANGE"},
          {SectionKind::TaskDetails, "- Read every answer choice before selecting one."},
          {SectionKind::Constraints, "- Do not select an option that contradicts facts stated in the question."},
          {SectionKind::OutputFormat, "- End the response with a final line of the form 'Answer: <letter>'."},
      },
      std::move(identity));
}

std::string extract_by_headings(std::string_view source) {
  std::array<std::vector<std::string>, kSectionCount> bodies;
  std::optional<SectionKind> current;

  std::vector<std::vector<std::string>> blocks(1);
  for (const auto& line : text::split_lines(text::canonicalize_block(source))) {
    if (text::is_blank(line)) {
      if (!blocks.back().empty()) blocks.emplace_back();
    } else {
      blocks.back().push_back(line);
    }
  }

  for (const auto& block : blocks) {
    if (block.empty()) continue;
    const std::string_view first = text::trim(block.front());
    std::vector<std::string> body;
    std::optional<SectionKind> target;

    const auto colon = first.find(':');
    if (colon != std::string_view::npos) {
      const auto prefix = first.substr(0, colon);
      if (text::words(prefix).size() <= kMaxHeadingWords) target = route_heading(prefix);
      if (target) {
        if (const auto rest = text::trim(first.substr(colon + 1)); !rest.empty()) body.emplace_back(rest);
        body.insert(body.end(), block.begin() + 1, block.end());
        current = target;
        if (body.empty()) continue;
      }
    }
    if (!target) {
      body = block;
      if (text::to_lower_ascii(first).starts_with("you are ")) {
        target = SectionKind::SystemRole;
      } else {
        target = current.value_or(SectionKind::RelevantContext);
      }
    }
    auto& dst = bodies[index_of(*target)];
    dst.insert(dst.end(), body.begin(), body.end());
  }

  PromptState state;
  for (auto kind : kCanonicalOrder) state = state.with_section(Section(kind, text::join_lines(bodies[index_of(kind)])));
  return render_prompt(state);
}

std::shared_ptr<ChatBackend> heading_extractor(std::string identity) {
  return std::make_shared<ScriptedBackend>(std::move(identity), [](Turns turns, const GenerationParams&) {
    const auto msg = last_user_message(turns);
    const auto source = templates::extract_block(msg, templates::kPromptBegin, templates::kPromptEnd);
    return extract_by_headings(source ? *source : msg);
  });
}

std::shared_ptr<ChatBackend> exact_dedup_consolidator(std::string identity) {
  return std::make_shared<ScriptedBackend>(std::move(identity), [](Turns turns, const GenerationParams&) {
    std::unordered_set<std::string> seen;
    std::vector<std::string> kept;
    for (auto& line : text::split_lines(section_block(turns))) {
      if (text::is_blank(line) || seen.insert(line).second) kept.push_back(std::move(line));
    }
    return text::join_lines(kept);
  });
}

std::shared_ptr<ChatBackend> default_critic(std::string identity) {
  auto critic = rule_critic();
  auto consolidator = exact_dedup_consolidator();
  auto rewriter = echo_rewriter();
  return std::make_shared<ScriptedBackend>(
      std::move(identity), [critic, consolidator, rewriter](Turns turns, const GenerationParams& params) {
        if (section_under_review(turns)) return critic->complete(turns, params);
        const auto msg = last_user_message(turns);
        if (msg.find(templates::kPromptBegin) != std::string::npos) return rewriter->complete(turns, params);
        return consolidator->complete(turns, params);
      });
}

std::shared_ptr<ChatBackend> identity_consolidator(std::string identity) {
  return std::make_shared<ScriptedBackend>(std::move(identity),
                                           [](Turns turns, const GenerationParams&) { return section_block(turns); });
}

std::shared_ptr<ChatBackend> echo_rewriter(std::string identity) {
  return std::make_shared<ScriptedBackend>(std::move(identity), [](Turns turns, const GenerationParams&) {
    return templates::extract_block(last_user_message(turns), templates::kPromptBegin, templates::kPromptEnd)
        .value_or("");
  });
}

std::shared_ptr<ChatBackend> scripted_solver(std::vector<std::pair<std::string, std::string>> script,
                                             std::string fallback, std::string identity) {
  return std::make_shared<ScriptedBackend>(
      std::move(identity),
      [script = std::move(script), fallback = std::move(fallback)](Turns turns, const GenerationParams&) {
        const auto msg = last_user_message(turns);
        for (const auto& [question, response] : script) {
          if (msg.find(question) != std::string::npos) return response;
        }
        return fallback;
      });
}

namespace {

class LatencyBackend final : public ChatBackend {
 public:
  LatencyBackend(std::shared_ptr<ChatBackend> inner, std::chrono::microseconds delay)
      : inner_(std::move(inner)), delay_(delay) {}

  std::string complete(Turns turns, const GenerationParams& params) override {
    std::this_thread::sleep_for(delay_);
    return inner_->complete(turns, params);
  }
  std::string identity() const override { return inner_->identity(); }

 private:
  std::shared_ptr<ChatBackend> inner_;
  std::chrono::microseconds delay_;
};

}  // namespace

std::shared_ptr<ChatBackend> with_latency(std::shared_ptr<ChatBackend> inner, std::chrono::microseconds delay) {
  return std::make_shared<LatencyBackend>(std::move(inner), delay);
}

}  // namespace mpo::mock
