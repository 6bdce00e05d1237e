#include "mpo/text.hpp"

#include <openssl/evp.h>

#include <array>
#include <cctype>
#include <sstream>

#include "mpo/error.hpp"

namespace mpo {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::DuplicateSectionTag: return "DuplicateSectionTag";
    case ErrorCode::MalformedTag: return "MalformedTag";
    case ErrorCode::UntaggedLeadingContent: return "UntaggedLeadingContent";
    case ErrorCode::TagInContent: return "TagInContent";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::ExtractorFailure: return "ExtractorFailure";
    case ErrorCode::BackendError: return "BackendError";
    case ErrorCode::ConsolidationRejected: return "ConsolidationRejected";
    case ErrorCode::ReplayMiss: return "ReplayMiss";
    case ErrorCode::TargetMismatch: return "TargetMismatch";
    case ErrorCode::FormatError: return "FormatError";
    case ErrorCode::MissingAnswerKey: return "MissingAnswerKey";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::DatasetMismatch: return "DatasetMismatch";
    case ErrorCode::EvalAborted: return "EvalAborted";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

std::optional<ErrorCode> parse_error_code(std::string_view name) {
  for (int i = 0; i <= static_cast<int>(ErrorCode::IoError); ++i) {
    if (to_string(static_cast<ErrorCode>(i)) == name) return static_cast<ErrorCode>(i);
  }
  return std::nullopt;
}

}  // namespace mpo

namespace mpo::text {

namespace {

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\f' || c == '\v';
}

}  // namespace

std::vector<std::string> split_lines(std::string_view s) {
  std::vector<std::string> out;
  if (s.empty()) return out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto nl = s.find('\n', start);
    if (nl == std::string_view::npos) {
      if (start < s.size()) out.emplace_back(s.substr(start));
      break;
    }
    out.emplace_back(s.substr(start, nl - start));
    start = nl + 1;
  }
  return out;
}

std::string join_lines(const std::vector<std::string>& lines) {
  std::string out;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (i) out += '\n';
    out += lines[i];
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  return trim_right(s);
}

std::string_view trim_right(std::string_view s) {
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

bool is_blank(std::string_view s) { return trim(s).empty(); }

std::string to_lower_ascii(std::string_view s) {
  std::string out(s);
  for (auto& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

std::string_view strip_list_marker(std::string_view line) {
  static constexpr std::string_view kBullet = "\xE2\x80\xA2";  // U+2022
  auto s = trim(line);
  for (;;) {
    std::size_t marker = 0;
    if (!s.empty() && (s[0] == '-' || s[0] == '*' || s[0] == '+')) {
      marker = 1;
    } else if (s.starts_with(kBullet)) {
      marker = kBullet.size();
    } else {
      std::size_t digits = 0;
      while (digits < s.size() && std::isdigit(static_cast<unsigned char>(s[digits]))) ++digits;
      if (digits > 0 && digits < s.size() && (s[digits] == '.' || s[digits] == ')')) marker = digits + 1;
    }
    if (marker == 0) return s;
    if (marker < s.size() && !is_space(s[marker])) return s;
    s = trim(s.substr(marker));
  }
}

std::size_t count_tokens(std::string_view s) {
  std::size_t n = 0;
  bool in_token = false;
  for (char c : s) {
    if (is_space(c)) {
      in_token = false;
    } else if (!in_token) {
      in_token = true;
      ++n;
    }
  }
  return n;
}

std::vector<std::string> words(std::string_view s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    const auto u = static_cast<unsigned char>(c);
    if (std::isalnum(u) || u >= 0x80) {
      cur += (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c;
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::string sha256_hex(std::string_view bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md.data(), &len, EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorCode::IoError, "sha256 failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out += kHex[md[i] >> 4];
    out += kHex[md[i] & 0xF];
  }
  return out;
}

std::string canonicalize_block(std::string_view s) {
  std::string lf;
  lf.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '\r' && i + 1 < s.size() && s[i + 1] == '\n') continue;
    lf += s[i];
  }
  auto lines = split_lines(lf);
  std::size_t first = 0;
  while (first < lines.size() && is_blank(lines[first])) ++first;
  std::size_t last = lines.size();
  while (last > first && is_blank(lines[last - 1])) --last;
  std::vector<std::string> kept(lines.begin() + static_cast<std::ptrdiff_t>(first),
                                lines.begin() + static_cast<std::ptrdiff_t>(last));
  return join_lines(kept);
}

}  // namespace mpo::text
