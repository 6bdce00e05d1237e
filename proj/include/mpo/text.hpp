#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

// Small string helpers shared by the schema, critic and optimizer code.
namespace mpo::text {

// Splits on '\n'. A trailing '\n' does not produce an extra empty line; "" -> {}.
std::vector<std::string> split_lines(std::string_view s);
std::string join_lines(const std::vector<std::string>& lines);

std::string_view trim(std::string_view s);
std::string_view trim_right(std::string_view s);
bool is_blank(std::string_view s);

std::string to_lower_ascii(std::string_view s);

// Removes leading list markers ("-", "*", "+", "•", "12.", "3)") that are followed
// by whitespace or end the line, repeatedly. Returns the remainder, left-trimmed.
std::string_view strip_list_marker(std::string_view line);

// Whitespace-delimited token count; the model-independent growth proxy.
std::size_t count_tokens(std::string_view s);

// Lowercased alphanumeric words (ASCII letters/digits; other bytes split words
// unless they are non-ASCII, which are kept as part of the word).
std::vector<std::string> words(std::string_view s);

// Lowercase hex SHA-256 of the bytes.
std::string sha256_hex(std::string_view bytes);

// Drops leading and trailing whitespace-only lines and converts CRLF to LF.
std::string canonicalize_block(std::string_view s);

}  // namespace mpo::text
