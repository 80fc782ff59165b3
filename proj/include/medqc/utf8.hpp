#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace medqc::utf8 {

// Splits a UTF-8 string into code points, each returned as its byte
// sequence. Invalid lead bytes are passed through as single-byte units.
std::vector<std::string_view> split_chars(std::string_view text);

// ASCII lowercasing; multi-byte sequences are left untouched.
std::string ascii_lower(std::string_view text);

// Lowercases, isolates ASCII punctuation as its own word, trims, and
// collapses runs of whitespace into single spaces.
std::string normalize_surface(std::string_view text);

// Escapes tab, newline, carriage return and backslash as \t \n \r \\.
std::string escape_field(std::string_view text);
std::string unescape_field(std::string_view text);

// Splits on a single-character delimiter, keeping empty fields.
std::vector<std::string> split(std::string_view text, char delim);

}  // namespace medqc::utf8
