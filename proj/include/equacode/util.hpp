#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace equacode {

/// Lowercase hex SHA-256 digest.
std::string sha256_hex(std::string_view data);

/// Named asset bundled into the library (templates, lexicons, sample text).
/// Throws DataError for unknown names.
std::string_view bundled_asset(std::string_view name);
std::vector<std::string> bundled_asset_names();

std::string trim(std::string_view text);
std::string to_lower_ascii(std::string_view text);

/// UTC timestamp, ISO-8601 with millisecond precision.
std::string utc_timestamp();

/// Decodes UTF-8 into code points. Invalid sequences decode byte-wise as U+FFFD.
std::vector<char32_t> decode_utf8(std::string_view text);
std::string encode_utf8(const std::vector<char32_t>& code_points);
void append_utf8(std::string& out, char32_t cp);

/// Splits on runs of ASCII whitespace.
std::vector<std::string> split_whitespace(std::string_view text);

/// Reads a lexicon file body: one phrase per line, '#' comments and blanks skipped.
std::vector<std::string> parse_phrase_list(std::string_view body);

/// Formats a percentage with two decimals ("91.92").
std::string format_percent(double percent);
std::string format_fixed(double value, int decimals);

}  // namespace equacode
