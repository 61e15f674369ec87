#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace equacode::detail {

struct CsvRecord {
  std::size_t line = 0;  // 1-based physical line where the record starts
  std::vector<std::string> fields;
};

/// RFC 4180 reader: quoted fields, doubled quotes, CRLF or LF line endings,
/// newlines inside quoted fields. Blank lines are skipped.
std::vector<CsvRecord> parse_csv(std::string_view content);

std::string csv_escape(std::string_view field);

}  // namespace equacode::detail
