#include "csv.hpp"

#include "equacode/error.hpp"

namespace equacode::detail {

std::vector<CsvRecord> parse_csv(std::string_view content) {
  std::vector<CsvRecord> records;
  std::size_t i = 0;
  std::size_t line = 1;
  if (content.substr(0, 3) == "\xEF\xBB\xBF") i = 3;

  while (i < content.size()) {
    if (content[i] == '\n' || content[i] == '\r') {
      if (content[i] == '\n') ++line;
      ++i;
      continue;
    }
    CsvRecord record;
    record.line = line;
    std::string field;
    bool done = false;
    while (!done) {
      field.clear();
      if (i < content.size() && content[i] == '"') {
        const std::size_t quote_line = line;
        ++i;
        while (true) {
          if (i >= content.size()) {
            throw DataError("unterminated quoted field starting on line " + std::to_string(quote_line));
          }
          char c = content[i];
          if (c == '"') {
            if (i + 1 < content.size() && content[i + 1] == '"') {
              field.push_back('"');
              i += 2;
              continue;
            }
            ++i;
            break;
          }
          if (c == '\n') ++line;
          field.push_back(c);
          ++i;
        }
        if (i < content.size() && content[i] != ',' && content[i] != '\n' && content[i] != '\r') {
          throw DataError("unexpected character after closing quote on line " + std::to_string(line));
        }
      } else {
        while (i < content.size() && content[i] != ',' && content[i] != '\n' && content[i] != '\r') {
          if (content[i] == '"') {
            throw DataError("stray quote in unquoted field on line " + std::to_string(line));
          }
          field.push_back(content[i]);
          ++i;
        }
      }
      record.fields.push_back(field);
      if (i < content.size() && content[i] == ',') {
        ++i;
      } else {
        done = true;
        if (i < content.size() && content[i] == '\r') ++i;
        if (i < content.size() && content[i] == '\n') {
          ++i;
          ++line;
        }
      }
    }
    records.push_back(std::move(record));
  }
  return records;
}

std::string csv_escape(std::string_view field) {
  if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

}  // namespace equacode::detail
