#include "equacode/corpus.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <fstream>
#include <limits>
#include <nlohmann/json.hpp>
#include <numeric>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "csv.hpp"
#include "equacode/error.hpp"
#include "equacode/util.hpp"

namespace equacode {

using nlohmann::json;

std::string_view to_string(CorpusFormat format) {
  return format == CorpusFormat::kCsv ? "csv" : "jsonl";
}

CorpusFormat parse_corpus_format(std::string_view name) {
  const std::string lower = to_lower_ascii(name);
  if (lower == "csv") return CorpusFormat::kCsv;
  if (lower == "jsonl" || lower == "json") return CorpusFormat::kJsonl;
  throw UsageError("unknown corpus format '" + std::string(name) + "' (expected csv or jsonl)");
}

CorpusFormat corpus_format_for(const std::filesystem::path& path) {
  const std::string ext = to_lower_ascii(path.extension().string());
  if (ext == ".csv") return CorpusFormat::kCsv;
  if (ext == ".jsonl" || ext == ".json") return CorpusFormat::kJsonl;
  throw UsageError("cannot infer corpus format from '" + path.string() + "'; pass the format explicitly");
}

QueryCorpus::QueryCorpus(std::vector<MaliciousQuery> entries, CorpusProvenance provenance)
    : entries_(std::move(entries)), provenance_(std::move(provenance)) {
  std::unordered_set<std::string> ids;
  std::unordered_map<std::string, std::string> texts;
  for (const auto& entry : entries_) {
    const std::string trimmed = trim(entry.text);
    if (trimmed.empty()) {
      throw DataError("query '" + entry.id + "' (" + entry.source + ") has empty text");
    }
    if (!ids.insert(entry.id).second) {
      throw DataError("duplicate query id '" + entry.id + "' (" + entry.source + ")");
    }
    auto [it, inserted] = texts.emplace(trimmed, entry.id);
    if (!inserted) {
      spdlog::warn("queries '{}' and '{}' have identical text", it->second, entry.id);
    }
  }
}

const MaliciousQuery* QueryCorpus::find(std::string_view id) const {
  auto it = std::find_if(entries_.begin(), entries_.end(), [&](const auto& q) { return q.id == id; });
  return it == entries_.end() ? nullptr : &*it;
}

std::string QueryCorpus::to_jsonl() const {
  std::string out;
  for (const auto& entry : entries_) {
    json row = {{"id", entry.id}, {"text", entry.text}, {"source", entry.source}};
    if (entry.category) row["category"] = *entry.category;
    out += row.dump();
    out += '\n';
  }
  return out;
}

namespace {

std::string row_error(std::string_view source, std::size_t row, const std::string& what) {
  return std::string(source) + ": row " + std::to_string(row) + ": " + what;
}

std::vector<MaliciousQuery> parse_csv_rows(std::string_view content, std::string_view source,
                                           const CsvColumns& columns) {
  std::vector<detail::CsvRecord> records;
  try {
    records = detail::parse_csv(content);
  } catch (const DataError& e) {
    throw DataError(std::string(source) + ": " + e.what());
  }
  if (records.empty()) throw DataError(std::string(source) + ": missing CSV header");

  const auto& header = records.front().fields;
  auto column = [&](const std::string& name) -> std::optional<std::size_t> {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (trim(header[i]) == name) return i;
    }
    return std::nullopt;
  };
  const auto text_col = column(columns.text_column);
  if (!text_col) {
    throw DataError(std::string(source) + ": no column named '" + columns.text_column + "'");
  }
  const auto id_col = column(columns.id_column);
  const auto category_col = column(columns.category_column);

  std::vector<MaliciousQuery> entries;
  entries.reserve(records.size() - 1);
  for (std::size_t r = 1; r < records.size(); ++r) {
    const auto& fields = records[r].fields;
    const std::size_t row = r;
    if (fields.size() != header.size()) {
      throw DataError(row_error(source, row,
                                "expected " + std::to_string(header.size()) + " fields, found " +
                                    std::to_string(fields.size())));
    }
    MaliciousQuery query;
    query.text = fields[*text_col];
    if (trim(query.text).empty()) {
      throw DataError(row_error(source, row, "empty '" + columns.text_column + "' cell"));
    }
    query.source = std::string(source) + ":" + std::to_string(row);
    if (id_col && !trim(fields[*id_col]).empty()) {
      query.id = trim(fields[*id_col]);
    } else {
      query.id = query.source;
    }
    if (category_col && !trim(fields[*category_col]).empty()) {
      query.category = trim(fields[*category_col]);
    }
    entries.push_back(std::move(query));
  }
  return entries;
}

std::vector<MaliciousQuery> parse_jsonl_rows(std::string_view content, std::string_view source) {
  std::vector<MaliciousQuery> entries;
  std::size_t pos = 0;
  std::size_t row = 0;
  while (pos < content.size()) {
    std::size_t end = content.find('\n', pos);
    if (end == std::string_view::npos) end = content.size();
    const std::string line = trim(content.substr(pos, end - pos));
    pos = end + 1;
    ++row;
    if (line.empty()) continue;

    json object;
    try {
      object = json::parse(line);
    } catch (const json::exception& e) {
      throw DataError(row_error(source, row, std::string("invalid JSON: ") + e.what()));
    }
    if (!object.is_object() || !object.contains("text") || !object["text"].is_string()) {
      throw DataError(row_error(source, row, "expected an object with a string 'text' field"));
    }
    MaliciousQuery query;
    query.text = object["text"].get<std::string>();
    if (trim(query.text).empty()) throw DataError(row_error(source, row, "empty 'text'"));
    query.source = std::string(source) + ":" + std::to_string(row);
    if (object.contains("id") && !object["id"].is_null()) {
      query.id = object["id"].is_string() ? object["id"].get<std::string>() : object["id"].dump();
    } else {
      query.id = query.source;
    }
    if (object.contains("category") && object["category"].is_string()) {
      query.category = object["category"].get<std::string>();
    }
    entries.push_back(std::move(query));
  }
  return entries;
}

}  // namespace

QueryCorpus parse_corpus(std::string_view content, CorpusFormat format, std::string_view source_name,
                         const CsvColumns& columns) {
  auto entries = format == CorpusFormat::kCsv ? parse_csv_rows(content, source_name, columns)
                                              : parse_jsonl_rows(content, source_name);
  return QueryCorpus(std::move(entries),
                     CorpusProvenance{std::string(source_name), format, utc_timestamp()});
}

QueryCorpus load_corpus(const std::filesystem::path& path, CorpusFormat format,
                        const CsvColumns& columns) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open corpus file: " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  const std::string name = path.filename().string();
  auto entries = format == CorpusFormat::kCsv ? parse_csv_rows(buffer.str(), name, columns)
                                              : parse_jsonl_rows(buffer.str(), name);
  return QueryCorpus(std::move(entries), CorpusProvenance{path.string(), format, utc_timestamp()});
}

QueryCorpus load_corpus(const std::filesystem::path& path) {
  return load_corpus(path, corpus_format_for(path));
}

std::uint64_t bounded_draw(std::mt19937_64& engine, std::uint64_t range) {
  if (range == 0) throw std::invalid_argument("bounded_draw: empty range");
  const std::uint64_t max = std::numeric_limits<std::uint64_t>::max();
  const std::uint64_t limit = max - (max % range + 1) % range;
  std::uint64_t value = engine();
  while (value > limit) value = engine();
  return value % range;
}

QueryCorpus subset(const QueryCorpus& corpus, std::size_t n, std::uint64_t seed) {
  if (n > corpus.size()) {
    throw UsageError("subset size " + std::to_string(n) + " exceeds corpus size " +
                     std::to_string(corpus.size()));
  }
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 engine(seed);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(bounded_draw(engine, order.size() - i));
    std::swap(order[i], order[j]);
  }
  std::vector<MaliciousQuery> picked;
  picked.reserve(n);
  for (std::size_t i = 0; i < n; ++i) picked.push_back(corpus[order[i]]);
  return QueryCorpus(std::move(picked), corpus.provenance());
}

}  // namespace equacode
