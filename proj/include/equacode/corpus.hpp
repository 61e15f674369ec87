#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace equacode {

/// One harmful-behavior instruction from a benchmark corpus.
struct MaliciousQuery {
  std::string id;
  std::string text;
  std::optional<std::string> category;
  std::string source;  // "<corpus file>:<row>"

  friend bool operator==(const MaliciousQuery&, const MaliciousQuery&) = default;
};

enum class CorpusFormat { kCsv, kJsonl };

std::string_view to_string(CorpusFormat format);
CorpusFormat parse_corpus_format(std::string_view name);
/// Picks the format from the file extension (.csv or .jsonl/.json).
CorpusFormat corpus_format_for(const std::filesystem::path& path);

struct CorpusProvenance {
  std::string path;
  CorpusFormat format = CorpusFormat::kCsv;
  std::string loaded_at;
};

/// Column mapping for CSV corpora. Columns other than `text_column` are optional.
struct CsvColumns {
  std::string text_column = "goal";
  std::string id_column = "id";
  std::string category_column = "category";
};

/// Immutable ordered collection of queries with unique ids.
class QueryCorpus {
 public:
  QueryCorpus() = default;
  /// Validates non-empty trimmed text and id uniqueness; throws DataError.
  QueryCorpus(std::vector<MaliciousQuery> entries, CorpusProvenance provenance);

  const std::vector<MaliciousQuery>& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  const MaliciousQuery& operator[](std::size_t i) const { return entries_[i]; }
  const MaliciousQuery* find(std::string_view id) const;
  const CorpusProvenance& provenance() const noexcept { return provenance_; }

  /// JSONL snapshot, one object per entry. Excludes the load timestamp, so
  /// reloading the same file serializes identically.
  std::string to_jsonl() const;

 private:
  std::vector<MaliciousQuery> entries_;
  CorpusProvenance provenance_;
};

/// Loads a corpus. Rows are numbered from 1 (first data row); ids default to
/// "<file name>:<row>" when the file has no id column.
QueryCorpus load_corpus(const std::filesystem::path& path, CorpusFormat format,
                        const CsvColumns& columns = {});
QueryCorpus load_corpus(const std::filesystem::path& path);

/// Parses corpus content already in memory; `source_name` stands in for the file name.
QueryCorpus parse_corpus(std::string_view content, CorpusFormat format, std::string_view source_name,
                         const CsvColumns& columns = {});

/// Uniform draw in [0, range) from the raw 64-bit engine output by rejection,
/// so results do not depend on the standard library's distributions.
std::uint64_t bounded_draw(std::mt19937_64& engine, std::uint64_t range);

/// Draws `n` entries without replacement: a forward Fisher-Yates pass over the
/// entry order, stopped after n swaps, using mt19937_64 seeded with `seed`.
/// Position i swaps with i + bounded_draw(size - i).
QueryCorpus subset(const QueryCorpus& corpus, std::size_t n, std::uint64_t seed);

}  // namespace equacode
