#include "equacode/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <nlohmann/json.hpp>
#include <numeric>
#include <ostream>
#include <sstream>

#include "equacode/error.hpp"
#include "equacode/util.hpp"

namespace equacode {

using nlohmann::json;

std::string_view to_string(Tokenization tokenization) {
  switch (tokenization) {
    case Tokenization::kByte:
      return "byte";
    case Tokenization::kChar:
      return "char";
    case Tokenization::kWord:
      return "word";
  }
  return "byte";
}

Tokenization parse_tokenization(std::string_view name) {
  if (name == "byte") return Tokenization::kByte;
  if (name == "char") return Tokenization::kChar;
  if (name == "word") return Tokenization::kWord;
  throw UsageError("unknown tokenization '" + std::string(name) + "' (byte, char or word)");
}

namespace {

std::vector<std::string> tokenize(std::string_view text, Tokenization tokenization) {
  std::vector<std::string> tokens;
  switch (tokenization) {
    case Tokenization::kByte:
      tokens.reserve(text.size());
      for (char c : text) tokens.emplace_back(1, c);
      break;
    case Tokenization::kChar:
      for (char32_t cp : decode_utf8(text)) {
        std::string token;
        append_utf8(token, cp);
        tokens.push_back(std::move(token));
      }
      break;
    case Tokenization::kWord:
      tokens = split_whitespace(text);
      break;
  }
  return tokens;
}

std::string to_hex(std::string_view bytes) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned char c : bytes) {
    out.push_back(kHex[c >> 4]);
    out.push_back(kHex[c & 0xf]);
  }
  return out;
}

std::string from_hex(std::string_view hex) {
  if (hex.size() % 2 != 0) throw DataError("scorer file: odd-length hex token");
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    throw DataError("scorer file: bad hex digit");
  };
  std::string out;
  for (std::size_t i = 0; i < hex.size(); i += 2) {
    out.push_back(static_cast<char>(nibble(hex[i]) * 16 + nibble(hex[i + 1])));
  }
  return out;
}

template <typename T>
void write_le(std::ostream& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.put(static_cast<char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xff));
  }
}

template <typename T>
T read_le(std::istream& in) {
  std::uint64_t value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    const int c = in.get();
    if (c == std::char_traits<char>::eof()) throw DataError("scorer file: truncated count table");
    value |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * i);
  }
  return static_cast<T>(value);
}

}  // namespace

std::string NgramScorer::context_key(std::span<const TokenId> context) {
  std::string key(context.size() * sizeof(TokenId), '\0');
  for (std::size_t i = 0; i < context.size(); ++i) {
    for (std::size_t b = 0; b < sizeof(TokenId); ++b) {
      key[i * sizeof(TokenId) + b] = static_cast<char>((context[i] >> (8 * b)) & 0xff);
    }
  }
  return key;
}

NgramScorer NgramScorer::train(std::string_view corpus, int order, Tokenization tokenization, double k) {
  if (order < 1) throw UsageError("n-gram order must be >= 1");
  if (!(k > 0)) throw UsageError("smoothing constant k must be positive");
  const auto tokens = tokenize(corpus, tokenization);
  if (tokens.empty()) throw UsageError("cannot train an n-gram model on an empty corpus");

  NgramScorer model;
  model.order_ = order;
  model.tokenization_ = tokenization;
  model.k_ = k;
  model.vocabulary_.push_back("<unk>");
  for (const auto& token : tokens) {
    if (model.index_.emplace(token, static_cast<TokenId>(model.vocabulary_.size())).second) {
      model.vocabulary_.push_back(token);
    }
  }

  std::vector<TokenId> context(static_cast<std::size_t>(order - 1), kStart);
  for (const auto& token : tokens) {
    const TokenId id = model.index_.at(token);
    auto& counts = model.counts_[context_key(context)];
    ++counts.total;
    ++counts.next[id];
    if (!context.empty()) {
      std::rotate(context.begin(), context.begin() + 1, context.end());
      context.back() = id;
    }
  }

  std::ostringstream id;
  id << "ngram-o" << order << '-' << to_string(tokenization) << "-k" << k << '-'
     << sha256_hex(corpus).substr(0, 8);
  model.id_ = id.str();
  return model;
}

std::vector<std::string> NgramScorer::split(std::string_view text) const { return tokenize(text, tokenization_); }

TokenId NgramScorer::token_id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnknown : it->second;
}

std::vector<TokenId> NgramScorer::encode(std::string_view text) const {
  std::vector<TokenId> ids;
  for (const auto& token : split(text)) ids.push_back(token_id(token));
  return ids;
}

double NgramScorer::probability(std::span<const TokenId> context, TokenId token) const {
  if (context.size() != static_cast<std::size_t>(order_ - 1)) {
    throw UsageError("context length must equal order - 1");
  }
  const double vocab = static_cast<double>(vocabulary_.size());
  auto it = counts_.find(context_key(context));
  if (it == counts_.end()) return 1.0 / vocab;
  const auto next = it->second.next.find(token);
  const double joint = next == it->second.next.end() ? 0.0 : static_cast<double>(next->second);
  return (joint + k_) / (static_cast<double>(it->second.total) + k_ * vocab);
}

PerplexityScore NgramScorer::score(std::string_view text) const {
  const auto ids = encode(text);
  if (ids.empty()) throw UsageError("cannot score text with no tokens");
  std::vector<TokenId> context(static_cast<std::size_t>(order_ - 1), kStart);
  double log_likelihood = 0.0;
  for (TokenId id : ids) {
    log_likelihood += std::log(probability(context, id));
    if (!context.empty()) {
      std::rotate(context.begin(), context.begin() + 1, context.end());
      context.back() = id;
    }
  }
  const double n = static_cast<double>(ids.size());
  return PerplexityScore{std::exp(-log_likelihood / n), ids.size(), id_};
}

void NgramScorer::for_each_context(
    const std::function<void(std::span<const TokenId>, std::uint64_t)>& fn) const {
  std::vector<TokenId> context(static_cast<std::size_t>(order_ - 1));
  for (const auto& [key, counts] : counts_) {
    for (std::size_t i = 0; i < context.size(); ++i) {
      TokenId id = 0;
      for (std::size_t b = 0; b < sizeof(TokenId); ++b) {
        id |= static_cast<TokenId>(static_cast<unsigned char>(key[i * sizeof(TokenId) + b])) << (8 * b);
      }
      context[i] = id;
    }
    fn(context, counts.total);
  }
}

void NgramScorer::save(std::ostream& out) const {
  json vocab = json::array();
  for (const auto& token : vocabulary_) vocab.push_back(to_hex(token));
  json meta = {{"format", "equacode-ngram"}, {"version", 1},   {"order", order_},
               {"tokenization", to_string(tokenization_)}, {"k", k_}, {"id", id_},
               {"vocabulary_hex", std::move(vocab)}};
  out << meta.dump() << '\n';

  std::vector<const std::string*> keys;
  keys.reserve(counts_.size());
  for (const auto& [key, _] : counts_) keys.push_back(&key);
  std::sort(keys.begin(), keys.end(), [](const auto* a, const auto* b) { return *a < *b; });

  write_le<std::uint64_t>(out, keys.size());
  for (const std::string* key : keys) {
    const auto& counts = counts_.at(*key);
    out.write(key->data(), static_cast<std::streamsize>(key->size()));
    write_le<std::uint64_t>(out, counts.total);
    std::vector<std::pair<TokenId, std::uint64_t>> next(counts.next.begin(), counts.next.end());
    std::sort(next.begin(), next.end());
    write_le<std::uint64_t>(out, next.size());
    for (const auto& [id, count] : next) {
      write_le<TokenId>(out, id);
      write_le<std::uint64_t>(out, count);
    }
  }
  if (!out) throw DataError("failed to write scorer file");
}

NgramScorer NgramScorer::load(std::istream& in) {
  std::string header;
  if (!std::getline(in, header)) throw DataError("scorer file: missing header");
  json meta = json::parse(header, nullptr, false);
  if (meta.is_discarded() || meta.value("format", "") != "equacode-ngram") {
    throw DataError("scorer file: not an equacode n-gram model");
  }
  if (meta.value("version", 0) != 1) throw DataError("scorer file: unsupported version");

  NgramScorer model;
  model.order_ = meta.at("order").get<int>();
  model.tokenization_ = parse_tokenization(meta.at("tokenization").get<std::string>());
  model.k_ = meta.at("k").get<double>();
  model.id_ = meta.at("id").get<std::string>();
  for (const auto& hex : meta.at("vocabulary_hex")) {
    std::string token = from_hex(hex.get<std::string>());
    if (!model.vocabulary_.empty()) {
      model.index_.emplace(token, static_cast<TokenId>(model.vocabulary_.size()));
    }
    model.vocabulary_.push_back(std::move(token));
  }
  if (model.order_ < 1 || !(model.k_ > 0) || model.vocabulary_.empty()) {
    throw DataError("scorer file: invalid metadata");
  }

  const auto contexts = read_le<std::uint64_t>(in);
  const std::size_t key_size = static_cast<std::size_t>(model.order_ - 1) * sizeof(TokenId);
  for (std::uint64_t c = 0; c < contexts; ++c) {
    std::string key(key_size, '\0');
    if (key_size > 0 && !in.read(key.data(), static_cast<std::streamsize>(key_size))) {
      throw DataError("scorer file: truncated context");
    }
    ContextCounts counts;
    counts.total = read_le<std::uint64_t>(in);
    const auto n = read_le<std::uint64_t>(in);
    for (std::uint64_t i = 0; i < n; ++i) {
      const auto id = read_le<TokenId>(in);
      counts.next[id] = read_le<std::uint64_t>(in);
    }
    model.counts_.emplace(std::move(key), std::move(counts));
  }
  return model;
}

NgramScorer train_ngram(std::string_view corpus, int order, Tokenization tokenization, double k) {
  return NgramScorer::train(corpus, order, tokenization, k);
}

PerplexityScore perplexity(const PerplexityScorer& scorer, std::string_view text) { return scorer.score(text); }

double mean_ppl(std::span<const PerplexityScore> scores) {
  if (scores.empty()) throw UsageError("mean_ppl of an empty list");
  const std::string& id = scores.front().scorer_id;
  double sum = 0.0;
  for (const auto& s : scores) {
    if (s.scorer_id != id) {
      throw UsageError("mean_ppl over mixed scorers '" + id + "' and '" + s.scorer_id + "'");
    }
    sum += s.value;
  }
  return sum / static_cast<double>(scores.size());
}

const NgramScorer& default_scorer() {
  static const NgramScorer scorer =
      NgramScorer::train(bundled_asset("english_sample.txt"), 3, Tokenization::kByte, 0.01);
  return scorer;
}

PrecomputedScorer::PrecomputedScorer(std::string id, std::map<std::string, double> table)
    : id_(std::move(id)), table_(table.begin(), table.end()) {}

PerplexityScore PrecomputedScorer::score(std::string_view text) const {
  auto it = table_.find(text);
  if (it == table_.end()) throw UsageError("no precomputed perplexity for the given text");
  return PerplexityScore{it->second, 0, id_};
}

LogprobScorer::LogprobScorer(std::string id, Fetcher fetcher) : id_(std::move(id)), fetcher_(std::move(fetcher)) {}

PerplexityScore LogprobScorer::score(std::string_view text) const {
  const auto logprobs = fetcher_(text);
  if (logprobs.empty()) throw UsageError("remote scorer returned no token log-probabilities");
  const double sum = std::accumulate(logprobs.begin(), logprobs.end(), 0.0);
  return PerplexityScore{std::exp(-sum / static_cast<double>(logprobs.size())), logprobs.size(), id_};
}

}  // namespace equacode
