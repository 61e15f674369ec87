#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace equacode {

struct PerplexityScore {
  double value = 0.0;
  std::size_t token_count = 0;
  std::string scorer_id;
};

/// Anything that maps text to a perplexity.
class PerplexityScorer {
 public:
  virtual ~PerplexityScorer() = default;
  virtual PerplexityScore score(std::string_view text) const = 0;
  virtual std::string id() const = 0;
};

enum class Tokenization { kByte, kChar, kWord };

std::string_view to_string(Tokenization tokenization);
Tokenization parse_tokenization(std::string_view name);

using TokenId = std::uint32_t;

/// Add-k smoothed n-gram model:
///   P(w | h) = (c(h, w) + k) / (c(h) + k * V)
/// where h is the previous order-1 tokens (start-padded) and V counts every
/// observed token plus the unknown token.
class NgramScorer : public PerplexityScorer {
 public:
  static constexpr TokenId kUnknown = 0;
  static constexpr TokenId kStart = 0xffffffffu;

  /// Throws UsageError on an empty corpus, order < 1 or k <= 0.
  static NgramScorer train(std::string_view corpus, int order, Tokenization tokenization, double k);

  PerplexityScore score(std::string_view text) const override;
  std::string id() const override { return id_; }

  int order() const noexcept { return order_; }
  Tokenization tokenization() const noexcept { return tokenization_; }
  double smoothing_k() const noexcept { return k_; }
  std::size_t vocabulary_size() const noexcept { return vocabulary_.size(); }

  /// Token strings as produced by the tokenizer (bytes, UTF-8 characters or words).
  std::vector<std::string> split(std::string_view text) const;
  /// Token ids with unseen tokens mapped to kUnknown.
  std::vector<TokenId> encode(std::string_view text) const;
  TokenId token_id(std::string_view token) const;

  /// `context` holds exactly order-1 ids (kStart for padding).
  double probability(std::span<const TokenId> context, TokenId token) const;

  /// Calls fn(context, total) for every context seen in training.
  void for_each_context(const std::function<void(std::span<const TokenId>, std::uint64_t)>& fn) const;

  /// One JSON metadata line followed by little-endian binary count tables.
  void save(std::ostream& out) const;
  static NgramScorer load(std::istream& in);

 private:
  struct ContextCounts {
    std::uint64_t total = 0;
    std::unordered_map<TokenId, std::uint64_t> next;
  };

  NgramScorer() = default;
  static std::string context_key(std::span<const TokenId> context);

  int order_ = 1;
  Tokenization tokenization_ = Tokenization::kByte;
  double k_ = 1.0;
  std::string id_;
  std::vector<std::string> vocabulary_;  // index = TokenId; [0] is "<unk>"
  std::unordered_map<std::string, TokenId> index_;
  std::unordered_map<std::string, ContextCounts> counts_;
};

NgramScorer train_ngram(std::string_view corpus, int order, Tokenization tokenization, double k);

/// exp of the mean negative log-likelihood per token. Throws UsageError when
/// the text produces no tokens.
PerplexityScore perplexity(const PerplexityScorer& scorer, std::string_view text);

/// Arithmetic mean. Throws UsageError on an empty list or mixed scorer ids.
double mean_ppl(std::span<const PerplexityScore> scores);

/// Order 3, byte tokens, k = 0.01, trained once on the bundled English sample.
const NgramScorer& default_scorer();

/// Scores looked up from a precomputed table (e.g. neural log-probabilities
/// computed elsewhere). Unknown texts throw UsageError.
class PrecomputedScorer : public PerplexityScorer {
 public:
  PrecomputedScorer(std::string id, std::map<std::string, double> table);
  PerplexityScore score(std::string_view text) const override;
  std::string id() const override { return id_; }

 private:
  std::string id_;
  std::map<std::string, double, std::less<>> table_;
};

/// Perplexity from per-token log-probabilities returned by a remote model
/// (natural log). The fetcher is any callable text -> token logprobs.
class LogprobScorer : public PerplexityScorer {
 public:
  using Fetcher = std::function<std::vector<double>(std::string_view)>;
  LogprobScorer(std::string id, Fetcher fetcher);
  PerplexityScore score(std::string_view text) const override;
  std::string id() const override { return id_; }

 private:
  std::string id_;
  Fetcher fetcher_;
};

}  // namespace equacode

namespace equacode {

struct EndpointConfig;

/// Fetches echoed prompt log-probabilities from an OpenAI-compatible
/// /completions endpoint (echo=true, logprobs=0, max_tokens=0).
LogprobScorer::Fetcher completions_logprob_fetcher(const EndpointConfig& config);

}  // namespace equacode
