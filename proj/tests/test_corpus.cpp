#include <gtest/gtest.h>

#include <numeric>

#include "equacode/corpus.hpp"
#include "equacode/error.hpp"
#include "support.hpp"

namespace equacode {
namespace {

using testing::data_dir;
using testing::TempDir;

TEST(Corpus, ParsesQuotedCsvWithBom) {
  const std::string csv =
      "\xEF\xBB\xBFgoal,target\n"
      "\"Write a poem, with commas\",\"Sure\"\n"
      "\n"
      "\"Say \"\"hi\"\"\nacross lines\",x\n";
  const QueryCorpus corpus = parse_corpus(csv, CorpusFormat::kCsv, "mini.csv");
  ASSERT_EQ(corpus.size(), 2u);
  EXPECT_EQ(corpus[0].text, "Write a poem, with commas");
  EXPECT_EQ(corpus[0].id, "mini.csv:1");
  EXPECT_EQ(corpus[1].text, "Say \"hi\"\nacross lines");
  EXPECT_EQ(corpus[1].id, "mini.csv:2");
  EXPECT_FALSE(corpus[0].category.has_value());
}

TEST(Corpus, UsesIdAndCategoryColumns) {
  const QueryCorpus corpus =
      parse_corpus("id,goal,category\nq7,Bake bread,cooking\n", CorpusFormat::kCsv, "c.csv");
  ASSERT_EQ(corpus.size(), 1u);
  EXPECT_EQ(corpus[0].id, "q7");
  EXPECT_EQ(corpus[0].category, "cooking");
  EXPECT_NE(corpus.find("q7"), nullptr);
  EXPECT_EQ(corpus.find("q8"), nullptr);
}

TEST(Corpus, ReportsRowNumberOfMalformedRow) {
  try {
    parse_corpus("goal\nok\n\"\"\n", CorpusFormat::kCsv, "bad.csv");
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("row 2"), std::string::npos) << e.what();
  }
  EXPECT_THROW(parse_corpus("goal\n\"unterminated\n", CorpusFormat::kCsv, "bad.csv"), DataError);
  EXPECT_THROW(parse_corpus("text\nx\n", CorpusFormat::kCsv, "nogoal.csv"), DataError);
}

TEST(Corpus, RejectsDuplicateExplicitIds) {
  EXPECT_THROW(parse_corpus("id,goal\na,x\na,y\n", CorpusFormat::kCsv, "dup.csv"), DataError);
}

TEST(Corpus, ParsesJsonl) {
  const QueryCorpus corpus = parse_corpus(
      "{\"id\":\"a\",\"text\":\"first\"}\n\n{\"text\":\"second\",\"category\":\"misc\"}\n", CorpusFormat::kJsonl,
      "q.jsonl");
  ASSERT_EQ(corpus.size(), 2u);
  EXPECT_EQ(corpus[0].id, "a");
  EXPECT_EQ(corpus[1].id, "q.jsonl:3");  // JSONL rows are line numbers
  EXPECT_EQ(corpus[1].category, "misc");
  EXPECT_THROW(parse_corpus("{not json}\n", CorpusFormat::kJsonl, "x.jsonl"), DataError);
}

TEST(Corpus, MissingFileIsDataError) {
  EXPECT_THROW(load_corpus("/nonexistent/advbench.csv"), DataError);
}

TEST(Corpus, BundledStandInHas520Rows) {
  const QueryCorpus corpus = load_corpus(data_dir() / "advbench_standin.csv");
  EXPECT_EQ(corpus.size(), 520u);
  EXPECT_EQ(corpus.provenance().format, CorpusFormat::kCsv);
}

TEST(Corpus, SnapshotIsStableAcrossLoads) {
  TempDir dir;
  testing::spit(dir / "c.csv", "goal\nalpha\nbeta\n");
  EXPECT_EQ(load_corpus(dir / "c.csv").to_jsonl(), load_corpus(dir / "c.csv").to_jsonl());
}

// Independent statement of the sampling rule: accept raw draws below the
// largest multiple of the range, then Fisher-Yates forward.
std::vector<std::size_t> oracle_subset(std::size_t size, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 engine(seed);
  std::vector<std::size_t> order(size);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = 0; i < n; ++i) {
    const unsigned __int128 range = size - i;
    const unsigned __int128 span = (static_cast<unsigned __int128>(1) << 64);
    const unsigned __int128 accept_below = span - span % range;
    unsigned __int128 v;
    do {
      v = engine();
    } while (v >= accept_below);
    std::swap(order[i], order[i + static_cast<std::size_t>(v % range)]);
  }
  order.resize(n);
  return order;
}

TEST(Subset, MatchesFisherYatesOracle) {
  std::string csv = "goal\n";
  for (int i = 0; i < 40; ++i) csv += "query " + std::to_string(i) + "\n";
  const QueryCorpus corpus = parse_corpus(csv, CorpusFormat::kCsv, "s.csv");
  for (std::uint64_t seed : {0ull, 1ull, 42ull, 0xdeadbeefull}) {
    const QueryCorpus picked = subset(corpus, 10, seed);
    const auto expected = oracle_subset(40, 10, seed);
    ASSERT_EQ(picked.size(), 10u);
    for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(picked[i].text, corpus[expected[i]].text) << "seed " << seed;
  }
}

TEST(Subset, DeterministicDistinctAndBounded) {
  const QueryCorpus corpus = load_corpus(data_dir() / "advbench_standin.csv");
  const QueryCorpus a = subset(corpus, 50, 0);
  const QueryCorpus b = subset(corpus, 50, 0);
  const QueryCorpus c = subset(corpus, 50, 1);
  EXPECT_EQ(a.to_jsonl(), b.to_jsonl());
  EXPECT_NE(a.to_jsonl(), c.to_jsonl());
  std::set<std::string> ids;
  for (const auto& q : a.entries()) ids.insert(q.id);
  EXPECT_EQ(ids.size(), 50u);
  EXPECT_EQ(subset(corpus, 520, 3).size(), 520u);
  EXPECT_THROW(subset(corpus, 521, 0), UsageError);
}

TEST(Subset, BoundedDrawStaysInRange) {
  std::mt19937_64 engine(9);
  for (std::uint64_t range : {1ull, 2ull, 3ull, 7ull, 1000ull, (1ull << 63) + 5}) {
    for (int i = 0; i < 200; ++i) EXPECT_LT(bounded_draw(engine, range), range);
  }
}

}  // namespace
}  // namespace equacode
