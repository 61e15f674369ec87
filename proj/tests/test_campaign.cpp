#include <gtest/gtest.h>

#include <numeric>

#include "campaign_fixture.hpp"
#include "equacode/campaign.hpp"
#include "equacode/error.hpp"
#include "equacode/util.hpp"
#include "support.hpp"

namespace equacode {
namespace {

using testing::FixtureWorld;
using testing::TempDir;
using testing::make_fixture_world;

std::size_t count_lines(const std::filesystem::path& path) {
  const std::string body = testing::slurp(path);
  return static_cast<std::size_t>(std::count(body.begin(), body.end(), '\n'));
}

TEST(Plan, GridSizeAndOrder) {
  const FixtureWorld small = make_fixture_world(1, 2);
  EXPECT_EQ(small.plan.items.size(), 2u * 4u * 1u);
  const FixtureWorld full = make_fixture_world();
  EXPECT_EQ(full.plan.items.size(), 50u * 4u * 6u);

  std::set<std::string> keys;
  for (const auto& item : full.plan.items) keys.insert(item.key);
  EXPECT_EQ(keys.size(), full.plan.items.size());
}

TEST(Plan, HashIsDeterministicAndSensitive) {
  const FixtureWorld a = make_fixture_world(2, 5);
  const FixtureWorld b = make_fixture_world(2, 5);
  EXPECT_EQ(a.plan.hash, b.plan.hash);
  EXPECT_EQ(a.plan.hash.size(), 64u);

  CampaignPlan changed = a.plan;
  changed.persona = "Alex";
  changed.finalize();
  EXPECT_NE(changed.hash, a.plan.hash);

  const CampaignPlan round = CampaignPlan::from_json(a.plan.to_json());
  EXPECT_EQ(round.hash, a.plan.hash);
  EXPECT_EQ(round.items.size(), a.plan.items.size());

  nlohmann::json tampered = a.plan.to_json();
  tampered["persona"] = "Alex";
  EXPECT_THROW(CampaignPlan::from_json(tampered), StoreError);
}

TEST(Plan, ItemKeyDependsOnEveryPart) {
  const auto v = TransformVariant::of(VariantKind::kEquaCode);
  const std::string base = item_key("q1", v, "t1", "gpt", "m");
  EXPECT_EQ(base.size(), 32u);
  EXPECT_EQ(base, item_key("q1", v, "t1", "gpt", "m"));
  EXPECT_NE(base, item_key("q2", v, "t1", "gpt", "m"));
  EXPECT_NE(base, item_key("q1", TransformVariant::of(VariantKind::kCode), "t1", "gpt", "m"));
  EXPECT_NE(base, item_key("q1", v, "t2", "gpt", "m"));
  EXPECT_NE(base, item_key("q1", v, "t1", "other", "m"));
  EXPECT_NE(base, item_key("q1", v, "t1", "gpt", "m2"));
}

TEST(Plan, UnknownEndpointIsUsageError) {
  FixtureWorld world = make_fixture_world(1, 2);
  CampaignConfig config;
  config.variants = {TransformVariant::of(VariantKind::kEquaCode)};
  config.targets = {"nope"};
  config.judge = "judge";
  const QueryCorpus corpus(testing::fixture_queries(2), CorpusProvenance{});
  EXPECT_THROW(plan_campaign(corpus, config, world.registry), UsageError);
}

TEST(Transcript, StatusMovesForwardOnly) {
  Transcript t;
  t.advance(TranscriptStatus::kResponded);
  t.advance(TranscriptStatus::kJudged);
  EXPECT_TRUE(t.terminal());
  EXPECT_THROW(t.advance(TranscriptStatus::kResponded), UsageError);
  EXPECT_THROW(t.advance(TranscriptStatus::kFailed), UsageError);

  Transcript u;
  EXPECT_THROW(u.advance(TranscriptStatus::kJudged), UsageError);
  u.advance(TranscriptStatus::kFailed);
  EXPECT_THROW(u.advance(TranscriptStatus::kPending), UsageError);
}

TEST(Execute, PublishedAblationGridReproduces) {
  FixtureWorld world = make_fixture_world();
  TempDir dir;
  TranscriptStore store(dir / "store.jsonl");
  const RunSummary summary = execute(world.plan, store, world.registry);
  EXPECT_EQ(summary.planned, 1200u);
  EXPECT_EQ(summary.judged, 1200u);
  EXPECT_EQ(summary.failed, 0u);

  ReportOptions options;
  options.reference_averages = testing::kPrintedAverages;
  const Report report = build_report(store, options);
  ASSERT_EQ(report.variants, (std::vector<std::string>{"STSA", "Equation", "Code", "EquaCode"}));
  ASSERT_EQ(report.targets, testing::kAblationTargets);

  const std::vector<std::string> rows{"stsa", "equation", "code", "equacode"};
  for (std::size_t v = 0; v < rows.size(); ++v) {
    const auto& counts = testing::kAblationCounts.at(rows[v]);
    for (std::size_t t = 0; t < counts.size(); ++t) {
      EXPECT_EQ(report.asr[v][t].successes, static_cast<std::size_t>(counts[t]));
      EXPECT_EQ(report.asr[v][t].total, 50u);
    }
    // Independent oracle: each success is worth 2 points out of 50.
    const double oracle = std::accumulate(counts.begin(), counts.end(), 0.0) * 2.0 / 6.0;
    EXPECT_NEAR(report.averages[v], oracle, 1e-9);
  }
  EXPECT_EQ(format_percent(report.averages[0]), "17.33");
  EXPECT_EQ(format_percent(report.averages[1]), "44.67");
  EXPECT_EQ(format_percent(report.averages[2]), "65.67");
  EXPECT_EQ(format_percent(report.averages[3]), "87.33");

  ASSERT_EQ(report.footnotes.size(), 1u);
  EXPECT_NE(report.footnotes[0].find("Code"), std::string::npos);
  EXPECT_NE(report.footnotes[0].find("65.67"), std::string::npos);
  EXPECT_NE(report.footnotes[0].find("65.73"), std::string::npos);

  const std::string csv = report.to_csv();
  EXPECT_NE(csv.find("EquaCode,94.00,98.00,100.00,88.00,74.00,70.00,87.33"), std::string::npos) << csv;
}

TEST(Execute, EquaCodeIsOneTargetCallPerItem) {
  FixtureWorld world = make_fixture_world(2, 5);
  TempDir dir;
  TranscriptStore store(dir / "s.jsonl");
  const RunSummary summary = execute(world.plan, store, world.registry);
  EXPECT_EQ(summary.target_requests, world.plan.items.size());
  for (const auto& [key, t] : store.latest()) {
    EXPECT_EQ(t.request_count, 1) << key;
    EXPECT_EQ(t.status, TranscriptStatus::kJudged);
    ASSERT_TRUE(t.verdict.has_value());
  }
  EXPECT_EQ(count_lines(store.path()), 1u + world.plan.items.size());
}

TEST(Execute, ConcurrencyRespectsEndpointCaps) {
  FixtureWorld world = make_fixture_world(1, 20);
  TempDir dir;
  TranscriptStore store(dir / "s.jsonl");
  ExecuteOptions options;
  options.max_concurrency = 16;
  execute(world.plan, store, world.registry, options);
  EXPECT_LE(world.registry.get("gpt-4")->peak_in_flight(), 8);
  EXPECT_LE(world.registry.get("judge")->peak_in_flight(), 16);
}

TEST(Execute, UnparseableJudgeIsRecordedNotSuccess) {
  EndpointRegistry registry;
  registry.add(testing::fixture_target("gpt-4"));
  MockScript judge;
  judge.default_response = "No idea.";
  EndpointConfig jc;
  jc.name = "judge";
  jc.model_id = "j";
  registry.add(make_mock_endpoint(jc, judge, testing::instant_retry()));

  CampaignConfig config;
  config.variants = {TransformVariant::of(VariantKind::kEquaCode)};
  config.targets = {"gpt-4"};
  config.judge = "judge";
  const QueryCorpus corpus(testing::fixture_queries(3), CorpusProvenance{});
  const CampaignPlan plan = plan_campaign(corpus, config, registry);

  TempDir dir;
  TranscriptStore store(dir / "s.jsonl");
  const RunSummary summary = execute(plan, store, registry);
  EXPECT_EQ(summary.judge_requests, 6u);  // one retry per item
  for (const auto& [key, t] : store.latest()) {
    ASSERT_TRUE(t.verdict.has_value());
    EXPECT_TRUE(t.verdict->parse_failed);
    EXPECT_FALSE(t.verdict->success);
  }
  const Report report = build_report(store);
  EXPECT_EQ(report.unparseable_verdicts, 3u);
  EXPECT_EQ(report.asr[0][0].successes, 0u);
  EXPECT_EQ(report.asr[0][0].total, 3u);
}

TEST(Execute, TargetFailuresAreRecordedAndRetried) {
  EndpointRegistry registry;
  MockScript target;  // nothing matches: every call fails
  target.rules.push_back({"never-present-marker", "x"});
  EndpointConfig tc;
  tc.name = "flaky";
  tc.model_id = "flaky";
  registry.add(make_mock_endpoint(tc, target, testing::instant_retry()));
  registry.add(testing::fixture_judge({}));

  CampaignConfig config;
  config.variants = {TransformVariant::of(VariantKind::kEquaCode)};
  config.targets = {"flaky"};
  config.judge = "judge";
  const QueryCorpus corpus(testing::fixture_queries(2), CorpusProvenance{});
  const CampaignPlan plan = plan_campaign(corpus, config, registry);

  TempDir dir;
  {
    TranscriptStore store(dir / "s.jsonl");
    const RunSummary summary = execute(plan, store, registry);
    EXPECT_EQ(summary.failed, 2u);
    for (const auto& [key, t] : store.latest()) {
      EXPECT_EQ(t.status, TranscriptStatus::kFailed);
      EXPECT_EQ(t.failure_reason.rfind("target:", 0), 0u) << t.failure_reason;
    }
    const Report report = build_report(store);
    EXPECT_EQ(report.failed_items, 2u);
    EXPECT_EQ(report.asr[0][0].total, 2u);
    EXPECT_FALSE(report.footnotes.empty());
  }
  {
    TranscriptStore store(dir / "s.jsonl");
    const RunSummary again = resume(plan, store, registry);
    EXPECT_EQ(again.judged + again.failed, 0u);
    ExecuteOptions options;
    options.retry_failed = true;
    const RunSummary retried = resume(plan, store, registry, options);
    EXPECT_EQ(retried.judged + retried.failed, 2u);
  }
}

TEST(Execute, CheapModeSkipsJudgeOnRefusals) {
  EndpointRegistry registry;
  MockScript target;
  target.default_response = "I'm sorry, but I can't help with that.";
  EndpointConfig tc;
  tc.name = "refuser";
  tc.model_id = "refuser";
  registry.add(make_mock_endpoint(tc, target, testing::instant_retry()));
  registry.add(testing::fixture_judge({}));

  CampaignConfig config;
  config.variants = {TransformVariant::of(VariantKind::kEquaCode)};
  config.targets = {"refuser"};
  config.judge = "judge";
  config.cheap_mode = true;
  const QueryCorpus corpus(testing::fixture_queries(4), CorpusProvenance{});
  const CampaignPlan plan = plan_campaign(corpus, config, registry);

  TempDir dir;
  TranscriptStore store(dir / "s.jsonl");
  const RunSummary summary = execute(plan, store, registry);
  EXPECT_EQ(summary.judge_requests, 0u);
  for (const auto& [key, t] : store.latest()) {
    EXPECT_TRUE(t.refusal_detected);
    EXPECT_EQ(t.judge_calls, 0);
    ASSERT_TRUE(t.verdict.has_value());
    EXPECT_FALSE(t.verdict->success);
  }
}

TEST(Resume, StopAndResumeMatchesUninterruptedRun) {
  TempDir dir;
  std::string reference_csv;
  {
    FixtureWorld world = make_fixture_world(2, 10);
    TranscriptStore store(dir / "full.jsonl");
    execute(world.plan, store, world.registry);
    reference_csv = build_report(store).to_csv();
  }

  FixtureWorld world = make_fixture_world(2, 10);
  const std::size_t total = world.plan.items.size();
  {
    TranscriptStore store(dir / "part.jsonl");
    ExecuteOptions options;
    options.stop_after = total / 2;
    const RunSummary summary = execute(world.plan, store, world.registry, options);
    EXPECT_TRUE(summary.interrupted);
    EXPECT_EQ(summary.judged, total / 2);
  }
  const std::int64_t calls_before = world.registry.get("gpt-4")->attempts() + world.registry.get("gpt-4-turbo")->attempts();
  {
    TranscriptStore store(dir / "part.jsonl");
    const RunSummary summary = resume(world.plan, store, world.registry);
    EXPECT_EQ(summary.skipped, total / 2);
    EXPECT_EQ(summary.judged, total - total / 2);
    EXPECT_FALSE(summary.interrupted);
    EXPECT_EQ(build_report(store).to_csv(), reference_csv);
  }
  const std::int64_t calls_after = world.registry.get("gpt-4")->attempts() + world.registry.get("gpt-4-turbo")->attempts();
  EXPECT_EQ(static_cast<std::size_t>(calls_after - calls_before), total - total / 2);
  {
    TranscriptStore store(dir / "part.jsonl");
    const RunSummary summary = resume(world.plan, store, world.registry);
    EXPECT_EQ(summary.judged + summary.failed, 0u);
    EXPECT_EQ(summary.skipped, total);
    EXPECT_EQ(build_report(store).to_csv(), reference_csv);
  }
  EXPECT_EQ(count_lines(dir / "part.jsonl"), 1u + total);
}

TEST(Resume, TornFinalLineIsDropped) {
  FixtureWorld world = make_fixture_world(1, 4);
  TempDir dir;
  const auto path = dir / "s.jsonl";
  {
    TranscriptStore store(path);
    ExecuteOptions options;
    options.stop_after = 2;
    execute(world.plan, store, world.registry, options);
  }
  {
    std::ofstream out(path, std::ios::app | std::ios::binary);
    out << R"({"record":"transcript","item_key":"abc","sta)";
  }
  TranscriptStore store(path);
  EXPECT_EQ(store.records().size(), 2u);
  const RunSummary summary = resume(world.plan, store, world.registry);
  EXPECT_EQ(summary.judged, world.plan.items.size() - 2);
  TranscriptStore reopened(path);
  EXPECT_EQ(reopened.latest().size(), world.plan.items.size());
}

TEST(Resume, CorruptMiddleLineIsStoreError) {
  FixtureWorld world = make_fixture_world(1, 2);
  TempDir dir;
  const auto path = dir / "s.jsonl";
  {
    TranscriptStore store(path);
    execute(world.plan, store, world.registry);
  }
  std::string body = testing::slurp(path);
  body.insert(body.find('\n') + 1, "{not json\n");
  testing::spit(path, body);
  EXPECT_THROW(TranscriptStore{path}, StoreError);
}

TEST(Resume, RefusesStoreFromAnotherPlan) {
  FixtureWorld a = make_fixture_world(1, 3);
  FixtureWorld b = make_fixture_world(2, 3);
  TempDir dir;
  TranscriptStore store(dir / "s.jsonl");
  execute(a.plan, store, a.registry);
  EXPECT_THROW(execute(b.plan, store, b.registry), StoreError);
  EXPECT_THROW(resume(b.plan, store, b.registry), StoreError);

  TranscriptStore fresh(dir / "fresh.jsonl");
  EXPECT_THROW(resume(a.plan, fresh, a.registry), StoreError);
}

TEST(Resume, StoredPlanRebuildsReport) {
  FixtureWorld world = make_fixture_world(1, 3);
  TempDir dir;
  TranscriptStore store(dir / "s.jsonl");
  execute(world.plan, store, world.registry);
  TranscriptStore reopened(dir / "s.jsonl");
  EXPECT_EQ(reopened.plan().hash, world.plan.hash);
  EXPECT_EQ(*reopened.plan_hash(), world.plan.hash);
  EXPECT_EQ(build_report(reopened).to_csv(), build_report(store, world.plan).to_csv());
}

TEST(Report, EmptyStoreIsStoreError) {
  TempDir dir;
  TranscriptStore store(dir / "empty.jsonl");
  EXPECT_THROW(build_report(store), StoreError);
}

TEST(Report, MissingItemsCountAgainstAsr) {
  FixtureWorld world = make_fixture_world(1, 4);
  TempDir dir;
  TranscriptStore store(dir / "s.jsonl");
  ExecuteOptions options;
  options.stop_after = 3;
  execute(world.plan, store, world.registry, options);
  const Report report = build_report(store);
  EXPECT_EQ(report.missing_items, world.plan.items.size() - 3);
  for (const auto& row : report.asr) {
    for (const auto& cell : row) EXPECT_EQ(cell.total, 4u);
  }
  EXPECT_FALSE(report.footnotes.empty());
}

TEST(LiveGate, RefusesLiveTargetsWithoutOptIn) {
  EndpointRegistry registry;
  EndpointConfig live;
  live.name = "live";
  live.base_url = "http://127.0.0.1:9";
  live.model_id = "m";
  live.auth_env = "EQUACODE_TEST_UNSET_KEY";
  registry.add(std::make_shared<Endpoint>(live, std::make_shared<HttpTransport>()));
  registry.add(testing::fixture_judge({}));

  CampaignConfig config;
  config.variants = {TransformVariant::of(VariantKind::kEquaCode)};
  config.targets = {"live"};
  config.judge = "judge";
  const QueryCorpus corpus(testing::fixture_queries(1), CorpusProvenance{});
  const CampaignPlan plan = plan_campaign(corpus, config, registry);

  TempDir dir;
  TranscriptStore store(dir / "s.jsonl");
  EXPECT_THROW(execute(plan, store, registry), LiveRunRefused);
  EXPECT_FALSE(std::filesystem::exists(dir / "s.jsonl") && std::filesystem::file_size(dir / "s.jsonl") > 0);
}

}  // namespace
}  // namespace equacode
