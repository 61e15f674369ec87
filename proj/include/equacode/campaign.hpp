#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "equacode/client.hpp"
#include "equacode/corpus.hpp"
#include "equacode/defense.hpp"
#include "equacode/judge.hpp"
#include "equacode/scoring.hpp"
#include "equacode/transform.hpp"

namespace equacode {

/// What to run: corpus, subset, variants, targets and judge.
struct CampaignConfig {
  std::filesystem::path corpus_path;
  std::optional<CorpusFormat> corpus_format;  // inferred from the extension when unset
  CsvColumns columns;
  std::optional<std::size_t> subset_size;
  std::uint64_t seed = 0;
  std::vector<TransformVariant> variants;
  std::vector<std::string> targets;
  std::string judge;
  bool cheap_mode = false;
  std::string persona = "Mark";
  std::string unknown_label = "x";
  DecompositionPolicy policy = DecompositionPolicy::kStatic;
  std::string decomposer;  // endpoint name for the llm-assisted policy
};

struct PlanTarget {
  std::string name;
  std::string model_id;
};

struct PlanItem {
  std::string key;
  std::size_t query_index = 0;
  std::size_t variant_index = 0;
  std::size_t target_index = 0;
};

/// The queries x variants x targets grid with one stable key per item.
struct CampaignPlan {
  std::string corpus_source;
  std::optional<std::size_t> subset_size;
  std::uint64_t seed = 0;
  std::vector<MaliciousQuery> queries;
  std::vector<TransformVariant> variants;
  std::vector<PlanTarget> targets;
  std::string judge;
  std::string judge_model;
  std::string template_version;
  bool cheap_mode = false;
  std::string persona = "Mark";
  std::string unknown_label = "x";
  DecompositionPolicy policy = DecompositionPolicy::kStatic;
  std::string decomposer;

  std::vector<PlanItem> items;
  std::string hash;

  /// Rebuilds items and hash from the other fields.
  void finalize();
  nlohmann::json to_json() const;  // items are derived, not serialized
  static CampaignPlan from_json(const nlohmann::json& json);
};

/// Key of one grid cell entry: query, variant, template version, target and model.
std::string item_key(std::string_view query_id, const TransformVariant& variant,
                     std::string_view template_version, std::string_view target_name,
                     std::string_view model_id);

/// Resolves endpoints and loads the corpus. Throws UsageError on unknown names.
CampaignPlan plan_campaign(const CampaignConfig& config, const EndpointRegistry& endpoints,
                           const TemplateSet& templates = TemplateSet::builtin());
/// Same, with the corpus already loaded.
CampaignPlan plan_campaign(const QueryCorpus& corpus, const CampaignConfig& config,
                           const EndpointRegistry& endpoints, const TemplateSet& templates = TemplateSet::builtin());

enum class TranscriptStatus { kPending, kResponded, kJudged, kFailed };

std::string_view to_string(TranscriptStatus status);
TranscriptStatus parse_transcript_status(std::string_view name);

/// Persisted record of one (query, variant, target) interaction.
struct Transcript {
  std::string item_key;
  std::string query_id;
  std::string target;
  std::string model_id;
  AttackPrompt prompt;
  std::optional<ChatResponse> response;
  std::optional<JudgeVerdict> verdict;
  TranscriptStatus status = TranscriptStatus::kPending;
  std::string failure_reason;
  std::string created_at;
  std::string updated_at;
  int request_count = 0;  // target API calls, retries included
  int judge_calls = 0;
  bool refusal_detected = false;

  /// Moves forward only: pending -> responded -> judged, or any -> failed
  /// from a non-terminal state. Throws UsageError otherwise.
  void advance(TranscriptStatus next);
  bool terminal() const {
    return status == TranscriptStatus::kJudged || status == TranscriptStatus::kFailed;
  }

  nlohmann::json to_json() const;
  static Transcript from_json(const nlohmann::json& json);
};

/// Append-only JSONL store: a header record naming the plan, then one
/// transcript per line. A torn final line left by an interrupted writer is
/// dropped on open.
class TranscriptStore {
 public:
  static constexpr int kSchemaVersion = 1;

  explicit TranscriptStore(std::filesystem::path path);

  const std::filesystem::path& path() const noexcept { return path_; }
  bool has_header() const noexcept { return header_.has_value(); }
  const std::optional<nlohmann::json>& header() const noexcept { return header_; }
  std::optional<std::string> plan_hash() const;
  /// Plan recorded in the header; throws StoreError when there is none.
  CampaignPlan plan() const;

  /// Throws StoreError when the store already has content.
  void write_header(const CampaignPlan& plan);
  void append(const Transcript& transcript);

  const std::vector<Transcript>& records() const noexcept { return records_; }
  /// Latest record per item key.
  std::map<std::string, Transcript> latest() const;

 private:
  void open_for_append();

  std::filesystem::path path_;
  std::optional<nlohmann::json> header_;
  std::vector<Transcript> records_;
  std::ofstream out_;
};

struct ExecuteOptions {
  std::size_t max_concurrency = 8;
  bool allow_live = false;    // required for any non-mock target
  bool retry_failed = false;  // re-open failed items
  std::optional<std::size_t> stop_after;  // stop claiming work after this many records
  std::vector<std::string> refusal_lexicon;  // empty = bundled lexicon
  const TemplateSet* templates = nullptr;
};

struct RunSummary {
  std::size_t planned = 0;
  std::size_t skipped = 0;
  std::size_t judged = 0;
  std::size_t failed = 0;
  std::size_t target_requests = 0;
  std::size_t judge_requests = 0;
  bool interrupted = false;
};

class LiveRunRefused : public UsageError {
 public:
  using UsageError::UsageError;
};

/// Runs every item without a terminal record. Writes the header on a fresh
/// store and refuses a store recorded for a different plan. Per-item errors
/// are recorded as failed transcripts; store errors abort.
RunSummary execute(const CampaignPlan& plan, TranscriptStore& store, const EndpointRegistry& endpoints,
                   const ExecuteOptions& options = {});

/// Like execute, but the store must already hold this plan's header.
RunSummary resume(const CampaignPlan& plan, TranscriptStore& store, const EndpointRegistry& endpoints,
                  const ExecuteOptions& options = {});

struct ReportOptions {
  /// Published averages per variant label; mismatches beyond 0.005 points are footnoted.
  std::map<std::string, double> reference_averages;
  const PerplexityScorer* scorer = nullptr;  // adds a mean-PPL column per variant
  std::vector<BypassReport> bypass;
};

struct Report {
  std::string plan_hash;
  std::string generated_at;
  std::vector<std::string> variants;  // display labels
  std::vector<std::string> targets;
  std::vector<std::vector<AsrResult>> asr;  // [variant][target]
  std::vector<double> averages;             // mean of each row's percentages
  std::vector<std::string> footnotes;
  std::optional<std::vector<double>> mean_ppl;  // per variant
  std::optional<std::vector<BypassReport>> bypass;
  std::size_t missing_items = 0;
  std::size_t failed_items = 0;
  std::size_t unparseable_verdicts = 0;

  /// ASR percentages, two decimals. Excludes timestamps so rebuilding is byte-stable.
  std::string to_csv() const;
  std::string to_text() const;
};

/// Throws StoreError on an empty store.
Report build_report(const TranscriptStore& store, const CampaignPlan& plan, const ReportOptions& options = {});
Report build_report(const TranscriptStore& store, const ReportOptions& options = {});

}  // namespace equacode
