#include <spdlog/spdlog.h>

#include <atomic>
#include <condition_variable>
#include <deque>
#include <exception>
#include <mutex>
#include <thread>

#include "equacode/campaign.hpp"
#include "equacode/error.hpp"
#include "equacode/util.hpp"

namespace equacode {

namespace {

struct WorkItem {
  const PlanItem* item = nullptr;
  std::optional<Transcript> prior;  // failed record being retried
};

/// Single consumer that owns the store's append stream.
class Writer {
 public:
  explicit Writer(TranscriptStore& store) : store_(store), thread_([this] { run(); }) {}

  ~Writer() { close(); }

  void push(Transcript transcript) {
    {
      std::lock_guard lock(mutex_);
      queue_.push_back(std::move(transcript));
    }
    ready_.notify_one();
  }

  void close() {
    {
      std::lock_guard lock(mutex_);
      closed_ = true;
    }
    ready_.notify_one();
    if (thread_.joinable()) thread_.join();
  }

  bool failed() const { return failed_.load(); }
  std::exception_ptr error() const { return error_; }

 private:
  void run() {
    for (;;) {
      std::unique_lock lock(mutex_);
      ready_.wait(lock, [this] { return closed_ || !queue_.empty(); });
      if (queue_.empty()) return;
      Transcript next = std::move(queue_.front());
      queue_.pop_front();
      lock.unlock();
      if (failed_) continue;
      try {
        store_.append(next);
      } catch (...) {
        error_ = std::current_exception();
        failed_ = true;
      }
    }
  }

  TranscriptStore& store_;
  std::mutex mutex_;
  std::condition_variable ready_;
  std::deque<Transcript> queue_;
  bool closed_ = false;
  std::atomic<bool> failed_{false};
  std::exception_ptr error_;
  std::thread thread_;
};

void check_live_gate(const CampaignPlan& plan, const EndpointRegistry& endpoints, bool allow_live) {
  std::vector<std::string> names;
  for (const auto& target : plan.targets) names.push_back(target.name);
  names.push_back(plan.judge);
  if (plan.policy == DecompositionPolicy::kLlmAssisted) names.push_back(plan.decomposer);

  std::vector<std::string> live;
  for (const auto& name : names) {
    if (endpoints.get(name)->is_live()) live.push_back(name);
  }
  if (live.empty()) return;
  std::string joined;
  for (const auto& name : live) joined += (joined.empty() ? "" : ", ") + name;
  if (!allow_live) {
    throw LiveRunRefused("endpoints " + joined +
                         " are live; pass --i-understand-live-run to send adversarial prompts to them");
  }
  spdlog::warn("live run against {}: prompts are adversarial by design; use only on systems you are authorized to test",
               joined);
}

class ItemRunner {
 public:
  ItemRunner(const CampaignPlan& plan, const EndpointRegistry& endpoints, const TemplateSet& templates,
             std::span<const std::string> lexicon)
      : plan_(plan), templates_(templates), lexicon_(lexicon), judge_(endpoints.get(plan.judge)) {
    for (const auto& target : plan.targets) targets_.push_back(endpoints.get(target.name));
    if (plan.policy == DecompositionPolicy::kLlmAssisted) decomposer_ = endpoints.get(plan.decomposer);
  }

  Transcript run(const PlanItem& item, const std::optional<Transcript>& prior) const {
    const MaliciousQuery& query = plan_.queries[item.query_index];
    const TransformVariant& variant = plan_.variants[item.variant_index];
    const PlanTarget& target = plan_.targets[item.target_index];
    Endpoint& endpoint = *targets_[item.target_index];

    Transcript t;
    t.item_key = item.key;
    t.query_id = query.id;
    t.target = target.name;
    t.model_id = target.model_id;
    t.created_at = prior ? prior->created_at : utc_timestamp();
    if (prior) t.request_count = prior->request_count;

    auto fail = [&](std::string reason) {
      t.advance(TranscriptStatus::kFailed);
      t.failure_reason = std::move(reason);
      t.updated_at = utc_timestamp();
      return t;
    };

    try {
      TransformOptions options;
      options.templates = &templates_;
      options.decompose.policy = plan_.policy;
      options.decompose.persona = plan_.persona;
      options.decompose.unknown_label = plan_.unknown_label;
      options.decompose.client = decomposer_.get();
      options.decompose.templates = &templates_;
      t.prompt = render_prompt(query, variant, options);
    } catch (const std::exception& e) {
      return fail(std::string("render: ") + e.what());
    }

    ChatRequest request;
    request.model_id = target.model_id;
    request.messages.push_back({Role::kUser, t.prompt.rendered});
    request.temperature = endpoint.config().default_temperature;
    try {
      t.response = send_chat(endpoint, request);
      t.request_count += t.response->attempt_count;
    } catch (const EndpointError& e) {
      t.request_count += e.attempts();
      return fail(std::string("target: ") + e.what());
    } catch (const std::exception& e) {
      return fail(std::string("target: ") + e.what());
    }
    t.advance(TranscriptStatus::kResponded);

    const std::string& content = t.response->content;
    t.refusal_detected = keyword_refusal_check(content, lexicon_);
    if (trim(content).empty()) {
      t.verdict = empty_response_verdict();
    } else if (plan_.cheap_mode && t.refusal_detected) {
      t.verdict = refusal_prefilter_verdict(content);
    } else {
      try {
        JudgeOutcome outcome = judge_response(*judge_, query, content, &templates_);
        t.verdict = std::move(outcome.verdict);
        t.judge_calls = outcome.judge_calls;
      } catch (const std::exception& e) {
        return fail(std::string("judge: ") + e.what());
      }
    }
    t.advance(TranscriptStatus::kJudged);
    t.updated_at = utc_timestamp();
    return t;
  }

 private:
  const CampaignPlan& plan_;
  const TemplateSet& templates_;
  std::span<const std::string> lexicon_;
  std::shared_ptr<Endpoint> judge_;
  std::vector<std::shared_ptr<Endpoint>> targets_;
  std::shared_ptr<Endpoint> decomposer_;
};

RunSummary run_items(const CampaignPlan& plan, TranscriptStore& store, const EndpointRegistry& endpoints,
                     const ExecuteOptions& options) {
  const TemplateSet& templates = options.templates ? *options.templates : TemplateSet::builtin();
  RunSummary summary;
  summary.planned = plan.items.size();

  const auto latest = store.latest();
  std::vector<WorkItem> work;
  for (const auto& item : plan.items) {
    auto found = latest.find(item.key);
    if (found == latest.end() || !found->second.terminal()) {
      work.push_back({&item, std::nullopt});
    } else if (found->second.status == TranscriptStatus::kFailed && options.retry_failed) {
      work.push_back({&item, found->second});
    } else {
      ++summary.skipped;
    }
  }
  if (work.empty()) return summary;

  const std::vector<std::string>& lexicon =
      options.refusal_lexicon.empty() ? default_refusal_lexicon() : options.refusal_lexicon;
  const ItemRunner runner(plan, endpoints, templates, lexicon);

  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> judged{0}, failed{0}, target_requests{0}, judge_requests{0};
  std::atomic<bool> interrupted{false};
  const std::size_t limit = std::min(work.size(), options.stop_after.value_or(work.size()));
  if (limit < work.size()) interrupted = true;

  Writer writer(store);
  {
    const std::size_t workers = std::clamp<std::size_t>(options.max_concurrency, 1, limit == 0 ? 1 : limit);
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (;;) {
          if (writer.failed()) return;
          const std::size_t index = next.fetch_add(1);
          if (index >= limit) return;
          Transcript t = runner.run(*work[index].item, work[index].prior);
          (t.status == TranscriptStatus::kJudged ? judged : failed)++;
          target_requests += static_cast<std::size_t>(t.request_count);
          judge_requests += static_cast<std::size_t>(t.judge_calls);
          writer.push(std::move(t));
        }
      });
    }
  }
  writer.close();
  if (writer.failed()) std::rethrow_exception(writer.error());

  summary.judged = judged;
  summary.failed = failed;
  summary.target_requests = target_requests;
  summary.judge_requests = judge_requests;
  summary.interrupted = interrupted;
  return summary;
}

}  // namespace

RunSummary execute(const CampaignPlan& plan, TranscriptStore& store, const EndpointRegistry& endpoints,
                   const ExecuteOptions& options) {
  if (store.has_header() && store.plan_hash() != plan.hash) {
    throw StoreError("store " + store.path().string() + " belongs to plan " + store.plan_hash().value_or("") +
                     ", not " + plan.hash + "; use a new store path");
  }
  const TemplateSet& templates = options.templates ? *options.templates : TemplateSet::builtin();
  if (templates.version() != plan.template_version) {
    throw UsageError("plan was built for templates " + plan.template_version + " but the loaded set is " +
                     templates.version());
  }
  check_live_gate(plan, endpoints, options.allow_live);
  if (!store.has_header()) store.write_header(plan);
  return run_items(plan, store, endpoints, options);
}

RunSummary resume(const CampaignPlan& plan, TranscriptStore& store, const EndpointRegistry& endpoints,
                  const ExecuteOptions& options) {
  if (!store.has_header()) {
    throw StoreError("store " + store.path().string() + " has no campaign to resume");
  }
  return execute(plan, store, endpoints, options);
}

}  // namespace equacode
