#include "equacode/cli.hpp"

#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <algorithm>
#include <fstream>
#include <memory>
#include <nlohmann/json.hpp>
#include <optional>
#include <sstream>

#include "equacode/campaign.hpp"
#include "equacode/config.hpp"
#include "equacode/defense.hpp"
#include "equacode/error.hpp"
#include "equacode/scoring.hpp"
#include "equacode/serialize.hpp"
#include "equacode/util.hpp"
#include "csv.hpp"

namespace equacode {

using nlohmann::json;

namespace {

struct Globals {
  std::string config;
  std::uint64_t seed = 0;
  int verbosity = 0;
  bool force = false;
};

struct TransformArgs {
  std::string variant;
  std::string corpus;
  std::string out = "-";
  std::optional<std::size_t> subset;
  std::string persona = "Mark";
  std::string templates;
  bool live = false;
};

struct RunArgs {
  std::string store;
  bool live = false;
  bool retry_failed = false;
  std::optional<std::size_t> max_concurrency;
  std::optional<std::size_t> stop_after;
};

struct JudgeArgs {
  std::string store;
  std::string out;
  std::string judge;
  bool live = false;
};

struct ReportArgs {
  std::string store;
  std::string csv;
  std::string format = "text";
  std::vector<std::string> references;
  bool ppl = false;
};

struct PplArgs {
  std::string in;
  std::string out = "-";
  std::string model;
  std::string train;
  int order = 3;
  std::string tokenization = "byte";
  double k = 0.01;
  std::string save_model;
};

struct DefendArgs {
  std::string in;
  std::string out;
  std::vector<std::string> filters;
  std::optional<double> ppl_threshold;
  std::string lexicon;
  bool live = false;
};

/// Output sink: stdout for "-", otherwise a file that must not exist unless forced.
class Output {
 public:
  Output(const std::string& path, bool force, std::ostream& fallback) : fallback_(fallback) {
    if (path.empty() || path == "-") return;
    if (std::filesystem::exists(path) && !force) {
      throw UsageError("output " + path + " exists; pass --force to overwrite");
    }
    file_.open(path, std::ios::binary | std::ios::trunc);
    if (!file_) throw UsageError("cannot write " + path);
  }

  std::ostream& stream() { return file_.is_open() ? file_ : fallback_; }

 private:
  std::ostream& fallback_;
  std::ofstream file_;
};

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot read " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

AppConfig require_config(const Globals& g) {
  if (g.config.empty()) throw UsageError("this command needs --config");
  return load_config(g.config);
}

std::optional<AppConfig> optional_config(const Globals& g) {
  if (g.config.empty()) return std::nullopt;
  return load_config(g.config);
}

std::optional<TemplateSet> load_templates(const std::optional<std::filesystem::path>& dir) {
  if (!dir) return std::nullopt;
  return TemplateSet::load_directory(*dir);
}

void gate_live(const Endpoint& endpoint, bool allowed) {
  if (!endpoint.is_live()) return;
  if (!allowed) {
    throw LiveRunRefused("endpoint " + endpoint.config().name +
                         " is live; pass --i-understand-live-run to send adversarial prompts to it");
  }
  spdlog::warn("live run against {}: use only on systems you are authorized to test", endpoint.config().name);
}

std::vector<std::string> lexicon_from(const std::optional<std::filesystem::path>& path) {
  if (!path) return {};
  return parse_phrase_list(read_file(*path));
}

json summary_json(const RunSummary& s) {
  return {{"planned", s.planned},
          {"skipped", s.skipped},
          {"judged", s.judged},
          {"failed", s.failed},
          {"target_requests", s.target_requests},
          {"judge_requests", s.judge_requests},
          {"interrupted", s.interrupted}};
}

// One input record for ppl/defend: a prompt, optionally with the response it drew.
struct InputRecord {
  std::string id;
  std::string prompt;
  std::optional<std::string> response;
  std::optional<MaliciousQuery> query;
};

std::vector<InputRecord> read_inputs(const std::filesystem::path& path) {
  const std::string body = read_file(path);
  std::vector<InputRecord> records;
  std::optional<CampaignPlan> plan;
  std::istringstream lines(body);
  std::string line;
  std::size_t line_number = 0;
  bool jsonl = false;
  bool decided = false;
  while (std::getline(lines, line)) {
    ++line_number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    if (!decided) {
      jsonl = trim(line).front() == '{';
      decided = true;
    }
    if (!jsonl) {
      records.push_back({path.filename().string() + ":" + std::to_string(line_number), line, {}, {}});
      continue;
    }
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      throw DataError(path.string() + ": line " + std::to_string(line_number) + " is not a JSON object");
    }
    const std::string kind = j.value("record", "");
    if (kind == "header") {
      plan = CampaignPlan::from_json(j.at("plan"));
      continue;
    }
    InputRecord record;
    if (kind == "transcript") {
      const Transcript t = Transcript::from_json(j);
      record.id = t.item_key;
      record.prompt = t.prompt.rendered;
      if (t.response) record.response = t.response->content;
      if (plan) {
        auto q = std::find_if(plan->queries.begin(), plan->queries.end(),
                              [&](const MaliciousQuery& m) { return m.id == t.query_id; });
        if (q != plan->queries.end()) record.query = *q;
      }
    } else if (j.contains("rendered")) {
      record.id = j.value("query_id", std::to_string(line_number));
      record.prompt = j["rendered"].get<std::string>();
    } else if (j.contains("text")) {
      record.id = j.value("id", std::to_string(line_number));
      record.prompt = j["text"].get<std::string>();
    } else {
      throw DataError(path.string() + ": line " + std::to_string(line_number) +
                      " has neither 'rendered' nor 'text'");
    }
    records.push_back(std::move(record));
  }
  if (records.empty()) throw DataError(path.string() + " holds no prompts");
  return records;
}

std::unique_ptr<PerplexityScorer> scorer_from(const PplArgs& a) {
  if (!a.model.empty() && !a.train.empty()) throw UsageError("--model and --train are exclusive");
  if (!a.model.empty()) {
    std::ifstream in(a.model, std::ios::binary);
    if (!in) throw UsageError("cannot read " + a.model);
    return std::make_unique<NgramScorer>(NgramScorer::load(in));
  }
  if (!a.train.empty()) {
    return std::make_unique<NgramScorer>(
        NgramScorer::train(read_file(a.train), a.order, parse_tokenization(a.tokenization), a.k));
  }
  return std::make_unique<NgramScorer>(default_scorer());
}

// ---------------------------------------------------------------------------
// Subcommands

int run_transform(const Globals& g, const TransformArgs& a, std::ostream& out) {
  const auto config = optional_config(g);
  const TransformVariant variant = TransformVariant::parse(a.variant);
  std::filesystem::path corpus_path = a.corpus;
  if (corpus_path.empty()) {
    if (!config || config->campaign.corpus_path.empty()) throw UsageError("no corpus: pass --corpus or --config");
    corpus_path = config->campaign.corpus_path;
  }
  QueryCorpus corpus = config && a.corpus.empty()
                           ? load_corpus(corpus_path,
                                         config->campaign.corpus_format.value_or(corpus_format_for(corpus_path)),
                                         config->campaign.columns)
                           : load_corpus(corpus_path);
  const auto subset_size = a.subset ? a.subset : (config ? config->campaign.subset_size : std::nullopt);
  if (subset_size) corpus = subset(corpus, *subset_size, g.seed);

  std::optional<TemplateSet> custom;
  if (!a.templates.empty()) {
    custom = TemplateSet::load_directory(a.templates);
  } else if (config) {
    custom = load_templates(config->templates_dir);
  }
  const TemplateSet& templates = custom ? *custom : TemplateSet::builtin();

  TransformOptions options;
  options.templates = &templates;
  options.decompose.templates = &templates;
  options.decompose.persona = config && a.persona == "Mark" ? config->campaign.persona : a.persona;
  std::optional<EndpointRegistry> registry;
  if (config) {
    options.decompose.unknown_label = config->campaign.unknown_label;
    options.decompose.policy = config->campaign.policy;
    if (config->campaign.policy == DecompositionPolicy::kLlmAssisted) {
      registry = config->build_registry();
      auto endpoint = registry->get(config->campaign.decomposer);
      gate_live(*endpoint, a.live);
      options.decompose.client = endpoint.get();
    }
  }

  Output sink(a.out, g.force, out);
  for (const auto& query : corpus.entries()) {
    sink.stream() << to_json(render_prompt(query, variant, options)).dump() << '\n';
  }
  return kExitOk;
}

ExecuteOptions execute_options(const AppConfig& config, const RunArgs& a, const TemplateSet* templates) {
  ExecuteOptions options;
  options.max_concurrency = a.max_concurrency.value_or(config.max_concurrency);
  options.allow_live = a.live;
  options.retry_failed = a.retry_failed;
  options.stop_after = a.stop_after;
  options.refusal_lexicon = lexicon_from(config.refusal_lexicon);
  options.templates = templates;
  return options;
}

int run_attack(const Globals& g, const RunArgs& a, std::ostream& out) {
  AppConfig config = require_config(g);
  config.campaign.seed = g.seed;
  const auto templates = load_templates(config.templates_dir);
  const TemplateSet& set = templates ? *templates : TemplateSet::builtin();
  const EndpointRegistry registry = config.build_registry();
  const CampaignPlan plan = plan_campaign(config.campaign, registry, set);

  if (g.force && std::filesystem::exists(a.store)) {
    TranscriptStore existing(a.store);
    if (existing.plan_hash() != plan.hash) std::filesystem::remove(a.store);
  }
  TranscriptStore store(a.store);
  const RunSummary summary = execute(plan, store, registry, execute_options(config, a, &set));
  json line = summary_json(summary);
  line["plan_hash"] = plan.hash;
  line["store"] = a.store;
  out << line.dump() << '\n';
  return kExitOk;
}

int run_resume(const Globals& g, const RunArgs& a, std::ostream& out) {
  const AppConfig config = require_config(g);
  if (!std::filesystem::exists(a.store)) throw StoreError("store " + a.store + " not found");
  TranscriptStore store(a.store);
  const CampaignPlan plan = store.plan();
  const auto templates = load_templates(config.templates_dir);
  const EndpointRegistry registry = config.build_registry();
  const RunSummary summary =
      resume(plan, store, registry, execute_options(config, a, templates ? &*templates : nullptr));
  json line = summary_json(summary);
  line["plan_hash"] = plan.hash;
  line["store"] = a.store;
  out << line.dump() << '\n';
  return kExitOk;
}

int run_judge(const Globals& g, const JudgeArgs& a, std::ostream& out) {
  const AppConfig config = require_config(g);
  if (!std::filesystem::exists(a.store)) throw StoreError("store " + a.store + " not found");
  if (std::filesystem::exists(a.out)) {
    if (!g.force) throw UsageError("output " + a.out + " exists; pass --force to overwrite");
    std::filesystem::remove(a.out);
  }
  const TranscriptStore input(a.store);
  const CampaignPlan plan = input.plan();
  const auto templates = load_templates(config.templates_dir);
  const EndpointRegistry registry = config.build_registry();
  auto judge = registry.get(a.judge.empty() ? plan.judge : a.judge);
  gate_live(*judge, a.live);

  std::map<std::string, const MaliciousQuery*> queries;
  for (const auto& q : plan.queries) queries[q.id] = &q;

  TranscriptStore output(a.out);
  output.write_header(plan);
  std::size_t rejudged = 0, successes = 0, judge_calls = 0;
  for (const auto& [key, record] : input.latest()) {
    Transcript t = record;
    if (t.response && t.status == TranscriptStatus::kJudged) {
      auto q = queries.find(t.query_id);
      if (q == queries.end()) throw StoreError("transcript " + key + " names unknown query " + t.query_id);
      if (trim(t.response->content).empty()) {
        t.verdict = empty_response_verdict();
      } else {
        JudgeOutcome outcome = judge_response(*judge, *q->second, t.response->content,
                                              templates ? &*templates : nullptr);
        t.verdict = std::move(outcome.verdict);
        t.judge_calls = outcome.judge_calls;
        judge_calls += static_cast<std::size_t>(outcome.judge_calls);
      }
      t.updated_at = utc_timestamp();
      ++rejudged;
      if (t.verdict->success) ++successes;
    }
    output.append(t);
  }
  out << json{{"rejudged", rejudged}, {"successes", successes}, {"judge_requests", judge_calls}, {"store", a.out}}
             .dump()
      << '\n';
  return kExitOk;
}

int run_report(const Globals& g, const ReportArgs& a, std::ostream& out) {
  if (!std::filesystem::exists(a.store)) throw StoreError("store " + a.store + " not found");
  const TranscriptStore store(a.store);
  ReportOptions options;
  if (const auto config = optional_config(g)) options.reference_averages = config->reference_averages;
  for (const auto& ref : a.references) {
    const auto eq = ref.rfind('=');
    if (eq == std::string::npos || eq == 0) throw UsageError("--reference expects LABEL=VALUE, got '" + ref + "'");
    try {
      options.reference_averages[ref.substr(0, eq)] = std::stod(ref.substr(eq + 1));
    } catch (const std::exception&) {
      throw UsageError("--reference value is not a number: '" + ref + "'");
    }
  }
  if (a.ppl) options.scorer = &default_scorer();
  const Report report = build_report(store, options);
  if (!a.csv.empty()) {
    Output csv(a.csv, g.force, out);
    csv.stream() << report.to_csv();
  }
  if (a.format == "csv") {
    out << report.to_csv();
  } else {
    out << report.to_text();
  }
  return kExitOk;
}

int run_ppl(const Globals& g, const PplArgs& a, std::ostream& out) {
  const auto inputs = read_inputs(a.in);
  const auto scorer = scorer_from(a);
  if (!a.save_model.empty()) {
    const auto* ngram = dynamic_cast<const NgramScorer*>(scorer.get());
    if (std::filesystem::exists(a.save_model) && !g.force) {
      throw UsageError("output " + a.save_model + " exists; pass --force to overwrite");
    }
    std::ofstream model(a.save_model, std::ios::binary | std::ios::trunc);
    if (!model) throw UsageError("cannot write " + a.save_model);
    ngram->save(model);
  }
  std::vector<PerplexityScore> scores;
  Output sink(a.out, g.force, out);
  sink.stream() << "id,scorer,tokens,ppl\n";
  for (const auto& record : inputs) {
    scores.push_back(scorer->score(record.prompt));
    sink.stream() << detail::csv_escape(record.id) << ',' << scores.back().scorer_id << ',' << scores.back().token_count
                  << ',' << format_fixed(scores.back().value, 4) << '\n';
  }
  if (a.out != "-") out << "mean_ppl," << format_fixed(mean_ppl(scores), 4) << '\n';
  return kExitOk;
}

int run_defend(const Globals& g, const DefendArgs& a, std::ostream& out) {
  const auto config = optional_config(g);
  const auto inputs = read_inputs(a.in);
  std::optional<std::vector<std::string>> lexicon;
  if (!a.lexicon.empty()) {
    lexicon = parse_phrase_list(read_file(a.lexicon));
  } else if (config && config->defense.lexicon) {
    lexicon = lexicon_from(config->defense.lexicon);
  }

  std::vector<std::string> filters = a.filters;
  if (filters.empty()) {
    if (lexicon) filters.push_back("keyword");
    if (a.ppl_threshold || (config && config->defense.ppl)) filters.push_back("ppl");
    if (config && config->defense.moderation) filters.push_back("moderation");
    if (config && config->defense.output_judge) filters.push_back("output");
    if (filters.empty()) throw UsageError("no filters configured: pass --filters with --lexicon or --ppl-threshold");
  }

  std::optional<EndpointRegistry> registry;
  if (config) registry = config->build_registry();
  auto endpoint = [&](const std::string& name) {
    if (!registry) throw UsageError("filter needs endpoints from --config");
    auto e = registry->get(name);
    gate_live(*e, a.live);
    return e;
  };

  Output sink(a.out, g.force, out);
  sink.stream() << "id,filter,verdict,reason\n";
  std::vector<BypassReport> reports;
  for (const auto& filter : filters) {
    std::vector<FilterDecision> decisions;
    if (filter == "keyword") {
      if (!lexicon) throw UsageError("keyword filter needs --lexicon or defense.lexicon in the config");
      for (const auto& r : inputs) decisions.push_back(keyword_filter(r.prompt, *lexicon));
    } else if (filter == "ppl") {
      PplArgs scorer_args;
      double threshold = 0.0;
      if (a.ppl_threshold) {
        threshold = *a.ppl_threshold;
      } else if (config && config->defense.ppl) {
        threshold = config->defense.ppl->threshold;
      } else {
        throw UsageError("ppl filter needs --ppl-threshold or defense.ppl in the config");
      }
      if (config && config->defense.ppl && config->defense.ppl->model) {
        scorer_args.model = config->defense.ppl->model->string();
      }
      const auto scorer = scorer_from(scorer_args);
      for (const auto& r : inputs) decisions.push_back(ppl_filter(r.prompt, *scorer, threshold));
    } else if (filter == "moderation") {
      if (!config || !config->defense.moderation) throw UsageError("moderation filter needs defense.moderation");
      auto guard = endpoint(config->defense.moderation->endpoint);
      for (const auto& r : inputs) {
        decisions.push_back(moderation_check(*guard, r.prompt, ModerationRole::kInput, config->defense.moderation->profile));
      }
    } else if (filter == "output") {
      if (!config || !config->defense.output_judge) throw UsageError("output filter needs defense.output");
      auto judge = endpoint(*config->defense.output_judge);
      OutputFilterConfig output{judge.get(), config->defense.harm_cutoff};
      for (const auto& r : inputs) {
        if (!r.response || !r.query) throw UsageError("output filter needs a transcript store as input");
        decisions.push_back(output_filter(*r.response, *r.query, output));
      }
    } else {
      throw UsageError("unknown filter '" + filter + "'");
    }
    for (std::size_t i = 0; i < decisions.size(); ++i) {
      sink.stream() << detail::csv_escape(inputs[i].id) << ',' << decisions[i].filter_id << ','
                    << to_string(decisions[i].verdict) << ',' << detail::csv_escape(decisions[i].reason) << '\n';
    }
    reports.push_back(bypass_rate(decisions));
  }

  for (const auto& r : reports) {
    out << json{{"filter", r.filter_id},
                {"passed", r.passed},
                {"total", r.total},
                {"errors", r.errors},
                {"bypass_rate", r.bypass_rate}}
               .dump()
        << '\n';
  }
  return kExitOk;
}

void build_app(CLI::App& app, Globals& g, TransformArgs& t, RunArgs& attack, RunArgs& res, JudgeArgs& j,
               ReportArgs& r, PplArgs& p, DefendArgs& d) {
  app.require_subcommand(1);
  app.add_option("-c,--config", g.config, "Config file (JSON)");
  app.add_option("--seed", g.seed, "Seed for every random choice")->capture_default_str();
  app.add_flag("-v,--verbose", g.verbosity, "More logging; repeat for debug output");
  app.add_flag("--force", g.force, "Overwrite existing output files");

  auto* transform = app.add_subcommand("transform", "Render attack prompts for a corpus as JSONL");
  transform->add_option("--variant", t.variant, "stsa, equation, code, equacode, caesar-K, base64, morse, unicode, flip")
      ->required();
  transform->add_option("--corpus", t.corpus, "Corpus file (.csv or .jsonl); defaults to the config corpus");
  transform->add_option("--out", t.out, "Output JSONL path, - for stdout")->capture_default_str();
  transform->add_option("--subset", t.subset, "Sample this many queries using --seed");
  transform->add_option("--persona", t.persona, "Subject B for the static policy")->capture_default_str();
  transform->add_option("--templates", t.templates, "Directory overriding the bundled templates");
  transform->add_flag("--i-understand-live-run", t.live, "Allow a live decomposition endpoint");

  auto add_run_options = [](CLI::App* cmd, RunArgs& args) {
    cmd->add_option("--store", args.store, "Transcript store (JSONL)")->required();
    cmd->add_flag("--i-understand-live-run", args.live, "Allow non-mock endpoints");
    cmd->add_flag("--retry-failed", args.retry_failed, "Re-run items recorded as failed");
    cmd->add_option("--max-concurrency", args.max_concurrency, "Items in flight at once");
    cmd->add_option("--stop-after", args.stop_after, "Stop after this many items");
  };
  add_run_options(app.add_subcommand("attack", "Execute the campaign described by the config"), attack);
  add_run_options(app.add_subcommand("resume", "Finish an interrupted campaign store"), res);

  auto* judge = app.add_subcommand("judge", "Re-judge stored responses into a new store");
  judge->add_option("--store", j.store, "Input transcript store")->required();
  judge->add_option("--out", j.out, "Output transcript store")->required();
  judge->add_option("--judge", j.judge, "Judge endpoint name; defaults to the plan's judge");
  judge->add_flag("--i-understand-live-run", j.live, "Allow a live judge endpoint");

  auto* report = app.add_subcommand("report", "Build the ASR table from a store");
  report->add_option("--store", r.store, "Transcript store")->required();
  report->add_option("--csv", r.csv, "Also write the CSV table here");
  report->add_option("--format", r.format, "Stdout format")->check(CLI::IsMember({"text", "csv"}))->capture_default_str();
  report->add_option("--reference", r.references, "Published average to compare, LABEL=VALUE");
  report->add_flag("--ppl", r.ppl, "Add mean prompt perplexity per variant");

  auto* ppl = app.add_subcommand("ppl", "Score prompts with an n-gram perplexity model");
  ppl->add_option("--in", p.in, "Prompts: text lines, prompt JSONL or a transcript store")->required();
  ppl->add_option("--out", p.out, "CSV output, - for stdout")->capture_default_str();
  ppl->add_option("--model", p.model, "Saved n-gram model");
  ppl->add_option("--train", p.train, "Train a model on this text file instead of the bundled sample");
  ppl->add_option("--order", p.order, "N-gram order when training")->capture_default_str();
  ppl->add_option("--tokenization", p.tokenization, "byte, char or word when training")
      ->check(CLI::IsMember({"byte", "char", "word"}))
      ->capture_default_str();
  ppl->add_option("--k", p.k, "Add-k smoothing when training")->capture_default_str();
  ppl->add_option("--save-model", p.save_model, "Write the model used to this path");

  auto* defend = app.add_subcommand("defend", "Run the filter stack and report bypass rates");
  defend->add_option("--in", d.in, "Prompts: text lines, prompt JSONL or a transcript store")->required();
  defend->add_option("--out", d.out, "Per-filter decisions CSV, - for stdout")->required();
  defend->add_option("--filters", d.filters, "keyword, ppl, moderation, output")->delimiter(',');
  defend->add_option("--ppl-threshold", d.ppl_threshold, "Reject prompts with perplexity above this");
  defend->add_option("--lexicon", d.lexicon, "Keyword filter phrases, one per line");
  defend->add_flag("--i-understand-live-run", d.live, "Allow live guard or judge endpoints");
}

int exit_code_for(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::kUsage:
      return kExitUsage;
    case ErrorKind::kEndpoint:
      return kExitEndpoint;
    case ErrorKind::kStore:
      return kExitStore;
    case ErrorKind::kData:
      return kExitFailure;
  }
  return kExitFailure;
}

std::string_view kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kUsage:
      return "usage";
    case ErrorKind::kEndpoint:
      return "endpoint";
    case ErrorKind::kStore:
      return "store";
    case ErrorKind::kData:
      return "data";
  }
  return "error";
}

int report_error(std::ostream& err, std::string_view kind, const std::string& message, int code) {
  err << json{{"error", kind}, {"message", message}, {"exit", code}}.dump() << '\n';
  return code;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Equation and code template red-teaming harness", "equacode"};
  Globals g;
  TransformArgs t;
  RunArgs attack, res;
  JudgeArgs j;
  ReportArgs r;
  PplArgs p;
  DefendArgs d;
  build_app(app, g, t, attack, res, j, r, p, d);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    const auto subs = app.get_subcommands();
    out << (subs.empty() ? app.help("", CLI::AppFormatMode::All) : subs.front()->help());
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    return report_error(err, "usage", e.what(), kExitUsage);
  }

  spdlog::set_level(g.verbosity >= 2 ? spdlog::level::debug
                                     : (g.verbosity == 1 ? spdlog::level::info : spdlog::level::warn));
  try {
    const std::string name = app.get_subcommands().front()->get_name();
    if (name == "transform") return run_transform(g, t, out);
    if (name == "attack") return run_attack(g, attack, out);
    if (name == "resume") return run_resume(g, res, out);
    if (name == "judge") return run_judge(g, j, out);
    if (name == "report") return run_report(g, r, out);
    if (name == "ppl") return run_ppl(g, p, out);
    if (name == "defend") return run_defend(g, d, out);
    return report_error(err, "usage", "unknown subcommand " + name, kExitUsage);
  } catch (const Error& e) {
    return report_error(err, kind_name(e.kind()), e.what(), exit_code_for(e));
  } catch (const std::exception& e) {
    return report_error(err, "internal", e.what(), kExitFailure);
  }
}

}  // namespace equacode
