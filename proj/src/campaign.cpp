#include "equacode/campaign.hpp"

#include <spdlog/spdlog.h>

#include <sstream>

#include "equacode/error.hpp"
#include "equacode/serialize.hpp"
#include "equacode/util.hpp"

namespace equacode {

using nlohmann::json;

namespace {

std::string_view policy_name(DecompositionPolicy policy) {
  return policy == DecompositionPolicy::kStatic ? "static" : "llm_assisted";
}

DecompositionPolicy parse_policy(std::string_view name) {
  if (name == "static") return DecompositionPolicy::kStatic;
  if (name == "llm_assisted" || name == "llm-assisted" || name == "llm") return DecompositionPolicy::kLlmAssisted;
  throw UsageError("unknown decomposition policy '" + std::string(name) + "'");
}

}  // namespace

std::string item_key(std::string_view query_id, const TransformVariant& variant,
                     std::string_view template_version, std::string_view target_name,
                     std::string_view model_id) {
  std::string material;
  for (std::string_view part :
       {query_id, std::string_view(variant.name()), template_version, target_name, model_id}) {
    material += part;
    material.push_back('\x1f');
  }
  return sha256_hex(material).substr(0, 32);
}

void CampaignPlan::finalize() {
  items.clear();
  items.reserve(queries.size() * variants.size() * targets.size());
  for (std::size_t q = 0; q < queries.size(); ++q) {
    for (std::size_t v = 0; v < variants.size(); ++v) {
      for (std::size_t t = 0; t < targets.size(); ++t) {
        items.push_back(PlanItem{item_key(queries[q].id, variants[v], template_version, targets[t].name,
                                          targets[t].model_id),
                                 q, v, t});
      }
    }
  }
  json body = to_json();
  body.erase("hash");
  hash = sha256_hex(body.dump());
}

json CampaignPlan::to_json() const {
  json query_list = json::array();
  for (const auto& q : queries) {
    json entry = {{"id", q.id}, {"text", q.text}, {"source", q.source}};
    if (q.category) entry["category"] = *q.category;
    query_list.push_back(std::move(entry));
  }
  json variant_list = json::array();
  for (const auto& v : variants) variant_list.push_back(v.name());
  json target_list = json::array();
  for (const auto& t : targets) target_list.push_back({{"name", t.name}, {"model_id", t.model_id}});

  json j = {{"corpus_source", corpus_source},
            {"subset_size", subset_size ? json(*subset_size) : json(nullptr)},
            {"seed", seed},
            {"queries", std::move(query_list)},
            {"variants", std::move(variant_list)},
            {"targets", std::move(target_list)},
            {"judge", judge},
            {"judge_model", judge_model},
            {"template_version", template_version},
            {"cheap_mode", cheap_mode},
            {"persona", persona},
            {"unknown_label", unknown_label},
            {"policy", policy_name(policy)},
            {"decomposer", decomposer},
            {"hash", hash}};
  return j;
}

CampaignPlan CampaignPlan::from_json(const json& j) {
  CampaignPlan plan;
  try {
    plan.corpus_source = j.at("corpus_source").get<std::string>();
    if (!j.at("subset_size").is_null()) plan.subset_size = j.at("subset_size").get<std::size_t>();
    plan.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& q : j.at("queries")) {
      MaliciousQuery query;
      query.id = q.at("id").get<std::string>();
      query.text = q.at("text").get<std::string>();
      query.source = q.value("source", "");
      if (q.contains("category")) query.category = q["category"].get<std::string>();
      plan.queries.push_back(std::move(query));
    }
    for (const auto& v : j.at("variants")) plan.variants.push_back(TransformVariant::parse(v.get<std::string>()));
    for (const auto& t : j.at("targets")) {
      plan.targets.push_back({t.at("name").get<std::string>(), t.at("model_id").get<std::string>()});
    }
    plan.judge = j.at("judge").get<std::string>();
    plan.judge_model = j.value("judge_model", "");
    plan.template_version = j.at("template_version").get<std::string>();
    plan.cheap_mode = j.value("cheap_mode", false);
    plan.persona = j.value("persona", "Mark");
    plan.unknown_label = j.value("unknown_label", "x");
    plan.policy = parse_policy(j.value("policy", "static"));
    plan.decomposer = j.value("decomposer", "");
  } catch (const json::exception& e) {
    throw StoreError(std::string("malformed plan record: ") + e.what());
  }
  const std::string recorded = j.value("hash", "");
  plan.finalize();
  if (!recorded.empty() && recorded != plan.hash) {
    throw StoreError("plan record hash " + recorded + " does not match its content (" + plan.hash + ")");
  }
  return plan;
}

CampaignPlan plan_campaign(const QueryCorpus& corpus, const CampaignConfig& config,
                           const EndpointRegistry& endpoints, const TemplateSet& templates) {
  if (config.variants.empty()) throw UsageError("campaign has no variants");
  if (config.targets.empty()) throw UsageError("campaign has no targets");
  if (config.judge.empty()) throw UsageError("campaign has no judge endpoint");
  if (config.policy == DecompositionPolicy::kLlmAssisted && !endpoints.contains(config.decomposer)) {
    throw UsageError("llm-assisted decomposition needs a known decomposer endpoint");
  }
  for (const auto& v : config.variants) v.validate();

  CampaignPlan plan;
  plan.corpus_source = corpus.provenance().path;
  plan.subset_size = config.subset_size;
  plan.seed = config.seed;
  const QueryCorpus chosen = config.subset_size ? subset(corpus, *config.subset_size, config.seed) : corpus;
  plan.queries = chosen.entries();
  plan.variants = config.variants;
  for (const auto& name : config.targets) {
    plan.targets.push_back({name, endpoints.get(name)->config().model_id});
  }
  plan.judge = config.judge;
  plan.judge_model = endpoints.get(config.judge)->config().model_id;
  plan.template_version = templates.version();
  plan.cheap_mode = config.cheap_mode;
  plan.persona = config.persona;
  plan.unknown_label = config.unknown_label;
  plan.policy = config.policy;
  plan.decomposer = config.decomposer;
  plan.finalize();
  return plan;
}

CampaignPlan plan_campaign(const CampaignConfig& config, const EndpointRegistry& endpoints,
                           const TemplateSet& templates) {
  const CorpusFormat format = config.corpus_format.value_or(corpus_format_for(config.corpus_path));
  return plan_campaign(load_corpus(config.corpus_path, format, config.columns), config, endpoints, templates);
}

// ---------------------------------------------------------------------------
// Transcript

std::string_view to_string(TranscriptStatus status) {
  switch (status) {
    case TranscriptStatus::kPending:
      return "pending";
    case TranscriptStatus::kResponded:
      return "responded";
    case TranscriptStatus::kJudged:
      return "judged";
    case TranscriptStatus::kFailed:
      return "failed";
  }
  return "pending";
}

TranscriptStatus parse_transcript_status(std::string_view name) {
  if (name == "pending") return TranscriptStatus::kPending;
  if (name == "responded") return TranscriptStatus::kResponded;
  if (name == "judged") return TranscriptStatus::kJudged;
  if (name == "failed") return TranscriptStatus::kFailed;
  throw StoreError("unknown transcript status '" + std::string(name) + "'");
}

void Transcript::advance(TranscriptStatus next) {
  const bool ok = (status == TranscriptStatus::kPending && next == TranscriptStatus::kResponded) ||
                  (status == TranscriptStatus::kResponded && next == TranscriptStatus::kJudged) ||
                  (!terminal() && next == TranscriptStatus::kFailed);
  if (!ok) {
    throw UsageError("illegal transcript transition " + std::string(to_string(status)) + " -> " +
                     std::string(to_string(next)));
  }
  status = next;
}

json Transcript::to_json() const {
  return {{"record", "transcript"},
          {"item_key", item_key},
          {"query_id", query_id},
          {"target", target},
          {"model_id", model_id},
          {"status", to_string(status)},
          {"prompt", equacode::to_json(prompt)},
          {"response", response ? equacode::to_json(*response) : json(nullptr)},
          {"verdict", verdict ? equacode::to_json(*verdict) : json(nullptr)},
          {"failure_reason", failure_reason},
          {"request_count", request_count},
          {"judge_calls", judge_calls},
          {"refusal_detected", refusal_detected},
          {"created_at", created_at},
          {"updated_at", updated_at}};
}

Transcript Transcript::from_json(const json& j) {
  Transcript t;
  t.item_key = j.at("item_key").get<std::string>();
  t.query_id = j.at("query_id").get<std::string>();
  t.target = j.at("target").get<std::string>();
  t.model_id = j.value("model_id", "");
  t.status = parse_transcript_status(j.at("status").get<std::string>());
  t.prompt = attack_prompt_from_json(j.at("prompt"));
  if (!j.at("response").is_null()) t.response = chat_response_from_json(j["response"]);
  if (!j.at("verdict").is_null()) t.verdict = judge_verdict_from_json(j["verdict"]);
  t.failure_reason = j.value("failure_reason", "");
  t.request_count = j.value("request_count", 0);
  t.judge_calls = j.value("judge_calls", 0);
  t.refusal_detected = j.value("refusal_detected", false);
  t.created_at = j.value("created_at", "");
  t.updated_at = j.value("updated_at", "");
  return t;
}

// ---------------------------------------------------------------------------
// Store

TranscriptStore::TranscriptStore(std::filesystem::path path) : path_(std::move(path)) {
  std::error_code ec;
  if (!std::filesystem::exists(path_, ec)) return;

  std::ifstream in(path_, std::ios::binary);
  if (!in) throw StoreError("cannot read store " + path_.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  const std::string content = buffer.str();
  in.close();

  std::size_t pos = 0;
  std::size_t line_number = 0;
  while (pos < content.size()) {
    std::size_t end = content.find('\n', pos);
    const bool complete = end != std::string::npos;
    if (!complete) end = content.size();
    const std::string_view line(content.data() + pos, end - pos);
    ++line_number;

    if (!trim(line).empty()) {
      json record = json::parse(line, nullptr, false);
      if (record.is_discarded()) {
        if (!complete) {
          spdlog::warn("store {}: dropping torn final line {}", path_.string(), line_number);
          std::filesystem::resize_file(path_, pos);
          break;
        }
        throw StoreError("store " + path_.string() + ": line " + std::to_string(line_number) + " is not JSON");
      }
      const std::string kind = record.value("record", "");
      if (kind == "header") {
        if (header_) throw StoreError("store " + path_.string() + ": duplicate header");
        if (record.value("schema_version", 0) != kSchemaVersion) {
          throw StoreError("store " + path_.string() + ": unsupported schema version");
        }
        header_ = std::move(record);
      } else if (kind == "transcript") {
        if (!header_) throw StoreError("store " + path_.string() + ": transcript before header");
        try {
          records_.push_back(Transcript::from_json(record));
        } catch (const json::exception& e) {
          throw StoreError("store " + path_.string() + ": line " + std::to_string(line_number) + ": " + e.what());
        }
      } else {
        throw StoreError("store " + path_.string() + ": unknown record type on line " +
                         std::to_string(line_number));
      }
    }
    if (!complete) {
      // Parsed fine but never got its newline; finish the line so appends stay aligned.
      std::ofstream fix(path_, std::ios::binary | std::ios::app);
      fix << '\n';
    }
    pos = end + 1;
  }
}

std::optional<std::string> TranscriptStore::plan_hash() const {
  if (!header_) return std::nullopt;
  return header_->value("plan_hash", "");
}

CampaignPlan TranscriptStore::plan() const {
  if (!header_) throw StoreError("store " + path_.string() + " has no header");
  return CampaignPlan::from_json(header_->at("plan"));
}

void TranscriptStore::open_for_append() {
  if (out_.is_open()) return;
  out_.open(path_, std::ios::binary | std::ios::app);
  if (!out_) throw StoreError("cannot open store " + path_.string() + " for appending");
}

void TranscriptStore::write_header(const CampaignPlan& plan) {
  if (header_ || !records_.empty()) throw StoreError("store " + path_.string() + " already has a header");
  json header = {{"record", "header"},
                 {"schema", "equacode-transcripts"},
                 {"schema_version", kSchemaVersion},
                 {"plan_hash", plan.hash},
                 {"created_at", utc_timestamp()},
                 {"plan", plan.to_json()}};
  open_for_append();
  out_ << header.dump() << '\n';
  out_.flush();
  if (!out_) throw StoreError("failed writing header to " + path_.string());
  header_ = std::move(header);
}

void TranscriptStore::append(const Transcript& transcript) {
  if (!header_) throw StoreError("store " + path_.string() + " has no header");
  open_for_append();
  out_ << transcript.to_json().dump() << '\n';
  out_.flush();
  if (!out_) throw StoreError("failed appending to " + path_.string());
  records_.push_back(transcript);
}

std::map<std::string, Transcript> TranscriptStore::latest() const {
  std::map<std::string, Transcript> out;
  for (const auto& record : records_) out.insert_or_assign(record.item_key, record);
  return out;
}

}  // namespace equacode
