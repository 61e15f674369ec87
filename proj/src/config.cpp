#include "equacode/config.hpp"

#include <fstream>
#include <set>

#include "equacode/error.hpp"

namespace equacode {

using nlohmann::json;

namespace {

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& value) {
  std::filesystem::path p(value);
  return p.is_absolute() ? p : base / p;
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read " + path.string());
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw UsageError(path.string() + " is not valid JSON");
  return j;
}

EndpointSpec parse_endpoint(const json& j, const std::filesystem::path& base) {
  EndpointSpec spec;
  EndpointConfig& c = spec.config;
  c.name = j.at("name").get<std::string>();
  c.base_url = j.value("base_url", "");
  c.model_id = j.value("model_id", c.name);
  c.auth_env = j.value("auth_env", "");
  c.timeout_s = j.value("timeout_s", c.timeout_s);
  c.max_retries = j.value("max_retries", c.max_retries);
  c.max_in_flight = j.value("max_in_flight", c.max_in_flight);
  if (j.contains("temperature")) c.default_temperature = j["temperature"].get<double>();
  if (j.contains("mock")) {
    const json& mock = j["mock"];
    spec.mock = mock.is_string() ? read_json_file(resolve(base, mock.get<std::string>())) : mock;
  }
  if (!spec.mock && c.base_url.empty()) throw UsageError("endpoint '" + c.name + "' needs base_url or mock");
  return spec;
}

}  // namespace

AppConfig parse_config(const json& j, const std::filesystem::path& base_dir) {
  AppConfig config;
  config.base_dir = base_dir;
  CampaignConfig& campaign = config.campaign;
  try {
    if (j.contains("corpus")) {
      const json& corpus = j["corpus"];
      if (corpus.is_string()) {
        campaign.corpus_path = resolve(base_dir, corpus.get<std::string>());
      } else {
        campaign.corpus_path = resolve(base_dir, corpus.at("path").get<std::string>());
        if (corpus.contains("format")) campaign.corpus_format = parse_corpus_format(corpus["format"].get<std::string>());
        campaign.columns.text_column = corpus.value("text_column", campaign.columns.text_column);
        campaign.columns.id_column = corpus.value("id_column", campaign.columns.id_column);
        campaign.columns.category_column = corpus.value("category_column", campaign.columns.category_column);
      }
    }
    if (j.contains("subset") && !j["subset"].is_null()) campaign.subset_size = j["subset"].get<std::size_t>();
    for (const auto& v : j.value("variants", json::array())) {
      campaign.variants.push_back(TransformVariant::parse(v.get<std::string>()));
    }
    campaign.targets = j.value("targets", std::vector<std::string>{});
    campaign.judge = j.value("judge", "");
    campaign.cheap_mode = j.value("cheap_mode", false);
    campaign.persona = j.value("persona", campaign.persona);
    campaign.unknown_label = j.value("unknown_label", campaign.unknown_label);
    if (j.contains("decomposition")) {
      const json& d = j["decomposition"];
      const std::string policy = d.value("policy", "static");
      if (policy == "static") {
        campaign.policy = DecompositionPolicy::kStatic;
      } else if (policy == "llm_assisted" || policy == "llm-assisted") {
        campaign.policy = DecompositionPolicy::kLlmAssisted;
      } else {
        throw UsageError("unknown decomposition policy '" + policy + "'");
      }
      campaign.decomposer = d.value("endpoint", "");
    }
    config.max_concurrency = j.value("max_concurrency", config.max_concurrency);
    if (j.contains("templates")) config.templates_dir = resolve(base_dir, j["templates"].get<std::string>());
    if (j.contains("refusal_lexicon")) {
      config.refusal_lexicon = resolve(base_dir, j["refusal_lexicon"].get<std::string>());
    }

    std::set<std::string> names;
    for (const auto& e : j.value("endpoints", json::array())) {
      EndpointSpec spec = parse_endpoint(e, base_dir);
      if (!names.insert(spec.config.name).second) {
        throw UsageError("duplicate endpoint '" + spec.config.name + "'");
      }
      config.endpoints.push_back(std::move(spec));
    }

    if (j.contains("defense")) {
      const json& d = j["defense"];
      if (d.contains("lexicon")) config.defense.lexicon = resolve(base_dir, d["lexicon"].get<std::string>());
      if (d.contains("ppl")) {
        PplDefenseConfig ppl;
        ppl.threshold = d["ppl"].at("threshold").get<double>();
        if (d["ppl"].contains("model")) ppl.model = resolve(base_dir, d["ppl"]["model"].get<std::string>());
        config.defense.ppl = ppl;
      }
      if (d.contains("moderation")) {
        const json& m = d["moderation"];
        ModerationDefenseConfig moderation;
        moderation.endpoint = m.at("endpoint").get<std::string>();
        const json profile = m.value("profile", json("llama-guard"));
        moderation.profile = profile.is_string() ? ModerationProfile::builtin(profile.get<std::string>())
                                                 : ModerationProfile::from_json(profile);
        config.defense.moderation = moderation;
      }
      if (d.contains("output")) {
        config.defense.output_judge = d["output"].at("judge").get<std::string>();
        config.defense.harm_cutoff = d["output"].value("harm_cutoff", config.defense.harm_cutoff);
      }
    }
    if (j.contains("report")) {
      config.reference_averages =
          j["report"].value("reference_averages", std::map<std::string, double>{});
    }
  } catch (const json::exception& e) {
    throw UsageError(std::string("malformed config: ") + e.what());
  }
  return config;
}

AppConfig load_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw UsageError("config file " + path.string() + " not found");
  return parse_config(read_json_file(path), std::filesystem::absolute(path).parent_path());
}

EndpointRegistry AppConfig::build_registry() const {
  EndpointRegistry registry;
  for (const auto& spec : endpoints) {
    spec.config.validate();
    if (spec.mock) {
      registry.add(make_mock_endpoint(spec.config, MockScript::from_json(*spec.mock)));
    } else {
      registry.add(std::make_shared<Endpoint>(spec.config, std::make_shared<HttpTransport>()));
    }
  }
  return registry;
}

}  // namespace equacode
