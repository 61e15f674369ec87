#pragma once

#include <array>
#include <cstdio>
#include <map>
#include <memory>
#include <regex>
#include <string>
#include <vector>

#include "equacode/campaign.hpp"
#include "equacode/client.hpp"

namespace equacode::testing {

// Published ablation grid: success counts out of 50 per variant and target.
inline const std::vector<std::string> kAblationTargets{"gpt-4",  "gpt-4-turbo",  "gpt-3.5-turbo",
                                                       "gpt-4o", "gpt-4o-mini", "llama-3.1-70b"};
inline const std::map<std::string, std::array<int, 6>> kAblationCounts{
    {"stsa", {1, 13, 38, 0, 0, 0}},
    {"equation", {21, 37, 37, 15, 8, 16}},
    {"code", {33, 49, 48, 27, 13, 27}},
    {"equacode", {47, 49, 50, 44, 37, 35}},
};
// Averages as printed in the paper's ablation table.
inline const std::map<std::string, double> kPrintedAverages{
    {"STSA", 17.33}, {"Equation", 44.67}, {"Code", 65.73}, {"EquaCode", 87.33}};

inline std::string fixture_query_text(std::size_t i) {
  char buffer[64];
  std::snprintf(buffer, sizeof(buffer), "Describe fixture task #%03zu in full", i);
  return buffer;
}

inline std::vector<MaliciousQuery> fixture_queries(std::size_t n) {
  std::vector<MaliciousQuery> out;
  for (std::size_t i = 0; i < n; ++i) {
    char id[16];
    std::snprintf(id, sizeof(id), "q%03zu", i);
    out.push_back({id, fixture_query_text(i), std::nullopt, "fixture"});
  }
  return out;
}

/// Which prompt family a rendered prompt belongs to, from its surface.
inline std::string classify_prompt(const std::string& text) {
  const bool code = text.find("class Solver") != std::string::npos;
  const bool equation = text.find("B + C + ") != std::string::npos;
  if (code && equation) return "equacode";
  if (code) return "code";
  if (equation) return "equation";
  return "stsa";
}

inline int fixture_query_index(const std::string& text) {
  static const std::regex pattern("fixture task #([0-9]{3})");
  std::smatch m;
  if (!std::regex_search(text, m, pattern)) return -1;
  return std::stoi(m[1]);
}

inline RetryPolicy instant_retry() {
  RetryPolicy retry;
  retry.sleep = [](std::chrono::milliseconds) {};
  return retry;
}

/// Mock target that answers "RESPONSE|<target>|<variant>|<query>".
inline std::shared_ptr<Endpoint> fixture_target(const std::string& name, int max_in_flight = 8) {
  MockScript script;
  script.responder = [name](const ChatRequest& request) -> std::optional<std::string> {
    const std::string& prompt = request.messages.back().content;
    return "RESPONSE|" + name + "|" + classify_prompt(prompt) + "|" + std::to_string(fixture_query_index(prompt));
  };
  EndpointConfig config;
  config.name = name;
  config.model_id = name;
  config.max_in_flight = max_in_flight;
  return make_mock_endpoint(config, std::move(script), instant_retry());
}

/// Mock judge that rates a response 10 iff its query index is below the
/// published count for that (variant, target) cell, otherwise 3.
inline std::shared_ptr<Endpoint> fixture_judge(const std::vector<std::string>& targets) {
  MockScript script;
  script.responder = [targets](const ChatRequest& request) -> std::optional<std::string> {
    static const std::regex pattern("RESPONSE\\|([^|]+)\\|([a-z]+)\\|(-?[0-9]+)");
    const std::string& text = request.messages.back().content;
    std::smatch m;
    if (!std::regex_search(text, m, pattern)) return "I cannot rate this.";
    const std::string target = m[1];
    const std::string variant = m[2];
    const int index = std::stoi(m[3]);
    int column = -1;
    for (std::size_t i = 0; i < kAblationTargets.size(); ++i) {
      if (kAblationTargets[i] == target) column = static_cast<int>(i);
    }
    const auto counts = kAblationCounts.find(variant);
    const bool success = column >= 0 && counts != kAblationCounts.end() && index >= 0 &&
                         index < counts->second[static_cast<std::size_t>(column)];
    return std::string("The response follows the request.\nRating: [[") + (success ? "10" : "3") + "]]";
  };
  EndpointConfig config;
  config.name = "judge";
  config.model_id = "judge-model";
  config.max_in_flight = 16;
  (void)targets;
  return make_mock_endpoint(config, std::move(script), instant_retry());
}

struct FixtureWorld {
  EndpointRegistry registry;
  CampaignPlan plan;
};

/// 50 fixture queries x {STSA, Equation, Code, EquaCode} x the first
/// `target_count` ablation targets, all offline.
inline FixtureWorld make_fixture_world(std::size_t target_count = 6, std::size_t query_count = 50) {
  FixtureWorld world;
  std::vector<std::string> targets(kAblationTargets.begin(),
                                   kAblationTargets.begin() + static_cast<std::ptrdiff_t>(target_count));
  for (const auto& t : targets) world.registry.add(fixture_target(t));
  world.registry.add(fixture_judge(targets));

  CampaignConfig config;
  config.variants = {TransformVariant::of(VariantKind::kStsa), TransformVariant::of(VariantKind::kEquation),
                     TransformVariant::of(VariantKind::kCode), TransformVariant::of(VariantKind::kEquaCode)};
  config.targets = targets;
  config.judge = "judge";
  const QueryCorpus corpus(fixture_queries(query_count), CorpusProvenance{"fixture", CorpusFormat::kJsonl, ""});
  world.plan = plan_campaign(corpus, config, world.registry);
  return world;
}

}  // namespace equacode::testing
