#include "equacode/serialize.hpp"

namespace equacode {

using nlohmann::json;

json to_json(const Decomposition& d) {
  return {{"A", d.query_a}, {"B", d.subject_b}, {"C", d.tool_c}, {"unknown", d.unknown_label}};
}

Decomposition decomposition_from_json(const json& j) {
  Decomposition d;
  d.query_a = j.at("A").get<std::string>();
  d.subject_b = j.at("B").get<std::string>();
  d.tool_c = j.at("C").get<std::string>();
  d.unknown_label = j.at("unknown").get<std::string>();
  return d;
}

json to_json(const AttackPrompt& prompt) {
  json j = {{"query_id", prompt.query_id},
            {"variant", prompt.variant.name()},
            {"template_version", prompt.template_version},
            {"rendered", prompt.rendered}};
  j["decomposition"] = prompt.decomposition ? to_json(*prompt.decomposition) : json(nullptr);
  return j;
}

AttackPrompt attack_prompt_from_json(const json& j) {
  AttackPrompt prompt;
  prompt.query_id = j.at("query_id").get<std::string>();
  prompt.variant = TransformVariant::parse(j.at("variant").get<std::string>());
  prompt.template_version = j.at("template_version").get<std::string>();
  prompt.rendered = j.at("rendered").get<std::string>();
  if (j.contains("decomposition") && !j["decomposition"].is_null()) {
    prompt.decomposition = decomposition_from_json(j["decomposition"]);
  }
  return prompt;
}

json to_json(const ChatResponse& response) {
  return {{"content", response.content},
          {"finish_reason", response.finish_reason},
          {"prompt_tokens", response.prompt_tokens},
          {"completion_tokens", response.completion_tokens},
          {"latency_ms", response.latency_ms},
          {"attempt_count", response.attempt_count}};
}

ChatResponse chat_response_from_json(const json& j) {
  ChatResponse response;
  response.content = j.at("content").get<std::string>();
  response.finish_reason = j.value("finish_reason", "");
  response.prompt_tokens = j.value("prompt_tokens", std::int64_t{0});
  response.completion_tokens = j.value("completion_tokens", std::int64_t{0});
  response.latency_ms = j.value("latency_ms", 0.0);
  response.attempt_count = j.value("attempt_count", 1);
  return response;
}

json to_json(const JudgeVerdict& verdict) {
  return {{"score", verdict.score},
          {"success", verdict.success},
          {"rationale", verdict.rationale},
          {"raw", verdict.raw},
          {"judge_model", verdict.judge_model},
          {"parse_failed", verdict.parse_failed}};
}

JudgeVerdict judge_verdict_from_json(const json& j) {
  JudgeVerdict verdict = JudgeVerdict::scored(j.at("score").get<int>(), j.value("rationale", ""),
                                              j.value("raw", ""), j.value("judge_model", ""));
  verdict.parse_failed = j.value("parse_failed", false);
  if (verdict.parse_failed) verdict.success = false;
  return verdict;
}

}  // namespace equacode
