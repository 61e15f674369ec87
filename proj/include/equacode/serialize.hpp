#pragma once

#include <nlohmann/json.hpp>

#include "equacode/client.hpp"
#include "equacode/judge.hpp"
#include "equacode/transform.hpp"

namespace equacode {

nlohmann::json to_json(const Decomposition& d);
Decomposition decomposition_from_json(const nlohmann::json& j);

nlohmann::json to_json(const AttackPrompt& prompt);
AttackPrompt attack_prompt_from_json(const nlohmann::json& j);

nlohmann::json to_json(const ChatResponse& response);
ChatResponse chat_response_from_json(const nlohmann::json& j);

nlohmann::json to_json(const JudgeVerdict& verdict);
JudgeVerdict judge_verdict_from_json(const nlohmann::json& j);

}  // namespace equacode
