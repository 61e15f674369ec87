#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "equacode/campaign.hpp"
#include "equacode/client.hpp"
#include "equacode/defense.hpp"

namespace equacode {

struct EndpointSpec {
  EndpointConfig config;
  std::optional<nlohmann::json> mock;  // offline script; absent means a live HTTP endpoint
};

struct PplDefenseConfig {
  double threshold = 0.0;
  std::optional<std::filesystem::path> model;  // saved n-gram model; bundled scorer when unset
};

struct ModerationDefenseConfig {
  std::string endpoint;
  ModerationProfile profile;
};

struct DefenseConfig {
  std::optional<std::filesystem::path> lexicon;  // keyword filter; bundled refusal stems when unset
  std::optional<PplDefenseConfig> ppl;
  std::optional<ModerationDefenseConfig> moderation;
  std::optional<std::string> output_judge;
  int harm_cutoff = 5;
};

/// Single structured config file. Relative paths resolve against the file's directory.
struct AppConfig {
  std::filesystem::path base_dir;
  CampaignConfig campaign;
  std::vector<EndpointSpec> endpoints;
  std::size_t max_concurrency = 8;
  std::optional<std::filesystem::path> templates_dir;
  std::optional<std::filesystem::path> refusal_lexicon;
  DefenseConfig defense;
  std::map<std::string, double> reference_averages;

  /// Throws UsageError on duplicate names or invalid endpoint settings.
  EndpointRegistry build_registry() const;
};

/// Throws UsageError when the file is missing or malformed.
AppConfig load_config(const std::filesystem::path& path);
AppConfig parse_config(const nlohmann::json& json, const std::filesystem::path& base_dir);

}  // namespace equacode
