#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "rcmact/inference.hpp"
#include "rcmact/policy.hpp"
#include "rcmact/simulator.hpp"

namespace rcmact {

struct PipelineConfig {
  WorldConfig world;
  PolicyConfig policy;
  EnsembleConfig ensemble;
  double expert_noise = 0.05;  // mm, per-waypoint jitter of the scripted expert
};

// Keys are "section.name" (world, policy, ensemble, expert). A bare name is
// accepted when it belongs to exactly one section.

/// Every known key, sorted.
std::vector<std::string> config_keys();

/// Throws UnknownKey or TypeError naming the key.
void apply_setting(PipelineConfig& cfg, std::string_view key, std::string_view value);
std::string get_setting(const PipelineConfig& cfg, std::string_view key);

/// INI text: sectioned ([world] ...) and/or flat dotted keys. Values are
/// applied over `base`.
PipelineConfig parse_config(std::string_view text, const PipelineConfig& base = {});
PipelineConfig load_config(const std::filesystem::path& path, const PipelineConfig& base = {});
std::string format_config(const PipelineConfig& cfg);

/// World settings as name=value, without the section prefix.
std::map<std::string, std::string> world_config_echo(const WorldConfig& world);

}  // namespace rcmact
