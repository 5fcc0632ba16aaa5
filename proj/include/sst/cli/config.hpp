#pragma once

// Resolved run configuration for the command-line tool: one JSON document
// with a section per subsystem. Unknown keys are rejected so typos fail
// loudly instead of silently using defaults. Precedence everywhere is
// command-line flag > config file > built-in default.

#include "sst/geotrans/train.hpp"
#include "sst/policy/train.hpp"
#include "sst/simrobot/sim.hpp"

#include <string>

#include "json.hpp"

namespace sst::cli {

inline constexpr const char* kCodeVersion = "0.1.0";

// Throws std::invalid_argument naming the first key of j not in allowed.
void check_keys(const nlohmann::json& j, const std::vector<std::string>& allowed,
                const std::string& context);

nlohmann::json scene_config_to_json(const scenegen::RandomizationConfig& c);
scenegen::RandomizationConfig scene_config_from_json(const nlohmann::json& j);

// The simulator section excludes the nested scene randomization; RunConfig
// wires the shared scenegen section into it.
nlohmann::json sim_config_to_json(const simrobot::SimConfig& c);
simrobot::SimConfig sim_config_from_json(const nlohmann::json& j);

nlohmann::json train_geo_config_to_json(const geotrans::TrainGeoConfig& c);
geotrans::TrainGeoConfig train_geo_config_from_json(const nlohmann::json& j);

nlohmann::json train_policy_config_to_json(const policy::TrainPolicyConfig& c);
policy::TrainPolicyConfig train_policy_config_from_json(const nlohmann::json& j);

struct RunConfig {
  uint64_t seed = 0;
  bool deterministic = true;
  scenegen::RandomizationConfig scenegen;
  geotrans::TrainGeoConfig geotrans;
  policy::TrainPolicyConfig policy;
  simrobot::SimConfig simrobot;  // .scene mirrors the scenegen section

  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load(const std::filesystem::path& path);
};

// Provenance record written next to every artifact: the subcommand, the code
// version and the fully resolved configuration.
void write_provenance(const std::filesystem::path& path, const std::string& command,
                      const RunConfig& cfg, const nlohmann::json& extra = {});

}  // namespace sst::cli
