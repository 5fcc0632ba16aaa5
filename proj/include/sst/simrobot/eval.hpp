#pragma once

// Closed-loop evaluation: render -> geometry transformer -> connector ->
// policy -> temporal ensemble -> step, per timestep, over seeded episodes.

#include "sst/simrobot/sim.hpp"

namespace sst::simrobot {

struct EvalConfig {
  int episodes = 50;
  uint64_t seed = 0;
  std::string region = "train";  // "train" | "wide"
  bool use_expert = false;       // bypass the policy with the scripted expert
};

struct EvalResult {
  int episodes = 0;
  int successes = 0;
  double success_rate = 0;
  double mean_length = 0;
};

// policy_ckpt/geo_ckpt may be empty when use_expert is set. Writes one JSON
// line per episode to log_out.
EvalResult evaluate(const SimConfig& cfg, Task task, const EvalConfig& eval_cfg,
                    const std::filesystem::path& policy_ckpt,
                    const std::filesystem::path& geo_ckpt,
                    const std::filesystem::path& log_out);

}  // namespace sst::simrobot
