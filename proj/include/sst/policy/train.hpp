#pragma once

// Second training stage: the geometry transformer is loaded frozen; the
// connector and policy decoder are trained on action chunks sampled from
// demonstrations. Target actions are recomputed from the stored absolute
// poses at load time.

#include "sst/geotrans/train.hpp"
#include "sst/policy/policy.hpp"
#include "sst/simrobot/sim.hpp"

#include <filesystem>
#include <memory>
#include <optional>

namespace sst::policy {

// Frozen geometry parameters changed during policy training.
struct FrozenDriftError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TrainPolicyConfig {
  PolicyConfig policy;
  connector::Variant variant = connector::Variant::Msfc;
  int d_low = 0;  // 0 = policy width / 4
  double lr = 1e-4;
  int steps = 4000;
  uint64_t seed = 0;
  int log_every = 10;
  // Sensing-noise augmentation: each training sample sees the recorded
  // proprioception re-biased by a fresh random rigid offset per arm, drawn
  // up to these bounds. This matches the inference-time situation (the base
  // sensing bias is arbitrary), keeping the policy from treating the
  // measured pose as exact; keep it in step with the simulator's kinematic
  // error bounds.
  double proprio_noise_tr = 0.002;          // meters
  double proprio_noise_rot = 2.0 * M_PI / 180.0;  // radians
  // The jaw readout gets strong additive noise: the expert's jaw command is
  // a function of its (privileged) distance to the target, so a clean jaw
  // reading would let the net clock the whole demonstration off its own
  // previous jaw command instead of the observed scene — a feedback loop
  // that runs away in closed loop.
  double proprio_noise_jaw = 0.4;           // radians
};

struct TrainPolicyResult {
  int64_t steps = 0;
  double initial_loss = 0;
  double final_loss = 0;
};

TrainPolicyResult train_policy(const std::filesystem::path& demos_dir,
                               const std::filesystem::path& geo_ckpt,
                               const TrainPolicyConfig& cfg,
                               const std::filesystem::path& ckpt_out,
                               const std::filesystem::path& metrics_out);

void save_policy_checkpoint(const std::filesystem::path& path, const Policy<float>& policy,
                            const ActionStats& stats, const std::string& geo_fingerprint,
                            uint64_t seed, int64_t steps);

struct LoadedPolicy {
  std::unique_ptr<Policy<float>> policy;
  ActionStats stats;
  std::string geo_fingerprint;
};

// expected_geo_fingerprint, when given, must match the fingerprint stored in
// the checkpoint unless allow_mismatch is set.
LoadedPolicy load_policy_checkpoint(const std::filesystem::path& path,
                                    const std::optional<std::string>& expected_geo_fingerprint,
                                    bool allow_mismatch = false);

// Per-step target actions of one demonstration, recomputed from the stored
// true poses (the final step falls back to the recorded executed action).
std::vector<std::array<double, 14>> demo_targets(const simrobot::Demo& demo);

// One inference step of the full visuomotor stack: images through the frozen
// geometry transformer, pyramid through the connector and policy decoder.
ActionChunk predict_chunk(const geotrans::GeometryTransformer<float>& geo,
                          const Policy<float>& policy, const util::Image& left,
                          const util::Image& right, const geom::ArmState& measured,
                          bool contact_left = false, bool contact_right = false);

}  // namespace sst::policy
