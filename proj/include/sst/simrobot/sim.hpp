#pragma once

// Simulated dual-arm end-effector robot above procedurally generated scenes.
// Arm poses live in the left-camera (endoscope) frame. True poses drive the
// dynamics and the rendered observations; reported (measured) poses are
// corrupted by one constant rigid kinematic error per arm per episode,
// emulating imprecise base sensing. Two tasks: lift (single-arm grasp and
// raise of a target ball) and dual-touch (each arm touches its own target).

#include "sst/geom.hpp"
#include "sst/scenegen/render.hpp"

#include <filesystem>
#include <functional>
#include <optional>

namespace sst::simrobot {

enum class Task { Lift, DualTouch };

std::string to_string(Task t);
Task task_from_string(const std::string& s);

struct Region {
  double half_x = 0, half_y = 0;  // box half-extents around the patch center
};

struct SimConfig {
  scenegen::RandomizationConfig scene;
  // per-step clamps
  double max_delta_translation = 0.004;  // meters
  double max_delta_rotation = 0.15;      // radians
  // task rules. The grasp/touch tolerances model a gripper that captures
  // anything within its open jaws, a few millimetres — keep them larger than
  // the worst-case kinematic bias below or no amount of proprioceptive
  // servoing can line the tip up reliably.
  double grasp_radius = 0.0035;   // meters
  double lift_height = 0.010;     // meters
  double touch_radius = 0.0035;   // meters
  double close_threshold = 0.2;   // jaw below this counts as closed
  double jaw_open = 0.8;          // radians
  double jaw_max = 1.0;           // radians
  int horizon = 120;
  // kinematic base error bounds (fresh per episode)
  double kin_err_rot_max = 2.0 * M_PI / 180.0;
  double kin_err_tr_max = 0.002;
  // geometry of the rendered instruments and targets. The perception stack
  // is trained for geometry, not appearance, so task-relevant objects must
  // be geometrically salient: the target ball has to stand clear of the
  // surface relief (whose amplitude is of the same order), not just carry a
  // distinctive color.
  double instrument_radius = 0.002;
  double instrument_length = 0.014;
  double target_radius = 0.0035;
  // target sampling regions (the train region is a subset of the wide one)
  Region train_region{0.012, 0.012};
  Region wide_region{0.025, 0.025};

  void validate() const;
};

struct WorldState {
  Task task = Task::Lift;
  scenegen::SceneSpec scene;  // base scene, no instruments/targets
  geom::StereoRig rig;
  geom::ArmState true_state;             // left-camera frame
  geom::Pose kin_err_left, kin_err_right;  // measured = kin_err o true
  // workspace center: where the endoscope's optical axis meets the surface;
  // targets and start poses are placed relative to it
  geom::Vec3 workspace_center = geom::Vec3::Zero();
  // target centers, world frame; lift uses target_left only
  geom::Vec3 target_left = geom::Vec3::Zero();
  geom::Vec3 target_right = geom::Vec3::Zero();
  double initial_target_z = 0;  // world z of the lift target at episode start
  geom::Vec3 grasp_offset = geom::Vec3::Zero();  // target - tip while grasped
  bool grasped = false, lifted = false;
  bool touched_left = false, touched_right = false;
  int t = 0;

  geom::ArmState measured() const;
  // gripper contact sensors: an object held in the jaws / a touch event
  bool contact_left() const { return grasped || touched_left; }
  bool contact_right() const { return touched_right; }
  bool success() const;
};

// Deterministic function of (config, task, region name, seed, start_variant).
// Samples the scene, targets inside the named region ("train" or "wide"),
// randomized start poses and the per-episode kinematic errors. The same seed
// with a different start_variant yields the same scene and targets but fresh
// start poses and kinematic errors, so one scene can be demonstrated from
// several initial conditions. Throws if a visible, reachable target cannot
// be found.
WorldState make_world(const SimConfig& cfg, Task task, const std::string& region,
                      uint64_t seed, uint64_t start_variant = 0);

// Renders the stereo observation with instrument capsules and target balls
// composited at their true positions.
scenegen::Sample render_observation(const WorldState& state, const SimConfig& cfg);

struct StepOutcome {
  WorldState next;
  geom::ActionStep applied;  // the action after clamping — what was executed
};

// Advances the true state by the clamped action and updates the task flags.
// Throws on non-finite actions.
StepOutcome step(const WorldState& state, const geom::ActionStep& action,
                 const SimConfig& cfg);

// Deterministic proportional controller toward the task waypoints, operating
// on the true state; its deltas respect the clamp limits.
geom::ActionStep scripted_expert(const WorldState& state, const SimConfig& cfg);

struct StepRecord {
  geom::ArmState measured;
  // gripper contact sensors at observation time (held object / touch)
  bool contact_left = false, contact_right = false;
  geom::ArmState true_state;  // debug field, never fed to a policy
  geom::ActionStep executed;
  bool success = false;
};

struct EpisodeResult {
  Task task = Task::Lift;
  uint64_t seed = 0;
  uint64_t start_variant = 0;
  std::string region;
  bool success = false;
  int length = 0;
  std::vector<StepRecord> steps;
};

// Runs one episode under an arbitrary controller (state -> action). The
// controller is queried on the current state; recording of observations is
// the caller's concern (see collect_demos).
using Controller = std::function<geom::ActionStep(const WorldState&)>;
// on_state (optional) sees the world before each action, e.g. to render the
// observation the controller acted on.
EpisodeResult run_episode(const SimConfig& cfg, Task task, const std::string& region,
                          uint64_t seed, const Controller& controller,
                          const std::function<void(const WorldState&)>& on_state = {},
                          uint64_t start_variant = 0);

struct DemoStats {
  int64_t requested = 0, succeeded = 0, written = 0;
};

// Records expert demonstrations: one directory per trajectory with
// meta.json, frames/{t:06}_left.png/_right.png and states.jsonl. Failed
// episodes are not written. region_split in [0,1] is the fraction drawn
// from the train region; the rest use the wide region. Each scene is
// demonstrated from start_variants different initial conditions, so the
// mapping from a scene's appearance to the useful action is not unique —
// the learner has to read the instruments, not memorize the scene.
DemoStats collect_demos(const SimConfig& cfg, Task task, int count, uint64_t seed,
                        double region_split, const std::filesystem::path& out_dir,
                        int start_variants = 3);

// Loaded demonstration; frames stay on disk and are read per index.
struct Demo {
  Task task = Task::Lift;
  uint64_t seed = 0;
  uint64_t start_variant = 0;
  std::string region;
  std::filesystem::path dir;
  std::vector<StepRecord> steps;

  util::Image frame(int t, bool right_view) const;
};

Demo load_demo(const std::filesystem::path& dir);
std::vector<std::filesystem::path> list_demos(const std::filesystem::path& root);

}  // namespace sst::simrobot
