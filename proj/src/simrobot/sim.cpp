#include "sst/simrobot/sim.hpp"

#include "sst/util/rng.hpp"

#include <fstream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace sst::simrobot {

std::string to_string(Task t) { return t == Task::Lift ? "lift" : "dual-touch"; }

Task task_from_string(const std::string& s) {
  if (s == "lift") return Task::Lift;
  if (s == "dual-touch") return Task::DualTouch;
  throw std::invalid_argument("unknown task: " + s);
}

void SimConfig::validate() const {
  scene.validate();
  if (max_delta_translation <= 0 || max_delta_rotation <= 0)
    throw std::invalid_argument("sim: step clamps must be positive");
  if (grasp_radius <= 0 || lift_height <= 0 || touch_radius <= 0)
    throw std::invalid_argument("sim: task radii must be positive");
  if (horizon < 1) throw std::invalid_argument("sim: horizon must be >= 1");
  if (jaw_open <= close_threshold || jaw_open > jaw_max)
    throw std::invalid_argument("sim: jaw_open must lie in (close_threshold, jaw_max]");
  if (train_region.half_x > wide_region.half_x ||
      train_region.half_y > wide_region.half_y)
    throw std::invalid_argument("sim: train region must be inside the wide region");
  if (wide_region.half_x >= scene.patch_half || wide_region.half_y >= scene.patch_half)
    throw std::invalid_argument("sim: wide region must be inside the surface patch");
}

geom::ArmState WorldState::measured() const {
  geom::ArmState m = true_state;
  m.pose_left = kin_err_left.compose(true_state.pose_left);
  m.pose_right = kin_err_right.compose(true_state.pose_right);
  return m;
}

bool WorldState::success() const {
  return task == Task::Lift ? lifted : (touched_left && touched_right);
}

namespace {

geom::Pose random_small_pose(util::Rng& rng, double rot_max, double tr_max) {
  geom::Vec3 axis(rng.normal(), rng.normal(), rng.normal());
  if (axis.norm() < 1e-12) axis = geom::Vec3::UnitZ();
  axis.normalize();
  double angle = rng.uniform(0.0, rot_max);
  geom::Vec3 t(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
  double n = t.norm();
  if (n > 1e-12) t *= rng.uniform(0.0, tr_max) / n;
  return geom::Pose(Eigen::AngleAxisd(angle, axis).toRotationMatrix(), t);
}

bool visible_in_both(const WorldState& w, const geom::Vec3& world_point, double margin) {
  geom::Vec3 cam = w.scene.left_cam_to_world.inverse().apply(world_point);
  for (auto c : {geom::Camera::Left, geom::Camera::Right}) {
    geom::Vec3 p = cam;
    try {
      geom::Vec2 px = geom::project(w.rig, p, c);
      if (px.x() < margin || px.x() > w.rig.width - margin || px.y() < margin ||
          px.y() > w.rig.height - margin)
        return false;
    } catch (const std::domain_error&) {
      return false;
    }
  }
  return true;
}

geom::Vec3 tip_world(const WorldState& w, const geom::Pose& tool_in_cam) {
  return w.scene.left_cam_to_world.apply(tool_in_cam.t);
}

// Down-pointing tool orientation expressed in the camera frame.
geom::Mat3 tool_orientation_cam(const WorldState& w) {
  geom::Mat3 down;  // tool z along world -z, x along world x
  down << 1, 0, 0, 0, -1, 0, 0, 0, -1;
  return w.scene.left_cam_to_world.R.transpose() * down;
}

geom::Vec3 world_to_cam(const WorldState& w, const geom::Vec3& p) {
  return w.scene.left_cam_to_world.inverse().apply(p);
}

// Point where the left camera's optical axis meets the surface; start poses
// are anchored here so they project near the image center for any sampled rig.
geom::Vec3 axis_ground_point(const WorldState& w) {
  geom::Vec3 c = w.scene.left_cam_to_world.t;
  geom::Vec3 d = w.scene.left_cam_to_world.R * geom::Vec3::UnitZ();
  double t = 0.05;
  for (int i = 0; i < 4; ++i) {
    geom::Vec3 p = c + t * d;
    double h = w.scene.height_at(p.x(), p.y());
    if (std::abs(d.z()) < 1e-9) break;
    t = (c.z() - h) / -d.z();
  }
  geom::Vec3 g = c + t * d;
  double lim = w.scene.patch_half - 0.02;
  g.x() = std::clamp(g.x(), -lim, lim);
  g.y() = std::clamp(g.y(), -lim, lim);
  return g;
}

}  // namespace

WorldState make_world(const SimConfig& cfg, Task task, const std::string& region_name,
                      uint64_t seed, uint64_t start_variant) {
  cfg.validate();
  const Region* region;
  if (region_name == "train")
    region = &cfg.train_region;
  else if (region_name == "wide")
    region = &cfg.wide_region;
  else
    throw std::invalid_argument("unknown region: " + region_name);

  auto sampled = scenegen::sample_scene(cfg.scene, (int64_t)seed);
  WorldState w;
  w.task = task;
  w.scene = std::move(sampled.scene);
  w.rig = sampled.rig;

  // the scene stream fixes everything tied to the scene (targets); the
  // variant stream additionally mixes in start_variant and drives the
  // episode-specific draws (kinematic errors, start poses), so the same seed
  // with different variants revisits one scene from fresh initial conditions
  util::Rng rng(util::mix_seed(util::mix_seed(cfg.scene.master_seed, 0x53494d), seed));
  util::Rng vrng(util::mix_seed(
      util::mix_seed(util::mix_seed(cfg.scene.master_seed, 0x535452), seed), start_variant));
  w.kin_err_left = random_small_pose(vrng, cfg.kin_err_rot_max, cfg.kin_err_tr_max);
  w.kin_err_right = random_small_pose(vrng, cfg.kin_err_rot_max, cfg.kin_err_tr_max);

  // visibility margins scale with the image so small debug renders behave
  // like the full-size ones
  double side = std::min(w.rig.width, w.rig.height);
  double target_margin = 0.06 * side;
  double start_margin = 0.04 * side;
  geom::Vec3 anchor = axis_ground_point(w);

  auto sample_target = [&](double min_sep_x) -> geom::Vec3 {
    for (int attempt = 0; attempt < 200; ++attempt) {
      double x = anchor.x() + rng.uniform(-region->half_x, region->half_x);
      double y = anchor.y() + rng.uniform(-region->half_y, region->half_y);
      if (std::abs(x - anchor.x()) < min_sep_x) continue;
      geom::Vec3 p(x, y, w.scene.height_at(x, y) + cfg.target_radius);
      if (visible_in_both(w, p, target_margin)) return p;
    }
    throw std::runtime_error("make_world: no visible target found (seed " +
                             std::to_string(seed) + ", region " + region_name + ")");
  };

  if (task == Task::Lift) {
    w.target_left = sample_target(0.0);
  } else {
    // one target per side of the midline so the arms do not collide
    for (int attempt = 0; attempt < 200; ++attempt) {
      geom::Vec3 a = sample_target(0.002);
      geom::Vec3 b = sample_target(0.002);
      if ((a.x() < anchor.x()) == (b.x() < anchor.x())) continue;
      w.target_left = a.x() < anchor.x() ? a : b;
      w.target_right = a.x() < anchor.x() ? b : a;
      break;
    }
    if (w.target_left == geom::Vec3::Zero() && w.target_right == geom::Vec3::Zero())
      throw std::runtime_error("make_world: no target pair found");
  }
  w.initial_target_z = w.target_left.z();

  // start tips above the workspace center, one per side, at a randomized
  // lateral offset and hover height; the base offset shrinks with the field
  // of view so both tips stay on screen. Randomized starts keep the scene's
  // appearance from fully determining the useful trajectory, so an imitation
  // learner has to locate the instruments rather than memorize the scene.
  w.workspace_center = anchor;
  double z0 = (w.scene.left_cam_to_world.t - anchor).norm();
  double half_visible = z0 * (0.5 * w.rig.width - 2.0 * start_margin) / w.rig.fx;
  double start_dx = std::min(0.010, 0.5 * half_visible);
  geom::Mat3 tool_r = tool_orientation_cam(w);
  double dxl = -vrng.uniform(0.3, 1.0) * start_dx;
  double dyl = vrng.uniform(-0.7, 0.7) * start_dx;
  double dxr = vrng.uniform(0.3, 1.0) * start_dx;
  double dyr = vrng.uniform(-0.7, 0.7) * start_dx;
  double hover_l = vrng.uniform(0.010, 0.020);
  double hover_r = vrng.uniform(0.010, 0.020);
  auto start_point = [&](double dx, double dy, double hover) {
    double x = anchor.x() + dx, y = anchor.y() + dy;
    return geom::Vec3(x, y, w.scene.height_at(x, y) + hover);
  };
  // the hover height sits closer to the camera than the surface, so the
  // offset that fits on screen varies with the rig; shrink until it does
  bool placed = false;
  for (int i = 0; i < 10 && !placed;
       ++i, dxl *= 0.7, dyl *= 0.7, dxr *= 0.7, dyr *= 0.7) {
    if (visible_in_both(w, start_point(dxl, dyl, hover_l), start_margin) &&
        visible_in_both(w, start_point(dxr, dyr, hover_r), start_margin)) {
      w.true_state.pose_left =
          geom::Pose(tool_r, world_to_cam(w, start_point(dxl, dyl, hover_l)));
      w.true_state.pose_right =
          geom::Pose(tool_r, world_to_cam(w, start_point(dxr, dyr, hover_r)));
      placed = true;
    }
  }
  if (!placed)
    throw std::runtime_error("make_world: start pose outside the view (seed " +
                             std::to_string(seed) + ")");
  w.true_state.jaw_left = cfg.jaw_open;
  w.true_state.jaw_right = cfg.jaw_open;
  return w;
}

scenegen::Sample render_observation(const WorldState& state, const SimConfig& cfg) {
  scenegen::SceneSpec scene = state.scene;
  auto add_ball = [&](const geom::Vec3& c, const geom::Vec3& albedo) {
    scenegen::Primitive p;
    p.kind = scenegen::Primitive::Kind::Sphere;
    p.p0 = c;
    p.radius = cfg.target_radius;
    p.albedo = albedo;
    scene.primitives.push_back(p);
  };
  add_ball(state.target_left, geom::Vec3(0.9, 0.15, 0.15));
  if (state.task == Task::DualTouch)
    add_ball(state.target_right, geom::Vec3(0.9, 0.55, 0.1));

  auto add_tool = [&](const geom::Pose& tool_in_cam, const geom::Vec3& albedo) {
    scenegen::Primitive p;
    p.kind = scenegen::Primitive::Kind::Capsule;
    geom::Vec3 tip = state.scene.left_cam_to_world.apply(tool_in_cam.t);
    geom::Vec3 shaft_up =
        -(state.scene.left_cam_to_world.R * tool_in_cam.R * geom::Vec3::UnitZ());
    p.p0 = tip;
    p.p1 = tip + shaft_up * cfg.instrument_length;
    p.radius = cfg.instrument_radius;
    p.albedo = albedo;
    scene.primitives.push_back(p);
  };
  add_tool(state.true_state.pose_left, geom::Vec3(0.8, 0.8, 0.85));
  add_tool(state.true_state.pose_right, geom::Vec3(0.35, 0.55, 0.85));
  return scenegen::render_stereo(scene, state.rig);
}

StepOutcome step(const WorldState& state, const geom::ActionStep& action,
                 const SimConfig& cfg) {
  if (!action.finite()) throw std::invalid_argument("step: non-finite action");
  geom::ActionStep a = action;
  auto clamp_vec = [](geom::Vec3& v, double max_norm) {
    double n = v.norm();
    if (n > max_norm) v *= max_norm / n;
  };
  clamp_vec(a.delta_translation_left, cfg.max_delta_translation);
  clamp_vec(a.delta_translation_right, cfg.max_delta_translation);
  clamp_vec(a.delta_euler_left, cfg.max_delta_rotation);
  clamp_vec(a.delta_euler_right, cfg.max_delta_rotation);
  a.jaw_left = std::clamp(a.jaw_left, 0.0, cfg.jaw_max);
  a.jaw_right = std::clamp(a.jaw_right, 0.0, cfg.jaw_max);

  StepOutcome out;
  out.applied = a;
  out.next = state;
  WorldState& w = out.next;
  w.true_state = geom::apply_action(state.true_state, a);
  w.t = state.t + 1;

  geom::Vec3 tip_l = tip_world(w, w.true_state.pose_left);
  geom::Vec3 tip_r = tip_world(w, w.true_state.pose_right);
  if (w.task == Task::Lift) {
    if (w.grasped) w.target_left = tip_l + w.grasp_offset;
    if (!w.grasped && (tip_l - w.target_left).norm() < cfg.grasp_radius &&
        w.true_state.jaw_left < cfg.close_threshold) {
      w.grasped = true;
      w.grasp_offset = w.target_left - tip_l;
    }
    if (w.grasped && w.target_left.z() - w.initial_target_z >= cfg.lift_height)
      w.lifted = true;
  } else {
    double reach = cfg.touch_radius + cfg.target_radius;
    if ((tip_l - w.target_left).norm() < reach) w.touched_left = true;
    if ((tip_r - w.target_right).norm() < reach) w.touched_right = true;
  }
  return out;
}

geom::ActionStep scripted_expert(const WorldState& state, const SimConfig& cfg) {
  const double approach = 0.008;  // hover height above a target, meters
  geom::ActionStep a;
  a.jaw_left = state.true_state.jaw_left;
  a.jaw_right = state.true_state.jaw_right;

  auto move_toward = [&](const geom::Pose& tool_in_cam, const geom::Vec3& wp_world) {
    geom::Vec3 wp_cam =
        state.scene.left_cam_to_world.inverse().apply(wp_world);
    geom::Vec3 d = wp_cam - tool_in_cam.t;
    double n = d.norm();
    // stay just inside the clamp so the recorded action is the issued one
    double max_step = cfg.max_delta_translation * 0.98;
    if (n > max_step) d *= max_step / n;
    return d;
  };

  auto tip_of = [&](const geom::Pose& p) { return tip_world(state, p); };

  // The pre-grasp behavior is a smooth feedback law of the relative tip
  // position: the hover height tapers off with the lateral error and the
  // jaw aperture is proportional to the remaining distance, hitting the
  // close threshold exactly at the grasp radius. Expressing the expert
  // without discrete mode switches matters for imitation: every recorded
  // step then supervises the same continuous state -> action map, instead
  // of hiding the switching condition in a single transition frame.
  auto hover_above = [&](const geom::Vec3& target, const geom::Vec3& d, double radius) {
    geom::Vec3 wp = target;
    wp.z() += approach * std::min(1.0, std::hypot(d.x(), d.y()) / (2.0 * radius));
    return wp;
  };

  if (state.task == Task::Lift) {
    geom::Vec3 tip = tip_of(state.true_state.pose_left);
    if (state.grasped) {
      geom::Vec3 wp = state.target_left;
      wp.z() = state.initial_target_z + cfg.lift_height + 0.004;
      a.delta_translation_left = move_toward(state.true_state.pose_left, wp);
      a.jaw_left = 0.0;
    } else {
      geom::Vec3 d = state.target_left - tip;
      a.delta_translation_left = move_toward(
          state.true_state.pose_left, hover_above(state.target_left, d, cfg.grasp_radius));
      // jaw == close_threshold exactly when d == grasp_radius
      double close_span = cfg.grasp_radius * cfg.jaw_open / cfg.close_threshold;
      a.jaw_left = cfg.jaw_open * std::min(1.0, d.norm() / close_span);
    }
  } else {
    if (!state.touched_left) {
      geom::Vec3 tip = tip_of(state.true_state.pose_left);
      geom::Vec3 d = state.target_left - tip;
      a.delta_translation_left = move_toward(
          state.true_state.pose_left, hover_above(state.target_left, d, cfg.touch_radius));
    } else if (!state.touched_right) {
      geom::Vec3 tip = tip_of(state.true_state.pose_right);
      geom::Vec3 d = state.target_right - tip;
      a.delta_translation_right =
          move_toward(state.true_state.pose_right,
                      hover_above(state.target_right, d, cfg.touch_radius));
    }
  }
  return a;
}

EpisodeResult run_episode(const SimConfig& cfg, Task task, const std::string& region,
                          uint64_t seed, const Controller& controller,
                          const std::function<void(const WorldState&)>& on_state,
                          uint64_t start_variant) {
  WorldState w = make_world(cfg, task, region, seed, start_variant);
  EpisodeResult ep;
  ep.task = task;
  ep.seed = seed;
  ep.start_variant = start_variant;
  ep.region = region;
  for (int t = 0; t < cfg.horizon; ++t) {
    if (on_state) on_state(w);
    geom::ActionStep action = controller(w);
    StepOutcome out = step(w, action, cfg);
    StepRecord rec;
    rec.measured = w.measured();
    rec.contact_left = w.contact_left();
    rec.contact_right = w.contact_right();
    rec.true_state = w.true_state;
    rec.executed = out.applied;
    w = std::move(out.next);
    rec.success = w.success();
    ep.steps.push_back(std::move(rec));
    if (w.success()) break;
  }
  ep.success = w.success();
  ep.length = (int)ep.steps.size();
  return ep;
}

namespace {

json arm_state_to_json(const geom::ArmState& s) {
  return {{"pose_left", s.pose_left.to_json()},
          {"pose_right", s.pose_right.to_json()},
          {"jaw_left", s.jaw_left},
          {"jaw_right", s.jaw_right}};
}

geom::ArmState arm_state_from_json(const json& j) {
  geom::ArmState s;
  s.pose_left = geom::Pose::from_json(j.at("pose_left"));
  s.pose_right = geom::Pose::from_json(j.at("pose_right"));
  s.jaw_left = j.at("jaw_left").get<double>();
  s.jaw_right = j.at("jaw_right").get<double>();
  return s;
}

}  // namespace

DemoStats collect_demos(const SimConfig& cfg, Task task, int count, uint64_t seed,
                        double region_split, const fs::path& out_dir,
                        int start_variants) {
  if (region_split < 0 || region_split > 1)
    throw std::invalid_argument("collect_demos: region_split must be in [0, 1]");
  if (start_variants < 1)
    throw std::invalid_argument("collect_demos: start_variants must be >= 1");
  fs::create_directories(out_dir);
  DemoStats stats;
  stats.requested = count;
  int train_count = (int)std::lround(region_split * count);
  // consecutive demos share a scene across start_variants initial conditions
  for (int i = 0; i < count; ++i) {
    std::string region = i < train_count ? "train" : "wide";
    uint64_t scene_idx = (uint64_t)(i / start_variants);
    uint64_t variant = (uint64_t)(i % start_variants);
    EpisodeResult ep;
    std::vector<scenegen::Sample> frames;
    for (int tries = 0; tries < 50; ++tries) {
      // early retries draw a fresh start in the same scene; persistent
      // failures eventually move to a fresh scene
      uint64_t ep_seed =
          util::mix_seed(seed, scene_idx + (uint64_t)std::max(0, tries - 8) * 7919);
      uint64_t var = variant + (uint64_t)tries * (uint64_t)start_variants;
      frames.clear();
      try {
        ep = run_episode(
            cfg, task, region, ep_seed,
            [&](const WorldState& w) { return scripted_expert(w, cfg); },
            [&](const WorldState& w) { frames.push_back(render_observation(w, cfg)); },
            var);
      } catch (const std::runtime_error&) {
        continue;  // unreachable setup; resample
      }
      if (ep.success) break;
    }
    if (!ep.success)
      throw std::runtime_error("collect_demos: expert failed repeatedly on task " +
                               to_string(task));
    ++stats.succeeded;

    char name[32];
    std::snprintf(name, sizeof(name), "demo_%06d", i);
    fs::path dir = out_dir / name;
    fs::create_directories(dir / "frames");
    json meta = {{"task", to_string(task)}, {"seed", ep.seed},
                 {"start_variant", ep.start_variant},
                 {"region", ep.region},     {"length", ep.length},
                 {"success", ep.success},   {"format_version", 1}};
    std::ofstream(dir / "meta.json") << meta.dump(2) << "\n";
    std::ofstream states(dir / "states.jsonl");
    for (int t = 0; t < ep.length; ++t) {
      char fn[32];
      std::snprintf(fn, sizeof(fn), "%06d", t);
      util::write_png((dir / "frames" / (std::string(fn) + "_left.png")).string(),
                      frames[(size_t)t].left);
      util::write_png((dir / "frames" / (std::string(fn) + "_right.png")).string(),
                      frames[(size_t)t].right);
      const StepRecord& r = ep.steps[(size_t)t];
      json line = {{"t", t},
                   {"measured", arm_state_to_json(r.measured)},
                   {"contact", json::array({r.contact_left, r.contact_right})},
                   {"executed", r.executed.flatten()},
                   {"true", arm_state_to_json(r.true_state)},
                   {"success", r.success}};
      states << line.dump() << "\n";
    }
    ++stats.written;
  }
  return stats;
}

util::Image Demo::frame(int t, bool right_view) const {
  char fn[32];
  std::snprintf(fn, sizeof(fn), "%06d", t);
  return util::read_png(
      (dir / "frames" / (std::string(fn) + (right_view ? "_right.png" : "_left.png")))
          .string());
}

Demo load_demo(const fs::path& dir) {
  std::ifstream mf(dir / "meta.json");
  if (!mf) throw std::runtime_error("missing meta.json in " + dir.string());
  json meta = json::parse(mf);
  Demo d;
  d.task = task_from_string(meta.at("task").get<std::string>());
  d.seed = meta.at("seed").get<uint64_t>();
  d.start_variant = meta.value("start_variant", (uint64_t)0);
  d.region = meta.at("region").get<std::string>();
  d.dir = dir;
  std::ifstream sf(dir / "states.jsonl");
  if (!sf) throw std::runtime_error("missing states.jsonl in " + dir.string());
  std::string line;
  while (std::getline(sf, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    StepRecord r;
    r.measured = arm_state_from_json(j.at("measured"));
    if (j.contains("contact")) {
      r.contact_left = j.at("contact").at(0).get<bool>();
      r.contact_right = j.at("contact").at(1).get<bool>();
    }
    r.true_state = arm_state_from_json(j.at("true"));
    std::array<double, 14> v;
    for (int i = 0; i < 14; ++i) v[i] = j.at("executed").at(i).get<double>();
    r.executed = geom::ActionStep::unflatten(v);
    r.success = j.at("success").get<bool>();
    d.steps.push_back(std::move(r));
  }
  if ((int)d.steps.size() != meta.at("length").get<int>())
    throw std::runtime_error("states.jsonl length mismatch in " + dir.string());
  return d;
}

std::vector<fs::path> list_demos(const fs::path& root) {
  std::vector<fs::path> dirs;
  if (!fs::exists(root)) return dirs;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory() && e.path().filename().string().rfind("demo_", 0) == 0)
      dirs.push_back(e.path());
  std::sort(dirs.begin(), dirs.end());
  return dirs;
}

}  // namespace sst::simrobot
