#include "sst/policy/train.hpp"

#include "sst/nn/checkpoint.hpp"
#include "sst/util/rng.hpp"

#include <cstring>
#include <fstream>
#include <unordered_map>

namespace fs = std::filesystem;
using nlohmann::json;

namespace sst::policy {

namespace {

// Stereo-concatenated pyramid levels of one frame as plain matrices.
using FramePyramid = std::array<nn::Mat<float>, 4>;

FramePyramid frame_pyramid(const geotrans::GeometryTransformer<float>& geo,
                           const util::Image& left, const util::Image& right) {
  geotrans::LatentPyramid pyr = geotrans::run_pyramid(geo, left, right);
  FramePyramid out;
  for (int l = 0; l < 4; ++l) {
    auto lv = nn::constant<float>(pyr.levels[l][0]);
    auto rv = nn::constant<float>(pyr.levels[l][1]);
    out[l] = connector::stereo_concat(lv, rv, pyr.grid_h, pyr.grid_w)->val;
  }
  return out;
}

std::array<nn::Var<float>, 4> as_vars(const FramePyramid& p) {
  return {nn::constant<float>(p[0]), nn::constant<float>(p[1]),
          nn::constant<float>(p[2]), nn::constant<float>(p[3])};
}

nn::Var<float> proprio_var(const geom::ArmState& measured, bool contact_left,
                           bool contact_right) {
  auto v = proprio_vector(measured, contact_left, contact_right);
  nn::Mat<float> m(1, kProprioDim);
  for (int i = 0; i < kProprioDim; ++i) m(0, i) = (float)v(i);
  return nn::constant<float>(std::move(m));
}

}  // namespace

std::vector<std::array<double, 14>> demo_targets(const simrobot::Demo& demo) {
  std::vector<std::array<double, 14>> targets;
  targets.reserve(demo.steps.size());
  for (size_t t = 0; t < demo.steps.size(); ++t) {
    if (t + 1 < demo.steps.size())
      targets.push_back(
          geom::relative_action(demo.steps[t].true_state, demo.steps[t + 1].true_state)
              .flatten());
    else
      targets.push_back(demo.steps[t].executed.flatten());
  }
  return targets;
}

ActionChunk predict_chunk(const geotrans::GeometryTransformer<float>& geo,
                          const Policy<float>& policy, const util::Image& left,
                          const util::Image& right, const geom::ArmState& measured,
                          bool contact_left, bool contact_right) {
  FramePyramid pyr = frame_pyramid(geo, left, right);
  auto out = policy.forward(as_vars(pyr),
                            proprio_var(measured, contact_left, contact_right));
  return policy.to_chunk(out->val);
}

void save_policy_checkpoint(const fs::path& path, const Policy<float>& policy,
                            const ActionStats& stats, const std::string& geo_fingerprint,
                            uint64_t seed, int64_t steps) {
  json conn = {{"variant", connector::to_string(policy.conn_cfg.variant)},
               {"dec_width", policy.conn_cfg.dec_width},
               {"policy_width", policy.conn_cfg.policy_width},
               {"d_low", policy.conn_cfg.d_low}};
  json meta = {{"kind", "policy"},
               {"config", policy.cfg.to_json()},
               {"connector", conn},
               {"grid_h", policy.grid_h},
               {"grid_w", policy.grid_w},
               {"action_stats", stats.to_json()},
               {"geo_fingerprint", geo_fingerprint},
               {"seed", seed},
               {"steps", steps}};
  nn::write_checkpoint(path, meta, policy.ps);
}

LoadedPolicy load_policy_checkpoint(const fs::path& path,
                                    const std::optional<std::string>& expected_geo_fingerprint,
                                    bool allow_mismatch) {
  json meta = nn::read_checkpoint_meta(path);
  if (meta.value("kind", "") != "policy")
    throw std::runtime_error("not a policy checkpoint: " + path.string());
  LoadedPolicy lp;
  lp.geo_fingerprint = meta.at("geo_fingerprint").get<std::string>();
  if (expected_geo_fingerprint && *expected_geo_fingerprint != lp.geo_fingerprint &&
      !allow_mismatch)
    throw std::runtime_error(
        "policy checkpoint was trained against a different geometry checkpoint "
        "(fingerprint " +
        lp.geo_fingerprint + ", expected " + *expected_geo_fingerprint + ")");
  PolicyConfig pc = PolicyConfig::from_json(meta.at("config"));
  connector::ConnectorConfig cc;
  cc.variant = connector::variant_from_string(meta.at("connector").at("variant"));
  cc.dec_width = meta.at("connector").at("dec_width").get<int>();
  cc.policy_width = meta.at("connector").at("policy_width").get<int>();
  cc.d_low = meta.at("connector").at("d_low").get<int>();
  lp.policy = std::make_unique<Policy<float>>(pc, cc, meta.at("grid_h").get<int>(),
                                              meta.at("grid_w").get<int>(), 0);
  nn::read_checkpoint(path, lp.policy->ps);
  lp.stats = ActionStats::from_json(meta.at("action_stats"));
  return lp;
}

TrainPolicyResult train_policy(const fs::path& demos_dir, const fs::path& geo_ckpt,
                               const TrainPolicyConfig& cfg, const fs::path& ckpt_out,
                               const fs::path& metrics_out) {
  auto geo = geotrans::load_geo_checkpoint(geo_ckpt);
  geo->set_trainable(false);
  std::string geo_fp = nn::checkpoint_fingerprint(geo_ckpt);
  auto geo_before = [&] {
    std::vector<nn::Mat<float>> snap;
    for (auto& [n, p] : geo->ps.params) snap.push_back(p->val);
    return snap;
  }();

  auto demo_dirs = simrobot::list_demos(demos_dir);
  if (demo_dirs.empty())
    throw std::runtime_error("no demonstrations found in " + demos_dir.string());
  std::vector<simrobot::Demo> demos;
  std::vector<std::vector<std::array<double, 14>>> targets;
  std::vector<std::array<double, 14>> all_actions;
  for (const auto& d : demo_dirs) {
    demos.push_back(simrobot::load_demo(d));
    targets.push_back(demo_targets(demos.back()));
    for (const auto& a : targets.back()) all_actions.push_back(a);
  }
  ActionStats stats = ActionStats::compute(all_actions);

  connector::ConnectorConfig cc;
  cc.variant = cfg.variant;
  cc.dec_width = geo->cfg.dec_width;
  cc.policy_width = cfg.policy.width;
  cc.d_low = cfg.d_low;
  Policy<float> policy(cfg.policy, cc, geo->cfg.grid_h(), geo->cfg.grid_w(),
                       util::mix_seed(cfg.seed, 0x706f6c));

  nn::Adam<float> opt;
  opt.lr = (float)cfg.lr;
  opt.total_steps = cfg.steps;
  opt.init(policy.ps);

  std::ofstream metrics(metrics_out);
  if (!metrics) throw std::runtime_error("cannot open " + metrics_out.string());
  metrics.precision(10);

  // pyramids are reused heavily across steps; cache them per frame
  std::unordered_map<int64_t, FramePyramid> cache;
  auto pyramid_for = [&](int d, int t) -> const FramePyramid& {
    int64_t key = (int64_t)d << 20 | t;
    auto it = cache.find(key);
    if (it == cache.end())
      it = cache
               .emplace(key, frame_pyramid(*geo, demos[(size_t)d].frame(t, false),
                                           demos[(size_t)d].frame(t, true)))
               .first;
    return it->second;
  };

  util::Rng rng(util::mix_seed(cfg.seed, 0x747261696e));
  // fresh random sensing bias per sample (see TrainPolicyConfig)
  auto noise_pose = [&]() {
    geom::Vec3 axis(rng.normal(), rng.normal(), rng.normal());
    double an = axis.norm();
    axis = an > 0 ? geom::Vec3(axis / an) : geom::Vec3::UnitZ();
    geom::Vec3 dir(rng.normal(), rng.normal(), rng.normal());
    double dn = dir.norm();
    dir = dn > 0 ? geom::Vec3(dir / dn) : geom::Vec3::UnitX();
    return geom::Pose(
        Eigen::AngleAxisd(rng.uniform(0, cfg.proprio_noise_rot), axis).toRotationMatrix(),
        dir * rng.uniform(0, cfg.proprio_noise_tr));
  };
  auto perturb = [&](geom::ArmState s) {
    if (cfg.proprio_noise_tr > 0 || cfg.proprio_noise_rot > 0) {
      s.pose_left = noise_pose().compose(s.pose_left);
      s.pose_right = noise_pose().compose(s.pose_right);
    }
    if (cfg.proprio_noise_jaw > 0) {
      s.jaw_left = std::clamp(
          s.jaw_left + rng.uniform(-cfg.proprio_noise_jaw, cfg.proprio_noise_jaw), 0.0, 1.0);
      s.jaw_right = std::clamp(
          s.jaw_right + rng.uniform(-cfg.proprio_noise_jaw, cfg.proprio_noise_jaw), 0.0, 1.0);
    }
    return s;
  };

  const int k = cfg.policy.chunk;
  TrainPolicyResult res;
  for (int step_i = 0; step_i < cfg.steps; ++step_i) {
    int d = (int)rng.uniform_int(0, (int64_t)demos.size() - 1);
    int len = (int)demos[(size_t)d].steps.size();
    int t = (int)rng.uniform_int(0, len - 1);

    nn::Mat<float> target(k, 14);
    std::vector<uint8_t> mask((size_t)k, 0);
    for (int i = 0; i < k; ++i) {
      if (t + i < len) {
        for (int j = 0; j < 14; ++j) target(i, j) = (float)targets[(size_t)d][t + i][j];
        mask[(size_t)i] = 1;
      } else {
        target.row(i).setZero();  // padded; masked out of the loss
      }
    }

    const auto& rec = demos[(size_t)d].steps[(size_t)t];
    auto pred = policy.forward(
        as_vars(pyramid_for(d, t)),
        proprio_var(perturb(rec.measured), rec.contact_left, rec.contact_right));
    auto loss = loss_mse<float>(pred, target, mask, stats);
    double lv = loss->val(0, 0);
    if (!std::isfinite(lv)) throw std::runtime_error("train-policy: non-finite loss");
    if (step_i == 0) res.initial_loss = lv;
    res.final_loss = lv;
    policy.ps.zero_grad();
    nn::backward(loss);
    opt.step(policy.ps);
    ++res.steps;
    if (cfg.log_every > 0 && (res.steps % cfg.log_every == 0))
      metrics << json{{"step", res.steps}, {"loss", lv}}.dump() << "\n";
  }
  metrics.flush();

  // freeze contract: the geometry parameters must be bitwise unchanged
  for (size_t i = 0; i < geo->ps.params.size(); ++i) {
    const auto& now = geo->ps.params[i].second->val;
    if (now.rows() != geo_before[i].rows() || now.cols() != geo_before[i].cols() ||
        std::memcmp(now.data(), geo_before[i].data(), sizeof(float) * now.size()) != 0)
      throw FrozenDriftError("frozen geometry parameter drifted: " +
                             geo->ps.params[i].first);
  }

  save_policy_checkpoint(ckpt_out, policy, stats, geo_fp, cfg.seed, res.steps);
  return res;
}

}  // namespace sst::policy
