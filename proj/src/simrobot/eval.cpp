#include "sst/simrobot/eval.hpp"

#include "sst/nn/checkpoint.hpp"
#include "sst/policy/train.hpp"
#include "sst/util/rng.hpp"

#include <fstream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace sst::simrobot {

EvalResult evaluate(const SimConfig& cfg, Task task, const EvalConfig& eval_cfg,
                    const fs::path& policy_ckpt, const fs::path& geo_ckpt,
                    const fs::path& log_out) {
  std::unique_ptr<geotrans::GeometryTransformer<float>> geo;
  policy::LoadedPolicy lp;
  if (!eval_cfg.use_expert) {
    geo = geotrans::load_geo_checkpoint(geo_ckpt);
    geo->set_trainable(false);
    lp = policy::load_policy_checkpoint(policy_ckpt,
                                        nn::checkpoint_fingerprint(geo_ckpt));
  }

  std::ofstream log(log_out);
  if (!log) throw std::runtime_error("cannot open " + log_out.string());

  EvalResult res;
  for (int e = 0; e < eval_cfg.episodes; ++e) {
    uint64_t ep_seed = util::mix_seed(eval_cfg.seed, (uint64_t)e);
    Controller controller;
    auto buffer = std::make_shared<policy::EnsembleBuffer>(
        eval_cfg.use_expert ? 1 : lp.policy->cfg.chunk);
    if (eval_cfg.use_expert) {
      controller = [&cfg](const WorldState& w) { return scripted_expert(w, cfg); };
    } else {
      controller = [&, buffer](const WorldState& w) {
        scenegen::Sample obs = render_observation(w, cfg);
        // observation honesty: only images, measured proprioception and the
        // gripper contact sensors
        policy::ActionChunk chunk =
            policy::predict_chunk(*geo, *lp.policy, obs.left, obs.right, w.measured(),
                                  w.contact_left(), w.contact_right());
        buffer->push(w.t, std::move(chunk));
        return policy::ensemble(*buffer, w.t, lp.policy->cfg.m);
      };
    }
    EpisodeResult ep;
    bool setup_failed = false;
    try {
      ep = run_episode(cfg, task, eval_cfg.region, ep_seed, controller);
    } catch (const std::runtime_error&) {
      setup_failed = true;  // unreachable target for this seed
    }
    ++res.episodes;
    if (!setup_failed && ep.success) ++res.successes;
    res.mean_length += setup_failed ? 0 : ep.length;
    log << json{{"episode", e},
                {"seed", ep_seed},
                {"task", to_string(task)},
                {"region", eval_cfg.region},
                {"success", !setup_failed && ep.success},
                {"length", setup_failed ? 0 : ep.length},
                {"setup_failed", setup_failed}}
               .dump()
        << "\n";
  }
  res.success_rate = (double)res.successes / std::max(1, res.episodes);
  res.mean_length /= std::max(1, res.episodes);
  return res;
}

}  // namespace sst::simrobot
