// sst: command-line entry point for the full pipeline — synthetic stereo data
// generation, geometry-transformer training, pseudo-labeling, demonstration
// collection, policy training, closed-loop evaluation, benchmarking, point
// cloud export and plotting.
//
// Exit codes: 0 success, 1 malformed input (bad flags, unreadable or invalid
// files), 2 invariant violation (e.g. frozen-parameter drift, checkpoint
// fingerprint mismatch).

#include "sst/cli/config.hpp"
#include "sst/cli/plot.hpp"
#include "sst/geotrans/train.hpp"
#include "sst/nn/checkpoint.hpp"
#include "sst/policy/train.hpp"
#include "sst/scenegen/dataset.hpp"
#include "sst/simrobot/eval.hpp"
#include "sst/util/rng.hpp"

#include <chrono>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace sst;

namespace {

// Invariant violations exit with code 2 instead of 1.
struct InvariantError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CommonOpts {
  std::string config_path;
  uint64_t seed = 0;
  bool seed_set = false;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config_path, "JSON run configuration file");
  cmd->add_option("--seed", opts.seed, "master seed (overrides the config file)")
      ->each([&opts](const std::string&) { opts.seed_set = true; });
}

cli::RunConfig resolve(const CommonOpts& opts) {
  cli::RunConfig cfg;
  if (!opts.config_path.empty()) cfg = cli::RunConfig::load(opts.config_path);
  if (opts.seed_set) cfg.seed = opts.seed;
  cfg.simrobot.scene = cfg.scenegen;
  return cfg;
}

int cmd_gen_data(const CommonOpts& opts, const std::string& out, int64_t num) {
  cli::RunConfig cfg = resolve(opts);
  if (num < 1) throw std::invalid_argument("gen-data: --num must be >= 1");
  scenegen::RandomizationConfig rc = cfg.scenegen;
  rc.master_seed = cfg.seed;
  rc.validate();
  fs::create_directories(out);
  for (int64_t i = 0; i < num; ++i) {
    auto sampled = scenegen::sample_scene(rc, i);
    scenegen::Sample s = scenegen::render_stereo(sampled.scene, sampled.rig);
    s.seed = util::mix_seed(rc.master_seed, (uint64_t)i);
    s.scene_id = i;
    scenegen::write_sample(s, scenegen::sample_dir(out, i));
  }
  cli::write_provenance(fs::path(out) / "provenance.json", "gen-data", cfg,
                        {{"out", out}, {"num", num}});
  std::cout << json{{"samples", num}, {"out", out}}.dump() << "\n";
  return 0;
}

int cmd_train_geo(const CommonOpts& opts, const std::string& data, const std::string& out,
                  const std::string& metrics) {
  cli::RunConfig cfg = resolve(opts);
  geotrans::TrainGeoConfig tc = cfg.geotrans;
  tc.seed = cfg.seed;
  fs::path metrics_path = metrics.empty() ? fs::path(out).concat(".metrics.jsonl")
                                          : fs::path(metrics);
  auto res = geotrans::train_geo(data, tc, out, metrics_path);
  cli::write_provenance(fs::path(out).concat(".provenance.json"), "train-geo", cfg,
                        {{"data", data}, {"out", out}});
  std::cout << json{{"steps", res.steps},
                    {"initial_loss", res.initial_loss_conf},
                    {"final_loss", res.final_loss_conf},
                    {"diverged", res.diverged}}
                   .dump()
            << "\n";
  return res.diverged ? 2 : 0;
}

int cmd_pseudo_label(const std::string& geo_ckpt, const std::string& in,
                     const std::string& out, double conf_threshold) {
  std::shared_ptr<geotrans::GeometryTransformer<float>> geo =
      geotrans::load_geo_checkpoint(geo_ckpt);
  auto stats =
      scenegen::pseudo_label(geotrans::make_predictor(geo), in, out, conf_threshold);
  std::cout << json{{"retained", stats.retained}, {"discarded", stats.discarded}}.dump()
            << "\n";
  return 0;
}

int cmd_collect_demos(const CommonOpts& opts, const std::string& task_name, int num,
                      double region_split, int start_variants, const std::string& out) {
  cli::RunConfig cfg = resolve(opts);
  auto stats = simrobot::collect_demos(cfg.simrobot, simrobot::task_from_string(task_name),
                                       num, cfg.seed, region_split, out, start_variants);
  cli::write_provenance(fs::path(out) / "provenance.json", "collect-demos", cfg,
                        {{"task", task_name},
                         {"num", num},
                         {"region_split", region_split},
                         {"start_variants", start_variants}});
  std::cout << json{{"requested", stats.requested}, {"written", stats.written}}.dump()
            << "\n";
  return 0;
}

int cmd_train_policy(const CommonOpts& opts, const std::string& demos,
                     const std::string& geo_ckpt, const std::string& connector_name,
                     const std::string& out, const std::string& metrics) {
  cli::RunConfig cfg = resolve(opts);
  policy::TrainPolicyConfig tc = cfg.policy;
  tc.seed = cfg.seed;
  if (!connector_name.empty()) tc.variant = connector::variant_from_string(connector_name);
  fs::path metrics_path = metrics.empty() ? fs::path(out).concat(".metrics.jsonl")
                                          : fs::path(metrics);
  auto res = policy::train_policy(demos, geo_ckpt, tc, out, metrics_path);
  cli::write_provenance(fs::path(out).concat(".provenance.json"), "train-policy", cfg,
                        {{"demos", demos},
                         {"geo_ckpt", geo_ckpt},
                         {"connector", connector::to_string(tc.variant)}});
  std::cout << json{{"steps", res.steps},
                    {"initial_loss", res.initial_loss},
                    {"final_loss", res.final_loss}}
                   .dump()
            << "\n";
  return 0;
}

int cmd_eval(const CommonOpts& opts, const std::string& policy_ckpt,
             const std::string& geo_ckpt, const std::string& task_name, int episodes,
             const std::string& region, bool expert, const std::string& log) {
  cli::RunConfig cfg = resolve(opts);
  simrobot::EvalConfig ec;
  ec.episodes = episodes;
  ec.seed = cfg.seed;
  ec.region = region;
  ec.use_expert = expert;
  if (!expert && (policy_ckpt.empty() || geo_ckpt.empty()))
    throw std::invalid_argument("eval: --policy-ckpt and --geo-ckpt required without --expert");
  fs::path log_path = log.empty() ? fs::path("eval_log.jsonl") : fs::path(log);
  auto res = simrobot::evaluate(cfg.simrobot, simrobot::task_from_string(task_name), ec,
                                policy_ckpt, geo_ckpt, log_path);
  cli::write_provenance(log_path.string() + ".provenance.json", "eval", cfg,
                        {{"task", task_name}, {"region", region}, {"expert", expert}});
  std::cout << json{{"episodes", res.episodes},
                    {"successes", res.successes},
                    {"success_rate", res.success_rate},
                    {"mean_length", res.mean_length}}
                   .dump()
            << "\n";
  return 0;
}

int cmd_bench(const CommonOpts& opts, const std::string& geo_ckpt, int runs) {
  if (runs < 1) throw std::invalid_argument("bench: --runs must be >= 1");
  cli::RunConfig cfg = resolve(opts);
  auto geo = geotrans::load_geo_checkpoint(geo_ckpt);
  scenegen::RandomizationConfig rc = cfg.scenegen;
  rc.image_width = geo->cfg.image_width;
  rc.image_height = geo->cfg.image_height;
  rc.master_seed = cfg.seed;
  auto sampled = scenegen::sample_scene(rc, 0);
  scenegen::Sample s = scenegen::render_stereo(sampled.scene, sampled.rig);

  std::vector<double> ms(runs);
  for (int i = 0; i < runs; ++i) {
    auto t0 = std::chrono::steady_clock::now();
    volatile float sink =
        geotrans::run_prediction(*geo, s.left, s.right).conf_left[0];
    (void)sink;
    auto t1 = std::chrono::steady_clock::now();
    ms[(size_t)i] = std::chrono::duration<double, std::milli>(t1 - t0).count();
  }
  double mean = 0;
  for (double v : ms) mean += v;
  mean /= runs;
  std::nth_element(ms.begin(), ms.begin() + runs / 2, ms.end());
  std::cout << json{{"runs", runs}, {"mean_ms", mean}, {"median_ms", ms[(size_t)runs / 2]}}
                   .dump()
            << "\n";
  return 0;
}

int cmd_export_ply(const std::string& geo_ckpt, const std::string& sample,
                   const std::string& out, double conf_threshold) {
  auto geo = geotrans::load_geo_checkpoint(geo_ckpt);
  scenegen::Sample s = scenegen::read_sample(sample);
  auto pred = geotrans::run_prediction(*geo, s.left, s.right);
  int64_t vertices = geotrans::export_pointcloud(pred, s.left, s.right, conf_threshold, out);
  std::cout << json{{"vertices", vertices}, {"out", out}}.dump() << "\n";
  return 0;
}

int cmd_plot(const std::string& metrics, const std::string& out) {
  std::ifstream f(metrics);
  if (!f) throw std::invalid_argument("cannot open metrics file " + metrics);
  std::vector<double> xs, ys;
  std::map<std::string, std::pair<int, int>> success;  // label -> (hits, total)
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    if (j.contains("step")) {
      double y = j.contains("loss") ? j.at("loss").get<double>()
                                    : j.at("loss_conf").get<double>();
      xs.push_back(j.at("step").get<double>());
      ys.push_back(y);
    } else if (j.contains("success")) {
      std::string label = j.value("region", std::string("all"));
      auto& [hits, total] = success[label];
      hits += j.at("success").get<bool>() ? 1 : 0;
      ++total;
    }
  }
  fs::create_directories(out);
  int written = 0;
  if (!xs.empty()) {
    util::write_png((fs::path(out) / "loss_curve.png").string(),
                    cli::render_loss_curve(xs, ys));
    ++written;
  }
  if (!success.empty()) {
    std::vector<std::pair<std::string, double>> bars;
    for (const auto& [label, counts] : success)
      bars.emplace_back(label, (double)counts.first / counts.second);
    util::write_png((fs::path(out) / "success_bars.png").string(),
                    cli::render_success_bars(bars));
    ++written;
  }
  if (written == 0)
    throw std::invalid_argument("plot: no loss or success records in " + metrics);
  std::cout << json{{"images", written}, {"out", out}}.dump() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"stereo geometry + visuomotor policy pipeline"};
  app.require_subcommand(1);

  CommonOpts opts;
  std::string out, data, metrics, geo_ckpt, policy_ckpt, sample, task = "lift",
                                                                 region = "train",
                                                                 connector_name, in_dir,
                                                                 log;
  int64_t num = 16;
  int episodes = 50, runs = 100, demo_count = 10, start_variants = 3;
  double conf_threshold = 1.5, region_split = 1.0;
  bool expert = false;

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic stereo dataset");
  add_common(gen, opts);
  gen->add_option("--out", out, "output dataset directory")->required();
  gen->add_option("--num", num, "number of samples");

  auto* tg = app.add_subcommand("train-geo", "train the geometry transformer");
  add_common(tg, opts);
  tg->add_option("--data", data, "dataset directory")->required();
  tg->add_option("--out", out, "checkpoint path")->required();
  tg->add_option("--metrics", metrics, "metrics JSONL path");

  auto* pl = app.add_subcommand("pseudo-label", "relabel frames with model predictions");
  pl->add_option("--geo-ckpt", geo_ckpt, "geometry checkpoint")->required();
  pl->add_option("--in", in_dir, "input frames directory")->required();
  pl->add_option("--out", out, "output dataset directory")->required();
  pl->add_option("--conf-threshold", conf_threshold, "confidence retention threshold")
      ->required();

  auto* cd = app.add_subcommand("collect-demos", "record scripted-expert demonstrations");
  add_common(cd, opts);
  cd->add_option("--task", task, "lift | dual-touch");
  cd->add_option("--num", demo_count, "number of demonstrations");
  cd->add_option("--region-split", region_split, "fraction drawn from the train region");
  cd->add_option("--start-variants", start_variants,
                 "initial conditions recorded per scene");
  cd->add_option("--out", out, "output demos directory")->required();

  auto* tp = app.add_subcommand("train-policy", "train the action-chunking policy");
  add_common(tp, opts);
  tp->add_option("--demos", data, "demonstrations directory")->required();
  tp->add_option("--geo-ckpt", geo_ckpt, "frozen geometry checkpoint")->required();
  tp->add_option("--connector", connector_name, "msfc | lfc | msc");
  tp->add_option("--out", out, "checkpoint path")->required();
  tp->add_option("--metrics", metrics, "metrics JSONL path");

  auto* ev = app.add_subcommand("eval", "closed-loop evaluation");
  add_common(ev, opts);
  ev->add_option("--policy-ckpt", policy_ckpt, "policy checkpoint");
  ev->add_option("--geo-ckpt", geo_ckpt, "geometry checkpoint");
  ev->add_option("--task", task, "lift | dual-touch");
  ev->add_option("--episodes", episodes, "episodes to run");
  ev->add_option("--region", region, "train | wide");
  ev->add_flag("--expert", expert, "run the scripted expert instead of a policy");
  ev->add_option("--log", log, "episode log JSONL path");

  auto* be = app.add_subcommand("bench", "inference latency of the geometry stack");
  add_common(be, opts);
  be->add_option("--geo-ckpt", geo_ckpt, "geometry checkpoint")->required();
  be->add_option("--runs", runs, "number of timed inferences");

  auto* ex = app.add_subcommand("export-ply", "export a predicted point cloud");
  ex->add_option("--geo-ckpt", geo_ckpt, "geometry checkpoint")->required();
  ex->add_option("--sample", sample, "sample directory")->required();
  ex->add_option("--out", out, "PLY output path")->required();
  ex->add_option("--conf-threshold", conf_threshold, "confidence threshold");

  auto* pt = app.add_subcommand("plot", "render loss curves / success bars from JSONL");
  pt->add_option("--metrics", metrics, "metrics or episode-log JSONL")->required();
  pt->add_option("--out", out, "output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen_data(opts, out, num);
    if (tg->parsed()) return cmd_train_geo(opts, data, out, metrics);
    if (pl->parsed()) return cmd_pseudo_label(geo_ckpt, in_dir, out, conf_threshold);
    if (cd->parsed())
      return cmd_collect_demos(opts, task, demo_count, region_split, start_variants, out);
    if (tp->parsed()) return cmd_train_policy(opts, data, geo_ckpt, connector_name, out, metrics);
    if (ev->parsed())
      return cmd_eval(opts, policy_ckpt, geo_ckpt, task, episodes, region, expert, log);
    if (be->parsed()) return cmd_bench(opts, geo_ckpt, runs);
    if (ex->parsed()) return cmd_export_ply(geo_ckpt, sample, out, conf_threshold);
    if (pt->parsed()) return cmd_plot(metrics, out);
  } catch (const policy::FrozenDriftError& e) {
    std::cerr << "invariant violation: " << e.what() << "\n";
    return 2;
  } catch (const InvariantError& e) {
    std::cerr << "invariant violation: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    // fingerprint mismatches are invariant violations, not malformed input
    if (std::string(e.what()).find("fingerprint") != std::string::npos) {
      std::cerr << "invariant violation: " << e.what() << "\n";
      return 2;
    }
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
