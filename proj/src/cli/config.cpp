#include "sst/cli/config.hpp"

#include <fstream>

using nlohmann::json;

namespace sst::cli {

void check_keys(const json& j, const std::vector<std::string>& allowed,
                const std::string& context) {
  if (!j.is_object()) throw std::invalid_argument(context + ": expected an object");
  for (const auto& [k, v] : j.items())
    if (std::find(allowed.begin(), allowed.end(), k) == allowed.end())
      throw std::invalid_argument("unknown " + context + " key: " + k);
}

namespace {

json range_to_json(const scenegen::Range& r) { return json::array({r.lo, r.hi}); }

scenegen::Range range_from_json(const json& j, const std::string& context) {
  if (!j.is_array() || j.size() != 2)
    throw std::invalid_argument(context + ": a range is a [lo, hi] pair");
  return {j.at(0).get<double>(), j.at(1).get<double>()};
}

}  // namespace

json scene_config_to_json(const scenegen::RandomizationConfig& c) {
  return {{"image_width", c.image_width},
          {"image_height", c.image_height},
          {"baseline", range_to_json(c.baseline)},
          {"focal_px", range_to_json(c.focal_px)},
          {"principal_jitter", range_to_json(c.principal_jitter)},
          {"cam_distance", range_to_json(c.cam_distance)},
          {"cam_tilt", range_to_json(c.cam_tilt)},
          {"cam_xy", range_to_json(c.cam_xy)},
          {"light_offset", range_to_json(c.light_offset)},
          {"light_intensity", range_to_json(c.light_intensity)},
          {"ambient", range_to_json(c.ambient)},
          {"texture_freq", range_to_json(c.texture_freq)},
          {"texture_contrast", range_to_json(c.texture_contrast)},
          {"height_amplitude", range_to_json(c.height_amplitude)},
          {"height_freq", range_to_json(c.height_freq)},
          {"max_primitives", c.max_primitives},
          {"heightfield_grid", c.heightfield_grid},
          {"patch_half", c.patch_half},
          {"master_seed", c.master_seed}};
}

scenegen::RandomizationConfig scene_config_from_json(const json& j) {
  scenegen::RandomizationConfig c;
  json defaults = scene_config_to_json(c);
  std::vector<std::string> allowed;
  for (const auto& [k, v] : defaults.items()) allowed.push_back(k);
  check_keys(j, allowed, "scenegen config");
  auto num = [&](const char* k, auto& field) {
    if (j.contains(k)) field = j.at(k).get<std::decay_t<decltype(field)>>();
  };
  auto rng = [&](const char* k, scenegen::Range& field) {
    if (j.contains(k)) field = range_from_json(j.at(k), k);
  };
  num("image_width", c.image_width);
  num("image_height", c.image_height);
  rng("baseline", c.baseline);
  rng("focal_px", c.focal_px);
  rng("principal_jitter", c.principal_jitter);
  rng("cam_distance", c.cam_distance);
  rng("cam_tilt", c.cam_tilt);
  rng("cam_xy", c.cam_xy);
  rng("light_offset", c.light_offset);
  rng("light_intensity", c.light_intensity);
  rng("ambient", c.ambient);
  rng("texture_freq", c.texture_freq);
  rng("texture_contrast", c.texture_contrast);
  rng("height_amplitude", c.height_amplitude);
  rng("height_freq", c.height_freq);
  num("max_primitives", c.max_primitives);
  num("heightfield_grid", c.heightfield_grid);
  num("patch_half", c.patch_half);
  num("master_seed", c.master_seed);
  c.validate();
  return c;
}

json sim_config_to_json(const simrobot::SimConfig& c) {
  return {{"max_delta_translation", c.max_delta_translation},
          {"max_delta_rotation", c.max_delta_rotation},
          {"grasp_radius", c.grasp_radius},
          {"lift_height", c.lift_height},
          {"touch_radius", c.touch_radius},
          {"close_threshold", c.close_threshold},
          {"jaw_open", c.jaw_open},
          {"jaw_max", c.jaw_max},
          {"horizon", c.horizon},
          {"kin_err_rot_max", c.kin_err_rot_max},
          {"kin_err_tr_max", c.kin_err_tr_max},
          {"instrument_radius", c.instrument_radius},
          {"instrument_length", c.instrument_length},
          {"target_radius", c.target_radius},
          {"train_region", json::array({c.train_region.half_x, c.train_region.half_y})},
          {"wide_region", json::array({c.wide_region.half_x, c.wide_region.half_y})}};
}

simrobot::SimConfig sim_config_from_json(const json& j) {
  simrobot::SimConfig c;
  json defaults = sim_config_to_json(c);
  std::vector<std::string> allowed;
  for (const auto& [k, v] : defaults.items()) allowed.push_back(k);
  check_keys(j, allowed, "simrobot config");
  auto num = [&](const char* k, auto& field) {
    if (j.contains(k)) field = j.at(k).get<std::decay_t<decltype(field)>>();
  };
  auto region = [&](const char* k, simrobot::Region& field) {
    if (!j.contains(k)) return;
    const json& r = j.at(k);
    if (!r.is_array() || r.size() != 2)
      throw std::invalid_argument(std::string(k) + ": a region is a [half_x, half_y] pair");
    field = {r.at(0).get<double>(), r.at(1).get<double>()};
  };
  num("max_delta_translation", c.max_delta_translation);
  num("max_delta_rotation", c.max_delta_rotation);
  num("grasp_radius", c.grasp_radius);
  num("lift_height", c.lift_height);
  num("touch_radius", c.touch_radius);
  num("close_threshold", c.close_threshold);
  num("jaw_open", c.jaw_open);
  num("jaw_max", c.jaw_max);
  num("horizon", c.horizon);
  num("kin_err_rot_max", c.kin_err_rot_max);
  num("kin_err_tr_max", c.kin_err_tr_max);
  num("instrument_radius", c.instrument_radius);
  num("instrument_length", c.instrument_length);
  num("target_radius", c.target_radius);
  region("train_region", c.train_region);
  region("wide_region", c.wide_region);
  return c;  // validated later, once the scene section is wired in
}

json train_geo_config_to_json(const geotrans::TrainGeoConfig& c) {
  return {{"model", c.model.to_json()}, {"lr", c.lr},
          {"epochs", c.epochs},         {"seed", c.seed},
          {"max_samples", c.max_samples}, {"log_every", c.log_every}};
}

geotrans::TrainGeoConfig train_geo_config_from_json(const json& j) {
  check_keys(j, {"model", "lr", "epochs", "seed", "max_samples", "log_every"},
             "geotrans config");
  geotrans::TrainGeoConfig c;
  if (j.contains("model")) c.model = geotrans::GeoConfig::from_json(j.at("model"));
  if (j.contains("lr")) c.lr = j.at("lr").get<double>();
  if (j.contains("epochs")) c.epochs = j.at("epochs").get<int>();
  if (j.contains("seed")) c.seed = j.at("seed").get<uint64_t>();
  if (j.contains("max_samples")) c.max_samples = j.at("max_samples").get<int64_t>();
  if (j.contains("log_every")) c.log_every = j.at("log_every").get<int>();
  return c;
}

json train_policy_config_to_json(const policy::TrainPolicyConfig& c) {
  return {{"model", c.policy.to_json()},
          {"connector", connector::to_string(c.variant)},
          {"d_low", c.d_low},
          {"lr", c.lr},
          {"steps", c.steps},
          {"seed", c.seed},
          {"log_every", c.log_every},
          {"proprio_noise_tr", c.proprio_noise_tr},
          {"proprio_noise_rot", c.proprio_noise_rot},
          {"proprio_noise_jaw", c.proprio_noise_jaw}};
}

policy::TrainPolicyConfig train_policy_config_from_json(const json& j) {
  check_keys(j,
             {"model", "connector", "d_low", "lr", "steps", "seed", "log_every",
              "proprio_noise_tr", "proprio_noise_rot", "proprio_noise_jaw"},
             "policy config");
  policy::TrainPolicyConfig c;
  if (j.contains("model")) c.policy = policy::PolicyConfig::from_json(j.at("model"));
  if (j.contains("connector"))
    c.variant = connector::variant_from_string(j.at("connector").get<std::string>());
  if (j.contains("d_low")) c.d_low = j.at("d_low").get<int>();
  if (j.contains("lr")) c.lr = j.at("lr").get<double>();
  if (j.contains("steps")) c.steps = j.at("steps").get<int>();
  if (j.contains("seed")) c.seed = j.at("seed").get<uint64_t>();
  if (j.contains("log_every")) c.log_every = j.at("log_every").get<int>();
  if (j.contains("proprio_noise_tr"))
    c.proprio_noise_tr = j.at("proprio_noise_tr").get<double>();
  if (j.contains("proprio_noise_rot"))
    c.proprio_noise_rot = j.at("proprio_noise_rot").get<double>();
  if (j.contains("proprio_noise_jaw"))
    c.proprio_noise_jaw = j.at("proprio_noise_jaw").get<double>();
  return c;
}

json RunConfig::to_json() const {
  return {{"seed", seed},
          {"deterministic", deterministic},
          {"scenegen", scene_config_to_json(scenegen)},
          {"geotrans", train_geo_config_to_json(geotrans)},
          {"policy", train_policy_config_to_json(policy)},
          {"simrobot", sim_config_to_json(simrobot)}};
}

RunConfig RunConfig::from_json(const json& j) {
  check_keys(j, {"seed", "deterministic", "scenegen", "geotrans", "policy", "simrobot"},
             "run config");
  RunConfig c;
  if (j.contains("seed")) c.seed = j.at("seed").get<uint64_t>();
  if (j.contains("deterministic")) c.deterministic = j.at("deterministic").get<bool>();
  if (j.contains("scenegen")) c.scenegen = scene_config_from_json(j.at("scenegen"));
  if (j.contains("geotrans")) c.geotrans = train_geo_config_from_json(j.at("geotrans"));
  if (j.contains("policy")) c.policy = train_policy_config_from_json(j.at("policy"));
  if (j.contains("simrobot")) c.simrobot = sim_config_from_json(j.at("simrobot"));
  // one scene section drives both the dataset generator and the simulator
  c.simrobot.scene = c.scenegen;
  c.simrobot.validate();
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::invalid_argument("cannot open config file " + path.string());
  return from_json(json::parse(f));
}

void write_provenance(const std::filesystem::path& path, const std::string& command,
                      const RunConfig& cfg, const json& extra) {
  json j = {{"command", command}, {"version", kCodeVersion}, {"config", cfg.to_json()}};
  if (!extra.is_null()) j["args"] = extra;
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << j.dump(2) << "\n";
}

}  // namespace sst::cli
