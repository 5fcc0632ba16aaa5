#include "sst/scenegen/scene.hpp"
#include "sst/scenegen/render.hpp"

#include <cmath>
#include <stdexcept>

namespace sst::scenegen {

double SceneSpec::height_at(double x, double y) const {
  const double cell = 2.0 * patch_half / (grid_n - 1);
  double gx = (x + patch_half) / cell;
  double gy = (y + patch_half) / cell;
  int i = std::clamp((int)std::floor(gx), 0, grid_n - 2);
  int j = std::clamp((int)std::floor(gy), 0, grid_n - 2);
  double fx = std::clamp(gx - i, 0.0, 1.0);
  double fy = std::clamp(gy - j, 0.0, 1.0);
  double h00 = heights[j * grid_n + i], h10 = heights[j * grid_n + i + 1];
  double h01 = heights[(j + 1) * grid_n + i], h11 = heights[(j + 1) * grid_n + i + 1];
  return (1 - fy) * ((1 - fx) * h00 + fx * h10) + fy * ((1 - fx) * h01 + fx * h11);
}

geom::Vec3 SceneSpec::surface_normal(double x, double y) const {
  const double cell = 2.0 * patch_half / (grid_n - 1);
  double gx = (x + patch_half) / cell;
  double gy = (y + patch_half) / cell;
  int i = std::clamp((int)std::floor(gx), 0, grid_n - 2);
  int j = std::clamp((int)std::floor(gy), 0, grid_n - 2);
  double fx = std::clamp(gx - i, 0.0, 1.0);
  double fy = std::clamp(gy - j, 0.0, 1.0);
  double h00 = heights[j * grid_n + i], h10 = heights[j * grid_n + i + 1];
  double h01 = heights[(j + 1) * grid_n + i], h11 = heights[(j + 1) * grid_n + i + 1];
  double dhdx = ((1 - fy) * (h10 - h00) + fy * (h11 - h01)) / cell;
  double dhdy = ((1 - fx) * (h01 - h00) + fx * (h11 - h10)) / cell;
  return geom::Vec3(-dhdx, -dhdy, 1.0).normalized();
}

geom::Vec3 SceneSpec::albedo_at(double x, double y) const {
  double n = texture.eval(x, y);  // roughly in [-1, 1]
  geom::Vec3 a = base_albedo * (1.0 + texture_contrast * n);
  return a.cwiseMax(0.0).cwiseMin(1.0);
}

void RandomizationConfig::validate() const {
  auto chk = [](const Range& r, const char* name) {
    if (!(r.hi >= r.lo)) throw std::invalid_argument(std::string("range empty: ") + name);
  };
  chk(baseline, "baseline");
  chk(focal_px, "focal_px");
  chk(principal_jitter, "principal_jitter");
  chk(cam_distance, "cam_distance");
  chk(cam_tilt, "cam_tilt");
  chk(cam_xy, "cam_xy");
  chk(light_offset, "light_offset");
  chk(light_intensity, "light_intensity");
  chk(ambient, "ambient");
  chk(texture_freq, "texture_freq");
  chk(texture_contrast, "texture_contrast");
  chk(height_amplitude, "height_amplitude");
  chk(height_freq, "height_freq");
  if (baseline.lo <= 0 || baseline.hi > 0.02)
    throw std::invalid_argument("baseline outside physical bounds (0, 20mm]");
  if (focal_px.lo <= 0) throw std::invalid_argument("focal length must be positive");
  if (cam_distance.lo <= 0) throw std::invalid_argument("camera distance must be positive");
  if (image_width <= 0 || image_height <= 0)
    throw std::invalid_argument("image dimensions must be positive");
  if (heightfield_grid < 2) throw std::invalid_argument("heightfield grid too small");
  if (max_primitives < 0) throw std::invalid_argument("max_primitives negative");
}

namespace {

CosineNoise make_noise(util::Rng& rng, int k, double total_amp, const Range& freq) {
  CosineNoise n;
  std::vector<double> w(k);
  double wsum = 0;
  for (auto& x : w) {
    x = rng.uniform(0.5, 1.0);
    wsum += x;
  }
  for (int i = 0; i < k; ++i) {
    CosineNoise::Component c;
    c.amplitude = total_amp * w[i] / wsum;
    c.freq = rng.uniform(freq.lo, freq.hi);
    c.theta = rng.uniform(0.0, 2.0 * M_PI);
    c.phase = rng.uniform(0.0, 2.0 * M_PI);
    n.components.push_back(c);
  }
  return n;
}

geom::Vec3 random_hue(util::Rng& rng) {
  return geom::Vec3(rng.uniform(0.2, 1.0), rng.uniform(0.2, 1.0), rng.uniform(0.2, 1.0));
}

bool frustum_filled(const SceneSpec& scene, const geom::StereoRig& rig) {
  // every probe ray of both cameras must hit the surface
  const double us[] = {0.0, (double)rig.width - 1, 0.0, (double)rig.width - 1,
                       (rig.width - 1) / 2.0};
  const double vs[] = {0.0, 0.0, (double)rig.height - 1, (double)rig.height - 1,
                       (rig.height - 1) / 2.0};
  for (auto cam : {geom::Camera::Left, geom::Camera::Right}) {
    geom::Pose cam_to_world = scene.left_cam_to_world;
    if (cam == geom::Camera::Right)
      cam_to_world = cam_to_world.compose(rig.pose_right_in_left);
    for (int i = 0; i < 5; ++i) {
      geom::Vec3 dir_cam((us[i] - rig.cx) / rig.fx, (vs[i] - rig.cy) / rig.fy, 1.0);
      geom::Vec3 dir = cam_to_world.R * dir_cam.normalized();
      if (!raycast(scene, cam_to_world.t, dir)) return false;
    }
  }
  return true;
}

}  // namespace

SampledScene sample_scene(const RandomizationConfig& config, int64_t index) {
  config.validate();
  util::Rng rng(util::mix_seed(config.master_seed, (uint64_t)index));

  for (int attempt = 0; attempt < 100; ++attempt) {
    SampledScene out;
    geom::StereoRig& rig = out.rig;
    rig.width = config.image_width;
    rig.height = config.image_height;
    rig.fx = rig.fy = rng.uniform(config.focal_px.lo, config.focal_px.hi);
    rig.cx = config.image_width / 2.0 +
             rng.uniform(config.principal_jitter.lo, config.principal_jitter.hi);
    rig.cy = config.image_height / 2.0 +
             rng.uniform(config.principal_jitter.lo, config.principal_jitter.hi);
    rig.baseline = rng.uniform(config.baseline.lo, config.baseline.hi);
    rig.pose_right_in_left =
        geom::Pose(geom::Mat3::Identity(), geom::Vec3(rig.baseline, 0, 0));

    SceneSpec& s = out.scene;
    s.grid_n = config.heightfield_grid;
    s.patch_half = config.patch_half;
    double amp = rng.uniform(config.height_amplitude.lo, config.height_amplitude.hi);
    CosineNoise hnoise = make_noise(rng, 6, amp, config.height_freq);
    s.heights.resize((size_t)s.grid_n * s.grid_n);
    const double cell = 2.0 * s.patch_half / (s.grid_n - 1);
    for (int j = 0; j < s.grid_n; ++j)
      for (int i = 0; i < s.grid_n; ++i)
        s.heights[(size_t)j * s.grid_n + i] =
            hnoise.eval(-s.patch_half + i * cell, -s.patch_half + j * cell);

    s.base_albedo = geom::Vec3(rng.uniform(0.5, 0.9), rng.uniform(0.25, 0.6),
                               rng.uniform(0.2, 0.5));  // tissue-ish tones
    s.texture = make_noise(rng, 6, 1.0, config.texture_freq);
    s.texture_contrast =
        rng.uniform(config.texture_contrast.lo, config.texture_contrast.hi);

    // camera: looking down at the patch, jittered tilt and offset
    double dist = rng.uniform(config.cam_distance.lo, config.cam_distance.hi);
    double tilt = rng.uniform(config.cam_tilt.lo, config.cam_tilt.hi);
    double tilt_dir = rng.uniform(0.0, 2.0 * M_PI);
    geom::Mat3 base;
    base << 1, 0, 0, 0, -1, 0, 0, 0, -1;  // cam z looks along world -z
    geom::Vec3 axis(std::cos(tilt_dir), std::sin(tilt_dir), 0.0);
    geom::Mat3 pert = Eigen::AngleAxisd(tilt, axis).toRotationMatrix();
    geom::Vec3 center(rng.uniform(config.cam_xy.lo, config.cam_xy.hi),
                      rng.uniform(config.cam_xy.lo, config.cam_xy.hi), dist);
    s.left_cam_to_world = geom::Pose(pert * base, center);

    s.light_pos = center + geom::Vec3(rng.uniform(config.light_offset.lo, config.light_offset.hi),
                                      rng.uniform(config.light_offset.lo, config.light_offset.hi),
                                      rng.uniform(0.0, 0.02));
    s.light_intensity = rng.uniform(config.light_intensity.lo, config.light_intensity.hi);
    s.ambient = rng.uniform(config.ambient.lo, config.ambient.hi);

    int nprim = (int)rng.uniform_int(0, config.max_primitives);
    for (int p = 0; p < nprim; ++p) {
      Primitive prim;
      double px = rng.uniform(-0.4, 0.4) * s.patch_half;
      double py = rng.uniform(-0.4, 0.4) * s.patch_half;
      double hz = s.height_at(px, py);
      if (rng.uniform(0.0, 1.0) < 0.5) {
        prim.kind = Primitive::Kind::Sphere;
        prim.radius = rng.uniform(0.002, 0.006);
        prim.p0 = prim.p1 = geom::Vec3(px, py, hz + 0.7 * prim.radius);
      } else {
        prim.kind = Primitive::Kind::Capsule;
        prim.radius = rng.uniform(0.001, 0.002);
        double len = rng.uniform(0.008, 0.02);
        double ang = rng.uniform(0.0, 2.0 * M_PI);
        geom::Vec3 d(std::cos(ang) * len / 2, std::sin(ang) * len / 2, 0.0);
        geom::Vec3 c(px, py, hz + 0.6 * prim.radius);
        prim.p0 = c - d;
        prim.p1 = c + d;
      }
      prim.albedo = random_hue(rng);
      s.primitives.push_back(prim);
    }

    if (frustum_filled(s, rig)) return out;
  }
  throw std::runtime_error(
      "sample_scene: frustum containment failed after 100 attempts (seed " +
      std::to_string(config.master_seed) + ", index " + std::to_string(index) + ")");
}

}  // namespace sst::scenegen
