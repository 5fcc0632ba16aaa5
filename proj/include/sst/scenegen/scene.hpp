#pragma once

// Procedural "endoscopic" scene model: a band-limited-noise heightfield patch
// with embedded sphere/capsule primitives, procedural albedo texture and a
// point light. World frame: surface plane is z = 0, heights extend toward the
// camera along +z; the camera looks down from z > 0.

#include "sst/geom.hpp"
#include "sst/util/rng.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace sst::scenegen {

// Sum of K random cosines; band-limited and smooth.
struct CosineNoise {
  struct Component {
    double amplitude, freq, theta, phase;  // freq in cycles/meter
    bool operator==(const Component&) const = default;
  };
  std::vector<Component> components;

  double eval(double x, double y) const {
    double s = 0;
    for (const auto& c : components)
      s += c.amplitude *
           std::cos(2.0 * M_PI * c.freq * (x * std::cos(c.theta) + y * std::sin(c.theta)) +
                    c.phase);
    return s;
  }
  bool operator==(const CosineNoise&) const = default;
};

struct Primitive {
  enum class Kind { Sphere, Capsule } kind = Kind::Sphere;
  geom::Vec3 p0 = geom::Vec3::Zero();  // center (sphere) / segment start (capsule)
  geom::Vec3 p1 = geom::Vec3::Zero();  // segment end (capsule only)
  double radius = 0;
  geom::Vec3 albedo = geom::Vec3::Ones();

  bool operator==(const Primitive& o) const {
    return kind == o.kind && p0 == o.p0 && p1 == o.p1 && radius == o.radius &&
           albedo == o.albedo;
  }
};

struct SceneSpec {
  // heightfield grid over [-patch_half, patch_half]^2, sampled from noise
  int grid_n = 0;
  double patch_half = 0;  // meters
  std::vector<double> heights;  // grid_n x grid_n, row-major (y major)

  std::vector<Primitive> primitives;

  // procedural albedo: base color modulated by texture noise
  geom::Vec3 base_albedo = geom::Vec3::Ones();
  CosineNoise texture;
  double texture_contrast = 0;

  geom::Vec3 light_pos = geom::Vec3::Zero();  // world frame
  double light_intensity = 1.0;
  double ambient = 0.2;

  // camera-to-world pose of the left camera (world = scene frame)
  geom::Pose left_cam_to_world;

  double height_at(double x, double y) const;           // bilinear on the grid
  geom::Vec3 surface_normal(double x, double y) const;  // analytic per bilinear cell
  geom::Vec3 albedo_at(double x, double y) const;

  bool operator==(const SceneSpec& o) const {
    return grid_n == o.grid_n && patch_half == o.patch_half && heights == o.heights &&
           primitives == o.primitives && base_albedo == o.base_albedo &&
           texture == o.texture && texture_contrast == o.texture_contrast &&
           light_pos == o.light_pos && light_intensity == o.light_intensity &&
           ambient == o.ambient &&
           left_cam_to_world.R == o.left_cam_to_world.R &&
           left_cam_to_world.t == o.left_cam_to_world.t;
  }
};

struct Range {
  double lo = 0, hi = 0;
  bool contains(double v) const { return v >= lo && v <= hi; }
};

struct RandomizationConfig {
  int image_width = 96, image_height = 96;
  Range baseline{0.002, 0.008};         // meters, endoscope-like
  Range focal_px{110.0, 160.0};         // fx = fy
  Range principal_jitter{-3.0, 3.0};    // pixels around image center
  Range cam_distance{0.055, 0.095};     // camera height above the patch
  Range cam_tilt{0.0, 0.12};            // radians
  Range cam_xy{-0.008, 0.008};          // lateral camera offset
  Range light_offset{-0.02, 0.02};      // light position around the camera
  Range light_intensity{0.6, 1.4};
  Range ambient{0.15, 0.35};
  Range texture_freq{30.0, 120.0};      // cycles/meter
  Range texture_contrast{0.1, 0.5};
  Range height_amplitude{0.0, 0.008};   // total heightfield amplitude, meters
  Range height_freq{8.0, 40.0};         // cycles/meter
  int max_primitives = 3;
  int heightfield_grid = 64;
  double patch_half = 0.07;  // meters
  uint64_t master_seed = 0;

  void validate() const;
};

// Deterministic function of (config.master_seed, index). Rejection-samples
// the rig pose until the surface fills both cameras' frustums; throws after
// 100 failed attempts.
struct SampledScene {
  SceneSpec scene;
  geom::StereoRig rig;
};
SampledScene sample_scene(const RandomizationConfig& config, int64_t index);

}  // namespace sst::scenegen
