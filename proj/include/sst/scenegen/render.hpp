#pragma once

#include "sst/scenegen/scene.hpp"
#include "sst/util/image.hpp"

namespace sst::scenegen {

struct Sample {
  util::Image left, right;
  geom::PointMap pointmap_left, pointmap_right;  // both in the left-camera frame
  geom::StereoRig rig;
  uint64_t seed = 0;
  int64_t scene_id = 0;
};

struct Hit {
  double t = 0;
  geom::Vec3 point = geom::Vec3::Zero();   // world frame
  geom::Vec3 normal = geom::Vec3::Zero();  // world frame, unit
  geom::Vec3 albedo = geom::Vec3::Zero();
  int primitive = -1;  // -1 = heightfield
};

// Nearest intersection of a world-space ray with the scene, or nullopt.
std::optional<Hit> raycast(const SceneSpec& scene, const geom::Vec3& origin,
                           const geom::Vec3& dir);

// Ray-casts both cameras. Point maps hold hit points in the left-camera
// frame; misses are invalid pixels.
Sample render_stereo(const SceneSpec& scene, const geom::StereoRig& rig);

// Lambertian + ambient shading for a hit, in [0,1]^3.
geom::Vec3 shade(const SceneSpec& scene, const Hit& hit);

}  // namespace sst::scenegen
