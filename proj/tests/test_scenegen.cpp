#include "doctest.h"

#include "sst/scenegen/dataset.hpp"
#include "sst/scenegen/render.hpp"
#include "sst/scenegen/scene.hpp"

#include <filesystem>
#include <fstream>

using namespace sst;
using namespace sst::scenegen;
namespace fs = std::filesystem;

namespace {

RandomizationConfig small_config(uint64_t seed = 42) {
  RandomizationConfig c;
  c.image_width = c.image_height = 48;
  c.master_seed = seed;
  return c;
}

fs::path temp_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("sst_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("scene sampling is deterministic in (seed, index)") {
  auto cfg = small_config();
  auto a = sample_scene(cfg, 17);
  auto b = sample_scene(cfg, 17);
  CHECK(a.scene == b.scene);
  CHECK(a.rig.baseline == b.rig.baseline);
  auto c = sample_scene(cfg, 18);
  CHECK_FALSE(a.scene == c.scene);
}

TEST_CASE("zero-amplitude heightfield is exactly planar") {
  auto cfg = small_config();
  cfg.height_amplitude = {0.0, 0.0};
  auto s = sample_scene(cfg, 3);
  for (double h : s.scene.heights) CHECK(h == 0.0);
}

TEST_CASE("sampled baselines stay within the configured range") {
  auto cfg = small_config(7);
  double lo = 1e9, hi = -1e9;
  for (int i = 0; i < 300; ++i) {
    auto s = sample_scene(cfg, i);
    lo = std::min(lo, s.rig.baseline);
    hi = std::max(hi, s.rig.baseline);
  }
  CHECK(lo >= cfg.baseline.lo);
  CHECK(hi <= cfg.baseline.hi);
  // the range is actually explored
  CHECK(hi - lo > 0.5 * (cfg.baseline.hi - cfg.baseline.lo));
}

TEST_CASE("fronto-parallel plane renders exact depth") {
  auto cfg = small_config();
  cfg.height_amplitude = {0.0, 0.0};
  cfg.cam_tilt = {0.0, 0.0};
  cfg.cam_xy = {0.0, 0.0};
  cfg.max_primitives = 0;
  cfg.cam_distance = {0.08, 0.08};
  auto s = sample_scene(cfg, 1);
  auto sample = render_stereo(s.scene, s.rig);
  int valid = 0;
  for (size_t i = 0; i < sample.pointmap_left.valid.size(); ++i) {
    if (!sample.pointmap_left.valid[i]) continue;
    ++valid;
    CHECK(sample.pointmap_left.points[i].z() == doctest::Approx(0.08).epsilon(1e-6));
  }
  CHECK(valid == 48 * 48);
}

TEST_CASE("sphere silhouette area matches the projected disk") {
  auto cfg = small_config();
  cfg.image_width = cfg.image_height = 96;
  cfg.height_amplitude = {0.0, 0.0};
  cfg.cam_tilt = {0.0, 0.0};
  cfg.cam_xy = {0.0, 0.0};
  cfg.max_primitives = 0;
  cfg.cam_distance = {0.08, 0.08};
  auto s = sample_scene(cfg, 1);
  // place one sphere on the optical axis
  Primitive sphere;
  sphere.kind = Primitive::Kind::Sphere;
  sphere.radius = 0.006;
  double zc = 0.02;  // world height of the center
  sphere.p0 = sphere.p1 = geom::Vec3(0, 0, zc);
  sphere.albedo = geom::Vec3(1, 0, 0);
  s.scene.primitives = {sphere};

  auto sample = render_stereo(s.scene, s.rig);
  int count = 0;
  for (int r = 0; r < 96; ++r)
    for (int c = 0; c < 96; ++c) {
      auto& p = sample.pointmap_left.points[sample.pointmap_left.idx(r, c)];
      if (sample.pointmap_left.valid[sample.pointmap_left.idx(r, c)] &&
          p.z() < 0.08 - zc - 1e-5)
        ++count;
    }
  double depth_to_center = 0.08 - zc;
  // silhouette of a sphere subtends asin(r/d); projected radius fx*tan(asin(r/d))
  double rr = s.rig.fx * std::tan(std::asin(sphere.radius / depth_to_center));
  double analytic = M_PI * rr * rr;
  CHECK(std::abs(count - analytic) / analytic < 0.02);
}

TEST_CASE("ground-truth points reproject onto their own pixels") {
  auto cfg = small_config(99);
  auto s = sample_scene(cfg, 5);
  auto sample = render_stereo(s.scene, s.rig);
  double worst = 0;
  for (auto cam : {geom::Camera::Left, geom::Camera::Right}) {
    auto& pm = cam == geom::Camera::Left ? sample.pointmap_left : sample.pointmap_right;
    for (int r = 0; r < pm.height; ++r)
      for (int c = 0; c < pm.width; ++c) {
        if (!pm.valid[pm.idx(r, c)]) continue;
        auto px = geom::project(s.rig, pm.points[pm.idx(r, c)].cast<double>(), cam);
        worst = std::max(worst, (px - geom::Vec2(c, r)).norm());
      }
  }
  CHECK(worst < 0.5);
}

TEST_CASE("left and right maps describe the same surface") {
  auto cfg = small_config(31);
  cfg.max_primitives = 0;
  auto s = sample_scene(cfg, 2);
  auto sample = render_stereo(s.scene, s.rig);
  geom::Pose left_to_world = s.scene.left_cam_to_world;
  double worst = 0;
  auto& pm = sample.pointmap_right;
  for (size_t i = 0; i < pm.valid.size(); ++i) {
    if (!pm.valid[i]) continue;
    geom::Vec3 w = left_to_world.apply(pm.points[i].cast<double>());
    // the point must satisfy the surface equation the left map samples
    worst = std::max(worst, std::abs(w.z() - s.scene.height_at(w.x(), w.y())));
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("sample round-trips bit-exactly through the on-disk format") {
  auto dir = temp_dir("roundtrip");
  auto cfg = small_config(3);
  auto s = sample_scene(cfg, 0);
  auto sample = render_stereo(s.scene, s.rig);
  sample.seed = 3;
  sample.scene_id = 0;
  write_sample(sample, dir / "s0");
  auto back = read_sample(dir / "s0");
  CHECK(back.left.rgb == sample.left.rgb);
  CHECK(back.right.rgb == sample.right.rgb);
  CHECK(back.pointmap_left.valid == sample.pointmap_left.valid);
  for (size_t i = 0; i < sample.pointmap_left.points.size(); ++i)
    CHECK(back.pointmap_left.points[i] == sample.pointmap_left.points[i]);
  CHECK(back.rig.baseline == sample.rig.baseline);
}

TEST_CASE("corrupted point-map files raise distinct errors") {
  auto dir = temp_dir("corrupt");
  geom::PointMap pm(4, 4);
  write_pointmap(dir / "ok.s3dp", pm);

  // magic corruption
  {
    std::fstream f(dir / "ok.s3dp", std::ios::in | std::ios::out | std::ios::binary);
    f.write("XXXX", 4);
  }
  CHECK_THROWS_AS(read_pointmap(dir / "ok.s3dp"), FormatError);

  // truncation
  write_pointmap(dir / "trunc.s3dp", pm);
  fs::resize_file(dir / "trunc.s3dp", 20);
  CHECK_THROWS_AS(read_pointmap(dir / "trunc.s3dp"), TruncationError);

  // header dims exceed payload
  write_pointmap(dir / "dims.s3dp", pm);
  {
    std::fstream f(dir / "dims.s3dp", std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(8);
    uint32_t big = 64;
    f.write((const char*)&big, 4);
  }
  CHECK_THROWS_AS(read_pointmap(dir / "dims.s3dp"), TruncationError);
}

TEST_CASE("png round-trip is lossless") {
  auto dir = temp_dir("png");
  util::Image img(33, 17);
  for (size_t i = 0; i < img.rgb.size(); ++i) img.rgb[i] = (uint8_t)(i * 31 + 7);
  util::write_png((dir / "x.png").string(), img);
  auto back = util::read_png((dir / "x.png").string());
  CHECK(back.width == 33);
  CHECK(back.height == 17);
  CHECK(back.rgb == img.rgb);
}

TEST_CASE("pseudo-label thresholding controls the valid mask") {
  auto cfg = small_config(4);
  auto s = sample_scene(cfg, 0);
  auto sample = render_stereo(s.scene, s.rig);

  PredictedMaps pred;
  pred.left = sample.pointmap_left;
  pred.right = sample.pointmap_right;
  std::fill(pred.left.valid.begin(), pred.left.valid.end(), 1);
  std::fill(pred.right.valid.begin(), pred.right.valid.end(), 1);
  pred.conf_left.assign(pred.left.valid.size(), 1.5f);
  pred.conf_right.assign(pred.right.valid.size(), 1.5f);

  Sample work = sample;
  // threshold at the parameterization floor keeps everything
  CHECK(apply_confidence_threshold(work, pred, 1.0) == doctest::Approx(1.0));
  // +inf discards everything
  work = sample;
  CHECK(apply_confidence_threshold(work, pred,
                                   std::numeric_limits<double>::infinity()) ==
        doctest::Approx(0.0));
}
