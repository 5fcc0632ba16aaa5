#include "sst/scenegen/render.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace sst::scenegen {

namespace {

constexpr double kMarchStep = 4e-4;   // meters along the ray
constexpr int kBisectIters = 32;  // 4e-4 * 2^-32 m interval, far below 1e-9

std::optional<double> ray_sphere(const geom::Vec3& o, const geom::Vec3& d,
                                 const geom::Vec3& c, double r) {
  geom::Vec3 oc = o - c;
  double b = oc.dot(d);
  double disc = b * b - (oc.squaredNorm() - r * r);
  if (disc < 0) return std::nullopt;
  double t = -b - std::sqrt(disc);
  if (t < 1e-6) return std::nullopt;
  return t;
}

// Ray-capsule intersection (segment pa-pb, radius r).
std::optional<double> ray_capsule(const geom::Vec3& ro, const geom::Vec3& rd,
                                  const geom::Vec3& pa, const geom::Vec3& pb, double r) {
  geom::Vec3 ba = pb - pa;
  geom::Vec3 oa = ro - pa;
  double baba = ba.dot(ba);
  if (baba < 1e-18) return ray_sphere(ro, rd, pa, r);
  double bard = ba.dot(rd);
  double baoa = ba.dot(oa);
  double rdoa = rd.dot(oa);
  double oaoa = oa.dot(oa);
  double a = baba - bard * bard;
  double b = baba * rdoa - baoa * bard;
  double c = baba * oaoa - baoa * baoa - r * r * baba;
  double h = b * b - a * c;
  if (h >= 0.0 && std::abs(a) > 1e-18) {
    double t = (-b - std::sqrt(h)) / a;
    double y = baoa + t * bard;
    if (y > 0.0 && y < baba && t > 1e-6) return t;
    // caps
    geom::Vec3 cap = (y <= 0.0) ? pa : pb;
    auto ts = ray_sphere(ro, rd, cap, r);
    if (ts) return ts;
    return std::nullopt;
  }
  auto t0 = ray_sphere(ro, rd, pa, r);
  auto t1 = ray_sphere(ro, rd, pb, r);
  if (t0 && t1) return std::min(*t0, *t1);
  return t0 ? t0 : t1;
}

// First heightfield crossing along the ray, if any.
std::optional<double> ray_heightfield(const SceneSpec& s, const geom::Vec3& o,
                                      const geom::Vec3& d) {
  double zmin = *std::min_element(s.heights.begin(), s.heights.end()) - 1e-4;
  double zmax = *std::max_element(s.heights.begin(), s.heights.end()) + 1e-4;

  // clip the ray to the box [-ph, ph]^2 x [zmin, zmax]
  double t0 = 1e-5, t1 = 0.5;
  auto clip = [&](double p, double dp, double lo, double hi) {
    if (std::abs(dp) < 1e-15) return p >= lo && p <= hi;
    double ta = (lo - p) / dp, tb = (hi - p) / dp;
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    return true;
  };
  if (!clip(o.x(), d.x(), -s.patch_half, s.patch_half)) return std::nullopt;
  if (!clip(o.y(), d.y(), -s.patch_half, s.patch_half)) return std::nullopt;
  if (!clip(o.z(), d.z(), zmin, zmax)) return std::nullopt;
  if (t0 >= t1) return std::nullopt;

  auto f = [&](double t) {
    geom::Vec3 p = o + t * d;
    return p.z() - s.height_at(p.x(), p.y());
  };
  double tp = t0, fp = f(t0);
  if (fp <= 0) return std::nullopt;  // starting below the surface
  for (double t = t0 + kMarchStep; t <= t1 + kMarchStep; t += kMarchStep) {
    double tc = std::min(t, t1);
    double fc = f(tc);
    if (fc <= 0) {
      double lo = tp, hi = tc;
      for (int i = 0; i < kBisectIters; ++i) {
        double mid = 0.5 * (lo + hi);
        if (f(mid) > 0)
          lo = mid;
        else
          hi = mid;
      }
      return 0.5 * (lo + hi);
    }
    tp = tc;
    fp = fc;
    if (tc >= t1) break;
  }
  return std::nullopt;
}

}  // namespace

std::optional<Hit> raycast(const SceneSpec& scene, const geom::Vec3& origin,
                           const geom::Vec3& dir) {
  geom::Vec3 d = dir.normalized();
  Hit best;
  best.t = std::numeric_limits<double>::infinity();
  bool found = false;

  if (auto t = ray_heightfield(scene, origin, d)) {
    best.t = *t;
    best.point = origin + *t * d;
    best.normal = scene.surface_normal(best.point.x(), best.point.y());
    best.albedo = scene.albedo_at(best.point.x(), best.point.y());
    best.primitive = -1;
    found = true;
  }
  for (int i = 0; i < (int)scene.primitives.size(); ++i) {
    const Primitive& p = scene.primitives[i];
    std::optional<double> t = p.kind == Primitive::Kind::Sphere
                                  ? ray_sphere(origin, d, p.p0, p.radius)
                                  : ray_capsule(origin, d, p.p0, p.p1, p.radius);
    if (t && *t < best.t) {
      best.t = *t;
      best.point = origin + *t * d;
      if (p.kind == Primitive::Kind::Sphere) {
        best.normal = (best.point - p.p0).normalized();
      } else {
        geom::Vec3 ba = p.p1 - p.p0;
        double s = ba.squaredNorm() > 1e-18
                       ? std::clamp((best.point - p.p0).dot(ba) / ba.squaredNorm(), 0.0, 1.0)
                       : 0.0;
        best.normal = (best.point - (p.p0 + s * ba)).normalized();
      }
      best.albedo = p.albedo;
      best.primitive = i;
      found = true;
    }
  }
  if (!found) return std::nullopt;
  return best;
}

geom::Vec3 shade(const SceneSpec& scene, const Hit& hit) {
  geom::Vec3 to_light = scene.light_pos - hit.point;
  double dist = to_light.norm();
  double diffuse = std::max(0.0, hit.normal.dot(to_light / dist));
  double falloff = std::min(2.0, 0.0064 / (dist * dist));  // unit at 80 mm
  double term = scene.ambient + (1.0 - scene.ambient) * scene.light_intensity *
                                    diffuse * falloff;
  return (hit.albedo * term).cwiseMax(0.0).cwiseMin(1.0);
}

Sample render_stereo(const SceneSpec& scene, const geom::StereoRig& rig) {
  Sample out;
  out.rig = rig;
  out.left = util::Image(rig.width, rig.height);
  out.right = util::Image(rig.width, rig.height);
  out.pointmap_left = geom::PointMap(rig.height, rig.width);
  out.pointmap_right = geom::PointMap(rig.height, rig.width);

  geom::Pose world_to_left = scene.left_cam_to_world.inverse();
  for (auto cam : {geom::Camera::Left, geom::Camera::Right}) {
    geom::Pose cam_to_world = scene.left_cam_to_world;
    if (cam == geom::Camera::Right)
      cam_to_world = cam_to_world.compose(rig.pose_right_in_left);
    util::Image& img = cam == geom::Camera::Left ? out.left : out.right;
    geom::PointMap& pm =
        cam == geom::Camera::Left ? out.pointmap_left : out.pointmap_right;

    for (int r = 0; r < rig.height; ++r) {
      for (int c = 0; c < rig.width; ++c) {
        geom::Vec3 dir_cam((c - rig.cx) / rig.fx, (r - rig.cy) / rig.fy, 1.0);
        geom::Vec3 dir = cam_to_world.R * dir_cam.normalized();
        auto hit = raycast(scene, cam_to_world.t, dir);
        if (!hit) continue;
        geom::Vec3 color = shade(scene, *hit);
        uint8_t* px = img.px(r, c);
        for (int k = 0; k < 3; ++k)
          px[k] = (uint8_t)std::lround(255.0 * color[k]);
        geom::Vec3 p_left = world_to_left.apply(hit->point);
        pm.points[pm.idx(r, c)] = p_left.cast<float>();
        pm.valid[pm.idx(r, c)] = 1;
      }
    }
  }
  return out;
}

}  // namespace sst::scenegen
