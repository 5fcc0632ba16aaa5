#include "doctest.h"

#include "sst/geom.hpp"
#include "sst/util/rng.hpp"

using namespace sst;
using geom::ArmState;
using geom::Mat3;
using geom::Pose;
using geom::Vec2;
using geom::Vec3;

namespace {

Mat3 random_rotation(util::Rng& rng) {
  Eigen::Quaterniond q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
  q.normalize();
  return q.toRotationMatrix();
}

Pose random_pose(util::Rng& rng, double tscale = 0.1) {
  return Pose(random_rotation(rng),
              Vec3(rng.normal(0, tscale), rng.normal(0, tscale), rng.normal(0, tscale)));
}

geom::StereoRig test_rig() {
  geom::StereoRig rig;
  rig.fx = rig.fy = 140.0;
  rig.cx = 48.0;
  rig.cy = 48.0;
  rig.baseline = 0.005;
  rig.width = rig.height = 96;
  rig.pose_right_in_left = Pose(Mat3::Identity(), Vec3(rig.baseline, 0, 0));
  return rig;
}

}  // namespace

TEST_CASE("euler identity and single-axis cases") {
  CHECK(geom::euler_from_matrix(Mat3::Identity()).norm() == doctest::Approx(0.0));
  // 0.5 rad about x -> (0.5, 0, 0)
  Mat3 rx = Eigen::AngleAxisd(0.5, Vec3::UnitX()).toRotationMatrix();
  Vec3 e = geom::euler_from_matrix(rx);
  CHECK(e.x() == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(std::abs(e.y()) < 1e-12);
  CHECK(std::abs(e.z()) < 1e-12);
  // 0.3 rad about z -> (0, 0, 0.3)
  Mat3 rz = Eigen::AngleAxisd(0.3, Vec3::UnitZ()).toRotationMatrix();
  Vec3 ez = geom::euler_from_matrix(rz);
  CHECK(ez.z() == doctest::Approx(0.3).epsilon(1e-12));
}

TEST_CASE("euler round-trip on 1000 random rotations") {
  util::Rng rng(123);
  double worst_safe = 0, worst_any = 0;
  for (int i = 0; i < 1000; ++i) {
    Mat3 r = random_rotation(rng);
    Mat3 rec = geom::matrix_from_euler(geom::euler_from_matrix(r));
    double err = (rec - r).cwiseAbs().maxCoeff();
    worst_any = std::max(worst_any, err);
    double pitch = std::asin(std::clamp(-r(2, 0), -1.0, 1.0));
    if (std::abs(pitch) < M_PI / 2 - 1e-3) worst_safe = std::max(worst_safe, err);
  }
  CHECK(worst_safe < 1e-9);   // guaranteed region
  CHECK(worst_any < 1e-6);    // conditioning degrades near the lock
}

TEST_CASE("gimbal lock reconstruction stays exact") {
  for (double sign : {1.0, -1.0}) {
    Mat3 r = (Eigen::AngleAxisd(0.7, Vec3::UnitZ()) *
              Eigen::AngleAxisd(sign * M_PI / 2, Vec3::UnitY()) *
              Eigen::AngleAxisd(-0.4, Vec3::UnitX()))
                 .toRotationMatrix();
    Vec3 e = geom::euler_from_matrix(r);
    CHECK(e.z() == 0.0);  // yaw convention at the lock
    Mat3 rec = geom::matrix_from_euler(e);
    CHECK((rec - r).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("relative action identity and pure translation") {
  util::Rng rng(5);
  ArmState s;
  s.pose_left = random_pose(rng);
  s.pose_right = random_pose(rng);
  s.jaw_left = 0.2;
  s.jaw_right = 0.4;
  auto a = geom::relative_action(s, s);
  CHECK(a.delta_translation_left.norm() == doctest::Approx(0.0));
  CHECK(a.delta_euler_left.norm() < 1e-9);
  CHECK(a.jaw_left == 0.2);

  ArmState n = s;
  n.pose_left.t += Vec3(0.01, 0.02, 0.03);
  auto a2 = geom::relative_action(s, n);
  CHECK((a2.delta_translation_left - Vec3(0.01, 0.02, 0.03)).norm() < 1e-12);
  CHECK(a2.delta_euler_left.norm() < 1e-12);
}

TEST_CASE("pure z rotation gives yaw component") {
  ArmState prev, next;
  next.pose_left.R = Eigen::AngleAxisd(0.3, Vec3::UnitZ()).toRotationMatrix();
  auto a = geom::relative_action(prev, next);
  CHECK(a.delta_euler_left.z() == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(std::abs(a.delta_euler_left.x()) < 1e-12);
  CHECK(std::abs(a.delta_euler_left.y()) < 1e-12);
}

TEST_CASE("apply/relative round-trip on 1000 random pose pairs") {
  util::Rng rng(77);
  double worst = 0;
  for (int i = 0; i < 1000; ++i) {
    ArmState prev;
    prev.pose_left = random_pose(rng);
    prev.pose_right = random_pose(rng);
    ArmState next;
    next.pose_left = random_pose(rng);
    next.pose_right = random_pose(rng);
    next.jaw_left = rng.uniform(0, 1);
    next.jaw_right = rng.uniform(0, 1);
    auto a = geom::relative_action(prev, next);
    auto rec = geom::apply_action(prev, a);
    auto a2 = geom::relative_action(prev, rec);
    auto f1 = a.flatten(), f2 = a2.flatten();
    for (int k = 0; k < 14; ++k) worst = std::max(worst, std::abs(f1[k] - f2[k]));
    // the reconstructed state matches too
    worst = std::max(worst, (rec.pose_left.R - next.pose_left.R).cwiseAbs().maxCoeff());
    worst = std::max(worst, (rec.pose_left.t - next.pose_left.t).cwiseAbs().maxCoeff());
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("frame-offset invariance of relative actions") {
  util::Rng rng(88);
  double worst_rot = 0, worst_tr = 0;
  for (int i = 0; i < 200; ++i) {
    Pose err = random_pose(rng, 0.05);  // one constant corruption per trajectory
    ArmState a, b;
    a.pose_left = random_pose(rng);
    a.pose_right = random_pose(rng);
    b.pose_left = random_pose(rng);
    b.pose_right = random_pose(rng);

    ArmState am = a, bm = b;
    am.pose_left = err.compose(a.pose_left);
    am.pose_right = err.compose(a.pose_right);
    bm.pose_left = err.compose(b.pose_left);
    bm.pose_right = err.compose(b.pose_right);

    auto clean = geom::relative_action(a, b);
    auto corrupted = geom::relative_action(am, bm);
    // relative rotation exactly unchanged
    worst_rot = std::max(
        worst_rot, (clean.delta_euler_left - corrupted.delta_euler_left).cwiseAbs().maxCoeff());
    // relative translation rotated by exactly R_err
    worst_tr = std::max(worst_tr,
                        (corrupted.delta_translation_left -
                         err.R * clean.delta_translation_left)
                            .cwiseAbs()
                            .maxCoeff());
    // translation-only corruption leaves the action untouched
    Pose terr(Mat3::Identity(), err.t);
    ArmState at = a, bt = b;
    at.pose_left = terr.compose(a.pose_left);
    bt.pose_left = terr.compose(b.pose_left);
    at.pose_right = terr.compose(a.pose_right);
    bt.pose_right = terr.compose(b.pose_right);
    auto shifted = geom::relative_action(at, bt);
    worst_tr = std::max(worst_tr, (shifted.delta_translation_left -
                                   clean.delta_translation_left)
                                      .cwiseAbs()
                                      .maxCoeff());
  }
  CHECK(worst_rot < 1e-9);
  CHECK(worst_tr < 1e-9);
}

TEST_CASE("projection basics") {
  auto rig = test_rig();
  // principal point at any depth projects to (cx, cy)
  Vec2 px = geom::project(rig, Vec3(0, 0, 0.08), geom::Camera::Left);
  CHECK((px - Vec2(rig.cx, rig.cy)).norm() < 1e-12);
  // fronto-parallel disparity = fx * b / z
  Vec3 p(0.003, -0.002, 0.06);
  Vec2 ul = geom::project(rig, p, geom::Camera::Left);
  Vec2 ur = geom::project(rig, p, geom::Camera::Right);
  CHECK(ul.x() - ur.x() == doctest::Approx(rig.fx * rig.baseline / p.z()).epsilon(1e-12));
  CHECK(ul.y() == doctest::Approx(ur.y()).epsilon(1e-12));
  CHECK_THROWS(geom::project(rig, Vec3(0, 0, -0.05), geom::Camera::Left));
  CHECK_THROWS(geom::unproject(rig, Vec2(10, 10), -1.0, geom::Camera::Left));
}

TEST_CASE("project/unproject round-trip over a 16x16 grid") {
  auto rig = test_rig();
  double worst = 0;
  for (auto cam : {geom::Camera::Left, geom::Camera::Right}) {
    for (int i = 0; i < 16; ++i)
      for (int j = 0; j < 16; ++j) {
        Vec2 px(6.0 * i, 6.0 * j);
        double depth = 0.04 + 0.005 * ((i * 16 + j) % 16);
        Vec3 p = geom::unproject(rig, px, depth, cam);
        Vec2 rec = geom::project(rig, p, cam);
        worst = std::max(worst, (rec - px).norm());
      }
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("pose json round-trip") {
  util::Rng rng(9);
  Pose p = random_pose(rng);
  Pose q = Pose::from_json(p.to_json());
  CHECK((p.R - q.R).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((p.t - q.t).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("rig validation rejects bad parameters") {
  auto rig = test_rig();
  CHECK_NOTHROW(rig.validate());
  auto bad = rig;
  bad.baseline = 0;
  CHECK_THROWS(bad.validate());
  bad = rig;
  bad.cx = 200;
  CHECK_THROWS(bad.validate());
}
