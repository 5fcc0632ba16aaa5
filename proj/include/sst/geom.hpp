#pragma once

// SE(3) pose algebra, pinhole stereo camera model and the endoscope-centric
// relative action representation. Units: meters and radians; pixels only
// inside the camera model. Euler convention: intrinsic Z-Y-X (yaw, pitch,
// roll), R = Rz(yaw) * Ry(pitch) * Rx(roll).

#include <Eigen/Dense>

#include <array>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace sst::geom {

using Mat3 = Eigen::Matrix3d;
using Vec3 = Eigen::Vector3d;
using Vec2 = Eigen::Vector2d;

struct Pose {
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();

  Pose() = default;
  Pose(const Mat3& R_, const Vec3& t_) : R(R_), t(t_) {}

  Pose compose(const Pose& other) const { return {R * other.R, R * other.t + t}; }
  Pose inverse() const { return {R.transpose(), -(R.transpose() * t)}; }
  Vec3 apply(const Vec3& p) const { return R * p + t; }

  // max-norm orthonormality defect of R
  double orthonormality_defect() const {
    return (R.transpose() * R - Mat3::Identity()).cwiseAbs().maxCoeff();
  }
  bool is_valid(double tol = 1e-9) const {
    return orthonormality_defect() < tol && R.determinant() > 0.0;
  }

  nlohmann::json to_json() const;
  static Pose from_json(const nlohmann::json& j);
};

// Intrinsic Z-Y-X Euler angles, returned as (roll, pitch, yaw) about
// (x, y, z). Near gimbal lock (|pitch| -> pi/2) yaw is set to 0 and roll
// absorbs the free angle; matrix reconstruction stays exact.
Vec3 euler_from_matrix(const Mat3& R);
Mat3 matrix_from_euler(const Vec3& rpy);
bool near_gimbal_lock(const Mat3& R, double tol = 1e-6);

// 14-D action step: per arm, translation delta (m), Euler rotation delta
// (rad), absolute jaw angle (rad).
struct ActionStep {
  Vec3 delta_translation_left = Vec3::Zero();
  Vec3 delta_euler_left = Vec3::Zero();
  double jaw_left = 0.0;
  Vec3 delta_translation_right = Vec3::Zero();
  Vec3 delta_euler_right = Vec3::Zero();
  double jaw_right = 0.0;

  std::array<double, 14> flatten() const;
  static ActionStep unflatten(const std::array<double, 14>& v);
  bool finite() const;
};

struct ArmState {
  Pose pose_left, pose_right;
  double jaw_left = 0.0, jaw_right = 0.0;
};

// Eq-style relative action between consecutive frames: translation delta is
// the plain difference in the endoscope frame, rotation delta is
// R_prev^T * R_next expressed as Euler angles, jaw is taken absolute from
// the next state.
ActionStep relative_action(const ArmState& prev, const ArmState& next);

// Exact inverse of relative_action.
ArmState apply_action(const ArmState& prev, const ActionStep& a);

struct StereoRig {
  double fx = 0, fy = 0, cx = 0, cy = 0;  // shared by both cameras
  double baseline = 0;                    // meters
  Pose pose_right_in_left;                // maps right-cam coords into left frame
  int width = 0, height = 0;

  void validate() const {
    if (fx <= 0 || fy <= 0) throw std::invalid_argument("rig: focal length must be > 0");
    if (baseline <= 0) throw std::invalid_argument("rig: baseline must be > 0");
    if (cx <= 0 || cx >= width || cy <= 0 || cy >= height)
      throw std::invalid_argument("rig: principal point outside image");
  }
};

enum class Camera { Left, Right };

// Projects a point given in the left-camera frame into pixel coordinates of
// the chosen camera. Throws if the point is not in front of that camera.
Vec2 project(const StereoRig& rig, const Vec3& point_left_frame, Camera cam);

// Back-projects a pixel of the chosen camera at the given depth (z in that
// camera's frame); the result is expressed in the left-camera frame.
Vec3 unproject(const StereoRig& rig, const Vec2& pixel, double depth, Camera cam);

struct PointMap {
  int height = 0, width = 0;
  std::vector<Eigen::Vector3f> points;  // row-major, left-camera frame
  std::vector<uint8_t> valid;

  PointMap() = default;
  PointMap(int h, int w)
      : height(h), width(w), points(h * w, Eigen::Vector3f::Zero()), valid(h * w, 0) {}

  size_t idx(int r, int c) const { return (size_t)r * width + c; }
  int valid_count() const {
    int n = 0;
    for (auto v : valid) n += v != 0;
    return n;
  }
};

}  // namespace sst::geom
