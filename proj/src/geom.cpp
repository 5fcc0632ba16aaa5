#include "sst/geom.hpp"

#include <cmath>

namespace sst::geom {

nlohmann::json Pose::to_json() const {
  Eigen::Quaterniond q(R);
  if (q.w() < 0) q.coeffs() *= -1.0;
  return {{"position", {t.x(), t.y(), t.z()}},
          {"quaternion_wxyz", {q.w(), q.x(), q.y(), q.z()}}};
}

Pose Pose::from_json(const nlohmann::json& j) {
  auto p = j.at("position");
  auto q = j.at("quaternion_wxyz");
  Eigen::Quaterniond quat(q.at(0).get<double>(), q.at(1).get<double>(),
                          q.at(2).get<double>(), q.at(3).get<double>());
  quat.normalize();
  return Pose(quat.toRotationMatrix(),
              Vec3(p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>()));
}

bool near_gimbal_lock(const Mat3& R, double tol) {
  return std::abs(std::abs(R(2, 0)) - 1.0) < tol;
}

Vec3 euler_from_matrix(const Mat3& R) {
  // R = Rz(yaw) Ry(pitch) Rx(roll):
  //   R(2,0) = -sin(pitch), R(1,0)/R(0,0) = tan(yaw), R(2,1)/R(2,2) = tan(roll)
  double sp = std::clamp(-R(2, 0), -1.0, 1.0);
  // atan2 form is well-conditioned at the lock, unlike asin
  double pitch = std::atan2(sp, std::hypot(R(0, 0), R(1, 0)));
  double roll, yaw;
  if (near_gimbal_lock(R)) {
    // only roll -/+ yaw is determined; put everything into roll
    yaw = 0.0;
    if (sp > 0)
      roll = std::atan2(R(0, 1), R(0, 2));
    else
      roll = std::atan2(-R(0, 1), -R(0, 2));
  } else {
    yaw = std::atan2(R(1, 0), R(0, 0));
    roll = std::atan2(R(2, 1), R(2, 2));
  }
  auto wrap = [](double a) { return a <= -M_PI ? a + 2 * M_PI : a; };
  return Vec3(wrap(roll), wrap(pitch), wrap(yaw));
}

Mat3 matrix_from_euler(const Vec3& rpy) {
  return (Eigen::AngleAxisd(rpy.z(), Vec3::UnitZ()) *
          Eigen::AngleAxisd(rpy.y(), Vec3::UnitY()) *
          Eigen::AngleAxisd(rpy.x(), Vec3::UnitX()))
      .toRotationMatrix();
}

std::array<double, 14> ActionStep::flatten() const {
  return {delta_translation_left.x(),  delta_translation_left.y(),
          delta_translation_left.z(),  delta_euler_left.x(),
          delta_euler_left.y(),        delta_euler_left.z(),
          jaw_left,
          delta_translation_right.x(), delta_translation_right.y(),
          delta_translation_right.z(), delta_euler_right.x(),
          delta_euler_right.y(),       delta_euler_right.z(),
          jaw_right};
}

ActionStep ActionStep::unflatten(const std::array<double, 14>& v) {
  ActionStep a;
  a.delta_translation_left = Vec3(v[0], v[1], v[2]);
  a.delta_euler_left = Vec3(v[3], v[4], v[5]);
  a.jaw_left = v[6];
  a.delta_translation_right = Vec3(v[7], v[8], v[9]);
  a.delta_euler_right = Vec3(v[10], v[11], v[12]);
  a.jaw_right = v[13];
  return a;
}

bool ActionStep::finite() const {
  for (double x : flatten())
    if (!std::isfinite(x)) return false;
  return true;
}

ActionStep relative_action(const ArmState& prev, const ArmState& next) {
  if (!prev.pose_left.is_valid() || !prev.pose_right.is_valid() ||
      !next.pose_left.is_valid() || !next.pose_right.is_valid())
    throw std::invalid_argument("relative_action: pose not a valid SE(3) element");
  ActionStep a;
  a.delta_translation_left = next.pose_left.t - prev.pose_left.t;
  a.delta_translation_right = next.pose_right.t - prev.pose_right.t;
  a.delta_euler_left = euler_from_matrix(prev.pose_left.R.transpose() * next.pose_left.R);
  a.delta_euler_right =
      euler_from_matrix(prev.pose_right.R.transpose() * next.pose_right.R);
  a.jaw_left = next.jaw_left;
  a.jaw_right = next.jaw_right;
  return a;
}

ArmState apply_action(const ArmState& prev, const ActionStep& a) {
  ArmState next;
  next.pose_left.t = prev.pose_left.t + a.delta_translation_left;
  next.pose_right.t = prev.pose_right.t + a.delta_translation_right;
  next.pose_left.R = prev.pose_left.R * matrix_from_euler(a.delta_euler_left);
  next.pose_right.R = prev.pose_right.R * matrix_from_euler(a.delta_euler_right);
  next.jaw_left = a.jaw_left;
  next.jaw_right = a.jaw_right;
  return next;
}

Vec2 project(const StereoRig& rig, const Vec3& point_left_frame, Camera cam) {
  Vec3 p = point_left_frame;
  if (cam == Camera::Right) p = rig.pose_right_in_left.inverse().apply(p);
  if (p.z() <= 0) throw std::domain_error("project: point behind camera");
  return Vec2(rig.fx * p.x() / p.z() + rig.cx, rig.fy * p.y() / p.z() + rig.cy);
}

Vec3 unproject(const StereoRig& rig, const Vec2& pixel, double depth, Camera cam) {
  if (depth <= 0) throw std::domain_error("unproject: depth must be > 0");
  Vec3 p((pixel.x() - rig.cx) * depth / rig.fx, (pixel.y() - rig.cy) * depth / rig.fy,
         depth);
  if (cam == Camera::Right) p = rig.pose_right_in_left.apply(p);
  return p;
}

}  // namespace sst::geom
