// SPDX-License-Identifier: Apache-2.0
#include "artic/core_math.hpp"

#include <cmath>

namespace artic {

Rotation Rotation::from_wxyz(double w, double x, double y, double z) {
  Rotation r;
  Vec4 q(w, x, y, z);
  const double n = q.norm();
  if (n > 0.0 && std::isfinite(n)) r.q_ = q / n;
  return r;
}

Rotation Rotation::from_stored_wxyz(const Vec4& q) {
  if (std::abs(q.norm() - 1.0) > 1e-12) return from_wxyz(q);
  Rotation r;
  r.q_ = q;
  return r;
}

Rotation Rotation::from_axis_angle(const Vec3& axis, double angle) {
  const double n = axis.norm();
  if (n == 0.0) return identity();
  const Vec3 a = axis / n * std::sin(0.5 * angle);
  return from_wxyz(std::cos(0.5 * angle), a.x(), a.y(), a.z());
}

Rotation Rotation::from_matrix(const Mat3& m) {
  const Eigen::Quaterniond q(m);
  return from_wxyz(q.w(), q.x(), q.y(), q.z());
}

Mat3 Rotation::matrix() const {
  const double w = q_[0], x = q_[1], y = q_[2], z = q_[3];
  Mat3 r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
      2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
      2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return r;
}

Rotation Rotation::conjugate() const { return from_wxyz(q_[0], -q_[1], -q_[2], -q_[3]); }

Rotation Rotation::operator*(const Rotation& rhs) const {
  return from_wxyz(quat_multiply(q_, rhs.q_));
}

RigidTransform RigidTransform::inverse() const {
  const Rotation inv = rotation.conjugate();
  return {inv, -(inv.matrix() * translation)};
}

RigidTransform compose(const RigidTransform& a, const RigidTransform& b) {
  return {a.rotation * b.rotation, a.rotation.matrix() * b.translation + a.translation};
}

Vec4 quat_multiply(const Vec4& a, const Vec4& b) {
  return {a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
          a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
          a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
          a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0]};
}

double rotation_angle(const Rotation& r1, const Rotation& r2) {
  const Vec4 rel = quat_multiply(quat_conjugate(r1.wxyz()), r2.wxyz());
  const double s = rel.tail<3>().norm();
  const double c = std::abs(rel[0]);
  // 2·atan2(|v|, |w|) == arccos(clamp((tr(R1 R2ᵀ) − 1)/2, −1, 1)) for unit quaternions.
  return 2.0 * std::atan2(s, c);
}

Camera::Camera(const RigidTransform& pose, const Intrinsics& k, int width, int height)
    : pose_(pose), k_(k), width_(width), height_(height) {
  if (!(k.fx > 0.0) || !(k.fy > 0.0)) throw InvariantError("camera focal lengths must be positive");
  if (width <= 0 || height <= 0) throw InvariantError("camera image size must be positive");
  if (!(k.cx >= 0.0 && k.cx < width && k.cy >= 0.0 && k.cy < height))
    throw InvariantError("principal point outside the image");
}

Vec2 project_camera_space(const Intrinsics& k, const Vec3& pc) {
  if (pc.z() <= kProjectionMinDepth) throw ProjectionError("point behind camera");
  return {k.fx * pc.x() / pc.z() + k.cx, k.fy * pc.y() / pc.z() + k.cy};
}

Vec2 project(const Camera& cam, const Vec3& p) {
  return project_camera_space(cam.intrinsics(), cam.pose().apply(p));
}

std::array<Mat3, 4> rotation_matrix_partials(const Vec4& q) {
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  std::array<Mat3, 4> d;
  d[0] << 0, -z, y, z, 0, -x, -y, x, 0;
  d[1] << 0, y, z, y, -2 * x, -w, z, w, -2 * x;
  d[2] << -2 * y, x, w, x, 0, z, -w, z, -2 * y;
  d[3] << -2 * z, -w, x, w, -2 * z, y, x, y, 0;
  for (auto& m : d) m *= 2.0;
  return d;
}

Vec4 normalize_vjp(const Vec4& q_raw, const Vec4& grad_unit) {
  const double n = q_raw.norm();
  if (n == 0.0) return Vec4::Zero();
  const Vec4 u = q_raw / n;
  return (grad_unit - u * u.dot(grad_unit)) / n;
}

Vec4 rotation_matrix_vjp(const Vec4& q_raw, const Mat3& grad_r) {
  const double n = q_raw.norm();
  if (n == 0.0) return Vec4::Zero();
  const auto d = rotation_matrix_partials(q_raw / n);
  Vec4 g;
  for (int k = 0; k < 4; ++k) g[k] = (d[k].array() * grad_r.array()).sum();
  return normalize_vjp(q_raw, g);
}

std::pair<Vec4, Vec4> rotation_angle_vjp(const Vec4& q1_raw, const Vec4& q2_raw,
                                         double grad_angle) {
  const double n1 = q1_raw.norm(), n2 = q2_raw.norm();
  if (n1 == 0.0 || n2 == 0.0) return {Vec4::Zero(), Vec4::Zero()};
  const Vec4 a = quat_conjugate(q1_raw / n1);
  const Vec4 b = q2_raw / n2;
  const Vec4 rel = quat_multiply(a, b);
  const double s = rel.tail<3>().norm();
  const double c = std::abs(rel[0]);
  const double r2 = s * s + c * c;
  if (s == 0.0 || r2 == 0.0) return {Vec4::Zero(), Vec4::Zero()};
  const double ds = 2.0 * c / r2 * grad_angle;
  const double dc = -2.0 * s / r2 * grad_angle;
  Vec4 g_rel;
  g_rel[0] = dc * (rel[0] >= 0.0 ? 1.0 : -1.0);
  g_rel.tail<3>() = ds * rel.tail<3>() / s;
  // rel = a ⊗ b: ∂/∂a = g ⊗ conj(b), ∂/∂b = conj(a) ⊗ g.
  const Vec4 g_a = quat_multiply(g_rel, quat_conjugate(b));
  const Vec4 g_b = quat_multiply(quat_conjugate(a), g_rel);
  return {normalize_vjp(q1_raw, quat_conjugate(g_a)), normalize_vjp(q2_raw, g_b)};
}

Vec3 project_vjp(const Intrinsics& k, const Vec3& pc, const Vec2& g) {
  const double iz = 1.0 / pc.z();
  return {g[0] * k.fx * iz, g[1] * k.fy * iz,
          -(g[0] * k.fx * pc.x() + g[1] * k.fy * pc.y()) * iz * iz};
}

}  // namespace artic
