// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "artic/errors.hpp"

namespace artic {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat3 = Eigen::Matrix3d;

/// Unit quaternion stored w-first. Every constructor normalizes.
class Rotation {
 public:
  Rotation() = default;
  /// Accepts any non-zero quaternion and normalizes it; a zero input yields identity.
  static Rotation from_wxyz(double w, double x, double y, double z);
  static Rotation from_wxyz(const Vec4& q) { return from_wxyz(q[0], q[1], q[2], q[3]); }
  /// Keeps the components bit for bit when ‖q‖ is within 1e-12 of one (deserialization).
  static Rotation from_stored_wxyz(const Vec4& q);
  static Rotation from_axis_angle(const Vec3& axis, double angle);
  static Rotation from_matrix(const Mat3& m);
  static Rotation identity() { return {}; }
  static Rotation rx(double angle) { return from_axis_angle(Vec3::UnitX(), angle); }
  static Rotation ry(double angle) { return from_axis_angle(Vec3::UnitY(), angle); }
  static Rotation rz(double angle) { return from_axis_angle(Vec3::UnitZ(), angle); }

  double w() const { return q_[0]; }
  double x() const { return q_[1]; }
  double y() const { return q_[2]; }
  double z() const { return q_[3]; }
  const Vec4& wxyz() const { return q_; }

  Mat3 matrix() const;
  Vec3 rotate(const Vec3& v) const { return matrix() * v; }
  Rotation conjugate() const;
  Rotation operator*(const Rotation& rhs) const;
  double norm() const { return q_.norm(); }

 private:
  Vec4 q_{1.0, 0.0, 0.0, 0.0};
};

/// x -> R x + t.
struct RigidTransform {
  Rotation rotation;
  Vec3 translation = Vec3::Zero();

  static RigidTransform identity() { return {}; }
  static RigidTransform translate(double x, double y, double z) {
    return {Rotation::identity(), Vec3(x, y, z)};
  }
  /// Rotation about `center`: x -> R (x - c) + c.
  static RigidTransform rotate_about(const Rotation& r, const Vec3& center) {
    return {r, center - r.rotate(center)};
  }

  Vec3 apply(const Vec3& p) const { return rotation.matrix() * p + translation; }
  RigidTransform inverse() const;
};

/// (a ∘ b)(x) = a(b(x)).
RigidTransform compose(const RigidTransform& a, const RigidTransform& b);

/// Relative angle of two rotations in [0, π]; equals arccos((tr(R1 R2ᵀ) − 1)/2).
/// Evaluated through the relative quaternion so that angles near zero keep full precision.
double rotation_angle(const Rotation& r1, const Rotation& r2);

struct Intrinsics {
  double fx = 1.0, fy = 1.0, cx = 0.0, cy = 0.0;
};

/// Pinhole camera; `pose` maps world to camera coordinates, camera looks along +z.
class Camera {
 public:
  Camera(const RigidTransform& pose, const Intrinsics& k, int width, int height);

  const RigidTransform& pose() const { return pose_; }
  const Intrinsics& intrinsics() const { return k_; }
  int width() const { return width_; }
  int height() const { return height_; }
  Camera with_pose(const RigidTransform& pose) const { return {pose, k_, width_, height_}; }

 private:
  RigidTransform pose_;
  Intrinsics k_;
  int width_;
  int height_;
};

inline constexpr double kProjectionMinDepth = 1e-6;

/// Pixel coordinates of a world point. Throws ProjectionError when behind the camera.
Vec2 project(const Camera& cam, const Vec3& p);
/// Projection of a point already in camera coordinates.
Vec2 project_camera_space(const Intrinsics& k, const Vec3& pc);

// ---- reverse-mode helpers ---------------------------------------------------

/// Partial derivatives of R(q) with respect to (w, x, y, z) of a unit quaternion.
std::array<Mat3, 4> rotation_matrix_partials(const Vec4& q_unit);

/// Gradient w.r.t. a raw (possibly unnormalized) quaternion q given dL/dR, where
/// R = matrix(q / |q|).
Vec4 rotation_matrix_vjp(const Vec4& q_raw, const Mat3& grad_r);

/// Maps a gradient on the normalized quaternion back to the raw one.
Vec4 normalize_vjp(const Vec4& q_raw, const Vec4& grad_unit);

/// Hamilton product on raw 4-vectors, w-first.
Vec4 quat_multiply(const Vec4& a, const Vec4& b);
inline Vec4 quat_conjugate(const Vec4& q) { return {q[0], -q[1], -q[2], -q[3]}; }

/// Gradients of rotation_angle w.r.t. the two raw quaternions (normalization included).
/// The angle is not differentiable at zero; the zero subgradient is returned there.
std::pair<Vec4, Vec4> rotation_angle_vjp(const Vec4& q1_raw, const Vec4& q2_raw, double grad_angle);

/// Gradient of project_camera_space w.r.t. the camera-space point.
Vec3 project_vjp(const Intrinsics& k, const Vec3& pc, const Vec2& grad_uv);

}  // namespace artic
