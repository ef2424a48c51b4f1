// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <vector>

#include <Eigen/Core>

#include "artic/core_math.hpp"
#include "artic/params.hpp"
#include "artic/skinning.hpp"

namespace artic {

/// Time-dependent parameters: per-frame bone transforms J_{t,b}, rest transforms J*_b and
/// per-frame camera transforms P_t (canonical → observation/camera frame).
class MotionSequence {
 public:
  MotionSequence() = default;
  MotionSequence(int frames, int bones, const Intrinsics& k, int width, int height);

  int frame_count() const { return frames_; }
  int bone_count() const { return bones_; }
  const Intrinsics& intrinsics() const { return k_; }
  int width() const { return width_; }
  int height() const { return height_; }

  RigidTransform& frame_transform(int t, int b) { return frame_[index(t, b)]; }
  const RigidTransform& frame_transform(int t, int b) const { return frame_[index(t, b)]; }
  RigidTransform& rest_transform(int b) { return rest_.at(b); }
  const RigidTransform& rest_transform(int b) const { return rest_.at(b); }
  RigidTransform& camera(int t) { return camera_[check(t)]; }
  const RigidTransform& camera(int t) const { return camera_[check(t)]; }

  /// ΔJ^t_b = J^t_b (J*_b)⁻¹.
  RigidTransform delta(int t, int b) const;
  /// Rendering camera for frame t: observation space is the camera frame, so the pose is identity.
  Camera view(int t) const;

 private:
  int check(int t) const;
  std::size_t index(int t, int b) const;

  int frames_ = 0, bones_ = 0;
  Intrinsics k_;
  int width_ = 1, height_ = 1;
  std::vector<RigidTransform> frame_, rest_, camera_;
};

/// Bones carried rigidly by ΔJ^t_b; scales unchanged.
std::vector<NeuralBone> posed_bones(const MotionSequence& seq, std::span<const NeuralBone> bones,
                                    int t);

/// Read-only snapshot used by every warp evaluation.
struct Articulation {
  int frames = 0, bones = 0;
  double temperature = 0.1;
  std::vector<BoneState> rest_bones;
  std::vector<Mat3> delta_r;  // T×B
  std::vector<Vec3> delta_t;
  std::vector<Mat3> camera_r;  // T
  std::vector<Vec3> camera_t;
  const CoordinateNetwork* delta_net = nullptr;
  const ParameterStore* delta_store = nullptr;

  static Articulation build(const MotionSequence& seq, std::span<const NeuralBone> bones,
                            double temperature, const CoordinateNetwork* delta_net = nullptr,
                            const ParameterStore* delta_store = nullptr);
  void check_frame(int t) const;
  const Mat3& dr(int t, int b) const { return delta_r[t * bones + b]; }
  const Vec3& dt(int t, int b) const { return delta_t[t * bones + b]; }
  /// Delta-skinning logits at x (zeros when no delta network is attached).
  Eigen::VectorXd delta_logits(const Vec3& x) const;
};

/// Accumulated gradient over an Articulation snapshot.
struct ArticulationGrad {
  std::vector<BoneGrad> bones;
  std::vector<Mat3> delta_r;
  std::vector<Vec3> delta_t;
  std::vector<Mat3> camera_r;
  std::vector<Vec3> camera_t;

  ArticulationGrad() = default;
  ArticulationGrad(int frames, int bone_count);
  ArticulationGrad& operator+=(const ArticulationGrad& o);
};

struct WarpResult {
  Vec3 point;
  Eigen::VectorXd weights;
};

WarpResult deform_forward(const Articulation& a, const Vec3& v, int t);
WarpResult deform_backward(const Articulation& a, const Vec3& w, int t);
/// P_t ∘ deform_forward.
Vec3 warp_forward(const Articulation& a, const Vec3& v, int t);
/// deform_backward ∘ P_t⁻¹.
Vec3 warp_backward(const Articulation& a, const Vec3& w, int t);

// ---- point-level kernels used by the renderer -------------------------------

/// Σ_b w_b(v) ΔJ_b v with rest-bone weights; `weights` may be null.
Vec3 deform_forward_point(const Articulation& a, const Vec3& v, int t, const double* delta,
                          double* weights);
/// Σ_b w_b ΔJ_b⁻¹ x with weights against the posed bones (equivalently, rest bones at ΔJ_b⁻¹ x).
Vec3 deform_backward_point(const Articulation& a, const Vec3& x, int t, const double* delta,
                           double* weights);
void deform_forward_vjp(const Articulation& a, const Vec3& v, int t, const double* delta,
                        const Vec3& g_out, ArticulationGrad& grad, Vec3& g_v, double* g_delta);
void deform_backward_vjp(const Articulation& a, const Vec3& x, int t, const double* delta,
                         const Vec3& g_out, ArticulationGrad& grad, Vec3& g_x, double* g_delta);

inline Vec3 camera_apply(const Articulation& a, int t, const Vec3& x) {
  return a.camera_r[t] * x + a.camera_t[t];
}
inline Vec3 camera_unapply(const Articulation& a, int t, const Vec3& w) {
  return a.camera_r[t].transpose() * (w - a.camera_t[t]);
}
/// Reverse of camera_apply; accumulates camera gradients and returns d/dx.
Vec3 camera_apply_vjp(const Articulation& a, int t, const Vec3& x, const Vec3& g_w,
                      ArticulationGrad& grad);
/// Reverse of camera_unapply; accumulates camera gradients and returns d/dw.
Vec3 camera_unapply_vjp(const Articulation& a, int t, const Vec3& w, const Vec3& g_x,
                        ArticulationGrad& grad);

/// Motion parameter blocks inside a ParameterStore.
class MotionLayout {
 public:
  static MotionLayout create(ParameterStore& store, int frames, int bones);
  int frame_count() const { return frames_; }
  int bone_count() const { return bones_; }

  MotionSequence read(const ParameterStore& store, const Intrinsics& k, int width, int height) const;
  void write(ParameterStore& store, const MotionSequence& seq) const;
  /// Identity bone transforms and P_t = translate(0, 0, camera_distance).
  void initialize(ParameterStore& store, double camera_distance) const;

  /// Chains ΔJ, P_t gradients into J, J* and camera parameter blocks.
  void scatter(const ParameterStore& store, const ArticulationGrad& g, std::span<double> grad) const;

  ParameterStore::Handle frame_rotation() const { return frame_rot_; }
  ParameterStore::Handle frame_translation() const { return frame_trans_; }
  ParameterStore::Handle rest_rotation() const { return rest_rot_; }
  ParameterStore::Handle rest_translation() const { return rest_trans_; }
  ParameterStore::Handle camera_rotation() const { return cam_rot_; }
  ParameterStore::Handle camera_translation() const { return cam_trans_; }

 private:
  int frames_ = 0, bones_ = 0;
  ParameterStore::Handle frame_rot_ = 0, frame_trans_ = 0, rest_rot_ = 0, rest_trans_ = 0,
                         cam_rot_ = 0, cam_trans_ = 0;
};

}  // namespace artic
