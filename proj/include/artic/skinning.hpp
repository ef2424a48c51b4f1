// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "artic/core_math.hpp"
#include "artic/network.hpp"
#include "artic/params.hpp"

namespace artic {

inline constexpr int kMaxBones = 64;
inline constexpr double kMinBoneScale = 1e-3;

/// Gaussian ellipsoid bone; per-axis scales are stored in log space.
struct NeuralBone {
  Vec3 center = Vec3::Zero();
  Rotation orientation;
  Vec3 log_scales = Vec3::Zero();

  Vec3 scales() const { return log_scales.array().exp().max(kMinBoneScale); }
};

/// (x − μ)ᵀ Σ⁻¹ (x − μ) with Σ⁻¹ = R diag(s⁻²) Rᵀ, R the bone-to-canonical rotation.
double mahalanobis_sq(const NeuralBone& bone, const Vec3& x);

/// Bone quantities reused across many queries.
struct BoneState {
  Vec3 center;
  Mat3 rotation;
  Vec3 inv_sq_scale;
  Vec3 scale_active;  // 1 where the log scale is above the clamp
};
BoneState make_bone_state(const NeuralBone& bone);

/// Gradient of a scalar w.r.t. a bone, with the rotation kept as a matrix until scatter time.
struct BoneGrad {
  Vec3 center = Vec3::Zero();
  Mat3 rotation = Mat3::Zero();
  Vec3 log_scales = Vec3::Zero();
  BoneGrad& operator+=(const BoneGrad& o) {
    center += o.center;
    rotation += o.rotation;
    log_scales += o.log_scales;
    return *this;
  }
};

/// softmax(−d_b(p_b)/temperature + delta_b). `points` holds one query per bone (the same point
/// repeated for rest-pose weights). Writes weights and the bone-local coordinates.
void blend_weights(std::span<const BoneState> bones, std::span<const Vec3> points,
                   double temperature, const double* delta_logits, double* weights, Vec3* locals);

/// Reverse of blend_weights. Accumulates into g_points[b], bone_grads[b] and g_delta_logits[b]
/// (any of the outputs may be null).
void blend_weights_vjp(std::span<const BoneState> bones, std::span<const Vec3> points,
                       double temperature, const double* weights, const Vec3* locals,
                       const double* g_weights, Vec3* g_points, BoneGrad* bone_grads,
                       double* g_delta_logits);

/// Probability vector over bones for one point.
Eigen::VectorXd skinning_weights(std::span<const NeuralBone> bones, const Vec3& x,
                                 double temperature, const Eigen::VectorXd* delta_logits = nullptr);

/// Argmax with ties broken towards the lowest index.
int dominant_bone(const Eigen::VectorXd& weights);

struct SkinningConfig {
  int bones = 8;
  double temperature = 0.1;
  bool delta = false;
  NetworkConfig delta_net{4, {32, 32}, -1, 8, OutputActivation::linear, 10.0};
  double init_radius = 0.5;
  double init_scale = 0.25;
};

/// Fibonacci-sphere points scaled by `radius`.
std::vector<Vec3> fibonacci_sphere(int n, double radius);

/// Bone parameters (and the optional delta-skinning network) inside a ParameterStore.
class SkinningModel {
 public:
  static SkinningModel create(ParameterStore& store, const SkinningConfig& cfg);
  void initialize(ParameterStore& store, std::mt19937_64& rng) const;

  const SkinningConfig& config() const { return cfg_; }
  int bone_count() const { return cfg_.bones; }
  double temperature() const { return cfg_.temperature; }
  const CoordinateNetwork* delta_net() const { return delta_ ? &*delta_ : nullptr; }

  std::vector<NeuralBone> bones(const ParameterStore& store) const;
  void set_bones(ParameterStore& store, std::span<const NeuralBone> bones) const;
  Eigen::VectorXd delta_logits(const ParameterStore& store, const Vec3& x) const;
  Eigen::VectorXd weights(const ParameterStore& store, const Vec3& x) const;
  int dominant_bone(const ParameterStore& store, const Vec3& x) const;

  /// Chains per-bone gradients (rotation as matrix) into the raw parameter blocks.
  void scatter(const ParameterStore& store, std::span<const BoneGrad> grads,
               std::span<double> grad) const;

  ParameterStore::Handle center_handle() const { return center_; }
  ParameterStore::Handle orientation_handle() const { return orientation_; }
  ParameterStore::Handle log_scale_handle() const { return log_scale_; }

 private:
  SkinningConfig cfg_;
  ParameterStore::Handle center_ = 0, orientation_ = 0, log_scale_ = 0;
  std::optional<CoordinateNetwork> delta_;
};

}  // namespace artic
