// SPDX-License-Identifier: Apache-2.0
#include "artic/skinning.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "artic/errors.hpp"

namespace artic {

double mahalanobis_sq(const NeuralBone& bone, const Vec3& x) {
  const BoneState s = make_bone_state(bone);
  const Vec3 local = s.rotation.transpose() * (x - s.center);
  return local.cwiseProduct(local).dot(s.inv_sq_scale);
}

BoneState make_bone_state(const NeuralBone& bone) {
  BoneState s;
  s.center = bone.center;
  s.rotation = bone.orientation.matrix();
  const Vec3 scale = bone.scales();
  s.inv_sq_scale = scale.cwiseProduct(scale).cwiseInverse();
  for (int k = 0; k < 3; ++k) s.scale_active[k] = std::exp(bone.log_scales[k]) > kMinBoneScale ? 1.0 : 0.0;
  return s;
}

void blend_weights(std::span<const BoneState> bones, std::span<const Vec3> points,
                   double temperature, const double* delta, double* weights, Vec3* locals) {
  const int n = static_cast<int>(bones.size());
  double max_logit = -std::numeric_limits<double>::infinity();
  for (int b = 0; b < n; ++b) {
    locals[b] = bones[b].rotation.transpose() * (points[b] - bones[b].center);
    const double d = locals[b].cwiseProduct(locals[b]).dot(bones[b].inv_sq_scale);
    weights[b] = -d / temperature + (delta ? delta[b] : 0.0);
    max_logit = std::max(max_logit, weights[b]);
  }
  double sum = 0.0;
  for (int b = 0; b < n; ++b) {
    weights[b] = std::exp(weights[b] - max_logit);
    sum += weights[b];
  }
  for (int b = 0; b < n; ++b) weights[b] /= sum;
}

void blend_weights_vjp(std::span<const BoneState> bones, std::span<const Vec3> points,
                       double temperature, const double* weights, const Vec3* locals,
                       const double* g_weights, Vec3* g_points, BoneGrad* bone_grads,
                       double* g_delta) {
  const int n = static_cast<int>(bones.size());
  double dot = 0.0;
  for (int b = 0; b < n; ++b) dot += weights[b] * g_weights[b];
  for (int b = 0; b < n; ++b) {
    const double g_logit = weights[b] * (g_weights[b] - dot);
    if (g_delta) g_delta[b] += g_logit;
    const double g_d = -g_logit / temperature;
    if (g_d == 0.0) continue;
    const BoneState& s = bones[b];
    const Vec3& l = locals[b];
    const Vec3 g_local = 2.0 * g_d * l.cwiseProduct(s.inv_sq_scale);
    const Vec3 r_g = s.rotation * g_local;
    if (g_points) g_points[b] += r_g;
    if (bone_grads) {
      bone_grads[b].center -= r_g;
      bone_grads[b].rotation += (points[b] - s.center) * g_local.transpose();
      // inv_sq_scale = exp(−2 log s)
      bone_grads[b].log_scales +=
          (-2.0 * g_d * l.cwiseProduct(l).cwiseProduct(s.inv_sq_scale)).cwiseProduct(s.scale_active);
    }
  }
}

Eigen::VectorXd skinning_weights(std::span<const NeuralBone> bones, const Vec3& x,
                                 double temperature, const Eigen::VectorXd* delta) {
  if (!(temperature > 0.0)) throw InvariantError("skinning temperature must be positive");
  const int n = static_cast<int>(bones.size());
  if (n < 1 || n > kMaxBones) throw InvariantError("bone count out of range");
  std::vector<BoneState> states;
  for (const auto& b : bones) states.push_back(make_bone_state(b));
  std::vector<Vec3> pts(n, x), locals(n);
  Eigen::VectorXd w(n);
  blend_weights(states, pts, temperature, delta ? delta->data() : nullptr, w.data(), locals.data());
  return w;
}

int dominant_bone(const Eigen::VectorXd& weights) {
  int best = 0;
  for (int b = 1; b < weights.size(); ++b)
    if (weights[b] > weights[best]) best = b;
  return best;
}

std::vector<Vec3> fibonacci_sphere(int n, double radius) {
  std::vector<Vec3> pts;
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < n; ++i) {
    const double y = 1.0 - 2.0 * (i + 0.5) / n;
    const double r = std::sqrt(std::max(0.0, 1.0 - y * y));
    const double phi = golden * i;
    pts.emplace_back(radius * r * std::cos(phi), radius * y, radius * r * std::sin(phi));
  }
  return pts;
}

SkinningModel SkinningModel::create(ParameterStore& store, const SkinningConfig& cfg) {
  if (cfg.bones < 1 || cfg.bones > kMaxBones) throw InvariantError("bone count out of range");
  if (!(cfg.temperature > 0.0)) throw InvariantError("skinning temperature must be positive");
  SkinningModel m;
  m.cfg_ = cfg;
  m.center_ = store.add("skin.center", ParamGroup::articulation, {cfg.bones, 3});
  m.orientation_ =
      store.add("skin.orientation", ParamGroup::articulation, {cfg.bones, 4}, ParamKind::quaternion);
  m.log_scale_ = store.add("skin.log_scale", ParamGroup::articulation, {cfg.bones, 3});
  if (cfg.delta) {
    NetworkConfig net = cfg.delta_net;
    net.outputs = cfg.bones;
    m.cfg_.delta_net = net;
    m.delta_ = CoordinateNetwork::create(store, "skin.delta", ParamGroup::articulation, net);
  }
  return m;
}

void SkinningModel::initialize(ParameterStore& store, std::mt19937_64& rng) const {
  const auto pts = fibonacci_sphere(cfg_.bones, cfg_.init_radius);
  std::vector<NeuralBone> bones(cfg_.bones);
  for (int b = 0; b < cfg_.bones; ++b) {
    bones[b].center = pts[b];
    bones[b].log_scales = Vec3::Constant(std::log(cfg_.init_scale));
  }
  set_bones(store, bones);
  if (delta_) {
    delta_->init_random(store, rng);
    delta_->zero_output(store);
  }
}

std::vector<NeuralBone> SkinningModel::bones(const ParameterStore& store) const {
  const auto c = store.values(center_), q = store.values(orientation_), s = store.values(log_scale_);
  std::vector<NeuralBone> out(cfg_.bones);
  for (int b = 0; b < cfg_.bones; ++b) {
    out[b].center = Vec3(c[3 * b], c[3 * b + 1], c[3 * b + 2]);
    out[b].orientation = Rotation::from_wxyz(q[4 * b], q[4 * b + 1], q[4 * b + 2], q[4 * b + 3]);
    out[b].log_scales = Vec3(s[3 * b], s[3 * b + 1], s[3 * b + 2]);
  }
  return out;
}

void SkinningModel::set_bones(ParameterStore& store, std::span<const NeuralBone> bones) const {
  if (static_cast<int>(bones.size()) != cfg_.bones) throw InvariantError("bone count mismatch");
  auto c = store.values(center_), q = store.values(orientation_), s = store.values(log_scale_);
  for (int b = 0; b < cfg_.bones; ++b) {
    for (int k = 0; k < 3; ++k) {
      c[3 * b + k] = bones[b].center[k];
      s[3 * b + k] = bones[b].log_scales[k];
    }
    for (int k = 0; k < 4; ++k) q[4 * b + k] = bones[b].orientation.wxyz()[k];
  }
}

Eigen::VectorXd SkinningModel::delta_logits(const ParameterStore& store, const Vec3& x) const {
  if (!delta_) return Eigen::VectorXd::Zero(cfg_.bones);
  Eigen::Matrix3Xd p(3, 1);
  p.col(0) = x;
  return delta_->forward(store, p).col(0);
}

Eigen::VectorXd SkinningModel::weights(const ParameterStore& store, const Vec3& x) const {
  const auto b = bones(store);
  if (!delta_) return skinning_weights(b, x, cfg_.temperature);
  const Eigen::VectorXd d = delta_logits(store, x);
  return skinning_weights(b, x, cfg_.temperature, &d);
}

int SkinningModel::dominant_bone(const ParameterStore& store, const Vec3& x) const {
  return artic::dominant_bone(weights(store, x));
}

void SkinningModel::scatter(const ParameterStore& store, std::span<const BoneGrad> grads,
                            std::span<double> grad) const {
  auto gc = grad_block(grad, store, center_);
  auto gq = grad_block(grad, store, orientation_);
  auto gs = grad_block(grad, store, log_scale_);
  const auto q = store.values(orientation_);
  for (int b = 0; b < cfg_.bones; ++b) {
    for (int k = 0; k < 3; ++k) {
      gc[3 * b + k] += grads[b].center[k];
      gs[3 * b + k] += grads[b].log_scales[k];
    }
    const Vec4 raw(q[4 * b], q[4 * b + 1], q[4 * b + 2], q[4 * b + 3]);
    const Vec4 g = rotation_matrix_vjp(raw, grads[b].rotation);
    for (int k = 0; k < 4; ++k) gq[4 * b + k] += g[k];
  }
}

}  // namespace artic
