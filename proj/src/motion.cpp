// SPDX-License-Identifier: Apache-2.0
#include "artic/motion.hpp"

#include <array>

#include "artic/errors.hpp"

namespace artic {

MotionSequence::MotionSequence(int frames, int bones, const Intrinsics& k, int width, int height)
    : frames_(frames), bones_(bones), k_(k), width_(width), height_(height) {
  if (frames < 1) throw InvariantError("motion sequence needs at least one frame");
  if (bones < 1 || bones > kMaxBones) throw InvariantError("bone count out of range");
  frame_.assign(static_cast<std::size_t>(frames) * bones, RigidTransform::identity());
  rest_.assign(bones, RigidTransform::identity());
  camera_.assign(frames, RigidTransform::identity());
}

int MotionSequence::check(int t) const {
  if (t < 0 || t >= frames_) throw FrameRangeError(t, frames_);
  return t;
}

std::size_t MotionSequence::index(int t, int b) const {
  check(t);
  if (b < 0 || b >= bones_) throw InvariantError("bone index out of range");
  return static_cast<std::size_t>(t) * bones_ + b;
}

RigidTransform MotionSequence::delta(int t, int b) const {
  return compose(frame_transform(t, b), rest_transform(b).inverse());
}

Camera MotionSequence::view(int t) const {
  check(t);
  return Camera(RigidTransform::identity(), k_, width_, height_);
}

std::vector<NeuralBone> posed_bones(const MotionSequence& seq, std::span<const NeuralBone> bones,
                                    int t) {
  if (static_cast<int>(bones.size()) != seq.bone_count()) throw InvariantError("bone count mismatch");
  std::vector<NeuralBone> out(bones.begin(), bones.end());
  for (int b = 0; b < seq.bone_count(); ++b) {
    const RigidTransform d = seq.delta(t, b);
    out[b].center = d.apply(bones[b].center);
    out[b].orientation = d.rotation * bones[b].orientation;
  }
  return out;
}

Articulation Articulation::build(const MotionSequence& seq, std::span<const NeuralBone> bones,
                                 double temperature, const CoordinateNetwork* delta_net,
                                 const ParameterStore* delta_store) {
  if (static_cast<int>(bones.size()) != seq.bone_count()) throw InvariantError("bone count mismatch");
  if (!(temperature > 0.0)) throw InvariantError("skinning temperature must be positive");
  Articulation a;
  a.frames = seq.frame_count();
  a.bones = seq.bone_count();
  a.temperature = temperature;
  a.delta_net = delta_net;
  a.delta_store = delta_store;
  for (const auto& b : bones) a.rest_bones.push_back(make_bone_state(b));
  for (int t = 0; t < a.frames; ++t) {
    for (int b = 0; b < a.bones; ++b) {
      const RigidTransform& j = seq.frame_transform(t, b);
      const RigidTransform& r = seq.rest_transform(b);
      const Mat3 dr = j.rotation.matrix() * r.rotation.matrix().transpose();
      a.delta_r.push_back(dr);
      a.delta_t.push_back(j.translation - dr * r.translation);
    }
    a.camera_r.push_back(seq.camera(t).rotation.matrix());
    a.camera_t.push_back(seq.camera(t).translation);
  }
  return a;
}

void Articulation::check_frame(int t) const {
  if (t < 0 || t >= frames) throw FrameRangeError(t, frames);
}

Eigen::VectorXd Articulation::delta_logits(const Vec3& x) const {
  if (!delta_net) return Eigen::VectorXd::Zero(bones);
  Eigen::Matrix3Xd p(3, 1);
  p.col(0) = x;
  return delta_net->forward(*delta_store, p).col(0);
}

ArticulationGrad::ArticulationGrad(int frames, int bone_count)
    : bones(bone_count),
      delta_r(static_cast<std::size_t>(frames) * bone_count, Mat3::Zero()),
      delta_t(static_cast<std::size_t>(frames) * bone_count, Vec3::Zero()),
      camera_r(frames, Mat3::Zero()),
      camera_t(frames, Vec3::Zero()) {}

ArticulationGrad& ArticulationGrad::operator+=(const ArticulationGrad& o) {
  for (std::size_t i = 0; i < bones.size(); ++i) bones[i] += o.bones[i];
  for (std::size_t i = 0; i < delta_r.size(); ++i) {
    delta_r[i] += o.delta_r[i];
    delta_t[i] += o.delta_t[i];
  }
  for (std::size_t i = 0; i < camera_r.size(); ++i) {
    camera_r[i] += o.camera_r[i];
    camera_t[i] += o.camera_t[i];
  }
  return *this;
}

Vec3 deform_forward_point(const Articulation& a, const Vec3& v, int t, const double* delta,
                          double* weights) {
  std::array<Vec3, kMaxBones> pts, locals;
  std::array<double, kMaxBones> w;
  std::fill_n(pts.begin(), a.bones, v);
  blend_weights({a.rest_bones.data(), static_cast<std::size_t>(a.bones)},
                {pts.data(), static_cast<std::size_t>(a.bones)}, a.temperature, delta, w.data(),
                locals.data());
  Vec3 x = Vec3::Zero();
  for (int b = 0; b < a.bones; ++b) x += w[b] * (a.dr(t, b) * v + a.dt(t, b));
  if (weights) std::copy_n(w.begin(), a.bones, weights);
  return x;
}

Vec3 deform_backward_point(const Articulation& a, const Vec3& x, int t, const double* delta,
                           double* weights) {
  std::array<Vec3, kMaxBones> ys, locals;
  std::array<double, kMaxBones> w;
  for (int b = 0; b < a.bones; ++b) ys[b] = a.dr(t, b).transpose() * (x - a.dt(t, b));
  blend_weights({a.rest_bones.data(), static_cast<std::size_t>(a.bones)},
                {ys.data(), static_cast<std::size_t>(a.bones)}, a.temperature, delta, w.data(),
                locals.data());
  Vec3 v = Vec3::Zero();
  for (int b = 0; b < a.bones; ++b) v += w[b] * ys[b];
  if (weights) std::copy_n(w.begin(), a.bones, weights);
  return v;
}

void deform_forward_vjp(const Articulation& a, const Vec3& v, int t, const double* delta,
                        const Vec3& g_out, ArticulationGrad& grad, Vec3& g_v, double* g_delta) {
  const auto nb = static_cast<std::size_t>(a.bones);
  std::array<Vec3, kMaxBones> pts, locals, xs, g_pts;
  std::array<double, kMaxBones> w, g_w;
  std::fill_n(pts.begin(), nb, v);
  blend_weights({a.rest_bones.data(), nb}, {pts.data(), nb}, a.temperature, delta, w.data(),
                locals.data());
  for (int b = 0; b < a.bones; ++b) {
    xs[b] = a.dr(t, b) * v + a.dt(t, b);
    const Vec3 g_xb = w[b] * g_out;
    grad.delta_r[t * a.bones + b] += g_xb * v.transpose();
    grad.delta_t[t * a.bones + b] += g_xb;
    g_v += a.dr(t, b).transpose() * g_xb;
    g_w[b] = g_out.dot(xs[b]);
    g_pts[b].setZero();
  }
  blend_weights_vjp({a.rest_bones.data(), nb}, {pts.data(), nb}, a.temperature, w.data(),
                    locals.data(), g_w.data(), g_pts.data(), grad.bones.data(), g_delta);
  for (int b = 0; b < a.bones; ++b) g_v += g_pts[b];
}

void deform_backward_vjp(const Articulation& a, const Vec3& x, int t, const double* delta,
                         const Vec3& g_out, ArticulationGrad& grad, Vec3& g_x, double* g_delta) {
  const auto nb = static_cast<std::size_t>(a.bones);
  std::array<Vec3, kMaxBones> ys, locals, g_ys;
  std::array<double, kMaxBones> w, g_w;
  for (int b = 0; b < a.bones; ++b) ys[b] = a.dr(t, b).transpose() * (x - a.dt(t, b));
  blend_weights({a.rest_bones.data(), nb}, {ys.data(), nb}, a.temperature, delta, w.data(),
                locals.data());
  for (int b = 0; b < a.bones; ++b) {
    g_ys[b] = w[b] * g_out;
    g_w[b] = g_out.dot(ys[b]);
  }
  blend_weights_vjp({a.rest_bones.data(), nb}, {ys.data(), nb}, a.temperature, w.data(),
                    locals.data(), g_w.data(), g_ys.data(), grad.bones.data(), g_delta);
  for (int b = 0; b < a.bones; ++b) {
    const Vec3 r = x - a.dt(t, b);
    const Vec3 rg = a.dr(t, b) * g_ys[b];
    grad.delta_r[t * a.bones + b] += r * g_ys[b].transpose();
    grad.delta_t[t * a.bones + b] -= rg;
    g_x += rg;
  }
}

Vec3 camera_apply_vjp(const Articulation& a, int t, const Vec3& x, const Vec3& g_w,
                      ArticulationGrad& grad) {
  grad.camera_r[t] += g_w * x.transpose();
  grad.camera_t[t] += g_w;
  return a.camera_r[t].transpose() * g_w;
}

Vec3 camera_unapply_vjp(const Articulation& a, int t, const Vec3& w, const Vec3& g_x,
                        ArticulationGrad& grad) {
  const Vec3 rg = a.camera_r[t] * g_x;
  grad.camera_r[t] += (w - a.camera_t[t]) * g_x.transpose();
  grad.camera_t[t] -= rg;
  return rg;
}

WarpResult deform_forward(const Articulation& a, const Vec3& v, int t) {
  a.check_frame(t);
  WarpResult r{Vec3::Zero(), Eigen::VectorXd(a.bones)};
  const Eigen::VectorXd d = a.delta_logits(v);
  r.point = deform_forward_point(a, v, t, a.delta_net ? d.data() : nullptr, r.weights.data());
  return r;
}

WarpResult deform_backward(const Articulation& a, const Vec3& w, int t) {
  a.check_frame(t);
  WarpResult r{Vec3::Zero(), Eigen::VectorXd(a.bones)};
  const Eigen::VectorXd d = a.delta_logits(w);
  r.point = deform_backward_point(a, w, t, a.delta_net ? d.data() : nullptr, r.weights.data());
  return r;
}

Vec3 warp_forward(const Articulation& a, const Vec3& v, int t) {
  return camera_apply(a, t, deform_forward(a, v, t).point);
}

Vec3 warp_backward(const Articulation& a, const Vec3& w, int t) {
  a.check_frame(t);
  return deform_backward(a, camera_unapply(a, t, w), t).point;
}

MotionLayout MotionLayout::create(ParameterStore& store, int frames, int bones) {
  if (frames < 1) throw InvariantError("motion sequence needs at least one frame");
  MotionLayout m;
  m.frames_ = frames;
  m.bones_ = bones;
  m.frame_rot_ = store.add("motion.frame.rotation", ParamGroup::articulation, {frames, bones, 4},
                           ParamKind::quaternion);
  m.frame_trans_ = store.add("motion.frame.translation", ParamGroup::articulation, {frames, bones, 3});
  m.rest_rot_ =
      store.add("motion.rest.rotation", ParamGroup::articulation, {bones, 4}, ParamKind::quaternion);
  m.rest_trans_ = store.add("motion.rest.translation", ParamGroup::articulation, {bones, 3});
  m.cam_rot_ = store.add("camera.rotation", ParamGroup::camera, {frames, 4}, ParamKind::quaternion);
  m.cam_trans_ = store.add("camera.translation", ParamGroup::camera, {frames, 3});
  return m;
}

namespace {

RigidTransform read_transform(std::span<const double> q, std::span<const double> t, std::size_t i) {
  return {Rotation::from_wxyz(q[4 * i], q[4 * i + 1], q[4 * i + 2], q[4 * i + 3]),
          Vec3(t[3 * i], t[3 * i + 1], t[3 * i + 2])};
}

void write_transform(std::span<double> q, std::span<double> t, std::size_t i,
                     const RigidTransform& x) {
  for (int k = 0; k < 4; ++k) q[4 * i + k] = x.rotation.wxyz()[k];
  for (int k = 0; k < 3; ++k) t[3 * i + k] = x.translation[k];
}

Vec4 raw_quat(std::span<const double> q, std::size_t i) {
  return {q[4 * i], q[4 * i + 1], q[4 * i + 2], q[4 * i + 3]};
}

void add_quat(std::span<double> g, std::size_t i, const Vec4& v) {
  for (int k = 0; k < 4; ++k) g[4 * i + k] += v[k];
}

void add_vec(std::span<double> g, std::size_t i, const Vec3& v) {
  for (int k = 0; k < 3; ++k) g[3 * i + k] += v[k];
}

}  // namespace

MotionSequence MotionLayout::read(const ParameterStore& store, const Intrinsics& k, int width,
                                  int height) const {
  MotionSequence seq(frames_, bones_, k, width, height);
  const auto fq = store.values(frame_rot_), ft = store.values(frame_trans_);
  const auto rq = store.values(rest_rot_), rt = store.values(rest_trans_);
  const auto cq = store.values(cam_rot_), ct = store.values(cam_trans_);
  for (int t = 0; t < frames_; ++t) {
    for (int b = 0; b < bones_; ++b)
      seq.frame_transform(t, b) = read_transform(fq, ft, static_cast<std::size_t>(t) * bones_ + b);
    seq.camera(t) = read_transform(cq, ct, t);
  }
  for (int b = 0; b < bones_; ++b) seq.rest_transform(b) = read_transform(rq, rt, b);
  return seq;
}

void MotionLayout::write(ParameterStore& store, const MotionSequence& seq) const {
  if (seq.frame_count() != frames_ || seq.bone_count() != bones_)
    throw InvariantError("motion sequence shape does not match layout");
  auto fq = store.values(frame_rot_), ft = store.values(frame_trans_);
  auto rq = store.values(rest_rot_), rt = store.values(rest_trans_);
  auto cq = store.values(cam_rot_), ct = store.values(cam_trans_);
  for (int t = 0; t < frames_; ++t) {
    for (int b = 0; b < bones_; ++b)
      write_transform(fq, ft, static_cast<std::size_t>(t) * bones_ + b, seq.frame_transform(t, b));
    write_transform(cq, ct, t, seq.camera(t));
  }
  for (int b = 0; b < bones_; ++b) write_transform(rq, rt, b, seq.rest_transform(b));
}

void MotionLayout::initialize(ParameterStore& store, double camera_distance) const {
  MotionSequence seq(frames_, bones_, Intrinsics{}, 1, 1);
  for (int t = 0; t < frames_; ++t) seq.camera(t) = RigidTransform::translate(0, 0, camera_distance);
  write(store, seq);
}

void MotionLayout::scatter(const ParameterStore& store, const ArticulationGrad& g,
                           std::span<double> grad) const {
  const auto fq = store.values(frame_rot_), ft = store.values(frame_trans_);
  const auto rq = store.values(rest_rot_), rt = store.values(rest_trans_);
  const auto cq = store.values(cam_rot_);
  auto g_fq = grad_block(grad, store, frame_rot_), g_ft = grad_block(grad, store, frame_trans_);
  auto g_rq = grad_block(grad, store, rest_rot_), g_rt = grad_block(grad, store, rest_trans_);
  auto g_cq = grad_block(grad, store, cam_rot_), g_ct = grad_block(grad, store, cam_trans_);

  std::vector<Mat3> g_rest_r(bones_, Mat3::Zero());
  std::vector<Mat3> rest_r(bones_);
  std::vector<Vec3> rest_t(bones_);
  for (int b = 0; b < bones_; ++b) {
    const auto r = read_transform(rq, rt, b);
    rest_r[b] = r.rotation.matrix();
    rest_t[b] = r.translation;
  }
  for (int t = 0; t < frames_; ++t) {
    for (int b = 0; b < bones_; ++b) {
      const std::size_t i = static_cast<std::size_t>(t) * bones_ + b;
      const Mat3& g_dr = g.delta_r[i];
      const Vec3& g_dt = g.delta_t[i];
      if (g_dr.isZero(0.0) && g_dt.isZero(0.0)) continue;
      const auto j = read_transform(fq, ft, i);
      const Mat3 rj = j.rotation.matrix();
      const Mat3 dr = rj * rest_r[b].transpose();
      // ΔR = R_J R_*ᵀ, Δt = t_J − ΔR t_*
      const Mat3 g_total = g_dr - g_dt * rest_t[b].transpose();
      add_vec(g_ft, i, g_dt);
      add_vec(g_rt, b, -(dr.transpose() * g_dt));
      add_quat(g_fq, i, rotation_matrix_vjp(raw_quat(fq, i), g_total * rest_r[b]));
      g_rest_r[b] += g_total.transpose() * rj;
    }
    add_quat(g_cq, t, rotation_matrix_vjp(raw_quat(cq, t), g.camera_r[t]));
    add_vec(g_ct, t, g.camera_t[t]);
  }
  for (int b = 0; b < bones_; ++b) add_quat(g_rq, b, rotation_matrix_vjp(raw_quat(rq, b), g_rest_r[b]));
}

}  // namespace artic
