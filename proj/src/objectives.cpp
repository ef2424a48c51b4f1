// SPDX-License-Identifier: Apache-2.0
#include "artic/objectives.hpp"

#include <cmath>
#include <numbers>
#include <ostream>
#include <random>

#include <json.hpp>

#include "artic/errors.hpp"

namespace artic {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

bool finite(double v) { return std::isfinite(v); }

/// x / ‖x‖ scaled, with the zero subgradient at the origin.
template <class V>
V unit_or_zero(const V& x, double norm, double scale) {
  if (norm == 0.0) return V::Zero(x.size());
  return x * (scale / norm);
}

}  // namespace

void LossWeights::validate() const {
  for (double w : {recon, sds, cyc, ncyc, surf, smooth})
    if (!(w >= 0.0) || !finite(w)) throw InvariantError("loss weights must be finite and non-negative");
}

void LossBreakdown::finalize(const LossWeights& w) {
  total = w.recon * recon + w.sds * sds + w.cyc * cyc + w.ncyc * ncyc + w.surf * surf +
          w.smooth * smooth;
}

void LossBreakdown::check_finite() const {
  const std::pair<const char*, double> terms[] = {{"recon", recon}, {"sds", sds},
                                                  {"cyc", cyc},     {"ncyc", ncyc},
                                                  {"surf", surf},   {"smooth", smooth},
                                                  {"total", total}};
  for (const auto& [name, v] : terms)
    if (!finite(v)) throw NumericalError(name, std::string("non-finite loss term: ") + name);
}

double loss_recon(std::span<const ReconElement> elements) {
  if (elements.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& e : elements) {
    if (e.feature_render.size() != e.feature_obs.size())
      throw InvariantError("loss_recon: feature dimensions differ");
    sum += (e.color_render - e.color_obs).norm();
    sum += (e.feature_render - e.feature_obs).norm();
    sum += std::abs(e.silhouette_render - e.silhouette_obs);
    if (e.has_flow) sum += (e.flow_render - e.flow_obs).norm();
  }
  return sum / static_cast<double>(elements.size());
}

double loss_cycle(std::span<const double> tau, std::span<const Vec3> points,
                  std::span<const Vec3> cycled) {
  if (tau.size() != points.size() || points.size() != cycled.size())
    throw InvariantError("loss_cycle: sample arrays differ in length");
  double s = 0.0;
  for (std::size_t i = 0; i < tau.size(); ++i) s += tau[i] * (points[i] - cycled[i]).norm();
  return s;
}

double loss_surface(std::span<const double> sdf) {
  double s = 0.0;
  for (double d : sdf)
    if (d > 0.0) s += d * d;
  return std::sqrt(s);
}

double loss_smooth(const MotionSequence& seq) {
  const int frames = seq.frame_count(), bones = seq.bone_count();
  if (frames < 2) return 0.0;
  double s = 0.0;
  for (int b = 0; b < bones; ++b)
    for (int t = 0; t + 1 < frames; ++t) {
      const RigidTransform& a = seq.frame_transform(t, b);
      const RigidTransform& c = seq.frame_transform(t + 1, b);
      s += rotation_angle(a.rotation, c.rotation) + (a.translation - c.translation).norm();
    }
  return s / (static_cast<double>(bones) * (frames - 1));
}

double loss_smooth_backward(const ParameterStore& store, const MotionLayout& layout, double weight,
                            std::span<double> grad) {
  const int frames = layout.frame_count(), bones = layout.bone_count();
  if (frames < 2) return 0.0;
  const auto q = store.values(layout.frame_rotation());
  const auto tr = store.values(layout.frame_translation());
  auto gq = grad_block(grad, store, layout.frame_rotation());
  auto gt = grad_block(grad, store, layout.frame_translation());
  const double scale = 1.0 / (static_cast<double>(bones) * (frames - 1));
  double s = 0.0;
  for (int b = 0; b < bones; ++b)
    for (int t = 0; t + 1 < frames; ++t) {
      const std::size_t i = static_cast<std::size_t>(t) * bones + b;
      const std::size_t j = i + bones;
      const Vec4 qa(q[4 * i], q[4 * i + 1], q[4 * i + 2], q[4 * i + 3]);
      const Vec4 qb(q[4 * j], q[4 * j + 1], q[4 * j + 2], q[4 * j + 3]);
      s += rotation_angle(Rotation::from_wxyz(qa), Rotation::from_wxyz(qb));
      const auto [ga, gb] = rotation_angle_vjp(qa, qb, weight * scale);
      for (int k = 0; k < 4; ++k) {
        gq[4 * i + k] += ga[k];
        gq[4 * j + k] += gb[k];
      }
      const Vec3 d(tr[3 * i] - tr[3 * j], tr[3 * i + 1] - tr[3 * j + 1], tr[3 * i + 2] - tr[3 * j + 2]);
      const double n = d.norm();
      s += n;
      const Vec3 g = unit_or_zero(d, n, weight * scale);
      for (int k = 0; k < 3; ++k) {
        gt[3 * i + k] += g[k];
        gt[3 * j + k] -= g[k];
      }
    }
  return s * scale;
}

double loss_surface_backward(const ArticulatedModel& model, double weight, std::span<double> grad) {
  const auto bones = model.bones();
  const auto nb = static_cast<Eigen::Index>(bones.size());
  Eigen::Matrix3Xd centers(3, nb);
  for (Eigen::Index b = 0; b < nb; ++b) centers.col(b) = bones[b].center;
  FieldBatch batch;
  FieldTape tape;
  model.field().evaluate(model.store(), centers, FieldQuery{false, false}, batch, &tape);
  const double l = loss_surface({batch.sdf.data(), static_cast<std::size_t>(nb)});
  if (l == 0.0 || weight == 0.0) return l;
  FieldBatchGrad up;
  up.sdf = batch.sdf.cwiseMax(0.0) * (weight / l);
  Eigen::Matrix3Xd gp;
  model.field().backward(model.store(), tape, up, grad, &gp);
  auto gc = grad_block(grad, model.store(), model.skinning().center_handle());
  for (Eigen::Index b = 0; b < nb; ++b)
    for (int k = 0; k < 3; ++k) gc[3 * b + k] += gp(k, b);
  return l;
}

void TrainingData::validate(int feature_dim) const {
  if (width <= 0 || height <= 0) throw InvariantError("training data has no image size");
  if (frames.empty()) throw InvariantError("training data has no frames");
  const std::size_t n = static_cast<std::size_t>(width) * height;
  for (std::size_t t = 0; t < frames.size(); ++t) {
    const auto& f = frames[t];
    if (f.rgb.size() != n || f.silhouette.size() != n)
      throw InvariantError("frame " + std::to_string(t) + ": image size mismatch");
    if (f.feature.rows() != feature_dim || static_cast<std::size_t>(f.feature.cols()) != n)
      throw InvariantError("frame " + std::to_string(t) + ": feature map does not match the model");
    if (!f.flow.empty()) {
      if (f.flow.size() != n) throw InvariantError("frame " + std::to_string(t) + ": flow size mismatch");
      if (f.flow_frame < 0 || f.flow_frame >= static_cast<int>(frames.size()))
        throw FrameRangeError(f.flow_frame, static_cast<int>(frames.size()));
    }
  }
}

// ---- prior ----------------------------------------------------------------------

RigidTransform novel_view_pose(const NovelView& v) {
  const Mat3 r = (Rotation::ry(v.azimuth) * Rotation::rx(-v.elevation)).matrix();
  const Vec3 target(0.0, 0.0, v.radius);
  const Vec3 center = target + r * Vec3(0.0, 0.0, -v.radius);
  const Mat3 rt = r.transpose();
  return {Rotation::from_matrix(rt), -(rt * center)};
}

PriorResult ZeroPrior::gradient(const PriorImage& render, const NovelView&) const {
  return {std::vector<Vec3>(render.rgb.size(), Vec3::Zero()), 0.0};
}

PriorResult MockL2Prior::gradient(const PriorImage& render, const NovelView& view) const {
  const PriorImage target = target_(view, render.width, render.height);
  if (target.rgb.size() != render.rgb.size()) throw PriorError("mock prior target has the wrong size");
  PriorResult r;
  r.grad.resize(render.rgb.size());
  for (std::size_t i = 0; i < render.rgb.size(); ++i) {
    r.grad[i] = render.rgb[i] - target.rgb[i];
    r.loss += 0.5 * r.grad[i].squaredNorm();
  }
  return r;
}

Intrinsics scale_intrinsics(const Intrinsics& k, int from_w, int from_h, int to_w, int to_h) {
  const double sx = static_cast<double>(to_w) / from_w, sy = static_cast<double>(to_h) / from_h;
  return {k.fx * sx, k.fy * sy, k.cx * sx, k.cy * sy};
}

SdsResult sds_step(const PriorGradientSource& prior, const ArticulatedModel& model,
                   const NovelView& view, const SdsSettings& settings, double weight,
                   std::uint64_t seed) {
  const ModelConfig& mc = model.config();
  const Intrinsics k = scale_intrinsics(mc.intrinsics, mc.width, mc.height, settings.width, settings.height);
  const Camera cam(novel_view_pose(view), k, settings.width, settings.height);
  const Articulation art = model.articulation();
  art.check_frame(view.frame);
  const RayRenderer renderer(model.field(), model.store(), art, k, settings.render);

  std::vector<RayQuery> rays;
  for (int y = 0; y < settings.height; ++y)
    for (int x = 0; x < settings.width; ++x) {
      const Ray ray = generate_ray(cam, pixel_center(x, y), settings.render.near, settings.render.far);
      rays.push_back({ray.origin, ray.direction, pixel_center(x, y), view.frame, -1, false,
                      ray_seed(seed, view.frame, x, y, 0x5d5)});
    }
  std::vector<RayOutput> out(rays.size());
  const FieldQuery query{true, false};
  renderer.render(rays, query, out);

  SdsResult res;
  res.grad.assign(model.store().size(), 0.0);
  res.render.width = settings.width;
  res.render.height = settings.height;
  for (const auto& o : out) res.render.rgb.push_back(o.color);
  PriorResult pr;
  try {
    pr = prior.gradient(res.render, view);
  } catch (const PriorError&) {
    res.skipped = true;
    return res;
  }
  if (pr.grad.size() != rays.size()) throw InvariantError("prior gradient does not match the render");
  res.loss = pr.loss;

  ArticulationGrad agrad(art.frames, art.bones);
  auto upstream = [&](std::size_t i, const RayOutput&) {
    RayUpstream u;
    u.color = weight * pr.grad[i];
    return u;
  };
  renderer.render_backward(rays, query, upstream, out, res.grad, agrad);
  model.scatter(agrad, res.grad);
  for (const auto& b : model.store().blocks())
    if (b.group != ParamGroup::articulation)
      std::fill_n(res.grad.begin() + static_cast<std::ptrdiff_t>(b.offset), b.size, 0.0);
  return res;
}

// ---- objective --------------------------------------------------------------------

Objective::Objective(const ArticulatedModel& model, const TrainingData& data, ObjectiveConfig cfg,
                     const PriorGradientSource* prior)
    : model_(model), data_(data), cfg_(std::move(cfg)), prior_(prior) {
  cfg_.weights.validate();
  data_.validate(model_.field().feature_dim());
  if (static_cast<int>(data_.frames.size()) != model_.config().frames)
    throw InvariantError("dataset frame count differs from the model");
  if (cfg_.rays < 1) throw InvariantError("objective needs at least one ray per step");
}

NovelView Objective::sample_novel_view(std::uint64_t step, std::uint64_t stream) const {
  std::mt19937_64 rng(splitmix64(cfg_.seed ^ splitmix64(step * 4 + stream + 0x9e37)));
  std::uniform_int_distribution<int> frame(0, static_cast<int>(data_.frames.size()) - 1);
  std::uniform_real_distribution<double> az(cfg_.novel.azimuth_min, cfg_.novel.azimuth_max);
  std::uniform_real_distribution<double> el(cfg_.novel.elevation_min, cfg_.novel.elevation_max);
  NovelView v;
  v.frame = frame(rng);
  v.azimuth = az(rng) * kDeg;
  v.elevation = el(rng) * kDeg;
  v.radius = cfg_.novel_radius;
  return v;
}

double Objective::recon_and_cycle(const Articulation& art, std::uint64_t step, Gradient& grad,
                                  ArticulationGrad& agrad, double& cyc) const {
  const int w = data_.width, h = data_.height;
  const Intrinsics& k = data_.intrinsics;
  std::mt19937_64 rng(splitmix64(cfg_.seed ^ splitmix64(step * 4)));
  std::uniform_int_distribution<int> frame(0, static_cast<int>(data_.frames.size()) - 1);
  std::uniform_int_distribution<int> px(0, w - 1), py(0, h - 1);
  const auto n = static_cast<std::size_t>(cfg_.rays);
  std::vector<RayQuery> rays(n);
  std::vector<std::size_t> pixel(n);
  const bool want_cycle = cfg_.weights.cyc > 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const int t = frame(rng), x = px(rng), y = py(rng);
    const Vec2 u = pixel_center(x, y);
    const auto& f = data_.frames[t];
    rays[i] = {Vec3::Zero(), Vec3((u.x() - k.cx) / k.fx, (u.y() - k.cy) / k.fy, 1.0).normalized(),
               u, t, f.flow.empty() ? -1 : f.flow_frame, want_cycle,
               ray_seed(cfg_.seed, t, x, y, step)};
    pixel[i] = static_cast<std::size_t>(y) * w + x;
  }
  std::vector<double> recon(n, 0.0), cycle(n, 0.0);
  const double s = cfg_.weights.recon / static_cast<double>(n);
  const double sc = cfg_.weights.cyc / static_cast<double>(n);
  auto upstream = [&](std::size_t i, const RayOutput& o) {
    const auto& f = data_.frames[rays[i].frame];
    const std::size_t p = pixel[i];
    RayUpstream u;
    const Vec3 dc = o.color - f.rgb[p];
    const double nc = dc.norm();
    u.color = unit_or_zero(dc, nc, s);
    const Eigen::VectorXd df = o.feature - f.feature.col(static_cast<Eigen::Index>(p));
    const double nf = df.norm();
    u.feature = unit_or_zero(df, nf, s);
    const double dopa = o.opacity - f.silhouette[p];
    u.opacity = dopa > 0.0 ? s : (dopa < 0.0 ? -s : 0.0);
    double r = nc + nf + std::abs(dopa);
    if (rays[i].flow_frame >= 0 && o.flow_valid) {
      const Vec2 dflow = o.flow - f.flow[p];
      const double nfl = dflow.norm();
      u.flow = unit_or_zero(dflow, nfl, s);
      r += nfl;
    }
    recon[i] = r;
    cycle[i] = o.cycle;
    u.cycle = sc;
    return u;
  };
  std::vector<RayOutput> out(n);
  const RayRenderer renderer(model_.field(), model_.store(), art, k, cfg_.render);
  renderer.render_backward(rays, FieldQuery{}, upstream, out, grad, agrad);
  double rsum = 0.0, csum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    rsum += recon[i];
    csum += cycle[i];
  }
  cyc = want_cycle ? csum / static_cast<double>(n) : 0.0;
  return rsum / static_cast<double>(n);
}

double Objective::novel_cycle(const Articulation& art, std::uint64_t step, Gradient& grad,
                              ArticulationGrad& agrad) const {
  const NovelView view = sample_novel_view(step, 1);
  const int w = data_.width, h = data_.height;
  const Camera cam(novel_view_pose(view), data_.intrinsics, w, h);
  std::mt19937_64 rng(splitmix64(cfg_.seed ^ splitmix64(step * 4 + 2)));
  std::uniform_int_distribution<int> px(0, w - 1), py(0, h - 1);
  const auto n = static_cast<std::size_t>(std::max(cfg_.novel_rays, 1));
  std::vector<RayQuery> rays(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int x = px(rng), y = py(rng);
    const Ray ray = generate_ray(cam, pixel_center(x, y), cfg_.render.near, cfg_.render.far);
    rays[i] = {ray.origin, ray.direction, pixel_center(x, y), view.frame, -1, true,
               ray_seed(cfg_.seed ^ 0xc1c1e, view.frame, x, y, step)};
  }
  const double sc = cfg_.weights.ncyc / static_cast<double>(n);
  std::vector<RayOutput> out(n);
  const RayRenderer renderer(model_.field(), model_.store(), art, data_.intrinsics, cfg_.render);
  renderer.render_backward(
      rays, FieldQuery{false, false},
      [&](std::size_t, const RayOutput&) {
        RayUpstream u;
        u.cycle = sc;
        return u;
      },
      out, grad, agrad);
  double s = 0.0;
  for (const auto& o : out) s += o.cycle;
  return s / static_cast<double>(n);
}

LossBreakdown Objective::evaluate(std::uint64_t step, bool with_ncyc, bool with_sds,
                                  Gradient& grad) const {
  const ParameterStore& store = model_.store();
  if (grad.size() != store.size()) grad.assign(store.size(), 0.0);
  const Articulation art = model_.articulation();
  ArticulationGrad agrad(art.frames, art.bones);
  LossBreakdown b;
  const LossWeights& w = cfg_.weights;
  b.recon = recon_and_cycle(art, step, grad, agrad, b.cyc);
  if (with_ncyc && w.ncyc > 0.0) b.ncyc = novel_cycle(art, step, grad, agrad);
  model_.scatter(agrad, grad);
  b.surf = loss_surface_backward(model_, w.surf, grad);
  b.smooth = loss_smooth_backward(store, model_.motion(), w.smooth, grad);
  if (with_sds && prior_ && w.sds > 0.0) {
    const SdsResult sds = sds_step(*prior_, model_, sample_novel_view(step, 3), cfg_.sds, w.sds,
                                   splitmix64(cfg_.seed ^ step));
    if (!sds.skipped) {
      b.sds = sds.loss;
      for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += sds.grad[i];
    }
  }
  b.finalize(w);
  return b;
}

// ---- optimization -------------------------------------------------------------------

Adam::Adam(const ParameterStore& store, AdamConfig cfg)
    : cfg_(cfg), m_(store.size(), 0.0), v_(store.size(), 0.0), lr_(store.size(), cfg.lr) {
  if (!(cfg.lr >= 0.0) || !(cfg.beta1 >= 0.0 && cfg.beta1 < 1.0) ||
      !(cfg.beta2 >= 0.0 && cfg.beta2 < 1.0) || !(cfg.eps > 0.0))
    throw InvariantError("invalid Adam settings");
  for (const auto& b : store.blocks()) {
    const double lr = cfg.lr * cfg.group_scale[static_cast<int>(b.group)];
    std::fill_n(lr_.begin() + static_cast<std::ptrdiff_t>(b.offset), b.size, lr);
  }
}

void Adam::step(ParameterStore& store, std::span<const double> grad) {
  if (grad.size() != m_.size()) throw InvariantError("gradient size differs from the store");
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, t_), c2 = 1.0 - std::pow(cfg_.beta2, t_);
  auto x = store.all();
  for (std::size_t i = 0; i < x.size(); ++i) {
    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * grad[i];
    v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * grad[i] * grad[i];
    if (lr_[i] == 0.0) continue;
    x[i] -= lr_[i] * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + cfg_.eps);
  }
  store.normalize_quaternions();
}

std::string trace_line(int step, const LossBreakdown& b) {
  const nlohmann::ordered_json j{{"step", step},     {"recon", b.recon}, {"cyc", b.cyc},
                                 {"ncyc", b.ncyc},   {"surf", b.surf},   {"smooth", b.smooth},
                                 {"sds", b.sds},     {"total", b.total}};
  return j.dump();
}

OptimizeResult optimize(ParameterStore& store, const ObjectiveFn& objective, int steps,
                        const AdamConfig& adam, const Schedule& schedule, std::ostream* trace,
                        const std::function<void(int, const LossBreakdown&)>& on_step) {
  if (steps < 0) throw InvariantError("step count must be non-negative");
  Adam opt(store, adam);
  OptimizeResult res;
  Gradient grad;
  for (int step = 0; step < steps; ++step) {
    grad.assign(store.size(), 0.0);
    const LossBreakdown b = objective(step, schedule.ncyc_at(step), schedule.sds_at(step), grad);
    b.check_finite();
    for (double g : grad)
      if (!finite(g)) throw NumericalError("gradient", "non-finite gradient at step " + std::to_string(step));
    opt.step(store, grad);
    res.trace.push_back(b);
    if (trace) *trace << trace_line(step, b) << '\n';
    if (on_step) on_step(step, b);
  }
  return res;
}

}  // namespace artic
