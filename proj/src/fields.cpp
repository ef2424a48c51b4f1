// SPDX-License-Identifier: Apache-2.0
#include "artic/fields.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "artic/errors.hpp"

namespace artic {

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

double unit_double(std::uint64_t& state) {
  return static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-53;
}

double smin(double a, double b, double k) {
  if (k <= 0.0) return std::min(a, b);
  const double h = std::max(k - std::abs(a - b), 0.0) / k;
  return std::min(a, b) - h * h * k * 0.25;
}

}  // namespace

double LaplaceDensityParams::beta() const { return std::exp(log_beta); }

double sdf_to_density(double sdf, const LaplaceDensityParams& params) {
  return sdf_to_density_derivatives(sdf, params.log_beta).density;
}

DensityDerivatives sdf_to_density_derivatives(double sdf, double log_beta) {
  const double beta = std::exp(log_beta);
  const double inv = 1.0 / beta;
  const double e = std::exp(-std::abs(sdf) * inv);  // exp(−|δ|/β)
  DensityDerivatives d;
  d.d_sdf = -0.5 * e * inv * inv;
  if (sdf >= 0.0) {
    d.density = 0.5 * e * inv;
    d.d_log_beta = d.density * (sdf * inv - 1.0);
  } else {
    d.density = inv - 0.5 * e * inv;
    d.d_log_beta = -inv + 0.5 * e * (inv + sdf * inv * inv);
  }
  return d;
}

AnalyticShape AnalyticShape::sphere(const Vec3& center, double radius) {
  if (!(radius > 0.0)) throw InvariantError("sphere radius must be positive");
  AnalyticShape s;
  s.kind_ = Kind::sphere;
  s.a_ = center;
  s.radius_ = radius;
  return s;
}

AnalyticShape AnalyticShape::capsule(const Vec3& a, const Vec3& b, double radius) {
  if (!(radius > 0.0)) throw InvariantError("capsule radius must be positive");
  if ((a - b).norm() == 0.0) throw InvariantError("capsule endpoints must be distinct");
  AnalyticShape s;
  s.kind_ = Kind::capsule;
  s.a_ = a;
  s.b_ = b;
  s.radius_ = radius;
  return s;
}

AnalyticShape AnalyticShape::box(const Vec3& center, const Vec3& half_extents) {
  if (!(half_extents.array() > 0.0).all()) throw InvariantError("box extents must be positive");
  AnalyticShape s;
  s.kind_ = Kind::box;
  s.a_ = center;
  s.b_ = half_extents;
  return s;
}

AnalyticShape AnalyticShape::smooth_union(std::vector<AnalyticShape> children, double k) {
  if (children.empty()) throw InvariantError("smooth union needs at least one child");
  if (k < 0.0) throw InvariantError("smooth union radius must be non-negative");
  AnalyticShape s;
  s.kind_ = Kind::smooth_union;
  s.radius_ = k;
  s.children_ = std::move(children);
  return s;
}

AnalyticShape AnalyticShape::constant(double value) {
  AnalyticShape s;
  s.kind_ = Kind::constant;
  s.radius_ = value;
  return s;
}

double AnalyticShape::sdf(const Vec3& x) const {
  switch (kind_) {
    case Kind::sphere: return (x - a_).norm() - radius_;
    case Kind::capsule: {
      const Vec3 ab = b_ - a_;
      const double h = std::clamp((x - a_).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
      return (x - a_ - h * ab).norm() - radius_;
    }
    case Kind::box: {
      const Vec3 q = (x - a_).cwiseAbs() - b_;
      return q.cwiseMax(0.0).norm() + std::min(q.maxCoeff(), 0.0);
    }
    case Kind::smooth_union: {
      double d = children_.front().sdf(x);
      for (std::size_t i = 1; i < children_.size(); ++i) d = smin(d, children_[i].sdf(x), radius_);
      return d;
    }
    case Kind::constant: return radius_;
  }
  return 0.0;
}

ProceduralTexture::ProceduralTexture(int channels, std::uint64_t seed, double frequency)
    : frequency_(frequency) {
  if (channels < 0) throw InvariantError("negative channel count");
  std::uint64_t state = seed;
  for (int c = 0; c < channels; ++c) {
    Vec3 d;
    do {
      d = Vec3(unit_double(state), unit_double(state), unit_double(state)) * 2.0 - Vec3::Ones();
    } while (d.norm() < 0.1 || d.norm() > 1.0);
    dir_.push_back(d.normalized());
    phase_.push_back(2.0 * std::numbers::pi * unit_double(state));
  }
}

Eigen::VectorXd ProceduralTexture::eval(const Vec3& x) const {
  Eigen::VectorXd out(channels());
  for (int c = 0; c < channels(); ++c)
    out[c] = 0.5 + 0.5 * std::sin(frequency_ * dir_[c].dot(x) + phase_[c]);
  return out;
}

void CanonicalField::backward(const ParameterStore&, const FieldTape&, const FieldBatchGrad&,
                              std::span<double>, Eigen::Matrix3Xd*) const {
  throw Error("field is not differentiable");
}

FieldSample CanonicalField::eval(const ParameterStore& store, const Vec3& x) const {
  Eigen::Matrix3Xd p(3, 1);
  p.col(0) = x;
  FieldBatch b;
  evaluate(store, p, {}, b, nullptr);
  return {b.color.col(0), b.sdf[0], b.density[0], b.feature.col(0)};
}

Eigen::VectorXd CanonicalField::sdf(const ParameterStore& store,
                                    const Eigen::Matrix3Xd& points) const {
  FieldBatch b;
  evaluate(store, points, {false, false}, b, nullptr);
  return b.sdf;
}

AnalyticField::AnalyticField(AnalyticShape shape, int feature_dim, double beta,
                             std::uint64_t texture_seed)
    : shape_(std::move(shape)),
      density_{std::log(beta)},
      color_(3, texture_seed),
      feature_(feature_dim, texture_seed ^ 0xA5A5A5A5ull) {
  if (!(beta > 0.0)) throw InvariantError("density scale must be positive");
}

void AnalyticField::evaluate(const ParameterStore&, const Eigen::Matrix3Xd& points,
                             const FieldQuery& query, FieldBatch& out, FieldTape*) const {
  const auto n = points.cols();
  out.sdf.resize(n);
  out.density.resize(n);
  out.color.resize(3, query.color ? n : 0);
  out.feature.resize(feature_dim(), query.feature ? n : 0);
  for (Eigen::Index i = 0; i < n; ++i) {
    out.sdf[i] = shape_.sdf(points.col(i));
    out.density[i] = sdf_to_density(out.sdf[i], density_);
    if (query.color) out.color.col(i) = color_.eval(points.col(i));
    if (query.feature) out.feature.col(i) = feature_.eval(points.col(i));
  }
}

FieldSample eval_analytic(const AnalyticShape& shape, const Vec3& x) {
  const AnalyticField field(shape);
  return field.eval(ParameterStore{}, x);
}

NetworkField NetworkField::create(ParameterStore& store, const FieldConfig& cfg) {
  if (cfg.sdf.outputs != 1) throw InvariantError("SDF head must have one output");
  if (cfg.color.outputs != 3) throw InvariantError("color head must have three outputs");
  NetworkField f;
  f.cfg_ = cfg;
  f.sdf_ = CoordinateNetwork::create(store, "field.sdf", ParamGroup::canonical, cfg.sdf);
  f.color_ = CoordinateNetwork::create(store, "field.color", ParamGroup::canonical, cfg.color);
  f.feature_ = CoordinateNetwork::create(store, "field.feature", ParamGroup::canonical, cfg.feature);
  f.log_beta_ = store.add("field.log_beta", ParamGroup::canonical, {1});
  store.values(f.log_beta_)[0] = cfg.init_log_beta;
  return f;
}

void NetworkField::initialize(ParameterStore& store, std::mt19937_64& rng) const {
  sdf_.init_sphere(store, rng, cfg_.init_radius);
  color_.init_random(store, rng, 0.1);
  feature_.init_random(store, rng, 0.1);
  store.values(log_beta_)[0] = cfg_.init_log_beta;
}

void NetworkField::evaluate(const ParameterStore& store, const Eigen::Matrix3Xd& points,
                            const FieldQuery& query, FieldBatch& out, FieldTape* tape) const {
  const auto n = points.cols();
  out.sdf = sdf_.forward(store, points, tape ? &tape->sdf : nullptr).row(0).transpose();
  const double log_beta = store.values(log_beta_)[0];
  out.density.resize(n);
  for (Eigen::Index i = 0; i < n; ++i)
    out.density[i] = sdf_to_density_derivatives(out.sdf[i], log_beta).density;
  if (query.color) out.color = color_.forward(store, points, tape ? &tape->color : nullptr);
  else out.color.resize(3, 0);
  if (query.feature) out.feature = feature_.forward(store, points, tape ? &tape->feature : nullptr);
  else out.feature.resize(feature_dim(), 0);
  if (tape) {
    tape->sdf_values = out.sdf;
    tape->query = query;
  }
}

void NetworkField::backward(const ParameterStore& store, const FieldTape& tape,
                            const FieldBatchGrad& up, std::span<double> grad,
                            Eigen::Matrix3Xd* grad_points) const {
  const auto n = tape.sdf_values.size();
  const double log_beta = store.values(log_beta_)[0];
  Eigen::MatrixXd g_sdf = Eigen::MatrixXd::Zero(1, n);
  double g_log_beta = 0.0;
  if (up.sdf.size() == n) g_sdf.row(0) = up.sdf.transpose();
  if (up.density.size() == n) {
    for (Eigen::Index i = 0; i < n; ++i) {
      if (up.density[i] == 0.0) continue;
      const auto d = sdf_to_density_derivatives(tape.sdf_values[i], log_beta);
      g_sdf(0, i) += up.density[i] * d.d_sdf;
      g_log_beta += up.density[i] * d.d_log_beta;
    }
  }
  grad_block(grad, store, log_beta_)[0] += g_log_beta;

  Eigen::Matrix3Xd gp, total = Eigen::Matrix3Xd::Zero(3, n);
  Eigen::Matrix3Xd* gp_ptr = grad_points ? &gp : nullptr;
  sdf_.backward(store, tape.sdf, g_sdf, grad, gp_ptr);
  if (grad_points) total += gp;
  if (tape.query.color && up.color.cols() == n) {
    color_.backward(store, tape.color, up.color, grad, gp_ptr);
    if (grad_points) total += gp;
  }
  if (tape.query.feature && up.feature.cols() == n) {
    feature_.backward(store, tape.feature, up.feature, grad, gp_ptr);
    if (grad_points) total += gp;
  }
  if (grad_points) *grad_points = std::move(total);
}

}  // namespace artic
