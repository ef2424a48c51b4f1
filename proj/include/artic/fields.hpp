// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <random>
#include <vector>

#include <Eigen/Core>

#include "artic/core_math.hpp"
#include "artic/network.hpp"
#include "artic/params.hpp"

namespace artic {

inline constexpr int kDefaultFeatureDim = 16;

/// Color, SDF, density and feature of one canonical point.
struct FieldSample {
  Vec3 color = Vec3::Zero();
  double sdf = 0.0;
  double density = 0.0;
  Eigen::VectorXd feature;
};

/// Laplace-CDF density; β is stored as log β so it stays positive.
struct LaplaceDensityParams {
  double log_beta = -2.302585092994046;  // log 0.1
  double beta() const;
};

/// σ = (1/β) Ψ_β(−δ), Ψ_β the zero-mean Laplace CDF with scale β.
double sdf_to_density(double sdf, const LaplaceDensityParams& params);

struct DensityDerivatives {
  double density;
  double d_sdf;       // ∂σ/∂δ
  double d_log_beta;  // ∂σ/∂log β
};
DensityDerivatives sdf_to_density_derivatives(double sdf, double log_beta);

/// Exact-distance primitives and their smooth union.
class AnalyticShape {
 public:
  static AnalyticShape sphere(const Vec3& center, double radius);
  static AnalyticShape capsule(const Vec3& a, const Vec3& b, double radius);
  static AnalyticShape box(const Vec3& center, const Vec3& half_extents);
  /// Polynomial smooth minimum with blend radius k (k = 0 gives the exact union).
  static AnalyticShape smooth_union(std::vector<AnalyticShape> children, double k);
  /// Signed distance plus a constant offset (δ ≡ c when the child list is empty).
  static AnalyticShape constant(double value);

  double sdf(const Vec3& x) const;

 private:
  enum class Kind { sphere, capsule, box, smooth_union, constant };
  Kind kind_ = Kind::constant;
  Vec3 a_ = Vec3::Zero();
  Vec3 b_ = Vec3::Zero();
  double radius_ = 0.0;
  std::vector<AnalyticShape> children_;
};

/// Smooth procedural channels 0.5 + 0.5 sin(f·(dₖ·x) + φₖ); directions and phases hashed from a seed.
class ProceduralTexture {
 public:
  ProceduralTexture(int channels, std::uint64_t seed, double frequency = 3.0);
  int channels() const { return static_cast<int>(phase_.size()); }
  Eigen::VectorXd eval(const Vec3& x) const;

 private:
  std::vector<Vec3> dir_;
  std::vector<double> phase_;
  double frequency_;
};

/// Batched field values at n canonical points.
struct FieldBatch {
  Eigen::VectorXd sdf;
  Eigen::VectorXd density;
  Eigen::Matrix3Xd color;
  Eigen::MatrixXd feature;
};

/// Upstream gradients matching FieldBatch; empty members are treated as zero.
struct FieldBatchGrad {
  Eigen::VectorXd sdf;
  Eigen::VectorXd density;
  Eigen::Matrix3Xd color;
  Eigen::MatrixXd feature;
};

struct FieldQuery {
  bool color = true;
  bool feature = true;
};

/// Recorded activations of a forward NetworkField evaluation.
struct FieldTape {
  MlpTape sdf, color, feature;
  Eigen::VectorXd sdf_values;
  FieldQuery query;
};

/// The canonical implicit model M: v -> (c, σ, δ, ξ).
class CanonicalField {
 public:
  virtual ~CanonicalField() = default;
  virtual int feature_dim() const = 0;
  virtual bool differentiable() const { return false; }
  virtual void evaluate(const ParameterStore& store, const Eigen::Matrix3Xd& points,
                        const FieldQuery& query, FieldBatch& out, FieldTape* tape) const = 0;
  /// Accumulates parameter gradients and writes d/dpoints. Only differentiable fields implement it.
  virtual void backward(const ParameterStore& store, const FieldTape& tape,
                        const FieldBatchGrad& upstream, std::span<double> grad,
                        Eigen::Matrix3Xd* grad_points) const;

  FieldSample eval(const ParameterStore& store, const Vec3& x) const;
  /// SDF only, for meshing and bone queries.
  Eigen::VectorXd sdf(const ParameterStore& store, const Eigen::Matrix3Xd& points) const;
};

/// Analytic primitive with procedural color / feature; carries no parameters.
class AnalyticField final : public CanonicalField {
 public:
  AnalyticField(AnalyticShape shape, int feature_dim = kDefaultFeatureDim, double beta = 0.1,
                std::uint64_t texture_seed = 7);
  int feature_dim() const override { return feature_.channels(); }
  void evaluate(const ParameterStore& store, const Eigen::Matrix3Xd& points,
                const FieldQuery& query, FieldBatch& out, FieldTape* tape) const override;
  const AnalyticShape& shape() const { return shape_; }
  double beta() const { return density_.beta(); }

 private:
  AnalyticShape shape_;
  LaplaceDensityParams density_;
  ProceduralTexture color_;
  ProceduralTexture feature_;
};

/// Stand-alone evaluation of a primitive with default texture and β = 0.1.
FieldSample eval_analytic(const AnalyticShape& shape, const Vec3& x);

struct FieldConfig {
  NetworkConfig sdf{6, {64, 64, 64, 64, 64}, 2, 1, OutputActivation::linear, 100.0};
  NetworkConfig color{8, {64, 64, 64, 64, 64}, 2, 3, OutputActivation::sigmoid, 100.0};
  NetworkConfig feature{6, {64, 64, 64, 64, 64}, 2, kDefaultFeatureDim, OutputActivation::linear, 100.0};
  double init_log_beta = -2.302585092994046;
  double init_radius = 0.5;
};

/// Three coordinate networks (SDF, color, feature) plus the learnable log β, all in the
/// canonical parameter group.
class NetworkField final : public CanonicalField {
 public:
  static NetworkField create(ParameterStore& store, const FieldConfig& cfg);
  /// Sphere-initialized SDF head, random color/feature heads, β = exp(init_log_beta).
  void initialize(ParameterStore& store, std::mt19937_64& rng) const;

  int feature_dim() const override { return cfg_.feature.outputs; }
  bool differentiable() const override { return true; }
  void evaluate(const ParameterStore& store, const Eigen::Matrix3Xd& points,
                const FieldQuery& query, FieldBatch& out, FieldTape* tape) const override;
  void backward(const ParameterStore& store, const FieldTape& tape, const FieldBatchGrad& upstream,
                std::span<double> grad, Eigen::Matrix3Xd* grad_points) const override;

  const FieldConfig& config() const { return cfg_; }
  const CoordinateNetwork& sdf_net() const { return sdf_; }
  const CoordinateNetwork& color_net() const { return color_; }
  const CoordinateNetwork& feature_net() const { return feature_; }
  ParameterStore::Handle log_beta_handle() const { return log_beta_; }

 private:
  FieldConfig cfg_;
  CoordinateNetwork sdf_, color_, feature_;
  ParameterStore::Handle log_beta_ = 0;
};

}  // namespace artic
