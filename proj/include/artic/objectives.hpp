// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "artic/model.hpp"
#include "artic/params.hpp"
#include "artic/render.hpp"

namespace artic {

struct LossWeights {
  double recon = 1e-1;
  double sds = 1e-4;
  double cyc = 1e-2;
  double ncyc = 1.0;
  double surf = 1e-1;
  double smooth = 1e-2;
  void validate() const;
};

struct LossBreakdown {
  double recon = 0.0, sds = 0.0, cyc = 0.0, ncyc = 0.0, surf = 0.0, smooth = 0.0;
  double total = 0.0;
  /// Sets total = Σ w_k · term_k.
  void finalize(const LossWeights& w);
  /// Throws NumericalError naming the first non-finite term.
  void check_finite() const;
};

// ---- closed-form terms --------------------------------------------------------

/// One (u, t, t') element: rendered and observed channels.
struct ReconElement {
  Vec3 color_render = Vec3::Zero(), color_obs = Vec3::Zero();
  Eigen::VectorXd feature_render, feature_obs;
  double silhouette_render = 0.0, silhouette_obs = 0.0;
  Vec2 flow_render = Vec2::Zero(), flow_obs = Vec2::Zero();
  bool has_flow = true;
};

/// Mean over elements of ‖Δc‖ + ‖Δξ‖ + |Δo| + ‖Δf‖.
double loss_recon(std::span<const ReconElement> elements);
/// Σ τ_i ‖w_i − w'_i‖ over the samples of one ray.
double loss_cycle(std::span<const double> tau, std::span<const Vec3> points,
                  std::span<const Vec3> cycled);
/// ‖max(δ, 0)‖₂.
double loss_surface(std::span<const double> sdf_at_bones);
/// Mean over bones and transitions of ang(R^t, R^{t+1}) + ‖s^t − s^{t+1}‖ for J^t_b.
double loss_smooth(const MotionSequence& seq);

/// Gradient of loss_smooth into the frame-transform blocks of `layout`, scaled by `weight`.
double loss_smooth_backward(const ParameterStore& store, const MotionLayout& layout, double weight,
                            std::span<double> grad);
/// Surface loss and its gradient through the canonical SDF and the bone centers.
double loss_surface_backward(const ArticulatedModel& model, double weight, std::span<double> grad);

// ---- training data ------------------------------------------------------------

/// One supervised frame in observation (camera) space.
struct FrameObservation {
  std::vector<Vec3> rgb;
  std::vector<double> silhouette;
  /// feature_dim × (width·height), column per pixel.
  Eigen::MatrixXd feature;
  /// Flow to `flow_frame` in pixels, one per pixel; empty when absent.
  std::vector<Vec2> flow;
  int flow_frame = -1;
};

struct TrainingData {
  Intrinsics intrinsics;
  int width = 0, height = 0;
  std::vector<FrameObservation> frames;
  void validate(int feature_dim) const;
};

// ---- distillation prior -------------------------------------------------------

/// Novel camera relative to a training view: orbit around the point at depth `radius` on
/// the training camera's optical axis.
struct NovelView {
  int frame = 0;
  double azimuth = 0.0;
  double elevation = 0.0;
  double radius = 3.0;
};
/// Pose mapping the observation space of the view's frame to the novel camera.
RigidTransform novel_view_pose(const NovelView& v);

struct PriorImage {
  int width = 0, height = 0;
  std::vector<Vec3> rgb;
};

struct PriorResult {
  /// Gradient of the prior objective w.r.t. each rendered pixel color.
  std::vector<Vec3> grad;
  double loss = 0.0;
};

class PriorGradientSource {
 public:
  virtual ~PriorGradientSource() = default;
  /// May throw PriorError; the caller skips the step.
  virtual PriorResult gradient(const PriorImage& render, const NovelView& view) const = 0;
};

class ZeroPrior final : public PriorGradientSource {
 public:
  PriorResult gradient(const PriorImage& render, const NovelView& view) const override;
};

/// Gradient render − target, loss ½‖render − target‖².
class MockL2Prior final : public PriorGradientSource {
 public:
  using TargetFn = std::function<PriorImage(const NovelView&, int width, int height)>;
  explicit MockL2Prior(TargetFn target) : target_(std::move(target)) {}
  PriorResult gradient(const PriorImage& render, const NovelView& view) const override;

 private:
  TargetFn target_;
};

struct SdsSettings {
  RenderSettings render{16, 0.5, 5.5, SampleMode::jittered, 2048};
  int width = 32;
  int height = 32;
};

struct SdsResult {
  Gradient grad;
  double loss = 0.0;
  bool skipped = false;
  PriorImage render;
};

/// Intrinsics of the training camera rescaled to the SDS image size.
Intrinsics scale_intrinsics(const Intrinsics& k, int from_w, int from_h, int to_w, int to_h);

/// Renders the novel view, queries the prior and backpropagates weight · gradient.
/// Only the articulation group keeps its gradient; every other entry is exactly zero.
SdsResult sds_step(const PriorGradientSource& prior, const ArticulatedModel& model,
                   const NovelView& view, const SdsSettings& settings, double weight,
                   std::uint64_t seed);

// ---- objective ----------------------------------------------------------------

struct NovelViewRange {
  double azimuth_min = -90.0, azimuth_max = 90.0;      // degrees
  double elevation_min = -10.0, elevation_max = 45.0;  // degrees
};

struct ObjectiveConfig {
  LossWeights weights;
  int rays = 512;
  int novel_rays = 128;
  RenderSettings render{64, 0.5, 5.5, SampleMode::jittered, 2048};
  SdsSettings sds;
  NovelViewRange novel;
  /// Orbit radius of novel views; the training camera distance.
  double novel_radius = 3.0;
  std::uint64_t seed = 0;
};

/// The full training objective over a dataset. evaluate() is deterministic in (seed, step).
class Objective {
 public:
  Objective(const ArticulatedModel& model, const TrainingData& data, ObjectiveConfig cfg,
            const PriorGradientSource* prior = nullptr);

  const ObjectiveConfig& config() const { return cfg_; }

  /// Accumulates the gradient of the weighted objective into `grad` (resized to the store).
  LossBreakdown evaluate(std::uint64_t step, bool with_ncyc, bool with_sds, Gradient& grad) const;

  NovelView sample_novel_view(std::uint64_t step, std::uint64_t stream) const;

 private:
  double recon_and_cycle(const Articulation& art, std::uint64_t step, Gradient& grad,
                         ArticulationGrad& agrad, double& cyc) const;
  double novel_cycle(const Articulation& art, std::uint64_t step, Gradient& grad,
                     ArticulationGrad& agrad) const;

  const ArticulatedModel& model_;
  const TrainingData& data_;
  ObjectiveConfig cfg_;
  const PriorGradientSource* prior_;
};

// ---- optimization -------------------------------------------------------------

struct AdamConfig {
  double lr = 5e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// Per-group multipliers on lr (canonical, articulation, camera).
  std::array<double, 3> group_scale{1.0, 1.0, 1.0};
};

class Adam {
 public:
  Adam(const ParameterStore& store, AdamConfig cfg);
  /// One update; quaternion blocks are renormalized afterwards.
  void step(ParameterStore& store, std::span<const double> grad);
  int iterations() const { return t_; }

 private:
  AdamConfig cfg_;
  std::vector<double> m_, v_, lr_;
  int t_ = 0;
};

struct Schedule {
  int ncyc_period = 3;
  int sds_period = 10;
  bool sds_enabled = false;
  bool ncyc_at(int step) const { return ncyc_period > 0 && step % ncyc_period == 0; }
  bool sds_at(int step) const { return sds_enabled && sds_period > 0 && step % sds_period == 0; }
};

using ObjectiveFn =
    std::function<LossBreakdown(int step, bool ncyc, bool sds, Gradient& grad)>;

struct OptimizeResult {
  std::vector<LossBreakdown> trace;
};

/// Runs `steps` Adam iterations. Aborts with NumericalError on a non-finite term or gradient.
/// `on_step` (optional) sees each step's breakdown after the update.
OptimizeResult optimize(ParameterStore& store, const ObjectiveFn& objective, int steps,
                        const AdamConfig& adam, const Schedule& schedule,
                        std::ostream* trace = nullptr,
                        const std::function<void(int, const LossBreakdown&)>& on_step = {});

/// {step, recon, cyc, ncyc, surf, smooth, sds, total} as one JSON line.
std::string trace_line(int step, const LossBreakdown& b);

}  // namespace artic
