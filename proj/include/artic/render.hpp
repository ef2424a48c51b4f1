// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "artic/core_math.hpp"
#include "artic/fields.hpp"
#include "artic/motion.hpp"
#include "artic/params.hpp"

namespace artic {

struct Ray {
  Vec3 origin = Vec3::Zero();
  Vec3 direction = Vec3::UnitZ();
  double near = 0.5;
  double far = 5.5;
};

/// Continuous pixel coordinates of the center of pixel (i, j).
inline Vec2 pixel_center(int i, int j) { return {i + 0.5, j + 0.5}; }

/// Ray through continuous pixel coordinates `u` (pixel (i, j) spans [i, i+1) × [j, j+1)).
/// Origin and direction are expressed in the frame the camera pose maps from.
Ray generate_ray(const Camera& cam, const Vec2& u, double near, double far);

enum class SampleMode { jittered, midpoint };

struct RaySampleSet {
  std::vector<double> depths;
  std::vector<Vec3> positions;
  /// Δ_i: lengths of the cells bounded by the midpoints between samples (and near / far).
  std::vector<double> intervals;
  /// τ_i, filled by composite().
  std::vector<double> weights;
};

RaySampleSet sample_ray(const Ray& ray, int n, std::uint64_t seed,
                        SampleMode mode = SampleMode::jittered);
void sample_depths(double near, double far, int n, std::uint64_t seed, SampleMode mode,
                   double* depths, double* intervals);

struct RenderedPixel {
  Vec3 color = Vec3::Zero();
  double opacity = 0.0;
  Eigen::VectorXd feature;
  Vec2 flow = Vec2::Zero();
  bool has_flow = false;
};

/// Alpha compositing. colors is 3×n, features is D×n (may have zero rows).
/// Writes τ into `samples.weights`.
RenderedPixel composite(RaySampleSet& samples, std::span<const double> density,
                        const Eigen::Matrix3Xd& colors, const Eigen::MatrixXd& features);

/// τ_i and T_i (transmittance before sample i) for densities σ over cells Δ.
void composite_weights(const double* density, const double* intervals, int n, double* tau,
                       double* transmittance);
/// d/dσ given d/dτ: g_σ_k = Δ_k (g_τ_k T_{k+1} − Σ_{i>k} g_τ_i τ_i).
void composite_weights_vjp(const double* intervals, const double* tau, const double* transmittance,
                           const double* g_tau, int n, double* g_density);

struct RenderSettings {
  int samples = 64;
  double near = 0.5;
  double far = 5.5;
  SampleMode mode = SampleMode::jittered;
  /// Rays evaluated together in one batch; bounds tape memory.
  int chunk_samples = 2048;
};

/// One ray in the observation space of frame `frame`.
struct RayQuery {
  Vec3 origin = Vec3::Zero();
  Vec3 direction = Vec3::UnitZ();
  /// Pixel in the frame's training camera; only used for flow.
  Vec2 pixel = Vec2::Zero();
  int frame = 0;
  /// Target frame of the rendered flow, or −1.
  int flow_frame = -1;
  /// Also evaluate Σ τ_i ‖w_i − F(G(w_i, t), t)‖.
  bool cycle = false;
  std::uint64_t seed = 0;
};

struct RayOutput {
  Vec3 color = Vec3::Zero();
  double opacity = 0.0;
  Eigen::VectorXd feature;
  Vec2 flow = Vec2::Zero();
  /// False when every warped sample landed behind the target camera.
  bool flow_valid = false;
  double cycle = 0.0;
};

/// Upstream gradients for one ray. An empty feature means zero.
struct RayUpstream {
  Vec3 color = Vec3::Zero();
  double opacity = 0.0;
  Eigen::VectorXd feature;
  Vec2 flow = Vec2::Zero();
  double cycle = 0.0;
};

/// Called once per ray with its forward result; must only touch state owned by that ray index.
using UpstreamFn = std::function<RayUpstream(std::size_t, const RayOutput&)>;

/// Batched renderer over a parameter snapshot. Pure in forward; backward writes only to the
/// buffers it is handed.
class RayRenderer {
 public:
  RayRenderer(const CanonicalField& field, const ParameterStore& store,
              const Articulation& articulation, const Intrinsics& k, RenderSettings settings);

  const RenderSettings& settings() const { return settings_; }

  void render(std::span<const RayQuery> rays, const FieldQuery& query,
              std::span<RayOutput> out) const;

  /// Forward, then backward with the upstream returned by `upstream`. Parameter gradients of the
  /// field and the delta network go to `grad`; warp and camera gradients to `agrad`.
  void render_backward(std::span<const RayQuery> rays, const FieldQuery& query,
                       const UpstreamFn& upstream, std::span<RayOutput> out, Gradient& grad,
                       ArticulationGrad& agrad) const;

 private:
  struct Chunk;
  void forward_chunk(Chunk& c, const FieldQuery& query, bool record) const;
  void backward_chunk(Chunk& c, std::span<const RayUpstream> up, std::span<double> grad,
                      ArticulationGrad& agrad) const;
  std::size_t rays_per_chunk() const;

  const CanonicalField& field_;
  const ParameterStore& store_;
  const Articulation& art_;
  Intrinsics k_;
  RenderSettings settings_;
};

/// Single-pixel convenience wrappers. `cam` maps the observation space of frame t to camera
/// coordinates (identity for training views).
RenderedPixel render_pixel(const CanonicalField& field, const ParameterStore& store,
                           const Articulation& art, const Camera& cam, const Vec2& u, int t,
                           const RenderSettings& settings, std::uint64_t seed = 0);
/// Flow of pixel u from frame t to frame t' in pixels (training cameras). Throws ProjectionError
/// when all warped samples land behind the camera.
Vec2 render_flow(const CanonicalField& field, const ParameterStore& store, const Articulation& art,
                 const Intrinsics& k, const Vec2& u, int t, int t_prime,
                 const RenderSettings& settings, std::uint64_t seed = 0);

struct RenderedImage {
  int width = 0, height = 0;
  std::vector<Vec3> color;
  std::vector<double> opacity;
  std::vector<Eigen::VectorXd> feature;
  std::vector<Vec2> flow;
  std::vector<std::uint8_t> flow_valid;
};

/// Renders every pixel of `cam` for frame t; flow to `flow_frame` when ≥ 0.
RenderedImage render_image(const RayRenderer& renderer, const Camera& cam, int t,
                           const FieldQuery& query, int flow_frame = -1, std::uint64_t seed = 0);

/// Per-(pixel, frame, iteration) sampling seed.
std::uint64_t ray_seed(std::uint64_t base, int frame, int x, int y, std::uint64_t iteration);
std::uint64_t splitmix64(std::uint64_t x);

}  // namespace artic
