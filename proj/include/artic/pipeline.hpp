// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "artic/dataset.hpp"
#include "artic/mesh_skeleton.hpp"
#include "artic/model.hpp"
#include "artic/objectives.hpp"

namespace artic {

enum class PriorKind { none, mock };

struct FitConfig {
  /// Frame count, intrinsics and image size are taken from the dataset.
  ModelConfig model;
  ObjectiveConfig objective;
  AdamConfig adam;
  Schedule schedule;
  int steps = 3000;
  /// Seeds the initialization and the ray / novel-view sampling.
  std::uint64_t seed = 0;
  PriorKind prior = PriorKind::none;

  void validate() const;
};

nlohmann::ordered_json to_json(const FitConfig& c);
void from_json(const nlohmann::ordered_json& j, FitConfig& c, const std::string& path = "");

/// Defaults sized for the two-part capsule scene on one CPU core.
FitConfig toy_fit_config();

/// Model matching the dataset's frames, intrinsics and image size, initialized from `cfg.seed`.
std::unique_ptr<ArticulatedModel> initial_model(const TrainingData& data, const FitConfig& cfg);

struct FitResult {
  std::unique_ptr<ArticulatedModel> model;
  std::vector<LossBreakdown> trace;
};

using FitProgress = std::function<void(int step, const LossBreakdown&)>;

/// Adam on the full objective. Writes one JSON line per step to `trace` when given.
FitResult fit(const TrainingData& data, const FitConfig& cfg, std::ostream* trace = nullptr,
              const FitProgress& progress = {});

// ---- evaluation ---------------------------------------------------------------

/// Opacity of every training view, thresholded at 0.5 against the observed silhouettes.
struct IouReport {
  std::vector<double> per_frame;
  double mean = 0.0;
};
IouReport silhouette_iou(const ArticulatedModel& model, const TrainingData& data,
                         const RenderSettings& render);

/// Mean error, in degrees, between learned and ground-truth per-frame relative part rotations.
/// Each learned bone is matched to the ground-truth part holding most of its skinning mass over
/// interior grid points; the error is averaged over frames 1..T−1 and weighted by that mass.
struct RotationReport {
  double mean_deg = 0.0;
  std::vector<int> bone_to_part;
  std::vector<double> bone_mass;
};
RotationReport rotation_error(const ArticulatedModel& model, const GroundTruth& gt, int grid = 24);

struct AzimuthCoverage {
  double ratio = 0.0;
  std::vector<int> bins;  // 36 occupancy counts
  std::vector<double> azimuth_deg;
};
/// Azimuth of each camera's optical axis about canonical +y, in 10° bins centered on 0°.
AzimuthCoverage azimuth_coverage(std::span<const RigidTransform> cameras);
AzimuthCoverage azimuth_coverage(const ArticulatedModel& model);

// ---- rendering and export ----------------------------------------------------

/// Training view of frame t, or a novel view around it.
RenderedImage render_view(const ArticulatedModel& model, int t, const std::optional<NovelView>& novel,
                          const RenderSettings& render, int flow_frame = -1);

/// Colored rest-pose mesh of the canonical field.
TriangleMesh extract_mesh(const ArticulatedModel& model, int resolution, const GridBounds& bounds = {});

/// Mesh, skinning, skeleton and rest state, quantized to the bundle precision.
ArticulatedBundle build_bundle(const ArticulatedModel& model, const TriangleMesh& rest_mesh,
                               int resolution, std::uint64_t threshold,
                               const std::string& checkpoint_hash);

}  // namespace artic
