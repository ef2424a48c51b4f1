// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "artic/fields.hpp"
#include "artic/motion.hpp"
#include "artic/objectives.hpp"
#include "artic/render.hpp"
#include "artic/skinning.hpp"

namespace artic {

/// Two-part capsule rig under a pinhole camera. Part 0 covers x < joint, part 1 x > joint.
struct SceneSpec {
  int frames = 16;
  int width = 64;
  int height = 64;
  double focal = 88.0;
  double camera_distance = 3.0;

  Vec3 capsule_a{-0.7, 0.0, 0.0};
  Vec3 capsule_b{0.7, 0.0, 0.0};
  double capsule_radius = 0.22;
  double beta = 0.01;
  int feature_dim = kDefaultFeatureDim;

  Vec3 joint = Vec3::Zero();
  double bone_offset = 0.35;  // bone centers at joint ± offset along x
  double bone_scale = 0.3;
  double temperature = 0.05;

  /// Part 1 rotates about the joint by amplitude · sin(2π t / T) around bend_axis.
  double bend_amplitude_deg = 40.0;
  Vec3 bend_axis = Vec3::UnitZ();
  /// Whole-rig translation per frame (canonical units).
  Vec3 translation_per_frame = Vec3::Zero();
  /// Camera orbit about canonical +y per frame, degrees.
  double camera_azimuth_step_deg = 0.0;

  RenderSettings render{96, 1.5, 4.5, SampleMode::midpoint, 4096};
  /// Seeds the procedural color and feature texture.
  std::uint64_t seed = 0;

  void validate() const;
};

nlohmann::ordered_json to_json(const SceneSpec& s);
void from_json(const nlohmann::ordered_json& j, SceneSpec& s, const std::string& path = "");

/// Ground-truth field and motion reconstructed from a scene spec.
struct GroundTruth {
  SceneSpec spec;
  std::unique_ptr<AnalyticField> field;
  ParameterStore store;  // empty, the analytic field has no parameters
  std::vector<NeuralBone> bones;
  MotionSequence sequence;

  Intrinsics intrinsics() const;
  Articulation articulation() const;
  /// GT part of a canonical point.
  int part(const Vec3& canonical) const;
};

GroundTruth make_ground_truth(const SceneSpec& spec);

/// Rotation angle of part 1 about the joint at frame t, radians.
double bend_angle(const SceneSpec& spec, int t);

/// One flow per frame: to t + 1, and to t − 1 for the last frame.
int flow_pair(int t, int frames);

/// Writes `frames/NNNN.{rgb.ppm,sil.ppm,rgb.f32,sil.f32,feat.f32,flow.f32,meta.json}` and
/// `scene.json`. Deterministic given the spec.
void synth_dataset(const SceneSpec& spec, const std::string& dir);

struct Dataset {
  TrainingData data;
  /// Present when scene.json carries a synthetic scene description.
  std::optional<SceneSpec> scene;
};

/// Throws ParseError naming the offending file or field.
Dataset load_dataset(const std::string& dir);

/// Mean reconstruction loss of rendering every pixel (with flow) against the dataset.
double dataset_recon_loss(const CanonicalField& field, const ParameterStore& store,
                          const Articulation& art, const TrainingData& data,
                          const RenderSettings& render);

}  // namespace artic
