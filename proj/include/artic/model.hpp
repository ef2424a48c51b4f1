// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>

#include "artic/core_math.hpp"
#include "artic/fields.hpp"
#include "artic/motion.hpp"
#include "artic/params.hpp"
#include "artic/skinning.hpp"

namespace artic {

struct ModelConfig {
  FieldConfig field;
  SkinningConfig skinning;
  int frames = 1;
  Intrinsics intrinsics{100, 100, 64, 64};
  int width = 128;
  int height = 128;
  /// Initial P_t = translate(0, 0, camera_distance).
  double camera_distance = 3.0;
};

/// Canonical field, neural bones and motion sharing one ParameterStore.
class ArticulatedModel {
 public:
  explicit ArticulatedModel(const ModelConfig& cfg);

  void initialize(std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  ParameterStore& store() { return store_; }
  const ParameterStore& store() const { return store_; }
  const NetworkField& field() const { return field_; }
  const SkinningModel& skinning() const { return skin_; }
  const MotionLayout& motion() const { return motion_; }

  MotionSequence sequence() const;
  std::vector<NeuralBone> bones() const { return skin_.bones(store_); }
  /// Snapshot of the current parameters; refers back to this model's store.
  Articulation articulation() const;
  Camera camera(int t) const { return sequence().view(t); }

  /// Chains warp / camera gradients into the bone and motion parameter blocks.
  void scatter(const ArticulationGrad& g, std::span<double> grad) const;

 private:
  ModelConfig cfg_;
  ParameterStore store_;
  NetworkField field_;
  SkinningModel skin_;
  MotionLayout motion_;
};

}  // namespace artic
