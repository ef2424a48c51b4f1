// SPDX-License-Identifier: Apache-2.0
#include "artic/model.hpp"

#include <random>

namespace artic {

ArticulatedModel::ArticulatedModel(const ModelConfig& cfg)
    : cfg_(cfg),
      field_(NetworkField::create(store_, cfg.field)),
      skin_(SkinningModel::create(store_, cfg.skinning)),
      motion_(MotionLayout::create(store_, cfg.frames, cfg.skinning.bones)) {
  Camera(RigidTransform::identity(), cfg.intrinsics, cfg.width, cfg.height);
}

void ArticulatedModel::initialize(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  field_.initialize(store_, rng);
  skin_.initialize(store_, rng);
  motion_.initialize(store_, cfg_.camera_distance);
}

MotionSequence ArticulatedModel::sequence() const {
  return motion_.read(store_, cfg_.intrinsics, cfg_.width, cfg_.height);
}

Articulation ArticulatedModel::articulation() const {
  return Articulation::build(sequence(), bones(), skin_.temperature(), skin_.delta_net(), &store_);
}

void ArticulatedModel::scatter(const ArticulationGrad& g, std::span<double> grad) const {
  skin_.scatter(store_, g.bones, grad);
  motion_.scatter(store_, g, grad);
}

}  // namespace artic
