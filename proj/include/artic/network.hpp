// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "artic/core_math.hpp"
#include "artic/params.hpp"

namespace artic {

/// [x, sin(2^k π x), cos(2^k π x)] for k = 0..L−1; length 3 + 6L.
Eigen::VectorXd positional_encode(const Vec3& x, int frequencies);
/// Column-wise batch version: 3×n -> (3+6L)×n.
Eigen::MatrixXd positional_encode_batch(const Eigen::Matrix3Xd& x, int frequencies);
inline int encoded_dim(int frequencies) { return 3 + 6 * frequencies; }

enum class OutputActivation { linear, sigmoid };

struct NetworkConfig {
  int frequencies = 6;
  std::vector<int> hidden{64, 64, 64, 64, 64};
  /// Hidden layer whose input is concatenated with the encoding (scaled by 1/√2); −1 disables.
  int skip_layer = 2;
  int outputs = 1;
  OutputActivation output = OutputActivation::linear;
  /// Hidden activation is softplus(β·z)/β.
  double softplus_beta = 100.0;
};

/// Activations recorded by a forward pass, consumed by backward.
struct MlpTape {
  Eigen::MatrixXd encoding;
  std::vector<Eigen::MatrixXd> inputs;  // input of every layer
  std::vector<Eigen::MatrixXd> slope;   // softplus slope of every hidden layer
  Eigen::MatrixXd output;
};

/// Small coordinate MLP whose weights live in a ParameterStore.
class CoordinateNetwork {
 public:
  CoordinateNetwork() = default;
  /// Adds the weight blocks `<prefix>.l<k>.weight` / `.bias` to the store (zero-initialized).
  static CoordinateNetwork create(ParameterStore& store, const std::string& prefix,
                                  ParamGroup group, const NetworkConfig& cfg);

  const NetworkConfig& config() const { return cfg_; }
  int input_dim() const { return encoded_dim(cfg_.frequencies); }
  int layer_count() const { return static_cast<int>(weights_.size()); }
  int layer_input_dim(int layer) const;
  int layer_output_dim(int layer) const;
  ParameterStore::Handle weight_handle(int layer) const { return weights_[layer]; }
  ParameterStore::Handle bias_handle(int layer) const { return biases_[layer]; }

  /// He-style random initialization with a zero output layer bias.
  void init_random(ParameterStore& store, std::mt19937_64& rng, double output_scale = 1.0) const;
  /// Geometric initialization: output ≈ |x| − radius for a scalar head.
  void init_sphere(ParameterStore& store, std::mt19937_64& rng, double radius) const;
  /// Zeroes the output layer so the network starts as a constant.
  void zero_output(ParameterStore& store, double bias = 0.0) const;

  /// points: 3×n; returns outputs × n. Records activations when `tape` is given.
  Eigen::MatrixXd forward(const ParameterStore& store, const Eigen::Matrix3Xd& points,
                          MlpTape* tape = nullptr) const;
  /// Accumulates parameter gradients into `grad` (store layout) and optionally writes d/dpoints.
  void backward(const ParameterStore& store, const MlpTape& tape, const Eigen::MatrixXd& grad_out,
                std::span<double> grad, Eigen::Matrix3Xd* grad_points) const;

 private:
  NetworkConfig cfg_;
  std::vector<ParameterStore::Handle> weights_;
  std::vector<ParameterStore::Handle> biases_;
};

}  // namespace artic
