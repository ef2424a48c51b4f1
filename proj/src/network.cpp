// SPDX-License-Identifier: Apache-2.0
#include "artic/network.hpp"

#include <cmath>
#include <numbers>

#include "artic/errors.hpp"

namespace artic {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstWeights = Eigen::Map<const RowMat>;
using Weights = Eigen::Map<RowMat>;

constexpr double kSkipScale = 0.70710678118654752440;

struct Softplus {
  double value;
  double slope;  // sigmoid(βz)
};

Softplus softplus(double z, double beta) {
  const double bz = beta * z;
  // Past ±37 the correction terms round away.
  if (bz > 37.0) return {z, 1.0};
  if (bz >= 0.0) {
    const double e = std::exp(-bz);
    return {z + std::log1p(e) / beta, 1.0 / (1.0 + e)};
  }
  const double e = std::exp(bz);
  return {(bz < -37.0 ? e : std::log1p(e)) / beta, e / (1.0 + e)};
}

double sigmoid(double z) {
  if (z > 37.0) return 1.0;
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

Eigen::VectorXd positional_encode(const Vec3& x, int frequencies) {
  Eigen::Matrix3Xd m(3, 1);
  m.col(0) = x;
  return positional_encode_batch(m, frequencies).col(0);
}

Eigen::MatrixXd positional_encode_batch(const Eigen::Matrix3Xd& x, int frequencies) {
  if (frequencies < 0) throw InvariantError("negative frequency count");
  Eigen::MatrixXd out(encoded_dim(frequencies), x.cols());
  out.topRows<3>() = x;
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    double scale = std::numbers::pi;
    for (int k = 0; k < frequencies; ++k, scale *= 2.0)
      for (int d = 0; d < 3; ++d) {
        const double a = scale * x(d, c);
        out(3 + 6 * k + d, c) = std::sin(a);
        out(6 + 6 * k + d, c) = std::cos(a);
      }
  }
  return out;
}

CoordinateNetwork CoordinateNetwork::create(ParameterStore& store, const std::string& prefix,
                                            ParamGroup group, const NetworkConfig& cfg) {
  if (cfg.outputs < 1) throw InvariantError("network needs at least one output");
  if (cfg.skip_layer >= static_cast<int>(cfg.hidden.size()) || cfg.skip_layer == 0)
    throw InvariantError("skip layer must index a hidden layer after the first");
  CoordinateNetwork net;
  net.cfg_ = cfg;
  const int layers = static_cast<int>(cfg.hidden.size()) + 1;
  for (int l = 0; l < layers; ++l) {
    const std::string base = prefix + ".l" + std::to_string(l);
    net.weights_.push_back(
        store.add(base + ".weight", group, {net.layer_output_dim(l), net.layer_input_dim(l)}));
    net.biases_.push_back(store.add(base + ".bias", group, {net.layer_output_dim(l)}));
  }
  return net;
}

int CoordinateNetwork::layer_input_dim(int l) const {
  if (l == 0) return input_dim();
  const int prev = cfg_.hidden[l - 1];
  return l == cfg_.skip_layer ? prev + input_dim() : prev;
}

int CoordinateNetwork::layer_output_dim(int l) const {
  return l < static_cast<int>(cfg_.hidden.size()) ? cfg_.hidden[l] : cfg_.outputs;
}

void CoordinateNetwork::init_random(ParameterStore& store, std::mt19937_64& rng,
                                    double output_scale) const {
  for (int l = 0; l < layer_count(); ++l) {
    const int in = layer_input_dim(l);
    const bool last = l + 1 == layer_count();
    std::normal_distribution<double> dist(0.0, (last ? output_scale : std::sqrt(2.0)) / std::sqrt(in));
    for (double& w : store.values(weights_[l])) w = dist(rng);
    for (double& b : store.values(biases_[l])) b = 0.0;
  }
}

void CoordinateNetwork::init_sphere(ParameterStore& store, std::mt19937_64& rng,
                                    double radius) const {
  const int enc = input_dim();
  for (int l = 0; l < layer_count(); ++l) {
    const int in = layer_input_dim(l), out = layer_output_dim(l);
    Weights w(store.values(weights_[l]).data(), out, in);
    auto b = store.values(biases_[l]);
    const bool last = l + 1 == layer_count();
    if (last) {
      std::normal_distribution<double> dist(std::sqrt(std::numbers::pi) / std::sqrt(in), 1e-4);
      for (int i = 0; i < w.size(); ++i) w.data()[i] = dist(rng);
      for (double& v : b) v = -radius;
      continue;
    }
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0) / std::sqrt(out));
    for (int i = 0; i < w.size(); ++i) w.data()[i] = dist(rng);
    for (double& v : b) v = 0.0;
    // Only the raw coordinates feed the first layer and the skip concatenation initially.
    if (l == 0) w.rightCols(enc - 3).setZero();
    if (l == cfg_.skip_layer) w.rightCols(enc - 3).setZero();
  }
}

void CoordinateNetwork::zero_output(ParameterStore& store, double bias) const {
  const int l = layer_count() - 1;
  for (double& v : store.values(weights_[l])) v = 0.0;
  for (double& v : store.values(biases_[l])) v = bias;
}

Eigen::MatrixXd CoordinateNetwork::forward(const ParameterStore& store,
                                           const Eigen::Matrix3Xd& points, MlpTape* tape) const {
  const double beta = cfg_.softplus_beta;
  Eigen::MatrixXd enc = positional_encode_batch(points, cfg_.frequencies);
  Eigen::MatrixXd h = enc;
  if (tape) {
    tape->inputs.assign(layer_count(), {});
    tape->slope.assign(layer_count(), {});
  }
  for (int l = 0; l < layer_count(); ++l) {
    if (l == cfg_.skip_layer) {
      Eigen::MatrixXd cat(h.rows() + enc.rows(), h.cols());
      cat << h, enc;
      h = cat * kSkipScale;
    }
    ConstWeights w(store.values(weights_[l]).data(), layer_output_dim(l), layer_input_dim(l));
    Eigen::Map<const Eigen::VectorXd> b(store.values(biases_[l]).data(), layer_output_dim(l));
    Eigen::MatrixXd z = w * h;
    z.colwise() += b;
    if (tape) tape->inputs[l] = std::move(h);
    const bool last = l + 1 == layer_count();
    if (!last) {
      h.resize(z.rows(), z.cols());
      if (tape) tape->slope[l].resize(z.rows(), z.cols());
      for (Eigen::Index i = 0; i < z.size(); ++i) {
        const Softplus sp = softplus(z.data()[i], beta);
        h.data()[i] = sp.value;
        if (tape) tape->slope[l].data()[i] = sp.slope;
      }
    } else if (cfg_.output == OutputActivation::sigmoid) {
      h = z.unaryExpr([](double v) { return sigmoid(v); });
    } else {
      h = std::move(z);
    }
  }
  if (tape) {
    tape->encoding = std::move(enc);
    tape->output = h;
  }
  return h;
}

void CoordinateNetwork::backward(const ParameterStore& store, const MlpTape& tape,
                                 const Eigen::MatrixXd& grad_out, std::span<double> grad,
                                 Eigen::Matrix3Xd* grad_points) const {
  const int enc_dim = input_dim();
  Eigen::MatrixXd g = grad_out;
  Eigen::MatrixXd g_enc = Eigen::MatrixXd::Zero(enc_dim, grad_out.cols());
  for (int l = layer_count() - 1; l >= 0; --l) {
    const bool last = l + 1 == layer_count();
    if (last) {
      if (cfg_.output == OutputActivation::sigmoid)
        g.array() *= (tape.output.array() * (1.0 - tape.output.array()));
    } else {
      g.array() *= tape.slope[l].array();
    }
    const int in = layer_input_dim(l), out = layer_output_dim(l);
    Weights gw(grad_block(grad, store, weights_[l]).data(), out, in);
    Eigen::Map<Eigen::VectorXd> gb(grad_block(grad, store, biases_[l]).data(), out);
    gw.noalias() += g * tape.inputs[l].transpose();
    gb += g.rowwise().sum();
    ConstWeights w(store.values(weights_[l]).data(), out, in);
    Eigen::MatrixXd g_in = w.transpose() * g;
    if (l == cfg_.skip_layer) {
      const int prev = in - enc_dim;
      g_enc += g_in.bottomRows(enc_dim) * kSkipScale;
      g = g_in.topRows(prev) * kSkipScale;
    } else if (l == 0) {
      g_enc += g_in;
    } else {
      g = std::move(g_in);
    }
  }
  if (!grad_points) return;
  // The tape's encoding already holds sin and cos of every frequency.
  const Eigen::MatrixXd& enc = tape.encoding;
  Eigen::Matrix3Xd gx = g_enc.topRows<3>();
  double scale = std::numbers::pi;
  for (int k = 0; k < cfg_.frequencies; ++k, scale *= 2.0) {
    gx.array() += g_enc.middleRows(3 + 6 * k, 3).array() * enc.middleRows(6 + 6 * k, 3).array() * scale;
    gx.array() -= g_enc.middleRows(6 + 6 * k, 3).array() * enc.middleRows(3 + 6 * k, 3).array() * scale;
  }
  *grad_points = std::move(gx);
}

}  // namespace artic
