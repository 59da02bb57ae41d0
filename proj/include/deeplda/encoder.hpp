#pragma once

#include <cmath>
#include <vector>

#include "deeplda/errors.hpp"
#include "deeplda/matrix.hpp"
#include "deeplda/rng.hpp"

namespace deeplda {

enum class Activation { ReLU, Identity };

struct EncoderLayer {
  Matrix weight;  // out x in
  Vec bias;
  Activation activation = Activation::Identity;
};

struct Encoder {
  std::vector<EncoderLayer> layers;

  int input_dim() const { return layers.empty() ? 0 : layers.front().weight.cols(); }
  int latent_dim() const { return layers.empty() ? 0 : layers.back().weight.rows(); }

  void check_consistent() const {
    for (size_t l = 0; l < layers.size(); ++l) {
      if (static_cast<int>(layers[l].bias.size()) != layers[l].weight.rows())
        throw DimensionMismatch("encoder: bias length does not match weight rows");
      if (l + 1 < layers.size() &&
          layers[l + 1].weight.cols() != layers[l].weight.rows())
        throw DimensionMismatch("encoder: consecutive layer dims do not chain");
    }
    if (!layers.empty() && layers.back().activation != Activation::Identity)
      throw DimensionMismatch("encoder: final activation must be identity");
  }
};

/// fan_in-uniform init, U(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases.
inline Encoder make_mlp(const std::vector<int>& dims, Rng& rng) {
  Encoder enc;
  for (size_t l = 0; l + 1 < dims.size(); ++l) {
    EncoderLayer layer;
    layer.weight = Matrix(dims[l + 1], dims[l]);
    layer.bias.assign(dims[l + 1], 0.0);
    const double bound = 1.0 / std::sqrt(static_cast<double>(dims[l]));
    for (int i = 0; i < layer.weight.rows(); ++i)
      for (int j = 0; j < layer.weight.cols(); ++j)
        layer.weight(i, j) = bound * (2.0 * uniform_unit(rng) - 1.0);
    for (double& b : layer.bias) b = bound * (2.0 * uniform_unit(rng) - 1.0);
    layer.activation = (l + 2 < dims.size()) ? Activation::ReLU : Activation::Identity;
    enc.layers.push_back(std::move(layer));
  }
  enc.check_consistent();
  return enc;
}

struct EncoderCache {
  std::vector<Vec> inputs;   // input to each layer
  std::vector<Vec> pre_act;  // pre-activation of each layer
  Vec output;
};

struct EncoderGrad {
  std::vector<Matrix> weights;
  std::vector<Vec> biases;
  Vec input;

  static EncoderGrad zeros_like(const Encoder& enc) {
    EncoderGrad g;
    for (const EncoderLayer& l : enc.layers) {
      g.weights.emplace_back(l.weight.rows(), l.weight.cols());
      g.biases.emplace_back(l.bias.size(), 0.0);
    }
    g.input.assign(enc.input_dim(), 0.0);
    return g;
  }

  void add_scaled(double a, const EncoderGrad& o) {
    for (size_t l = 0; l < weights.size(); ++l) {
      for (int i = 0; i < weights[l].rows(); ++i)
        for (int j = 0; j < weights[l].cols(); ++j)
          weights[l](i, j) += a * o.weights[l](i, j);
      for (size_t i = 0; i < biases[l].size(); ++i) biases[l][i] += a * o.biases[l][i];
    }
  }
};

inline EncoderCache encoder_forward(const Encoder& enc, const Vec& x) {
  if (static_cast<int>(x.size()) != enc.input_dim())
    throw DimensionMismatch("encoder_forward: input length does not match input dim");
  EncoderCache cache;
  Vec h = x;
  for (const EncoderLayer& layer : enc.layers) {
    cache.inputs.push_back(h);
    Vec a = matvec(layer.weight, h);
    for (size_t i = 0; i < a.size(); ++i) a[i] += layer.bias[i];
    cache.pre_act.push_back(a);
    if (layer.activation == Activation::ReLU)
      for (double& v : a) v = (v > 0.0) ? v : 0.0;  // derivative at 0 is 0
    h = std::move(a);
  }
  cache.output = h;
  return cache;
}

inline EncoderGrad encoder_backward(const Encoder& enc, const EncoderCache& cache,
                                    const Vec& grad_z) {
  if (cache.inputs.size() != enc.layers.size() || cache.pre_act.size() != enc.layers.size())
    throw StaleCache("encoder_backward: cache does not match encoder layout");
  if (static_cast<int>(grad_z.size()) != enc.latent_dim())
    throw DimensionMismatch("encoder_backward: grad length does not match latent dim");
  EncoderGrad g = EncoderGrad::zeros_like(enc);
  Vec grad = grad_z;
  for (int l = static_cast<int>(enc.layers.size()) - 1; l >= 0; --l) {
    const EncoderLayer& layer = enc.layers[l];
    if (cache.pre_act[l].size() != layer.bias.size() ||
        static_cast<int>(cache.inputs[l].size()) != layer.weight.cols())
      throw StaleCache("encoder_backward: cache shapes are stale");
    Vec grad_pre = grad;
    if (layer.activation == Activation::ReLU)
      for (size_t i = 0; i < grad_pre.size(); ++i)
        if (cache.pre_act[l][i] <= 0.0) grad_pre[i] = 0.0;
    for (int i = 0; i < layer.weight.rows(); ++i) {
      g.biases[l][i] += grad_pre[i];
      for (int j = 0; j < layer.weight.cols(); ++j)
        g.weights[l](i, j) += grad_pre[i] * cache.inputs[l][j];
    }
    grad = matvec_transposed(layer.weight, grad_pre);
  }
  g.input = std::move(grad);
  return g;
}

}  // namespace deeplda
