// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <memory>
#include <span>
#include <vector>

#include "idim/nn.hpp"

namespace idim::detail {

enum class InitKind { kZeros, kOnes, kScaledNormal };

struct LayerDef {
  LayerSegment segment;
  InitKind init = InitKind::kZeros;
  std::size_t fan_in = 1;  // kScaledNormal draws N(0, 1/fan_in)
};

std::vector<LayerDef> mlp_layers(const ModelSpec& spec);
std::vector<LayerDef> transformer_layers(const ModelSpec& spec);

// Processes one sample at a time; backward() refers to the latest forward().
class SampleNet {
 public:
  virtual ~SampleNet() = default;
  virtual void forward(const Batch& batch, std::size_t row, std::span<double> logits) = 0;
  // Accumulates d(loss)/d(params) into grad given d(loss)/d(logits).
  virtual void backward(std::span<const double> dlogits, std::span<double> grad) = 0;
};

std::unique_ptr<SampleNet> make_mlp_net(const ModelSpec& spec, std::span<const double> params);
std::unique_ptr<SampleNet> make_transformer_net(const ModelSpec& spec,
                                                std::span<const double> params);

// y[o] = sum_i w[o*in + i] x[i] (+ bias)
inline void matvec(const double* w, const double* x, double* y, std::size_t out,
                   std::size_t in, const double* bias = nullptr) {
  for (std::size_t o = 0; o < out; ++o) {
    const double* row = w + o * in;
    double acc = bias ? bias[o] : 0.0;
    for (std::size_t i = 0; i < in; ++i) acc += row[i] * x[i];
    y[o] = acc;
  }
}

// x_grad[i] += sum_o w[o*in + i] dy[o]
inline void matvec_t_acc(const double* w, const double* dy, double* x_grad, std::size_t out,
                         std::size_t in) {
  for (std::size_t o = 0; o < out; ++o) {
    const double* row = w + o * in;
    const double g = dy[o];
    for (std::size_t i = 0; i < in; ++i) x_grad[i] += row[i] * g;
  }
}

// w_grad[o*in + i] += dy[o] x[i]
inline void outer_acc(const double* dy, const double* x, double* w_grad, std::size_t out,
                      std::size_t in) {
  for (std::size_t o = 0; o < out; ++o) {
    double* row = w_grad + o * in;
    const double g = dy[o];
    for (std::size_t i = 0; i < in; ++i) row[i] += g * x[i];
  }
}

}  // namespace idim::detail
