// SPDX-License-Identifier: Apache-2.0

// logreg and tanh MLP. logreg is the zero-hidden-layer case.

#include <cmath>

#include "nn_internal.hpp"

namespace idim::detail {

std::vector<LayerDef> mlp_layers(const ModelSpec& spec) {
  std::vector<LayerDef> defs;
  std::size_t offset = 0;
  auto add = [&](std::string name, std::size_t length, InitKind init, std::size_t fan_in) {
    defs.push_back({{std::move(name), offset, length}, init, fan_in});
    offset += length;
  };
  std::size_t in = spec.dims.input_dim;
  for (std::size_t l = 0; l < spec.dims.hidden.size(); ++l) {
    const std::size_t out = spec.dims.hidden[l];
    const std::string prefix = "fc" + std::to_string(l);
    add(prefix + ".weight", out * in, InitKind::kScaledNormal, in);
    add(prefix + ".bias", out, InitKind::kZeros, 1);
    in = out;
  }
  add("head.weight", spec.num_classes * in, InitKind::kScaledNormal, in);
  add("head.bias", spec.num_classes, InitKind::kZeros, 1);
  return defs;
}

namespace {

class MlpNet final : public SampleNet {
 public:
  MlpNet(const ModelSpec& spec, std::span<const double> params) : params_(params) {
    widths_.push_back(spec.dims.input_dim);
    for (auto h : spec.dims.hidden) widths_.push_back(h);
    widths_.push_back(spec.num_classes);
    std::size_t offset = 0;
    for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
      w_offsets_.push_back(offset);
      offset += widths_[l] * widths_[l + 1];
      b_offsets_.push_back(offset);
      offset += widths_[l + 1];
    }
    acts_.resize(widths_.size());
    for (std::size_t l = 0; l < widths_.size(); ++l) acts_[l].resize(widths_[l]);
    delta_.resize(widths_.size());
    for (std::size_t l = 0; l < widths_.size(); ++l) delta_[l].resize(widths_[l]);
  }

  void forward(const Batch& batch, std::size_t row, std::span<double> logits) override {
    const double* x = batch.features.data() + row * batch.width;
    std::copy(x, x + widths_[0], acts_[0].begin());
    const std::size_t layers = widths_.size() - 1;
    for (std::size_t l = 0; l < layers; ++l) {
      auto& next = acts_[l + 1];
      matvec(params_.data() + w_offsets_[l], acts_[l].data(), next.data(), widths_[l + 1],
             widths_[l], params_.data() + b_offsets_[l]);
      if (l + 1 < layers) {
        for (auto& v : next) v = std::tanh(v);
      }
    }
    std::copy(acts_.back().begin(), acts_.back().end(), logits.begin());
  }

  void backward(std::span<const double> dlogits, std::span<double> grad) override {
    const std::size_t layers = widths_.size() - 1;
    std::copy(dlogits.begin(), dlogits.end(), delta_[layers].begin());
    for (std::size_t l = layers; l-- > 0;) {
      const auto& dy = delta_[l + 1];
      outer_acc(dy.data(), acts_[l].data(), grad.data() + w_offsets_[l], widths_[l + 1],
                widths_[l]);
      for (std::size_t o = 0; o < widths_[l + 1]; ++o) grad[b_offsets_[l] + o] += dy[o];
      if (l == 0) break;
      auto& dx = delta_[l];
      std::fill(dx.begin(), dx.end(), 0.0);
      matvec_t_acc(params_.data() + w_offsets_[l], dy.data(), dx.data(), widths_[l + 1],
                   widths_[l]);
      // acts_[l] holds tanh outputs for hidden layers.
      for (std::size_t i = 0; i < widths_[l]; ++i) dx[i] *= 1.0 - acts_[l][i] * acts_[l][i];
    }
  }

 private:
  std::span<const double> params_;
  std::vector<std::size_t> widths_;
  std::vector<std::size_t> w_offsets_;
  std::vector<std::size_t> b_offsets_;
  std::vector<std::vector<double>> acts_;
  std::vector<std::vector<double>> delta_;
};

}  // namespace

std::unique_ptr<SampleNet> make_mlp_net(const ModelSpec& spec, std::span<const double> params) {
  return std::make_unique<MlpNet>(spec, params);
}

}  // namespace idim::detail
