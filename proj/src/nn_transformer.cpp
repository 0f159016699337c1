// SPDX-License-Identifier: Apache-2.0

// Tiny pre-norm transformer encoder classifier with hand-written backprop:
// token embedding + sinusoidal positions, 1-2 blocks of single-head
// self-attention and a GELU feed-forward, final LayerNorm, mean-pool, linear head.

#include <cmath>
#include <numbers>

#include "nn_internal.hpp"

namespace idim::detail {

namespace {

constexpr double kLayerNormEps = 1e-5;

struct BlockOffsets {
  std::size_t ln1_gain, ln1_bias, wq, wk, wv, wo, ln2_gain, ln2_bias, w1, b1, w2, b2;
};

struct Offsets {
  std::size_t embed = 0;
  std::vector<BlockOffsets> blocks;
  std::size_t lnf_gain = 0, lnf_bias = 0, head_w = 0, head_b = 0;
};

}  // namespace

std::vector<LayerDef> transformer_layers(const ModelSpec& spec) {
  const auto& d = spec.dims;
  const std::size_t dm = d.model_dim;
  const std::size_t ff = d.ff_dim;
  std::vector<LayerDef> defs;
  std::size_t offset = 0;
  auto add = [&](std::string name, std::size_t length, InitKind init, std::size_t fan_in) {
    defs.push_back({{std::move(name), offset, length}, init, fan_in});
    offset += length;
  };
  // One-hot lookup has fan-in 1.
  add("embed.weight", d.vocab_size * dm, InitKind::kScaledNormal, 1);
  for (std::size_t b = 0; b < d.num_blocks; ++b) {
    const std::string p = "block" + std::to_string(b) + ".";
    add(p + "ln1.gain", dm, InitKind::kOnes, 1);
    add(p + "ln1.bias", dm, InitKind::kZeros, 1);
    add(p + "attn.wq", dm * dm, InitKind::kScaledNormal, dm);
    add(p + "attn.wk", dm * dm, InitKind::kScaledNormal, dm);
    add(p + "attn.wv", dm * dm, InitKind::kScaledNormal, dm);
    add(p + "attn.wo", dm * dm, InitKind::kScaledNormal, dm);
    add(p + "ln2.gain", dm, InitKind::kOnes, 1);
    add(p + "ln2.bias", dm, InitKind::kZeros, 1);
    add(p + "ff.w1", ff * dm, InitKind::kScaledNormal, dm);
    add(p + "ff.b1", ff, InitKind::kZeros, 1);
    add(p + "ff.w2", dm * ff, InitKind::kScaledNormal, ff);
    add(p + "ff.b2", dm, InitKind::kZeros, 1);
  }
  add("final_ln.gain", dm, InitKind::kOnes, 1);
  add("final_ln.bias", dm, InitKind::kZeros, 1);
  add("head.weight", spec.num_classes * dm, InitKind::kScaledNormal, dm);
  add("head.bias", spec.num_classes, InitKind::kZeros, 1);
  return defs;
}

namespace {

Offsets compute_offsets(const ModelSpec& spec) {
  const auto defs = transformer_layers(spec);
  Offsets o;
  std::size_t i = 0;
  o.embed = defs[i++].segment.offset;
  for (std::size_t b = 0; b < spec.dims.num_blocks; ++b) {
    BlockOffsets bo{};
    bo.ln1_gain = defs[i++].segment.offset;
    bo.ln1_bias = defs[i++].segment.offset;
    bo.wq = defs[i++].segment.offset;
    bo.wk = defs[i++].segment.offset;
    bo.wv = defs[i++].segment.offset;
    bo.wo = defs[i++].segment.offset;
    bo.ln2_gain = defs[i++].segment.offset;
    bo.ln2_bias = defs[i++].segment.offset;
    bo.w1 = defs[i++].segment.offset;
    bo.b1 = defs[i++].segment.offset;
    bo.w2 = defs[i++].segment.offset;
    bo.b2 = defs[i++].segment.offset;
    o.blocks.push_back(bo);
  }
  o.lnf_gain = defs[i++].segment.offset;
  o.lnf_bias = defs[i++].segment.offset;
  o.head_w = defs[i++].segment.offset;
  o.head_b = defs[i++].segment.offset;
  return o;
}

// tanh approximation of GELU
inline double gelu(double x) {
  constexpr double c = 0.7978845608028654;  // sqrt(2/pi)
  return 0.5 * x * (1.0 + std::tanh(c * (x + 0.044715 * x * x * x)));
}

inline double gelu_grad(double x) {
  constexpr double c = 0.7978845608028654;
  const double t = std::tanh(c * (x + 0.044715 * x * x * x));
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * c * (1.0 + 3.0 * 0.044715 * x * x);
}

struct LayerNormCache {
  std::vector<double> xhat;  // L x dm
  std::vector<double> rstd;  // L
};

void layer_norm_forward(const double* x, const double* gain, const double* bias, double* y,
                        LayerNormCache& cache, std::size_t rows, std::size_t dm) {
  for (std::size_t t = 0; t < rows; ++t) {
    const double* xr = x + t * dm;
    double mean = 0.0;
    for (std::size_t j = 0; j < dm; ++j) mean += xr[j];
    mean /= static_cast<double>(dm);
    double var = 0.0;
    for (std::size_t j = 0; j < dm; ++j) var += (xr[j] - mean) * (xr[j] - mean);
    var /= static_cast<double>(dm);
    const double rstd = 1.0 / std::sqrt(var + kLayerNormEps);
    cache.rstd[t] = rstd;
    for (std::size_t j = 0; j < dm; ++j) {
      const double xh = (xr[j] - mean) * rstd;
      cache.xhat[t * dm + j] = xh;
      y[t * dm + j] = gain[j] * xh + bias[j];
    }
  }
}

// dx += LN backward of dy.
void layer_norm_backward(const double* dy, const double* gain, const LayerNormCache& cache,
                         double* dgain, double* dbias, double* dx, std::size_t rows,
                         std::size_t dm, std::vector<double>& scratch) {
  scratch.resize(dm);
  const double inv_dm = 1.0 / static_cast<double>(dm);
  for (std::size_t t = 0; t < rows; ++t) {
    const double* dyr = dy + t * dm;
    const double* xh = cache.xhat.data() + t * dm;
    double mean_dxh = 0.0;
    double mean_dxh_xh = 0.0;
    for (std::size_t j = 0; j < dm; ++j) {
      dgain[j] += dyr[j] * xh[j];
      dbias[j] += dyr[j];
      scratch[j] = dyr[j] * gain[j];
      mean_dxh += scratch[j];
      mean_dxh_xh += scratch[j] * xh[j];
    }
    mean_dxh *= inv_dm;
    mean_dxh_xh *= inv_dm;
    const double rstd = cache.rstd[t];
    for (std::size_t j = 0; j < dm; ++j) {
      dx[t * dm + j] += rstd * (scratch[j] - mean_dxh - xh[j] * mean_dxh_xh);
    }
  }
}

struct BlockCache {
  std::vector<double> x_in;   // L x dm, residual stream entering the block
  LayerNormCache ln1;
  std::vector<double> a;      // LN1 output
  std::vector<double> q, k, v;
  std::vector<double> probs;  // L x L
  std::vector<double> o;      // attention output before Wo
  std::vector<double> x_mid;  // after attention residual
  LayerNormCache ln2;
  std::vector<double> c;      // LN2 output
  std::vector<double> hpre;   // L x ff
  std::vector<double> h;
};

class TransformerNet final : public SampleNet {
 public:
  TransformerNet(const ModelSpec& spec, std::span<const double> params)
      : p_(params),
        off_(compute_offsets(spec)),
        V_(spec.dims.vocab_size),
        L_(spec.dims.seq_len),
        dm_(spec.dims.model_dim),
        ff_(spec.dims.ff_dim),
        C_(spec.num_classes) {
    pos_.resize(L_ * dm_);
    for (std::size_t t = 0; t < L_; ++t) {
      for (std::size_t i = 0; i < dm_ / 2; ++i) {
        const double freq =
            std::pow(10000.0, -2.0 * static_cast<double>(i) / static_cast<double>(dm_));
        pos_[t * dm_ + 2 * i] = std::sin(static_cast<double>(t) * freq);
        pos_[t * dm_ + 2 * i + 1] = std::cos(static_cast<double>(t) * freq);
      }
    }
    const std::size_t n = L_ * dm_;
    blocks_.resize(off_.blocks.size());
    for (auto& bc : blocks_) {
      for (auto* v : {&bc.x_in, &bc.a, &bc.q, &bc.k, &bc.v, &bc.o, &bc.x_mid, &bc.c}) v->resize(n);
      bc.ln1.xhat.resize(n);
      bc.ln1.rstd.resize(L_);
      bc.ln2.xhat.resize(n);
      bc.ln2.rstd.resize(L_);
      bc.probs.resize(L_ * L_);
      bc.hpre.resize(L_ * ff_);
      bc.h.resize(L_ * ff_);
    }
    x_.resize(n);
    lnf_.xhat.resize(n);
    lnf_.rstd.resize(L_);
    f_.resize(n);
    pooled_.resize(dm_);
    tokens_.resize(L_);
    // backward scratch
    dx_.resize(n);
    dtmp_.resize(n);
    dq_.resize(n);
    dk_.resize(n);
    dv_.resize(n);
    do_.resize(n);
    dprobs_.resize(L_ * L_);
    dh_.resize(L_ * ff_);
  }

  void forward(const Batch& batch, std::size_t row, std::span<double> logits) override {
    const double* P = p_.data();
    for (std::size_t t = 0; t < L_; ++t) {
      const std::uint32_t tok = batch.tokens[row * L_ + t];
      tokens_[t] = tok;
      const double* e = P + off_.embed + tok * dm_;
      for (std::size_t j = 0; j < dm_; ++j) x_[t * dm_ + j] = e[j] + pos_[t * dm_ + j];
    }
    const double inv_sqrt_dm = 1.0 / std::sqrt(static_cast<double>(dm_));
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
      const BlockOffsets& o = off_.blocks[b];
      BlockCache& bc = blocks_[b];
      bc.x_in = x_;
      layer_norm_forward(x_.data(), P + o.ln1_gain, P + o.ln1_bias, bc.a.data(), bc.ln1, L_, dm_);
      for (std::size_t t = 0; t < L_; ++t) {
        const double* a = bc.a.data() + t * dm_;
        matvec(P + o.wq, a, bc.q.data() + t * dm_, dm_, dm_);
        matvec(P + o.wk, a, bc.k.data() + t * dm_, dm_, dm_);
        matvec(P + o.wv, a, bc.v.data() + t * dm_, dm_, dm_);
      }
      for (std::size_t t = 0; t < L_; ++t) {
        double* pr = bc.probs.data() + t * L_;
        double mx = -INFINITY;
        for (std::size_t s = 0; s < L_; ++s) {
          double dot = 0.0;
          for (std::size_t j = 0; j < dm_; ++j) dot += bc.q[t * dm_ + j] * bc.k[s * dm_ + j];
          pr[s] = dot * inv_sqrt_dm;
          mx = std::max(mx, pr[s]);
        }
        double z = 0.0;
        for (std::size_t s = 0; s < L_; ++s) {
          pr[s] = std::exp(pr[s] - mx);
          z += pr[s];
        }
        for (std::size_t s = 0; s < L_; ++s) pr[s] /= z;
        double* ot = bc.o.data() + t * dm_;
        std::fill(ot, ot + dm_, 0.0);
        for (std::size_t s = 0; s < L_; ++s) {
          const double w = pr[s];
          const double* vs = bc.v.data() + s * dm_;
          for (std::size_t j = 0; j < dm_; ++j) ot[j] += w * vs[j];
        }
      }
      for (std::size_t t = 0; t < L_; ++t) {
        double* xr = x_.data() + t * dm_;
        matvec(P + o.wo, bc.o.data() + t * dm_, dtmp_.data(), dm_, dm_);
        for (std::size_t j = 0; j < dm_; ++j) xr[j] += dtmp_[j];
      }
      bc.x_mid = x_;
      layer_norm_forward(x_.data(), P + o.ln2_gain, P + o.ln2_bias, bc.c.data(), bc.ln2, L_, dm_);
      for (std::size_t t = 0; t < L_; ++t) {
        double* hp = bc.hpre.data() + t * ff_;
        double* h = bc.h.data() + t * ff_;
        matvec(P + o.w1, bc.c.data() + t * dm_, hp, ff_, dm_, P + o.b1);
        for (std::size_t u = 0; u < ff_; ++u) h[u] = gelu(hp[u]);
        matvec(P + o.w2, h, dtmp_.data(), dm_, ff_, P + o.b2);
        double* xr = x_.data() + t * dm_;
        for (std::size_t j = 0; j < dm_; ++j) xr[j] += dtmp_[j];
      }
    }
    layer_norm_forward(x_.data(), P + off_.lnf_gain, P + off_.lnf_bias, f_.data(), lnf_, L_, dm_);
    std::fill(pooled_.begin(), pooled_.end(), 0.0);
    for (std::size_t t = 0; t < L_; ++t) {
      for (std::size_t j = 0; j < dm_; ++j) pooled_[j] += f_[t * dm_ + j];
    }
    for (auto& v : pooled_) v /= static_cast<double>(L_);
    matvec(P + off_.head_w, pooled_.data(), logits.data(), C_, dm_, P + off_.head_b);
  }

  void backward(std::span<const double> dlogits, std::span<double> grad) override {
    const double* P = p_.data();
    double* G = grad.data();
    outer_acc(dlogits.data(), pooled_.data(), G + off_.head_w, C_, dm_);
    for (std::size_t c = 0; c < C_; ++c) G[off_.head_b + c] += dlogits[c];
    std::vector<double> dpooled(dm_, 0.0);
    matvec_t_acc(P + off_.head_w, dlogits.data(), dpooled.data(), C_, dm_);

    // df_t = dpooled / L for every position
    for (std::size_t t = 0; t < L_; ++t) {
      for (std::size_t j = 0; j < dm_; ++j) dtmp_[t * dm_ + j] = dpooled[j] / static_cast<double>(L_);
    }
    std::fill(dx_.begin(), dx_.end(), 0.0);
    layer_norm_backward(dtmp_.data(), P + off_.lnf_gain, lnf_, G + off_.lnf_gain,
                        G + off_.lnf_bias, dx_.data(), L_, dm_, scratch_);

    const double inv_sqrt_dm = 1.0 / std::sqrt(static_cast<double>(dm_));
    for (std::size_t b = blocks_.size(); b-- > 0;) {
      const BlockOffsets& o = off_.blocks[b];
      const BlockCache& bc = blocks_[b];

      // feed-forward branch; dx_ is d(loss)/d(x_out) and also flows through the residual
      std::fill(dtmp_.begin(), dtmp_.end(), 0.0);  // d(loss)/d(c)
      for (std::size_t t = 0; t < L_; ++t) {
        const double* dy = dx_.data() + t * dm_;
        const double* h = bc.h.data() + t * ff_;
        outer_acc(dy, h, G + o.w2, dm_, ff_);
        for (std::size_t j = 0; j < dm_; ++j) G[o.b2 + j] += dy[j];
        double* dh = dh_.data() + t * ff_;
        std::fill(dh, dh + ff_, 0.0);
        matvec_t_acc(P + o.w2, dy, dh, dm_, ff_);
        const double* hp = bc.hpre.data() + t * ff_;
        for (std::size_t u = 0; u < ff_; ++u) dh[u] *= gelu_grad(hp[u]);
        outer_acc(dh, bc.c.data() + t * dm_, G + o.w1, ff_, dm_);
        for (std::size_t u = 0; u < ff_; ++u) G[o.b1 + u] += dh[u];
        matvec_t_acc(P + o.w1, dh, dtmp_.data() + t * dm_, ff_, dm_);
      }
      layer_norm_backward(dtmp_.data(), P + o.ln2_gain, bc.ln2, G + o.ln2_gain, G + o.ln2_bias,
                          dx_.data(), L_, dm_, scratch_);
      // dx_ now holds d(loss)/d(x_mid)

      std::fill(do_.begin(), do_.end(), 0.0);
      for (std::size_t t = 0; t < L_; ++t) {
        const double* dy = dx_.data() + t * dm_;
        outer_acc(dy, bc.o.data() + t * dm_, G + o.wo, dm_, dm_);
        matvec_t_acc(P + o.wo, dy, do_.data() + t * dm_, dm_, dm_);
      }
      std::fill(dq_.begin(), dq_.end(), 0.0);
      std::fill(dk_.begin(), dk_.end(), 0.0);
      std::fill(dv_.begin(), dv_.end(), 0.0);
      for (std::size_t t = 0; t < L_; ++t) {
        const double* pr = bc.probs.data() + t * L_;
        const double* dot_ = do_.data() + t * dm_;
        double* dpr = dprobs_.data() + t * L_;
        double weighted = 0.0;
        for (std::size_t s = 0; s < L_; ++s) {
          const double* vs = bc.v.data() + s * dm_;
          double* dvs = dv_.data() + s * dm_;
          double acc = 0.0;
          for (std::size_t j = 0; j < dm_; ++j) {
            acc += dot_[j] * vs[j];
            dvs[j] += pr[s] * dot_[j];
          }
          dpr[s] = acc;
          weighted += pr[s] * acc;
        }
        for (std::size_t s = 0; s < L_; ++s) {
          const double dscore = pr[s] * (dpr[s] - weighted) * inv_sqrt_dm;
          const double* qt = bc.q.data() + t * dm_;
          const double* ks = bc.k.data() + s * dm_;
          double* dqt = dq_.data() + t * dm_;
          double* dks = dk_.data() + s * dm_;
          for (std::size_t j = 0; j < dm_; ++j) {
            dqt[j] += dscore * ks[j];
            dks[j] += dscore * qt[j];
          }
        }
      }
      std::fill(dtmp_.begin(), dtmp_.end(), 0.0);  // d(loss)/d(a)
      for (std::size_t t = 0; t < L_; ++t) {
        const double* a = bc.a.data() + t * dm_;
        double* da = dtmp_.data() + t * dm_;
        outer_acc(dq_.data() + t * dm_, a, G + o.wq, dm_, dm_);
        outer_acc(dk_.data() + t * dm_, a, G + o.wk, dm_, dm_);
        outer_acc(dv_.data() + t * dm_, a, G + o.wv, dm_, dm_);
        matvec_t_acc(P + o.wq, dq_.data() + t * dm_, da, dm_, dm_);
        matvec_t_acc(P + o.wk, dk_.data() + t * dm_, da, dm_, dm_);
        matvec_t_acc(P + o.wv, dv_.data() + t * dm_, da, dm_, dm_);
      }
      layer_norm_backward(dtmp_.data(), P + o.ln1_gain, bc.ln1, G + o.ln1_gain, G + o.ln1_bias,
                          dx_.data(), L_, dm_, scratch_);
      // dx_ now holds d(loss)/d(x_in)
    }
    for (std::size_t t = 0; t < L_; ++t) {
      double* ge = G + off_.embed + tokens_[t] * dm_;
      for (std::size_t j = 0; j < dm_; ++j) ge[j] += dx_[t * dm_ + j];
    }
  }

 private:
  std::span<const double> p_;
  Offsets off_;
  std::size_t V_, L_, dm_, ff_, C_;
  std::vector<double> pos_;
  std::vector<BlockCache> blocks_;
  std::vector<double> x_;
  LayerNormCache lnf_;
  std::vector<double> f_;
  std::vector<double> pooled_;
  std::vector<std::uint32_t> tokens_;
  std::vector<double> dx_, dtmp_, dq_, dk_, dv_, do_, dprobs_, dh_, scratch_;
};

}  // namespace

std::unique_ptr<SampleNet> make_transformer_net(const ModelSpec& spec,
                                                std::span<const double> params) {
  return std::make_unique<TransformerNet>(spec, params);
}

}  // namespace idim::detail
