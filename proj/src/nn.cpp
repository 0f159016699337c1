// SPDX-License-Identifier: Apache-2.0

#include "idim/nn.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "idim/error.hpp"
#include "idim/rng.hpp"
#include "nn_internal.hpp"

namespace idim {

void validate_partition(std::span<const LayerSegment> partition, std::size_t D) {
  if (partition.empty()) throw InvalidDimensionError("partition must name at least one layer");
  std::set<std::string> names;
  std::size_t expected = 0;
  for (const auto& seg : partition) {
    if (seg.offset != expected) {
      throw InvalidDimensionError("layer '" + seg.name + "' starts at " +
                                  std::to_string(seg.offset) + ", expected " +
                                  std::to_string(expected));
    }
    if (seg.length == 0) throw InvalidDimensionError("layer '" + seg.name + "' is empty");
    if (!names.insert(seg.name).second) {
      throw InvalidDimensionError("duplicate layer name '" + seg.name + "'");
    }
    expected += seg.length;
  }
  if (expected != D) {
    throw InvalidDimensionError("partition covers " + std::to_string(expected) +
                                " parameters, vector has " + std::to_string(D));
  }
}

ParameterVector::ParameterVector(std::vector<double> values, std::vector<LayerSegment> partition)
    : values_(std::move(values)), partition_(std::move(partition)) {
  validate_partition(partition_, values_.size());
}

std::span<const double> ParameterVector::layer(std::size_t i) const {
  const auto& seg = partition_.at(i);
  return std::span<const double>(values_).subspan(seg.offset, seg.length);
}

std::span<double> ParameterVector::layer(std::size_t i) {
  const auto& seg = partition_.at(i);
  return std::span<double>(values_).subspan(seg.offset, seg.length);
}

const LayerSegment* ParameterVector::find(const std::string& name) const {
  for (const auto& seg : partition_) {
    if (seg.name == name) return &seg;
  }
  return nullptr;
}

std::string to_string(Arch arch) {
  switch (arch) {
    case Arch::kLogReg: return "logreg";
    case Arch::kMlp: return "mlp";
    case Arch::kTinyTransformer: return "tiny_transformer";
  }
  return "?";
}

Arch arch_from_string(const std::string& name) {
  if (name == "logreg") return Arch::kLogReg;
  if (name == "mlp") return Arch::kMlp;
  if (name == "tiny_transformer") return Arch::kTinyTransformer;
  throw ConfigError("unknown arch '" + name + "' (expected logreg|mlp|tiny_transformer)");
}

void validate(const ModelSpec& spec) {
  const auto& d = spec.dims;
  if (spec.num_classes < 2) throw ConfigError("num_classes must be >= 2");
  switch (spec.arch) {
    case Arch::kLogReg:
      if (d.input_dim == 0) throw ConfigError("logreg needs input_dim >= 1");
      if (!d.hidden.empty()) throw ConfigError("logreg takes no hidden layers");
      break;
    case Arch::kMlp:
      if (d.input_dim == 0) throw ConfigError("mlp needs input_dim >= 1");
      if (d.hidden.empty()) throw ConfigError("mlp needs at least one hidden width");
      for (auto h : d.hidden) {
        if (h == 0) throw ConfigError("mlp hidden widths must be positive");
      }
      break;
    case Arch::kTinyTransformer:
      if (d.vocab_size < 2 || d.vocab_size > kMaxVocab) {
        throw ConfigError("tiny_transformer vocab_size must be in [2, 64]");
      }
      if (d.seq_len == 0 || d.seq_len > kMaxSeqLen) {
        throw ConfigError("tiny_transformer seq_len must be in [1, 32]");
      }
      if (d.model_dim < 2 || d.model_dim > kMaxModelDim || d.model_dim % 2 != 0) {
        throw ConfigError("tiny_transformer model_dim must be even and in [2, 64]");
      }
      if (d.ff_dim == 0) throw ConfigError("tiny_transformer needs ff_dim >= 1");
      if (d.num_blocks == 0 || d.num_blocks > kMaxBlocks) {
        throw ConfigError("tiny_transformer num_blocks must be 1 or 2");
      }
      break;
  }
}

namespace {

std::vector<detail::LayerDef> layer_defs(const ModelSpec& spec) {
  validate(spec);
  return spec.arch == Arch::kTinyTransformer ? detail::transformer_layers(spec)
                                             : detail::mlp_layers(spec);
}

void fill_layer(const detail::LayerDef& def, std::span<double> out, std::uint64_t seed) {
  switch (def.init) {
    case detail::InitKind::kZeros:
      std::fill(out.begin(), out.end(), 0.0);
      break;
    case detail::InitKind::kOnes:
      std::fill(out.begin(), out.end(), 1.0);
      break;
    case detail::InitKind::kScaledNormal: {
      Rng rng(seed);
      const double scale = 1.0 / std::sqrt(static_cast<double>(def.fan_in));
      for (auto& v : out) v = scale * rng.normal();
      break;
    }
  }
}

std::unique_ptr<detail::SampleNet> make_net(const ModelSpec& spec,
                                            std::span<const double> params) {
  if (params.size() != param_count(spec)) {
    throw InvalidDimensionError("parameter vector has " + std::to_string(params.size()) +
                                " entries, model expects " + std::to_string(param_count(spec)));
  }
  return spec.arch == Arch::kTinyTransformer ? detail::make_transformer_net(spec, params)
                                             : detail::make_mlp_net(spec, params);
}

std::size_t argmax_lowest(std::span<const double> row) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < row.size(); ++c) {
    if (row[c] > row[best]) best = c;
  }
  return best;
}

void check_finite(std::span<const double> row, std::size_t sample, const ModelSpec& spec) {
  for (double v : row) {
    if (!std::isfinite(v)) {
      throw NumericError("non-finite logit for sample " + std::to_string(sample) + " in " +
                         to_string(spec.arch) + " forward pass");
    }
  }
}

// Cross-entropy of one row; writes softmax - onehot into dlogits when non-null.
double cross_entropy(std::span<const double> row, std::uint32_t label, double* dlogits) {
  const double mx = *std::max_element(row.begin(), row.end());
  double z = 0.0;
  for (double v : row) z += std::exp(v - mx);
  const double log_z = mx + std::log(z);
  if (dlogits) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      dlogits[c] = std::exp(row[c] - log_z) - (c == label ? 1.0 : 0.0);
    }
  }
  return log_z - row[label];
}

}  // namespace

std::vector<LayerSegment> layer_layout(const ModelSpec& spec) {
  std::vector<LayerSegment> out;
  for (auto& def : layer_defs(spec)) out.push_back(def.segment);
  return out;
}

std::size_t param_count(const ModelSpec& spec) {
  std::size_t total = 0;
  for (const auto& seg : layer_layout(spec)) total += seg.length;
  return total;
}

bool is_head_layer(const std::string& layer_name) { return layer_name.rfind("head.", 0) == 0; }

Batch Batch::select(std::span<const std::size_t> rows) const {
  Batch out;
  out.size = rows.size();
  out.width = width;
  out.labels.reserve(rows.size());
  if (is_sequence()) {
    out.tokens.reserve(rows.size() * width);
  } else {
    out.features.reserve(rows.size() * width);
  }
  for (auto r : rows) {
    out.labels.push_back(labels.at(r));
    if (is_sequence()) {
      out.tokens.insert(out.tokens.end(), tokens.begin() + r * width,
                        tokens.begin() + (r + 1) * width);
    } else {
      out.features.insert(out.features.end(), features.begin() + r * width,
                          features.begin() + (r + 1) * width);
    }
  }
  return out;
}

void validate_batch(const ModelSpec& spec, const Batch& batch) {
  if (batch.size == 0) throw ConfigError("empty batch");
  if (batch.labels.size() != batch.size) throw ConfigError("label count does not match batch size");
  for (auto y : batch.labels) {
    if (y >= spec.num_classes) {
      throw ConfigError("label " + std::to_string(y) + " outside [0, " +
                        std::to_string(spec.num_classes) + ")");
    }
  }
  if (spec.arch == Arch::kTinyTransformer) {
    if (batch.width != spec.dims.seq_len || batch.tokens.size() != batch.size * batch.width) {
      throw ConfigError("token batch does not match seq_len " + std::to_string(spec.dims.seq_len));
    }
    for (auto t : batch.tokens) {
      if (t >= spec.dims.vocab_size) {
        throw ConfigError("token id " + std::to_string(t) + " outside vocabulary");
      }
    }
  } else if (batch.width != spec.dims.input_dim ||
             batch.features.size() != batch.size * batch.width) {
    throw ConfigError("feature batch does not match input_dim " +
                      std::to_string(spec.dims.input_dim));
  }
}

ParameterVector init_params(const ModelSpec& spec, std::uint64_t seed) {
  const auto defs = layer_defs(spec);
  std::vector<LayerSegment> partition;
  std::size_t D = 0;
  for (const auto& def : defs) {
    partition.push_back(def.segment);
    D += def.segment.length;
  }
  std::vector<double> values(D);
  for (std::size_t i = 0; i < defs.size(); ++i) {
    const auto& seg = defs[i].segment;
    const std::uint64_t stream_seed =
        is_head_layer(seg.name) ? mix_seed(spec.head_init_seed, i) : mix_seed(seed, i);
    fill_layer(defs[i], std::span<double>(values).subspan(seg.offset, seg.length), stream_seed);
  }
  return ParameterVector(std::move(values), std::move(partition));
}

ParameterVector attach_head(const ModelSpec& spec, const ParameterVector& body) {
  // Body seed is irrelevant: every non-head layer is overwritten below.
  ParameterVector out = init_params(spec, 0);
  for (std::size_t i = 0; i < out.num_layers(); ++i) {
    const auto& seg = out.partition()[i];
    if (is_head_layer(seg.name)) continue;
    const LayerSegment* src = body.find(seg.name);
    if (src == nullptr || src->length != seg.length) {
      throw InvalidDimensionError("checkpoint has no layer '" + seg.name +
                                  "' of length " + std::to_string(seg.length));
    }
    auto from = body.values().subspan(src->offset, src->length);
    std::copy(from.begin(), from.end(), out.layer(i).begin());
  }
  return out;
}

LossGrad loss_and_grad(const ModelSpec& spec, std::span<const double> params,
                       const Batch& batch) {
  validate_batch(spec, batch);
  auto net = make_net(spec, params);
  const std::size_t C = spec.num_classes;
  LossGrad out;
  out.grad.assign(params.size(), 0.0);
  std::vector<double> row(C);
  std::vector<double> dlogits(C);
  const double inv_n = 1.0 / static_cast<double>(batch.size);
  double loss = 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < batch.size; ++i) {
    net->forward(batch, i, row);
    check_finite(row, i, spec);
    const auto y = batch.labels[i];
    loss += cross_entropy(row, y, dlogits.data());
    if (argmax_lowest(row) == y) ++correct;
    for (auto& g : dlogits) g *= inv_n;
    net->backward(dlogits, out.grad);
  }
  out.loss = loss * inv_n;
  out.accuracy = static_cast<double>(correct) * inv_n;
  if (!std::isfinite(out.loss)) throw NumericError("non-finite loss");
  return out;
}

Evaluation evaluate(const ModelSpec& spec, std::span<const double> params, const Batch& batch) {
  validate_batch(spec, batch);
  auto net = make_net(spec, params);
  std::vector<double> row(spec.num_classes);
  double loss = 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < batch.size; ++i) {
    net->forward(batch, i, row);
    check_finite(row, i, spec);
    loss += cross_entropy(row, batch.labels[i], nullptr);
    if (argmax_lowest(row) == batch.labels[i]) ++correct;
  }
  const double n = static_cast<double>(batch.size);
  return {loss / n, static_cast<double>(correct) / n};
}

std::vector<double> logits(const ModelSpec& spec, std::span<const double> params,
                           const Batch& batch) {
  validate_batch(spec, batch);
  auto net = make_net(spec, params);
  const std::size_t C = spec.num_classes;
  std::vector<double> out(batch.size * C);
  for (std::size_t i = 0; i < batch.size; ++i) {
    std::span<double> row(out.data() + i * C, C);
    net->forward(batch, i, row);
    check_finite(row, i, spec);
  }
  return out;
}

double margin_loss(std::span<const double> logits, std::size_t num_classes,
                   std::span<const std::uint32_t> labels, double gamma) {
  if (num_classes < 2 || logits.size() != labels.size() * num_classes) {
    throw InvalidDimensionError("margin_loss: logits shape does not match labels");
  }
  if (labels.empty()) return 0.0;
  std::size_t failures = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double* row = logits.data() + i * num_classes;
    const auto y = labels[i];
    double best_other = -INFINITY;
    for (std::size_t c = 0; c < num_classes; ++c) {
      if (c != y) best_other = std::max(best_other, row[c]);
    }
    if (row[y] <= gamma + best_other) ++failures;
  }
  return static_cast<double>(failures) / static_cast<double>(labels.size());
}

double majority_fraction(std::span<const std::uint32_t> labels, std::size_t num_classes) {
  if (labels.empty()) return 0.0;
  std::vector<std::size_t> counts(num_classes, 0);
  for (auto y : labels) counts.at(y)++;
  return static_cast<double>(*std::max_element(counts.begin(), counts.end())) /
         static_cast<double>(labels.size());
}

}  // namespace idim
