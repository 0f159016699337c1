// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace idim {

struct LayerSegment {
  std::string name;
  std::size_t offset = 0;
  std::size_t length = 0;

  bool operator==(const LayerSegment&) const = default;
};

// Throws InvalidDimensionError unless `partition` is sorted, contiguous,
// uniquely named, non-empty and covers exactly [0, D).
void validate_partition(std::span<const LayerSegment> partition, std::size_t D);

/// Flat model parameters plus the named layer partition over them.
class ParameterVector {
 public:
  ParameterVector() = default;
  ParameterVector(std::vector<double> values, std::vector<LayerSegment> partition);

  std::size_t size() const noexcept { return values_.size(); }
  std::size_t num_layers() const noexcept { return partition_.size(); }

  std::span<const double> values() const noexcept { return values_; }
  std::span<double> values() noexcept { return values_; }
  const std::vector<LayerSegment>& partition() const noexcept { return partition_; }

  std::span<const double> layer(std::size_t i) const;
  std::span<double> layer(std::size_t i);
  // nullptr when absent.
  const LayerSegment* find(const std::string& name) const;

  bool operator==(const ParameterVector&) const = default;

 private:
  std::vector<double> values_;
  std::vector<LayerSegment> partition_;
};

enum class Arch { kLogReg, kMlp, kTinyTransformer };

std::string to_string(Arch arch);
Arch arch_from_string(const std::string& name);

struct ModelDims {
  // logreg / mlp
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden;  // mlp only; logreg has none
  // tiny_transformer
  std::size_t vocab_size = 0;
  std::size_t seq_len = 0;
  std::size_t model_dim = 0;
  std::size_t ff_dim = 0;
  std::size_t num_blocks = 1;

  bool operator==(const ModelDims&) const = default;
};

struct ModelSpec {
  Arch arch = Arch::kMlp;
  ModelDims dims;
  std::size_t num_classes = 2;
  std::uint64_t head_init_seed = 0;

  bool operator==(const ModelSpec&) const = default;
};

// Size limits of the tiny transformer.
inline constexpr std::size_t kMaxVocab = 64;
inline constexpr std::size_t kMaxSeqLen = 32;
inline constexpr std::size_t kMaxModelDim = 64;
inline constexpr std::size_t kMaxBlocks = 2;

// Throws ConfigError on inconsistent dimensions.
void validate(const ModelSpec& spec);

std::vector<LayerSegment> layer_layout(const ModelSpec& spec);
std::size_t param_count(const ModelSpec& spec);
// Layers named "head.*" form the classification head.
bool is_head_layer(const std::string& layer_name);

/**
 * A batch of labelled samples. Dense archs read `features` (size x width,
 * row-major); the transformer reads `tokens` (size x width, width = seq_len).
 */
struct Batch {
  std::size_t size = 0;
  std::size_t width = 0;
  std::vector<double> features;
  std::vector<std::uint32_t> tokens;
  std::vector<std::uint32_t> labels;

  bool is_sequence() const noexcept { return !tokens.empty(); }
  Batch select(std::span<const std::size_t> rows) const;

  bool operator==(const Batch&) const = default;
};

// Throws ConfigError when the batch does not fit the spec.
void validate_batch(const ModelSpec& spec, const Batch& batch);

ParameterVector init_params(const ModelSpec& spec, std::uint64_t seed);

// Fine-tuning start point: every non-head layer copied by name from `body`,
// head layers drawn fresh from spec.head_init_seed.
ParameterVector attach_head(const ModelSpec& spec, const ParameterVector& body);

struct LossGrad {
  double loss = 0.0;
  std::vector<double> grad;
  double accuracy = 0.0;
};

struct Evaluation {
  double loss = 0.0;
  double accuracy = 0.0;
};

// Mean cross-entropy, exact gradient, argmax accuracy (ties -> lowest index).
// Throws NumericError on non-finite activations.
LossGrad loss_and_grad(const ModelSpec& spec, std::span<const double> params,
                       const Batch& batch);
Evaluation evaluate(const ModelSpec& spec, std::span<const double> params,
                    const Batch& batch);
// Row-major batch.size x num_classes.
std::vector<double> logits(const ModelSpec& spec, std::span<const double> params,
                           const Batch& batch);

// Fraction of rows whose true-class logit does not exceed the best other
// logit by more than gamma (ties count as errors).
double margin_loss(std::span<const double> logits, std::size_t num_classes,
                   std::span<const std::uint32_t> labels, double gamma);

// Accuracy of always predicting the most frequent label.
double majority_fraction(std::span<const std::uint32_t> labels, std::size_t num_classes);

}  // namespace idim
