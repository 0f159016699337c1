// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "idim/error.hpp"
#include "idim/nn.hpp"
#include "idim/rng.hpp"
#include "test_util.hpp"

using namespace idim;

namespace {

ModelSpec logreg_spec(std::size_t in, std::size_t classes) {
  ModelSpec s;
  s.arch = Arch::kLogReg;
  s.dims.input_dim = in;
  s.num_classes = classes;
  s.head_init_seed = 5;
  return s;
}

ModelSpec mlp_spec(std::size_t in, std::vector<std::size_t> hidden, std::size_t classes) {
  ModelSpec s;
  s.arch = Arch::kMlp;
  s.dims.input_dim = in;
  s.dims.hidden = std::move(hidden);
  s.num_classes = classes;
  s.head_init_seed = 5;
  return s;
}

ModelSpec transformer_spec(std::size_t blocks) {
  ModelSpec s;
  s.arch = Arch::kTinyTransformer;
  s.dims.vocab_size = 7;
  s.dims.seq_len = 5;
  s.dims.model_dim = 6;
  s.dims.ff_dim = 8;
  s.dims.num_blocks = blocks;
  s.num_classes = 3;
  s.head_init_seed = 5;
  return s;
}

Batch random_batch(const ModelSpec& spec, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  Batch b;
  b.size = n;
  if (spec.arch == Arch::kTinyTransformer) {
    b.width = spec.dims.seq_len;
    for (std::size_t i = 0; i < n * b.width; ++i) {
      b.tokens.push_back(static_cast<std::uint32_t>(rng.bounded(spec.dims.vocab_size)));
    }
  } else {
    b.width = spec.dims.input_dim;
    for (std::size_t i = 0; i < n * b.width; ++i) b.features.push_back(rng.normal());
  }
  for (std::size_t i = 0; i < n; ++i) {
    b.labels.push_back(static_cast<std::uint32_t>(rng.bounded(spec.num_classes)));
  }
  return b;
}

// Perturbs every parameter so LayerNorm gains / zero biases do not hide bugs.
std::vector<double> jittered_params(const ModelSpec& spec, std::uint64_t seed) {
  auto p = init_params(spec, seed);
  Rng rng(seed ^ 0xABCDEF);
  std::vector<double> v(p.values().begin(), p.values().end());
  for (auto& x : v) x += 0.3 * rng.normal();
  return v;
}

void expect_gradient_matches_fd(const ModelSpec& spec, std::uint64_t seed) {
  const auto params = jittered_params(spec, seed);
  const auto batch = random_batch(spec, 6, seed + 1);
  const auto lg = loss_and_grad(spec, params, batch);
  const auto fd = test::central_differences(
      [&](const std::vector<double>& p) { return evaluate(spec, p, batch).loss; }, params);
  EXPECT_LE(test::grad_rel_error(lg.grad, fd), 1e-4)
      << to_string(spec.arch) << " seed " << seed;
}

}  // namespace

TEST(ParameterCount, Examples) {
  const auto lr = init_params(logreg_spec(4, 2), 1);
  EXPECT_EQ(lr.size(), 10u);
  EXPECT_EQ(lr.num_layers(), 2u);
  EXPECT_EQ(param_count(mlp_spec(4, {8}, 2)), 58u);
}

TEST(ParameterCount, PartitionCoversEveryArch) {
  for (const auto& spec : {logreg_spec(3, 4), mlp_spec(5, {7, 3}, 2), transformer_spec(1),
                           transformer_spec(2)}) {
    const auto layout = layer_layout(spec);
    const std::size_t total = std::accumulate(
        layout.begin(), layout.end(), std::size_t{0},
        [](std::size_t acc, const LayerSegment& s) { return acc + s.length; });
    EXPECT_EQ(total, param_count(spec));
    EXPECT_NO_THROW(validate_partition(layout, total));
    EXPECT_TRUE(is_head_layer(layout.back().name));
  }
}

TEST(ParameterVector, RejectsBadPartitions) {
  std::vector<double> v(5);
  EXPECT_THROW(ParameterVector(v, {{"a", 0, 3}}), InvalidDimensionError);
  EXPECT_THROW(ParameterVector(v, {{"a", 0, 3}, {"a", 3, 2}}), InvalidDimensionError);
  EXPECT_THROW(ParameterVector(v, {{"a", 0, 2}, {"b", 3, 2}}), InvalidDimensionError);
  EXPECT_THROW(ParameterVector(v, {}), InvalidDimensionError);
  EXPECT_NO_THROW(ParameterVector(v, {{"a", 0, 2}, {"b", 2, 3}}));
}

TEST(Init, DeterministicAndSeeded) {
  const auto spec = mlp_spec(4, {8}, 2);
  EXPECT_EQ(init_params(spec, 3), init_params(spec, 3));
  EXPECT_NE(init_params(spec, 3), init_params(spec, 4));
  const auto p = init_params(spec, 3);
  for (double b : p.layer(1)) EXPECT_EQ(b, 0.0);  // fc0.bias
}

TEST(Init, AttachHeadKeepsBodyAndReseedsHead) {
  auto spec = transformer_spec(1);
  const auto body = init_params(spec, 77);
  spec.num_classes = 2;
  spec.head_init_seed = 1234;
  const auto tuned = attach_head(spec, body);
  for (std::size_t i = 0; i < tuned.num_layers(); ++i) {
    const auto& seg = tuned.partition()[i];
    if (is_head_layer(seg.name)) continue;
    const auto* src = body.find(seg.name);
    ASSERT_NE(src, nullptr);
    auto a = tuned.layer(i);
    auto b = body.values().subspan(src->offset, src->length);
    EXPECT_TRUE(std::equal(a.begin(), a.end(), b.begin()));
  }
  EXPECT_EQ(tuned.find("head.weight")->length, 2u * spec.dims.model_dim);
  spec.dims.model_dim = 8;
  EXPECT_THROW(attach_head(spec, body), InvalidDimensionError);
}

TEST(Loss, ZeroParamsGiveLogK) {
  for (const auto& spec : {logreg_spec(4, 3), mlp_spec(4, {6}, 5), transformer_spec(2)}) {
    const std::vector<double> zeros(param_count(spec), 0.0);
    const auto batch = random_batch(spec, 9, 2);
    EXPECT_NEAR(loss_and_grad(spec, zeros, batch).loss,
                std::log(static_cast<double>(spec.num_classes)), 1e-12);
  }
}

TEST(Gradient, LogRegMatchesFiniteDifferences) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) expect_gradient_matches_fd(logreg_spec(4, 3), seed);
}

TEST(Gradient, MlpMatchesFiniteDifferences) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    expect_gradient_matches_fd(mlp_spec(4, {8}, 2), seed);
    expect_gradient_matches_fd(mlp_spec(3, {5, 4}, 3), seed);
  }
}

TEST(Gradient, TransformerMatchesFiniteDifferences) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    expect_gradient_matches_fd(transformer_spec(1), seed);
    expect_gradient_matches_fd(transformer_spec(2), seed);
  }
}

TEST(Loss, DuplicatedBatchIsInvariant) {
  const auto spec = mlp_spec(4, {8}, 2);
  const auto params = jittered_params(spec, 1);
  const auto batch = random_batch(spec, 5, 3);
  std::vector<std::size_t> twice{0, 1, 2, 3, 4, 0, 1, 2, 3, 4};
  const auto a = loss_and_grad(spec, params, batch);
  const auto b = loss_and_grad(spec, params, batch.select(twice));
  EXPECT_NEAR(a.loss, b.loss, 1e-14);
  EXPECT_LE(test::max_abs_diff(a.grad, b.grad), 1e-14);
}

TEST(Loss, BatchOrderInvariantAndDeterministic) {
  const auto spec = transformer_spec(1);
  const auto params = jittered_params(spec, 2);
  const auto batch = random_batch(spec, 8, 4);
  std::vector<std::size_t> perm{7, 2, 5, 0, 1, 6, 3, 4};
  const auto a = loss_and_grad(spec, params, batch);
  const auto b = loss_and_grad(spec, params, batch.select(perm));
  EXPECT_LE(std::abs(a.loss - b.loss), 1e-12 * std::abs(a.loss));
  EXPECT_LE(test::rel_error(b.grad, a.grad), 1e-12);
  const auto c = loss_and_grad(spec, params, batch);
  EXPECT_EQ(a.loss, c.loss);
  EXPECT_EQ(a.grad, c.grad);
}

TEST(Loss, NonFiniteInputsRaiseNumericError) {
  const auto spec = logreg_spec(2, 2);
  Batch b;
  b.size = 1;
  b.width = 2;
  b.features = {NAN, 1.0};
  b.labels = {0};
  EXPECT_THROW(loss_and_grad(spec, init_params(spec, 1).values(), b), NumericError);
}

TEST(Loss, ShapeMismatchRejected) {
  const auto spec = logreg_spec(3, 2);
  const auto batch = random_batch(logreg_spec(4, 2), 2, 1);
  EXPECT_THROW(loss_and_grad(spec, init_params(spec, 1).values(), batch), ConfigError);
  EXPECT_THROW(loss_and_grad(spec, std::vector<double>(3), random_batch(spec, 2, 1)),
               InvalidDimensionError);
}

TEST(MarginLoss, Boundaries) {
  const std::vector<double> l{2.0, 0.0};
  const std::vector<std::uint32_t> y{0};
  EXPECT_EQ(margin_loss(l, 2, y, 0.0), 0.0);
  EXPECT_EQ(margin_loss(l, 2, y, 2.0), 1.0);
  EXPECT_EQ(margin_loss(l, 2, y, 1.999), 0.0);
  const std::vector<double> tie{1.0, 1.0};
  EXPECT_EQ(margin_loss(tie, 2, y, 0.0), 1.0);
}

TEST(MarginLoss, GammaZeroIsOneMinusAccuracy) {
  for (const auto& spec : {mlp_spec(5, {6}, 4), transformer_spec(1)}) {
    const auto params = jittered_params(spec, 9);
    const auto batch = random_batch(spec, 64, 10);
    const auto z = logits(spec, params, batch);
    const double acc = loss_and_grad(spec, params, batch).accuracy;
    EXPECT_DOUBLE_EQ(margin_loss(z, spec.num_classes, batch.labels, 0.0), 1.0 - acc);
  }
}

TEST(MajorityFraction, Counts) {
  const std::vector<std::uint32_t> y{0, 1, 1, 2};
  EXPECT_DOUBLE_EQ(majority_fraction(y, 3), 0.5);
}

TEST(Spec, Validation) {
  auto s = transformer_spec(3);
  EXPECT_THROW(validate(s), ConfigError);
  s = transformer_spec(1);
  s.dims.vocab_size = 65;
  EXPECT_THROW(validate(s), ConfigError);
  EXPECT_THROW(validate(mlp_spec(4, {}, 2)), ConfigError);
  EXPECT_THROW(arch_from_string("cnn"), ConfigError);
  EXPECT_EQ(arch_from_string(to_string(Arch::kTinyTransformer)), Arch::kTinyTransformer);
}
