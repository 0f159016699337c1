// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "idim/error.hpp"
#include "idim/subspace.hpp"
#include "idim/tasks.hpp"
#include "test_util.hpp"

using namespace idim;
using idim::test::grad_rel_error;
using idim::test::random_vector;

namespace {

ModelSpec logreg(std::size_t in, std::size_t classes) {
  ModelSpec s;
  s.arch = Arch::kLogReg;
  s.dims.input_dim = in;
  s.num_classes = classes;
  return s;
}

ModelSpec mlp(std::size_t in, std::size_t hidden) {
  ModelSpec s;
  s.arch = Arch::kMlp;
  s.dims.input_dim = in;
  s.dims.hidden = {hidden};
  s.head_init_seed = 21;
  return s;
}

TaskSpec latent(std::size_t in, std::uint64_t seed, std::size_t classes = 2) {
  TaskSpec t;
  t.name = "latent";
  t.seed = seed;
  t.family_seed = 5;
  t.input_dim = in;
  t.num_classes = classes;
  t.num_train = 256;
  t.num_eval = 256;
  return t;
}

// Columns M e_i of the map theta -> P(theta).
std::vector<std::vector<double>> materialize(const Projection& p) {
  std::vector<std::vector<double>> cols;
  for (std::size_t i = 0; i < p.intrinsic_dim(); ++i) {
    std::vector<double> e(p.intrinsic_dim(), 0.0);
    e[i] = 1.0;
    std::vector<double> col(p.full_dim());
    p.project(e, col);
    cols.push_back(std::move(col));
  }
  return cols;
}

TrainConfig short_cfg(std::size_t steps) {
  TrainConfig c;
  c.steps = steps;
  c.batch_size = 16;
  c.eval_every = 5;
  c.seed = 3;
  return c;
}

}  // namespace

TEST(SubspaceModel, ZeroThetaIsExactlyTheta0) {
  const ModelSpec spec = mlp(6, 5);
  const ParameterVector theta0 = init_params(spec, 4);
  for (Method m : {Method::kDid, Method::kSaid}) {
    for (ProjectionKind k : {ProjectionKind::kFastfood, ProjectionKind::kDense}) {
      const SubspaceModel sm(theta0, m, 10, k, 9);
      const auto eff = sm.effective_params();
      EXPECT_TRUE(std::equal(eff.begin(), eff.end(), theta0.values().begin(), theta0.values().end()));
    }
  }
}

TEST(SubspaceModel, SaidWithUnitLambdaMatchesDid) {
  const ModelSpec spec = mlp(6, 5);
  const ParameterVector theta0 = init_params(spec, 4);
  const std::size_t m = theta0.num_layers();
  SubspaceModel did(theta0, Method::kDid, 12, ProjectionKind::kFastfood, 8);
  SubspaceModel said(theta0, Method::kSaid, 12 + m, ProjectionKind::kFastfood, 8);
  ASSERT_EQ(said.theta().size(), 12u);
  ASSERT_EQ(said.lambda().size(), m);
  const auto t = random_vector(12, 1);
  std::copy(t.begin(), t.end(), did.theta().begin());
  std::copy(t.begin(), t.end(), said.theta().begin());
  EXPECT_EQ(did.effective_params(), said.effective_params());
}

TEST(SubspaceModel, ZeroLambdaFreezesLayer) {
  const ModelSpec spec = mlp(6, 5);
  const ParameterVector theta0 = init_params(spec, 4);
  SubspaceModel said(theta0, Method::kSaid, 20, ProjectionKind::kFastfood, 2);
  const auto t = random_vector(said.theta().size(), 3);
  std::copy(t.begin(), t.end(), said.theta().begin());
  said.lambda()[1] = 0.0;
  const auto eff = said.effective_params();
  const LayerSegment& seg = theta0.partition()[1];
  for (std::size_t i = seg.offset; i < seg.offset + seg.length; ++i) {
    EXPECT_EQ(eff[i], theta0.values()[i]);
  }
  const LayerSegment& other = theta0.partition()[0];
  EXPECT_NE(eff[other.offset], theta0.values()[other.offset]);
}

TEST(SubspaceModel, ZeroGradientPullsBackToZero) {
  const ParameterVector theta0 = init_params(mlp(6, 5), 4);
  for (Method m : {Method::kDid, Method::kSaid}) {
    SubspaceModel sm(theta0, m, 10, ProjectionKind::kFastfood, 1);
    const auto t = random_vector(sm.theta().size(), 2);
    std::copy(t.begin(), t.end(), sm.theta().begin());
    const std::vector<double> zero(theta0.size(), 0.0);
    const IntrinsicGrad g = sm.intrinsic_grad(zero);
    for (double v : g.theta) EXPECT_EQ(v, 0.0);
    for (double v : g.lambda) EXPECT_EQ(v, 0.0);
  }
}

TEST(SubspaceModel, DidPullbackMatchesMaterializedTransposeSmall) {
  // d = 4, D = 16, seed 7: logreg 7 -> 2 has 16 parameters.
  const ParameterVector theta0 = init_params(logreg(7, 2), 1);
  ASSERT_EQ(theta0.size(), 16u);
  const SubspaceModel sm(theta0, Method::kDid, 4, ProjectionKind::kFastfood, 7);
  const auto cols = materialize(sm.projection());
  const auto g = random_vector(16, 99);
  const IntrinsicGrad ig = sm.intrinsic_grad(g);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_NEAR(ig.theta[i], idim::test::dot(cols[i], g), 1e-12);
  }
}

TEST(SubspaceModel, PullbackMatchesDenseOracleAlongTrainingTrace) {
  const ModelSpec spec = logreg(12, 3);  // D = 39
  const Dataset data = generate(latent(12, 2, 3));
  const ParameterVector theta0 = init_params(spec, 2);
  SubspaceModel sm(theta0, Method::kDid, 9, ProjectionKind::kFastfood, 5);
  const auto cols = materialize(sm.projection());
  Optimizer opt(OptimizerKind::kAdam, 0.05, 9);
  for (int step = 0; step < 10; ++step) {
    const auto eff = sm.effective_params();
    const LossGrad lg = loss_and_grad(spec, eff, data.train);
    const IntrinsicGrad ig = sm.intrinsic_grad(lg.grad);
    std::vector<double> oracle(9);
    for (std::size_t i = 0; i < 9; ++i) oracle[i] = idim::test::dot(cols[i], lg.grad);
    EXPECT_LE(idim::test::rel_error(ig.theta, oracle), 1e-10) << "step " << step;
    opt.step(sm.theta(), ig.theta);
  }
}

TEST(SubspaceModel, SaidLambdaGradientMatchesFiniteDifferences) {
  const ModelSpec spec = mlp(8, 6);
  const Dataset data = generate(latent(8, 3));
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    SubspaceModel sm(init_params(spec, seed), Method::kSaid, 30, ProjectionKind::kFastfood, seed);
    const auto t = random_vector(sm.theta().size(), seed + 10, -0.5, 0.5);
    std::copy(t.begin(), t.end(), sm.theta().begin());
    const auto lam = random_vector(sm.lambda().size(), seed + 20, 0.5, 1.5);
    std::copy(lam.begin(), lam.end(), sm.lambda().begin());

    const LossGrad lg = loss_and_grad(spec, sm.effective_params(), data.train);
    const IntrinsicGrad ig = sm.intrinsic_grad(lg.grad);
    const auto loss_at = [&](std::vector<double> l) {
      SubspaceModel probe = sm;
      std::copy(l.begin(), l.end(), probe.lambda().begin());
      return loss_and_grad(spec, probe.effective_params(), data.train).loss;
    };
    const auto numeric = idim::test::central_differences(loss_at, lam);
    EXPECT_LE(grad_rel_error(ig.lambda, numeric), 1e-4) << "seed " << seed;

    const auto theta_loss = [&](std::vector<double> th) {
      SubspaceModel probe = sm;
      std::copy(th.begin(), th.end(), probe.theta().begin());
      return loss_and_grad(spec, probe.effective_params(), data.train).loss;
    };
    const auto numeric_theta = idim::test::central_differences(theta_loss, t);
    EXPECT_LE(grad_rel_error(ig.theta, numeric_theta), 1e-4) << "seed " << seed;
  }
}

TEST(SubspaceModel, BudgetErrors) {
  const ParameterVector theta0 = init_params(mlp(4, 3), 0);
  const std::size_t m = theta0.num_layers();
  EXPECT_THROW(SubspaceModel(theta0, Method::kDid, 0), ConfigError);
  EXPECT_THROW(SubspaceModel(theta0, Method::kSaid, 0), ConfigError);
  EXPECT_THROW(SubspaceModel(theta0, Method::kSaid, m), ConfigError);
  EXPECT_NO_THROW(SubspaceModel(theta0, Method::kSaid, m + 1));
  EXPECT_THROW(SubspaceModel(theta0, Method::kFull, 5), ConfigError);
  SubspaceModel sm(theta0, Method::kDid, 3);
  const std::vector<double> wrong(theta0.size() + 1, 0.0);
  EXPECT_THROW(sm.intrinsic_grad(wrong), InvalidDimensionError);
}

TEST(Training, ZeroStepsReportTheta0Metrics) {
  const ModelSpec spec = mlp(16, 10);
  const Dataset data = generate(latent(16, 4));
  const ParameterVector theta0 = init_params(spec, 6);
  const Evaluation base_eval = evaluate(spec, theta0.values(), data.eval);
  const Evaluation base_train = evaluate(spec, theta0.values(), data.train);
  TrainConfig cfg = short_cfg(0);
  const RunRecord full = train_full(spec, theta0, data, cfg);
  const RunRecord did = train_subspace(spec, theta0, data, Method::kDid, 20, cfg);
  const RunRecord said = train_subspace(spec, theta0, data, Method::kSaid, 20, cfg);
  for (const RunRecord* r : {&full, &did, &said}) {
    EXPECT_EQ(r->eval_acc, base_eval.accuracy);
    EXPECT_EQ(r->train_acc, base_train.accuracy);
    EXPECT_EQ(r->best_step, 0u);
  }
}

TEST(Training, RecordKeepsRequestedBudget) {
  const ModelSpec spec = mlp(16, 10);
  const Dataset data = generate(latent(16, 4));
  const ParameterVector theta0 = init_params(spec, 6);
  const RunRecord said = train_subspace(spec, theta0, data, Method::kSaid, 20, short_cfg(3));
  EXPECT_EQ(said.d, 20u);
  EXPECT_EQ(said.intrinsic.size(), 20u);
  EXPECT_EQ(said.D, theta0.size());
  EXPECT_EQ(said.model, "mlp[D=" + std::to_string(theta0.size()) + "]");
}

TEST(Training, FrozenLambdaSaidReproducesDidBitForBit) {
  const ModelSpec spec = mlp(16, 10);
  const Dataset data = generate(latent(16, 7));
  const ParameterVector theta0 = init_params(spec, 6);
  const std::size_t m = theta0.num_layers();
  TrainConfig cfg = short_cfg(40);
  cfg.record_trace = true;
  const RunRecord did = train_subspace(spec, theta0, data, Method::kDid, 24, cfg);
  cfg.freeze_lambda = true;
  const RunRecord said = train_subspace(spec, theta0, data, Method::kSaid, 24 + m, cfg);
  ASSERT_EQ(did.loss_trace.size(), 40u);
  EXPECT_EQ(did.loss_trace, said.loss_trace);
  EXPECT_EQ(did.eval_acc, said.eval_acc);
  EXPECT_EQ(did.best_step, said.best_step);
  EXPECT_TRUE(std::equal(did.intrinsic.begin(), did.intrinsic.end(), said.intrinsic.begin()));
  for (std::size_t i = 24; i < said.intrinsic.size(); ++i) EXPECT_EQ(said.intrinsic[i], 1.0);
}

TEST(Training, Theta0IsNotMutated) {
  const ModelSpec spec = mlp(16, 10);
  const Dataset data = generate(latent(16, 7));
  const ParameterVector theta0 = init_params(spec, 6);
  const ParameterVector copy = theta0;
  train_subspace(spec, theta0, data, Method::kSaid, 30, short_cfg(10));
  train_full(spec, theta0, data, short_cfg(10));
  EXPECT_TRUE(theta0 == copy);
}

TEST(Training, LogregFitsSeparableTask) {
  TaskSpec t;
  t.kind = TaskKind::kLatentLinear;
  t.input_dim = 8;
  t.feature_dim = 8;
  t.num_train = 512;
  t.num_eval = 512;
  const Dataset data = generate(t);
  const ModelSpec spec = logreg(8, 2);
  TrainConfig cfg;
  cfg.steps = 1500;
  cfg.lr = 3e-2;
  const RunRecord r = train_full(spec, init_params(spec, 0), data, cfg);
  EXPECT_GE(r.eval_acc, 0.95);
}

TEST(Training, DeterministicForSameSeed) {
  const ModelSpec spec = mlp(16, 10);
  const Dataset data = generate(latent(16, 8));
  const ParameterVector theta0 = init_params(spec, 1);
  TrainConfig cfg = short_cfg(30);
  cfg.record_trace = true;
  for (Method m : {Method::kDid, Method::kSaid}) {
    const RunRecord a = train_subspace(spec, theta0, data, m, 25, cfg);
    const RunRecord b = train_subspace(spec, theta0, data, m, 25, cfg);
    EXPECT_EQ(a.loss_trace, b.loss_trace);
    EXPECT_EQ(a.intrinsic, b.intrinsic);
  }
  const RunRecord a = train_full(spec, theta0, data, cfg);
  const RunRecord b = train_full(spec, theta0, data, cfg);
  EXPECT_EQ(a.loss_trace, b.loss_trace);
  EXPECT_EQ(a.eval_acc, b.eval_acc);
}

TEST(Training, DivergenceIsReportedNotThrown) {
  const ModelSpec spec = mlp(16, 10);
  Dataset data = generate(latent(16, 8));
  data.train.features[0] = std::numeric_limits<double>::quiet_NaN();
  const ParameterVector theta0 = init_params(spec, 1);
  const double base = evaluate(spec, theta0.values(), data.eval).accuracy;
  for (const RunRecord& r : {train_full(spec, theta0, data, short_cfg(50)),
                             train_subspace(spec, theta0, data, Method::kSaid, 30, short_cfg(50))}) {
    EXPECT_TRUE(r.failed);
    EXPECT_FALSE(r.failure.empty());
    EXPECT_EQ(r.eval_acc, base);
  }
}

TEST(Training, FastfoodSmallDTracksDenseFullRankRun) {
  // mlp 16 -> 80 -> 2 has D = 1522.
  const ModelSpec spec = mlp(16, 80);
  TaskSpec t = latent(16, 1);
  t.num_train = 1024;
  t.num_eval = 1024;
  const Dataset data = generate(t);
  const ParameterVector theta0 = init_params(spec, 1);
  ASSERT_EQ(theta0.size(), 1522u);
  TrainConfig cfg;
  cfg.steps = 2000;
  cfg.lr = 1e-2;
  cfg.seed = 4;
  const RunRecord small = train_subspace(spec, theta0, data, Method::kDid, 64, cfg);
  cfg.projection = ProjectionKind::kDense;
  const RunRecord oracle = train_subspace(spec, theta0, data, Method::kDid, theta0.size(), cfg);
  EXPECT_GE(small.eval_acc, oracle.eval_acc - 0.05)
      << "d=64 " << small.eval_acc << " dense d=D " << oracle.eval_acc;
}

TEST(Training, FullRunBeatsTinySubspaceOnAverage) {
  const ModelSpec spec = mlp(16, 20);
  double full_sum = 0.0;
  double sub_sum = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Dataset data = generate(latent(16, seed));
    const ParameterVector theta0 = init_params(spec, seed);
    TrainConfig cfg;
    cfg.steps = 300;
    cfg.seed = seed;
    full_sum += train_full(spec, theta0, data, cfg).eval_acc;
    sub_sum += train_subspace(spec, theta0, data, Method::kDid, 2, cfg).eval_acc;
  }
  EXPECT_GE(full_sum, sub_sum);
}

TEST(TaskEncoding, RoundTripReconstructsModel) {
  const ModelSpec spec = mlp(16, 10);
  const Dataset data = generate(latent(16, 2));
  const ParameterVector theta0 = init_params(spec, 3);
  for (Method m : {Method::kDid, Method::kSaid}) {
    const RunRecord r = train_subspace(spec, theta0, data, m, 40, short_cfg(20));
    const TaskEncoding enc = encode_task(r);
    const auto path = std::filesystem::temp_directory_path() / "idim_test_encoding.idte";
    save_task_encoding(path, enc);
    EXPECT_LT(std::filesystem::file_size(path), 1024u);
    const TaskEncoding back = load_task_encoding(path);
    EXPECT_TRUE(back == enc);
    const auto params = reconstruct(theta0, back);
    EXPECT_EQ(params.size(), theta0.size());
    // f32 storage keeps the reconstructed model's accuracy.
    EXPECT_NEAR(evaluate(spec, params, data.eval).accuracy, r.eval_acc, 1.0 / 256.0);
  }
}

TEST(TaskEncoding, RejectsCorruptFiles) {
  const auto path = std::filesystem::temp_directory_path() / "idim_test_corrupt.idte";
  std::ofstream(path) << "NOPE";
  EXPECT_THROW(load_task_encoding(path), FormatError);
  std::ofstream(path, std::ios::trunc) << "IDTE";
  EXPECT_THROW(load_task_encoding(path), FormatError);
}

TEST(Optimizer, AdamAndSgdSteps) {
  std::vector<double> p{1.0, -2.0};
  Optimizer sgd(OptimizerKind::kSgd, 0.5, 2);
  const std::vector<double> g{2.0, -4.0};
  sgd.step(p, g);
  EXPECT_EQ(p[0], 0.0);
  EXPECT_EQ(p[1], 0.0);
  // First Adam step moves each coordinate by lr * sign(g) up to eps.
  std::vector<double> q{0.0, 0.0};
  Optimizer adam(OptimizerKind::kAdam, 0.1, 2);
  adam.step(q, g);
  EXPECT_NEAR(q[0], -0.1, 1e-8);
  EXPECT_NEAR(q[1], 0.1, 1e-8);
  EXPECT_THROW(optimizer_kind_from_string("rmsprop"), ConfigError);
}
