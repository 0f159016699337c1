// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "idim/nn.hpp"
#include "idim/projection.hpp"
#include "idim/tasks.hpp"

namespace idim {

// kFull trains all D parameters directly.
enum class Method { kDid, kSaid, kFull };

std::string to_string(Method method);
Method method_from_string(const std::string& name);

struct IntrinsicGrad {
  std::vector<double> theta;
  std::vector<double> lambda;  // empty for DID
};

/**
 * theta0 + P(theta_d) (DID) or theta0 + lambda_i * P(theta_{d-m})_i per layer
 * (SAID). The budget d counts lambda for SAID, so the projection has
 * intrinsic dimension d - m there. Starts at theta_d = 0, lambda = 1, i.e.
 * exactly at theta0.
 */
class SubspaceModel {
 public:
  // Throws ConfigError for d == 0, for SAID with d <= m, or for kFull.
  SubspaceModel(ParameterVector theta0, Method method, std::size_t d,
                ProjectionKind kind = ProjectionKind::kFastfood, std::uint64_t seed = 0);

  Method method() const noexcept { return method_; }
  std::size_t budget() const noexcept { return budget_; }
  const ParameterVector& theta0() const noexcept { return theta0_; }
  const Projection& projection() const noexcept { return proj_; }

  std::span<double> theta() noexcept { return theta_; }
  std::span<const double> theta() const noexcept { return theta_; }
  std::span<double> lambda() noexcept { return lambda_; }
  std::span<const double> lambda() const noexcept { return lambda_; }

  std::vector<double> effective_params() const;
  void effective_params(std::span<double> out) const;
  // Throws InvalidDimensionError unless g_D.size() == D.
  IntrinsicGrad intrinsic_grad(std::span<const double> g_D) const;

 private:
  ParameterVector theta0_;
  Method method_;
  std::size_t budget_;
  Projection proj_;
  std::vector<double> theta_;
  std::vector<double> lambda_;
};

enum class OptimizerKind { kSgd, kAdam };

std::string to_string(OptimizerKind kind);
OptimizerKind optimizer_kind_from_string(const std::string& name);

// Plain SGD or Adam (beta1 0.9, beta2 0.999, eps 1e-8) over a flat vector.
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, double lr, std::size_t dim);

  std::size_t dim() const noexcept { return m_.size(); }
  void step(std::span<double> params, std::span<const double> grad);

 private:
  OptimizerKind kind_;
  double lr_;
  std::uint64_t t_ = 0;
  std::vector<double> m_;
  std::vector<double> v_;
};

struct TrainConfig {
  std::size_t steps = 500;
  std::size_t batch_size = 32;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  double lr = 1e-2;
  std::size_t eval_every = 50;
  std::uint64_t seed = 0;
  ProjectionKind projection = ProjectionKind::kFastfood;
  // SAID only: keep lambda at 1 (testing hook).
  bool freeze_lambda = false;
  bool record_trace = false;

  bool operator==(const TrainConfig&) const = default;
};

// Throws ConfigError on non-positive budgets or learning rate.
void validate(const TrainConfig& cfg);

struct RunRecord {
  std::string task;
  std::string model;
  Method method = Method::kDid;
  std::size_t d = 0;       // requested budget (D for full runs)
  std::size_t D = 0;
  double lr = 0.0;
  std::uint64_t seed = 0;  // run seed; also the projection seed
  std::size_t steps = 0;
  std::size_t best_step = 0;
  double train_acc = 0.0;  // paired with the best eval accuracy
  double eval_acc = 0.0;   // best over evaluations
  double full_eval_acc = 0.0;
  double threshold = 0.0;
  bool passed = false;
  bool failed = false;     // numeric failure; metrics are best-so-far
  std::string failure;
  ProjectionKind projection = ProjectionKind::kFastfood;
  std::vector<double> intrinsic;   // [theta, lambda] at the best evaluation
  std::vector<double> loss_trace;  // per-step minibatch loss when requested
};

// "arch[D=n]"
std::string model_label(const ModelSpec& spec);

RunRecord train_subspace(const ModelSpec& spec, const ParameterVector& theta0,
                         const Dataset& dataset, Method method, std::size_t d,
                         const TrainConfig& cfg);

RunRecord train_full(const ModelSpec& spec, const ParameterVector& theta0,
                     const Dataset& dataset, const TrainConfig& cfg);

// Plain full-parameter training without evaluation; returns the parameters
// after each requested step count (sorted, may include 0).
std::vector<ParameterVector> pretrain(const ModelSpec& spec, const ParameterVector& init,
                                      const Dataset& dataset, const TrainConfig& cfg,
                                      std::span<const std::size_t> checkpoints);

/// (seed, d, method, theta) is enough to rebuild a tuned model from theta0.
struct TaskEncoding {
  Method method = Method::kDid;
  ProjectionKind projection = ProjectionKind::kFastfood;
  std::uint64_t seed = 0;
  std::uint64_t D = 0;
  std::vector<float> values;  // [theta, lambda], length d

  bool operator==(const TaskEncoding&) const = default;
};

TaskEncoding encode_task(const RunRecord& run);
std::vector<double> reconstruct(const ParameterVector& theta0, const TaskEncoding& enc);

// Binary layout: "IDTE", u32 version 1, u8 method, u8 projection, u64 seed,
// u64 D, u32 d, d little-endian f32 values.
void save_task_encoding(const std::filesystem::path& path, const TaskEncoding& enc);
TaskEncoding load_task_encoding(const std::filesystem::path& path);

}  // namespace idim
