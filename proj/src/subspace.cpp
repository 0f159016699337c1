// SPDX-License-Identifier: Apache-2.0

#include "idim/subspace.hpp"

#include <cmath>
#include <fstream>
#include <numeric>

#include "binary_io.hpp"
#include "idim/error.hpp"
#include "idim/rng.hpp"

namespace idim {

std::string to_string(Method method) {
  switch (method) {
    case Method::kDid: return "did";
    case Method::kSaid: return "said";
    case Method::kFull: return "full";
  }
  return "?";
}

Method method_from_string(const std::string& name) {
  if (name == "did") return Method::kDid;
  if (name == "said") return Method::kSaid;
  if (name == "full") return Method::kFull;
  throw ConfigError("unknown method '" + name + "' (expected did|said|full)");
}

std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::kSgd ? "sgd" : "adam"; }

OptimizerKind optimizer_kind_from_string(const std::string& name) {
  if (name == "sgd") return OptimizerKind::kSgd;
  if (name == "adam") return OptimizerKind::kAdam;
  throw ConfigError("unknown optimizer '" + name + "' (expected sgd|adam)");
}

namespace {

std::size_t subspace_dim(const ParameterVector& theta0, Method method, std::size_t d) {
  if (method == Method::kFull) throw ConfigError("full training has no subspace model");
  if (d == 0) throw ConfigError("intrinsic dimension must be >= 1");
  if (method == Method::kSaid && d <= theta0.num_layers()) {
    throw ConfigError("SAID budget d=" + std::to_string(d) + " must exceed the layer count m=" +
                      std::to_string(theta0.num_layers()));
  }
  return method == Method::kSaid ? d - theta0.num_layers() : d;
}

}  // namespace

SubspaceModel::SubspaceModel(ParameterVector theta0, Method method, std::size_t d,
                             ProjectionKind kind, std::uint64_t seed)
    : theta0_(std::move(theta0)),
      method_(method),
      budget_(d),
      proj_(ProjectionSpec{kind, seed, subspace_dim(theta0_, method, d), theta0_.size()}),
      theta_(proj_.intrinsic_dim(), 0.0),
      lambda_(method == Method::kSaid ? theta0_.num_layers() : 0, 1.0) {}

void SubspaceModel::effective_params(std::span<double> out) const {
  const std::size_t D = theta0_.size();
  if (out.size() != D) {
    throw InvalidDimensionError("effective_params output has length " + std::to_string(out.size()) +
                                ", expected " + std::to_string(D));
  }
  proj_.project(theta_, out);
  const auto base = theta0_.values();
  if (method_ == Method::kSaid) {
    const auto& parts = theta0_.partition();
    for (std::size_t l = 0; l < parts.size(); ++l) {
      const double lam = lambda_[l];
      for (std::size_t i = parts[l].offset; i < parts[l].offset + parts[l].length; ++i) {
        out[i] = base[i] + lam * out[i];
      }
    }
  } else {
    for (std::size_t i = 0; i < D; ++i) out[i] = base[i] + out[i];
  }
}

std::vector<double> SubspaceModel::effective_params() const {
  std::vector<double> out(theta0_.size());
  effective_params(out);
  return out;
}

IntrinsicGrad SubspaceModel::intrinsic_grad(std::span<const double> g_D) const {
  const std::size_t D = theta0_.size();
  if (g_D.size() != D) {
    throw InvalidDimensionError("gradient has length " + std::to_string(g_D.size()) +
                                ", expected " + std::to_string(D));
  }
  IntrinsicGrad out;
  out.theta.resize(theta_.size());
  if (method_ == Method::kDid) {
    proj_.adjoint(g_D, out.theta);
    return out;
  }
  std::vector<double> projected(D);
  proj_.project(theta_, projected);
  std::vector<double> scaled(D);
  const auto& parts = theta0_.partition();
  out.lambda.assign(parts.size(), 0.0);
  for (std::size_t l = 0; l < parts.size(); ++l) {
    double acc = 0.0;
    for (std::size_t i = parts[l].offset; i < parts[l].offset + parts[l].length; ++i) {
      acc += projected[i] * g_D[i];
      scaled[i] = lambda_[l] * g_D[i];
    }
    out.lambda[l] = acc;
  }
  proj_.adjoint(scaled, out.theta);
  return out;
}

Optimizer::Optimizer(OptimizerKind kind, double lr, std::size_t dim)
    : kind_(kind), lr_(lr), m_(dim, 0.0), v_(kind == OptimizerKind::kAdam ? dim : 0, 0.0) {}

void Optimizer::step(std::span<double> params, std::span<const double> grad) {
  if (params.size() != m_.size() || grad.size() != m_.size()) {
    throw InvalidDimensionError("optimizer state has dimension " + std::to_string(m_.size()));
  }
  if (kind_ == OptimizerKind::kSgd) {
    for (std::size_t i = 0; i < params.size(); ++i) params[i] -= lr_ * grad[i];
    return;
  }
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  ++t_;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = beta1 * m_[i] + (1.0 - beta1) * grad[i];
    v_[i] = beta2 * v_[i] + (1.0 - beta2) * grad[i] * grad[i];
    params[i] -= lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps);
  }
}

void validate(const TrainConfig& cfg) {
  if (cfg.batch_size == 0) throw ConfigError("batch_size must be positive");
  if (cfg.eval_every == 0) throw ConfigError("eval_every must be positive");
  if (!(cfg.lr > 0.0) || !std::isfinite(cfg.lr)) throw ConfigError("learning rate must be positive");
}

std::string model_label(const ModelSpec& spec) {
  return to_string(spec.arch) + "[D=" + std::to_string(param_count(spec)) + "]";
}

namespace {

// Cycles through reshuffled epochs of the training set.
class MinibatchStream {
 public:
  MinibatchStream(std::size_t n, std::size_t batch, std::uint64_t seed)
      : order_(n), batch_(std::min(batch, n)), rng_(mix_seed(seed, 1)) {
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    rng_.shuffle(std::span<std::size_t>(order_));
  }

  std::span<const std::size_t> next() {
    if (pos_ + batch_ > order_.size()) {
      rng_.shuffle(std::span<std::size_t>(order_));
      pos_ = 0;
    }
    std::span<const std::size_t> out(order_.data() + pos_, batch_);
    pos_ += batch_;
    return out;
  }

 private:
  std::vector<std::size_t> order_;
  std::size_t batch_;
  std::size_t pos_ = 0;
  Rng rng_;
};

// Trainable coordinates of a run: the full vector or a subspace model.
struct FullParams {
  std::vector<double> values;

  std::span<double> coords() { return values; }
  void effective(std::vector<double>& out) const { out = values; }
  void pullback(const std::vector<double>& g, std::vector<double>& out) const { out = g; }
  std::vector<double> snapshot() const { return {}; }
};

struct SubspaceParams {
  SubspaceModel model;
  bool freeze_lambda;
  std::vector<double> coords_;  // [theta, lambda]

  SubspaceParams(SubspaceModel m, bool freeze) : model(std::move(m)), freeze_lambda(freeze) {
    coords_.assign(model.theta().begin(), model.theta().end());
    coords_.insert(coords_.end(), model.lambda().begin(), model.lambda().end());
  }

  std::span<double> coords() { return coords_; }

  void sync() {
    const std::size_t k = model.theta().size();
    std::copy(coords_.begin(), coords_.begin() + static_cast<std::ptrdiff_t>(k),
              model.theta().begin());
    std::copy(coords_.begin() + static_cast<std::ptrdiff_t>(k), coords_.end(),
              model.lambda().begin());
  }

  void effective(std::vector<double>& out) {
    sync();
    out.resize(model.theta0().size());
    model.effective_params(out);
  }

  void pullback(const std::vector<double>& g, std::vector<double>& out) {
    sync();
    auto ig = model.intrinsic_grad(g);
    out = std::move(ig.theta);
    if (freeze_lambda) {
      out.resize(coords_.size(), 0.0);
    } else {
      out.insert(out.end(), ig.lambda.begin(), ig.lambda.end());
    }
  }

  std::vector<double> snapshot() const { return coords_; }
};

template <typename Params>
RunRecord run_training(const ModelSpec& spec, const Dataset& dataset, const TrainConfig& cfg,
                       Params& params, RunRecord rec) {
  validate(cfg);
  rec.task = dataset.spec.name;
  rec.model = model_label(spec);
  rec.lr = cfg.lr;
  rec.seed = cfg.seed;
  rec.steps = cfg.steps;
  rec.D = param_count(spec);

  std::vector<double> eff;
  std::vector<double> g_int;
  Optimizer opt(cfg.optimizer, cfg.lr, params.coords().size());
  MinibatchStream stream(dataset.train.size, cfg.batch_size, cfg.seed);

  bool have_best = false;
  auto evaluate_now = [&](std::size_t step) {
    params.effective(eff);
    const double eval_acc = evaluate(spec, eff, dataset.eval).accuracy;
    if (!have_best || eval_acc > rec.eval_acc) {
      have_best = true;
      rec.eval_acc = eval_acc;
      rec.train_acc = evaluate(spec, eff, dataset.train).accuracy;
      rec.best_step = step;
      rec.intrinsic = params.snapshot();
    }
  };

  try {
    evaluate_now(0);
    for (std::size_t step = 1; step <= cfg.steps; ++step) {
      params.effective(eff);
      const Batch mb = dataset.train.select(stream.next());
      const LossGrad lg = loss_and_grad(spec, eff, mb);
      if (cfg.record_trace) rec.loss_trace.push_back(lg.loss);
      params.pullback(lg.grad, g_int);
      opt.step(params.coords(), g_int);
      if (step % cfg.eval_every == 0 || step == cfg.steps) evaluate_now(step);
    }
  } catch (const NumericError& e) {
    rec.failed = true;
    rec.failure = e.what();
  }
  return rec;
}

}  // namespace

RunRecord train_subspace(const ModelSpec& spec, const ParameterVector& theta0,
                         const Dataset& dataset, Method method, std::size_t d,
                         const TrainConfig& cfg) {
  if (method == Method::kFull) return train_full(spec, theta0, dataset, cfg);
  if (theta0.size() != param_count(spec)) {
    throw InvalidDimensionError("theta0 does not match the model spec");
  }
  SubspaceParams params(SubspaceModel(theta0, method, d, cfg.projection, cfg.seed),
                        cfg.freeze_lambda);
  RunRecord rec;
  rec.method = method;
  rec.d = d;
  rec.projection = cfg.projection;
  return run_training(spec, dataset, cfg, params, std::move(rec));
}

RunRecord train_full(const ModelSpec& spec, const ParameterVector& theta0, const Dataset& dataset,
                     const TrainConfig& cfg) {
  if (theta0.size() != param_count(spec)) {
    throw InvalidDimensionError("theta0 does not match the model spec");
  }
  FullParams params{std::vector<double>(theta0.values().begin(), theta0.values().end())};
  RunRecord rec;
  rec.method = Method::kFull;
  rec.d = theta0.size();
  return run_training(spec, dataset, cfg, params, std::move(rec));
}

std::vector<ParameterVector> pretrain(const ModelSpec& spec, const ParameterVector& init,
                                      const Dataset& dataset, const TrainConfig& cfg,
                                      std::span<const std::size_t> checkpoints) {
  validate(cfg);
  if (!std::is_sorted(checkpoints.begin(), checkpoints.end())) {
    throw ConfigError("checkpoint steps must be sorted");
  }
  std::vector<ParameterVector> out;
  ParameterVector params = init;
  Optimizer opt(cfg.optimizer, cfg.lr, params.size());
  MinibatchStream stream(dataset.train.size, cfg.batch_size, cfg.seed);
  std::size_t next = 0;
  const std::size_t last = checkpoints.empty() ? 0 : checkpoints.back();
  for (std::size_t step = 0;; ++step) {
    while (next < checkpoints.size() && checkpoints[next] == step) {
      out.push_back(params);
      ++next;
    }
    if (step >= last) break;
    const Batch mb = dataset.train.select(stream.next());
    const LossGrad lg = loss_and_grad(spec, params.values(), mb);
    opt.step(params.values(), lg.grad);
  }
  return out;
}

TaskEncoding encode_task(const RunRecord& run) {
  if (run.method == Method::kFull) throw ConfigError("full runs have no compact task encoding");
  TaskEncoding enc;
  enc.method = run.method;
  enc.projection = run.projection;
  enc.seed = run.seed;
  enc.D = run.D;
  enc.values.assign(run.intrinsic.begin(), run.intrinsic.end());
  return enc;
}

std::vector<double> reconstruct(const ParameterVector& theta0, const TaskEncoding& enc) {
  if (enc.D != theta0.size()) throw InvalidDimensionError("encoding D does not match theta0");
  SubspaceModel model(theta0, enc.method, enc.values.size(), enc.projection, enc.seed);
  const std::size_t k = model.theta().size();
  for (std::size_t i = 0; i < k; ++i) model.theta()[i] = enc.values[i];
  for (std::size_t i = 0; i < model.lambda().size(); ++i) model.lambda()[i] = enc.values[k + i];
  return model.effective_params();
}

void save_task_encoding(const std::filesystem::path& path, const TaskEncoding& enc) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out.write("IDTE", 4);
  detail::write_le<std::uint32_t>(out, 1);
  detail::write_le<std::uint8_t>(out, static_cast<std::uint8_t>(enc.method));
  detail::write_le<std::uint8_t>(out, static_cast<std::uint8_t>(enc.projection));
  detail::write_le<std::uint64_t>(out, enc.seed);
  detail::write_le<std::uint64_t>(out, enc.D);
  detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(enc.values.size()));
  for (float v : enc.values) detail::write_f32(out, v);
  if (!out) throw FormatError("failed writing " + path.string());
}

TaskEncoding load_task_encoding(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  detail::expect_magic(in, "IDTE");
  if (detail::read_le<std::uint32_t>(in, "version") != 1) {
    throw FormatError("unsupported task encoding version");
  }
  TaskEncoding enc;
  const auto method = detail::read_le<std::uint8_t>(in, "method");
  const auto kind = detail::read_le<std::uint8_t>(in, "projection");
  if (method > 1 || kind > 1) throw FormatError("corrupt task encoding header");
  enc.method = static_cast<Method>(method);
  enc.projection = static_cast<ProjectionKind>(kind);
  enc.seed = detail::read_le<std::uint64_t>(in, "seed");
  enc.D = detail::read_le<std::uint64_t>(in, "D");
  const auto d = detail::read_le<std::uint32_t>(in, "d");
  enc.values.resize(d);
  for (auto& v : enc.values) v = detail::read_f32(in, "values");
  return enc;
}

}  // namespace idim
