// SPDX-License-Identifier: Apache-2.0

#include "idim/measure.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "idim/checkpoint.hpp"
#include "idim/error.hpp"
#include "idim/rng.hpp"
#include "parallel.hpp"

namespace idim {

std::string to_string(SearchMode mode) {
  return mode == SearchMode::kBinary ? "binary" : "exhaustive";
}

SearchMode search_mode_from_string(const std::string& name) {
  if (name == "binary") return SearchMode::kBinary;
  if (name == "exhaustive") return SearchMode::kExhaustive;
  throw ConfigError("unknown search mode '" + name + "' (expected binary|exhaustive)");
}

std::vector<std::size_t> default_d_grid() {
  std::vector<std::size_t> grid;
  for (int i = 0; i < 16; ++i) {
    grid.push_back(static_cast<std::size_t>(std::lround(8.0 * std::pow(1024.0, i / 15.0))));
  }
  return grid;
}

void validate(const D90Config& cfg) {
  if (cfg.d_grid.empty()) throw ConfigError("d_grid must not be empty");
  for (std::size_t i = 0; i < cfg.d_grid.size(); ++i) {
    if (cfg.d_grid[i] == 0) throw ConfigError("d_grid entries must be >= 1");
    if (i > 0 && cfg.d_grid[i] <= cfg.d_grid[i - 1]) {
      throw ConfigError("d_grid must be strictly increasing");
    }
  }
  if (cfg.lr_grid.empty()) throw ConfigError("lr_grid must not be empty");
  for (double lr : cfg.lr_grid) {
    if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("lr_grid entries must be positive");
  }
  if (!(cfg.threshold_ratio >= 0.0 && cfg.threshold_ratio <= 1.0)) {
    throw ConfigError("threshold_ratio must lie in [0, 1]");
  }
  if (cfg.d_max != 0 && cfg.d_max < cfg.d_min) throw ConfigError("d_max must be >= d_min");
}

std::vector<std::size_t> active_grid(const D90Config& cfg) {
  std::vector<std::size_t> out;
  for (std::size_t d : cfg.d_grid) {
    if (d >= cfg.d_min && (cfg.d_max == 0 || d <= cfg.d_max)) out.push_back(d);
  }
  return out;
}

GridSearch search_grid(std::size_t n, SearchMode mode,
                       const std::function<bool(std::size_t)>& passes) {
  GridSearch out;
  std::map<std::size_t, bool> seen;
  auto probe = [&](std::size_t i) {
    const auto it = seen.find(i);
    if (it != seen.end()) return it->second;
    const bool ok = passes(i);
    seen.emplace(i, ok);
    out.probed.push_back(i);
    return ok;
  };

  if (mode == SearchMode::kExhaustive) {
    for (std::size_t i = 0; i < n; ++i) {
      if (probe(i) && !out.index) out.index = i;
    }
  } else {
    std::size_t lo = 0;
    std::size_t hi = n;
    while (lo < hi) {
      const std::size_t mid = lo + (hi - lo) / 2;
      if (probe(mid)) {
        hi = mid;
      } else {
        lo = mid + 1;
      }
    }
    if (lo < n) {
      out.index = lo;
      // The largest point must pass too if the metric is monotone.
      probe(n - 1);
    }
  }

  std::optional<std::size_t> lowest_pass;
  for (const auto& [i, ok] : seen) {
    if (ok && !lowest_pass) lowest_pass = i;
    if (!ok && lowest_pass) out.monotonicity_violation = true;
  }
  return out;
}

std::uint64_t cell_seed(std::uint64_t experiment_seed, std::size_t d, std::size_t lr_index) {
  return mix_seed(mix_seed(experiment_seed, d), lr_index);
}

namespace {

D90Result search_over(const std::vector<std::size_t>& grid, const D90Config& cfg,
                      double full_metric, const TrialRunner& run, std::size_t threads) {
  D90Result res;
  res.full_metric = full_metric;
  res.threshold = cfg.threshold_ratio * full_metric;
  const std::size_t num_lr = cfg.lr_grid.size();
  std::map<std::size_t, std::vector<RunRecord>> cells;

  auto fill = [&](const std::vector<std::size_t>& indices) {
    std::vector<RunRecord> out(indices.size() * num_lr);
    detail::parallel_for(out.size(), threads, [&](std::size_t k) {
      out[k] = run(grid[indices[k / num_lr]], k % num_lr);
    });
    for (std::size_t j = 0; j < indices.size(); ++j) {
      auto& slot = cells[indices[j]];
      for (std::size_t l = 0; l < num_lr; ++l) {
        RunRecord r = std::move(out[j * num_lr + l]);
        r.full_eval_acc = full_metric;
        r.threshold = res.threshold;
        r.passed = r.eval_acc >= res.threshold;
        slot.push_back(std::move(r));
      }
    }
  };

  if (cfg.search == SearchMode::kExhaustive) {
    std::vector<std::size_t> all(grid.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    fill(all);
  }
  const GridSearch search = search_grid(grid.size(), cfg.search, [&](std::size_t i) {
    if (!cells.count(i)) fill({i});
    const auto& rs = cells.at(i);
    return std::any_of(rs.begin(), rs.end(), [](const RunRecord& r) { return r.passed; });
  });

  for (std::size_t i : search.probed) {
    for (auto& r : cells.at(i)) res.trials.push_back(std::move(r));
  }
  if (search.index) res.d90 = grid[*search.index];
  res.monotonicity_violation = search.monotonicity_violation;
  return res;
}

}  // namespace

D90Result search_d90(const D90Config& cfg, double full_metric, const TrialRunner& run,
                     std::size_t threads) {
  validate(cfg);
  return search_over(active_grid(cfg), cfg, full_metric, run, threads);
}

D90Result find_d90(const ModelSpec& spec, const ParameterVector& theta0, const Dataset& dataset,
                   Method method, const D90Config& cfg, const TrainConfig& train_cfg,
                   std::size_t threads) {
  validate(cfg);
  validate(train_cfg);
  if (method == Method::kFull) throw ConfigError("d90 needs method did or said");
  const std::size_t D = theta0.size();
  const std::size_t num_lr = cfg.lr_grid.size();

  std::vector<RunRecord> full(num_lr);
  detail::parallel_for(num_lr, threads, [&](std::size_t l) {
    TrainConfig c = train_cfg;
    c.lr = cfg.lr_grid[l];
    c.seed = cell_seed(train_cfg.seed, 0, l);
    full[l] = train_full(spec, theta0, dataset, c);
  });
  std::size_t best = 0;
  for (std::size_t l = 1; l < num_lr; ++l) {
    if (full[l].eval_acc > full[best].eval_acc) best = l;
  }
  const double full_metric = full[best].eval_acc;
  const double majority = majority_fraction(dataset.eval.labels, dataset.num_classes);
  if (full_metric <= majority) {
    throw BaselineDegenerateError("full baseline eval accuracy " + std::to_string(full_metric) +
                                  " does not beat the majority-class rate " +
                                  std::to_string(majority) + " on task '" + dataset.spec.name +
                                  "'");
  }

  std::vector<std::size_t> grid;
  for (std::size_t d : active_grid(cfg)) {
    if (d > D) continue;
    if (method == Method::kSaid && d <= theta0.num_layers()) continue;
    grid.push_back(d);
  }
  const TrialRunner runner = [&](std::size_t d, std::size_t l) {
    TrainConfig c = train_cfg;
    c.lr = cfg.lr_grid[l];
    c.seed = cell_seed(train_cfg.seed, d, l);
    return train_subspace(spec, theta0, dataset, method, d, c);
  };
  D90Result res = search_over(grid, cfg, full_metric, runner, threads);
  res.D = D;
  res.full_train_metric = full[best].train_acc;
  for (RunRecord& r : full) {
    r.full_eval_acc = full_metric;
    r.threshold = res.threshold;
    r.passed = r.eval_acc >= res.threshold;
  }
  res.full_runs = std::move(full);
  return res;
}

ModelSpec downstream_spec(const ModelSpec& pretrain_model, const TaskSpec& task,
                          std::uint64_t head_init_seed) {
  ModelSpec spec = pretrain_model;
  spec.num_classes = task.num_classes;
  spec.head_init_seed = head_init_seed;
  return spec;
}

ModelSpec with_width(const ModelSpec& base, std::size_t width) {
  if (width == 0) throw ConfigError("width must be >= 1");
  ModelSpec spec = base;
  switch (base.arch) {
    case Arch::kLogReg:
      throw ConfigError("logreg has no width to sweep");
    case Arch::kMlp:
      if (spec.dims.hidden.empty()) throw ConfigError("mlp width sweep needs hidden layers");
      std::fill(spec.dims.hidden.begin(), spec.dims.hidden.end(), width);
      break;
    case Arch::kTinyTransformer:
      spec.dims.ff_dim = std::max<std::size_t>(1, base.dims.ff_dim * width / base.dims.model_dim);
      spec.dims.model_dim = width;
      break;
  }
  validate(spec);
  return spec;
}

namespace {

SweepCell run_cell(const ModelSpec& pretrain_model, const ParameterVector& body,
                   const TaskSpec& task, const Dataset& data, const FinetuneProtocol& ft,
                   std::size_t threads) {
  SweepCell cell;
  cell.task = task.name;
  try {
    const ModelSpec spec = downstream_spec(pretrain_model, task, ft.head_init_seed);
    const ParameterVector theta0 = attach_head(spec, body);
    cell.D = theta0.size();
    cell.result = find_d90(spec, theta0, data, ft.method, ft.d90, ft.train, threads);
    cell.d90 = cell.result.d90;
    cell.full_metric = cell.result.full_metric;
    cell.threshold = cell.result.threshold;
    if (cell.d90) {
      const RunRecord* best = nullptr;
      for (const RunRecord& r : cell.result.trials) {
        if (r.d == *cell.d90 && (best == nullptr || r.eval_acc > best->eval_acc)) best = &r;
      }
      cell.d90_train_acc = best->train_acc;
      cell.d90_eval_acc = best->eval_acc;
    }
  } catch (const Error& e) {
    cell.error = e.kind() + ": " + e.what();
  }
  return cell;
}

std::vector<Dataset> generate_all(const std::vector<TaskSpec>& tasks) {
  std::vector<Dataset> out;
  out.reserve(tasks.size());
  for (const TaskSpec& t : tasks) out.push_back(generate(t));
  return out;
}

std::vector<ParameterVector> pretrain_snapshots(const PretrainProtocol& p, const ModelSpec& model,
                                                std::span<const std::size_t> steps) {
  const ParameterVector init = init_params(model, p.init_seed);
  if (std::all_of(steps.begin(), steps.end(), [](std::size_t s) { return s == 0; })) {
    return std::vector<ParameterVector>(steps.size(), init);
  }
  return pretrain(model, init, generate(p.task), p.train, steps);
}

}  // namespace

TrajectoryResult trajectory(const PretrainProtocol& pretrain_cfg,
                            std::span<const std::size_t> checkpoints,
                            const FinetuneProtocol& finetune, std::size_t threads,
                            const std::optional<std::filesystem::path>& checkpoint_dir) {
  if (checkpoints.empty()) throw ConfigError("trajectory needs at least one checkpoint");
  for (std::size_t i = 1; i < checkpoints.size(); ++i) {
    if (checkpoints[i] <= checkpoints[i - 1]) {
      throw ConfigError("checkpoints must be strictly increasing");
    }
  }
  if (finetune.tasks.empty()) throw ConfigError("trajectory needs at least one task");
  validate(pretrain_cfg.model);
  const auto snapshots = pretrain_snapshots(pretrain_cfg, pretrain_cfg.model, checkpoints);
  const auto datasets = generate_all(finetune.tasks);

  TrajectoryResult out;
  for (std::size_t c = 0; c < checkpoints.size(); ++c) {
    if (checkpoint_dir) {
      std::filesystem::create_directories(*checkpoint_dir);
      save_checkpoint(*checkpoint_dir / ("step_" + std::to_string(checkpoints[c]) + ".idck"),
                      snapshots[c],
                      CheckpointMeta{pretrain_cfg.model, checkpoints[c], pretrain_cfg.init_seed,
                                     pretrain_cfg.task.name});
    }
    for (std::size_t t = 0; t < finetune.tasks.size(); ++t) {
      SweepCell cell = run_cell(pretrain_cfg.model, snapshots[c], finetune.tasks[t], datasets[t],
                                finetune, threads);
      cell.step = checkpoints[c];
      out.cells.push_back(std::move(cell));
    }
  }
  return out;
}

WidthSweepResult width_sweep(const PretrainProtocol& pretrain_cfg,
                             std::span<const std::size_t> widths, std::size_t pretrain_steps,
                             const FinetuneProtocol& finetune, std::size_t threads) {
  if (widths.empty()) throw ConfigError("width sweep needs at least one width");
  if (finetune.tasks.empty()) throw ConfigError("width sweep needs at least one task");
  const auto datasets = generate_all(finetune.tasks);
  const std::size_t steps[] = {pretrain_steps};

  WidthSweepResult out;
  for (std::size_t w : widths) {
    const ModelSpec model = with_width(pretrain_cfg.model, w);
    const ParameterVector body = pretrain_snapshots(pretrain_cfg, model, steps).front();
    for (std::size_t t = 0; t < finetune.tasks.size(); ++t) {
      SweepCell cell = run_cell(model, body, finetune.tasks[t], datasets[t], finetune, threads);
      cell.step = pretrain_steps;
      cell.width = w;
      out.cells.push_back(std::move(cell));
    }
  }
  return out;
}

double relative_gap(double acc_train, double acc_eval) {
  if (acc_eval >= 1.0) throw UndefinedGapError("relative gap is undefined at eval accuracy 1");
  return (acc_train - acc_eval) / (1.0 - acc_eval);
}

double generalization_bound(std::size_t d, std::size_t m_samples, double empirical_loss,
                            double constant) {
  if (m_samples == 0) throw ConfigError("generalization bound needs m_samples >= 1");
  if (!(constant > 0.0)) throw ConfigError("generalization bound constant must be positive");
  return empirical_loss +
         constant * std::sqrt(static_cast<double>(d) / static_cast<double>(m_samples));
}

namespace {

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

std::optional<double> spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) {
    throw InvalidDimensionError("spearman needs equal-length inputs (got " +
                                std::to_string(x.size()) + " and " + std::to_string(y.size()) + ")");
  }
  if (x.size() < 2) return std::nullopt;
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace idim
