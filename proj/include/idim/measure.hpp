// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "idim/nn.hpp"
#include "idim/subspace.hpp"
#include "idim/tasks.hpp"

namespace idim {

enum class SearchMode { kBinary, kExhaustive };

std::string to_string(SearchMode mode);
SearchMode search_mode_from_string(const std::string& name);

// 16 log-spaced values from 8 to 8192.
std::vector<std::size_t> default_d_grid();

struct D90Config {
  std::vector<std::size_t> d_grid = default_d_grid();
  std::vector<double> lr_grid{3e-2, 1e-2, 3e-3, 1e-3};
  double threshold_ratio = 0.9;
  SearchMode search = SearchMode::kBinary;
  std::size_t d_min = 0;  // grid points outside [d_min, d_max] are skipped
  std::size_t d_max = 0;  // 0 = unbounded

  bool operator==(const D90Config&) const = default;
};

// Throws ConfigError unless the grid is strictly increasing and positive, the
// lr grid is non-empty and positive, and 0 <= threshold_ratio <= 1.
void validate(const D90Config& cfg);

// Grid points inside [d_min, d_max].
std::vector<std::size_t> active_grid(const D90Config& cfg);

struct GridSearch {
  std::optional<std::size_t> index;  // smallest passing index found
  std::vector<std::size_t> probed;   // in probe order
  bool monotonicity_violation = false;
};

/**
 * Smallest index in [0, n) for which `passes` holds.
 *
 * Binary mode assumes pass/fail is monotone in the index and probes
 * O(log n) points; it flags a violation when a probed pass sits below a
 * probed failure. Exhaustive mode probes every index in order.
 */
GridSearch search_grid(std::size_t n, SearchMode mode,
                       const std::function<bool(std::size_t)>& passes);

struct D90Result {
  std::size_t D = 0;
  double full_metric = 0.0;
  double full_train_metric = 0.0;
  double threshold = 0.0;
  std::vector<RunRecord> full_runs;  // one per learning rate
  std::vector<RunRecord> trials;     // ordered by probe, then lr index
  std::optional<std::size_t> d90;    // nullopt = not found
  bool monotonicity_violation = false;
};

// One subspace run for grid value d at lr_grid[lr_index].
using TrialRunner = std::function<RunRecord(std::size_t d, std::size_t lr_index)>;

// Search over `cfg` with a precomputed full metric. Cells of one probe (and
// all cells in exhaustive mode) may run on `threads` workers; results are
// reduced in grid/lr order so the outcome does not depend on `threads`.
D90Result search_d90(const D90Config& cfg, double full_metric, const TrialRunner& run,
                     std::size_t threads = 1);

// Seed of the (d, lr) cell; d = 0 denotes the full baseline.
std::uint64_t cell_seed(std::uint64_t experiment_seed, std::size_t d, std::size_t lr_index);

/**
 * d90 of `method` for one (theta0, dataset): full baseline best over the lr
 * grid, then search_d90 over subspace runs. SAID grid points d <= m are
 * skipped. Throws BaselineDegenerateError when the full baseline does not
 * beat the majority-class rate on the eval split.
 */
D90Result find_d90(const ModelSpec& spec, const ParameterVector& theta0, const Dataset& dataset,
                   Method method, const D90Config& cfg, const TrainConfig& train_cfg,
                   std::size_t threads = 1);

// Pretraining recipe shared by the trajectory and width experiments.
struct PretrainProtocol {
  ModelSpec model;
  TaskSpec task;
  TrainConfig train;  // train.steps is ignored; checkpoints decide
  std::uint64_t init_seed = 0;

  bool operator==(const PretrainProtocol&) const = default;
};

struct FinetuneProtocol {
  std::vector<TaskSpec> tasks;
  Method method = Method::kSaid;
  D90Config d90;
  TrainConfig train;
  std::uint64_t head_init_seed = 0;

  bool operator==(const FinetuneProtocol&) const = default;
};

struct SweepCell {
  std::size_t step = 0;   // pretraining checkpoint
  std::size_t width = 0;  // 0 in trajectory results
  std::size_t D = 0;
  std::string task;
  std::optional<std::size_t> d90;
  double full_metric = 0.0;
  double threshold = 0.0;
  // train/eval accuracy of the best-lr trial at d90 (zero when not found)
  double d90_train_acc = 0.0;
  double d90_eval_acc = 0.0;
  std::string error;  // non-empty when the cell failed
  D90Result result;
};

struct TrajectoryResult {
  std::vector<SweepCell> cells;  // checkpoint-major, then task order
};

struct WidthSweepResult {
  std::vector<SweepCell> cells;  // width-major, then task order
};

// Spec for fine-tuning on `task`: pretraining dims, task classes, fresh head.
ModelSpec downstream_spec(const ModelSpec& pretrain_model, const TaskSpec& task,
                          std::uint64_t head_init_seed);

// Pretrains once, snapshots at `checkpoints` (strictly increasing), then runs
// find_d90 per (checkpoint, task). Failed cells are recorded, not thrown.
// Checkpoints are written as IDCK files when checkpoint_dir is set.
TrajectoryResult trajectory(const PretrainProtocol& pretrain,
                            std::span<const std::size_t> checkpoints,
                            const FinetuneProtocol& finetune, std::size_t threads = 1,
                            const std::optional<std::filesystem::path>& checkpoint_dir = {});

// Model with every hidden width (mlp) or model_dim (transformer, ff scaled
// proportionally) set to `width`.
ModelSpec with_width(const ModelSpec& base, std::size_t width);

// Same pretraining protocol (pretrain_steps updates) per width, then d90 per task.
WidthSweepResult width_sweep(const PretrainProtocol& pretrain, std::span<const std::size_t> widths,
                             std::size_t pretrain_steps, const FinetuneProtocol& finetune,
                             std::size_t threads = 1);

// (acc_train - acc_eval) / (1 - acc_eval); throws UndefinedGapError at acc_eval == 1.
double relative_gap(double acc_train, double acc_eval);

/**
 * empirical_loss + constant * sqrt(d / m_samples).
 *
 * The constant absorbs the O(.) and the log r quantization term, where r is
 * the number of states of one stored intrinsic coordinate (2^32 for f32).
 */
double generalization_bound(std::size_t d, std::size_t m_samples, double empirical_loss,
                            double constant = 1.0);

// Spearman rank correlation (average ranks for ties); nullopt when either
// side is constant or fewer than two points.
std::optional<double> spearman(std::span<const double> x, std::span<const double> y);

}  // namespace idim
