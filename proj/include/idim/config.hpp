// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "idim/measure.hpp"
#include "idim/nn.hpp"
#include "idim/subspace.hpp"
#include "idim/tasks.hpp"

namespace idim {

// Strict JSON mapping: unknown keys and wrong types raise ConfigError naming
// the offending path; missing keys keep their defaults.
void to_json(nlohmann::json& j, const ModelSpec& spec);
void from_json(const nlohmann::json& j, ModelSpec& spec);
void to_json(nlohmann::json& j, const TaskSpec& spec);
void from_json(const nlohmann::json& j, TaskSpec& spec);
// The run seed is owned by the experiment; it is not part of this object.
void to_json(nlohmann::json& j, const TrainConfig& cfg);
void from_json(const nlohmann::json& j, TrainConfig& cfg);
void to_json(nlohmann::json& j, const D90Config& cfg);
void from_json(const nlohmann::json& j, D90Config& cfg);

struct PretrainSection {
  TaskSpec task;
  TrainConfig train;
  std::vector<std::size_t> checkpoints;  // trajectory
  std::size_t steps = 0;                 // width sweep

  bool operator==(const PretrainSection&) const = default;
};

void to_json(nlohmann::json& j, const PretrainSection& p);
void from_json(const nlohmann::json& j, PretrainSection& p);

/**
 * Top-level experiment document.
 *
 * `seed` initializes theta0 (and the pretraining init) and is the base seed
 * of every run. A single task may be given as "task" instead of "tasks".
 * The pretraining model is `model` with its class count set by the
 * pretraining task.
 */
struct ExperimentConfig {
  std::uint64_t seed = 0;
  ModelSpec model;
  std::vector<TaskSpec> tasks;
  Method method = Method::kDid;
  TrainConfig train;
  D90Config d90;
  std::string output_dir;
  bool has_pretrain = false;
  PretrainSection pretrain;
  std::vector<std::size_t> widths;

  bool operator==(const ExperimentConfig&) const = default;
};

void to_json(nlohmann::json& j, const ExperimentConfig& cfg);
void from_json(const nlohmann::json& j, ExperimentConfig& cfg);

// Parses and validates; syntax errors report "line L, column C".
ExperimentConfig parse_experiment(std::string_view text);
ExperimentConfig load_experiment(const std::string& path);
std::string dump_experiment(const ExperimentConfig& cfg);

// Semantic checks of every nested object; throws ConfigError.
void validate(const ExperimentConfig& cfg);

PretrainProtocol pretrain_protocol(const ExperimentConfig& cfg);
FinetuneProtocol finetune_protocol(const ExperimentConfig& cfg);

}  // namespace idim
