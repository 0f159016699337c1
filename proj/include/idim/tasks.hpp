// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "idim/nn.hpp"

namespace idim {

enum class TaskKind { kLatentLinear, kSequenceRule, kMaskedPretrain, kTsv };

std::string to_string(TaskKind kind);
TaskKind task_kind_from_string(const std::string& name);

struct TsvSchema {
  std::string path;
  std::vector<std::string> float_columns;
  std::vector<std::string> text_columns;
  std::string label_column = "label";
  std::size_t hash_dim = 64;     // bag-of-tokens bins per text column set
  double train_fraction = 0.75;
  std::uint64_t split_seed = 0;

  bool operator==(const TsvSchema&) const = default;
};

/**
 * Synthetic task description.
 *
 * latent_linear: x ~ N(0, I_input_dim), phi(x) = tanh(A x) with A drawn from
 *   family_seed (shared by the whole family), class = argmax of W phi(x) with
 *   W drawn from seed (binary: sign of w.phi(x)); labels flipped with
 *   probability `noise`.
 * sequence_rule: family_seed partitions the vocab (minus the reserved mask
 *   token vocab_size-1) into num_topics groups. A sequence picks a topic and
 *   draws each token from that group with probability `purity`, otherwise
 *   uniformly. rule_order 1: label = topic bucket (topic * num_classes /
 *   num_topics). rule_order k >= 2 (binary only): parity over positions
 *   0..k-1 of "token belongs to the first half of the topics".
 * masked_pretrain: sequence_rule sequences with one uniformly chosen
 *   position replaced by the mask token; label = the hidden token, so
 *   num_classes must equal vocab_size.
 *
 * Difficulty increases with num_classes, noise, rule_order and with lower
 * purity; trend experiments use that ordering.
 */
struct TaskSpec {
  TaskKind kind = TaskKind::kLatentLinear;
  std::string name = "task";
  std::uint64_t seed = 0;
  std::uint64_t family_seed = 0;
  std::size_t num_train = 512;
  std::size_t num_eval = 512;
  std::size_t num_classes = 2;
  double noise = 0.0;
  // latent_linear
  std::size_t input_dim = 16;
  std::size_t feature_dim = 32;
  // sequence_rule / masked_pretrain
  std::size_t vocab_size = 32;
  std::size_t seq_len = 8;
  std::size_t num_topics = 4;
  double purity = 0.8;
  std::size_t rule_order = 1;
  // tsv
  TsvSchema tsv;

  bool operator==(const TaskSpec&) const = default;
};

struct Dataset {
  Batch train;
  Batch eval;
  TaskSpec spec;
  std::size_t num_classes = 2;
};

// Throws ConfigError on invalid knobs.
void validate(const TaskSpec& spec);

// Deterministic in spec. Train and eval use disjoint seed streams.
Dataset generate(const TaskSpec& spec);

// Throws DataError (with 1-based data row number) on malformed input.
Dataset load_tsv(const TsvSchema& schema);

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t hash = 0xcbf29ce484222325ULL);

}  // namespace idim
