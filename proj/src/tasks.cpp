// SPDX-License-Identifier: Apache-2.0

#include "idim/tasks.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "idim/error.hpp"
#include "idim/rng.hpp"

namespace idim {

std::string to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::kLatentLinear: return "latent_linear";
    case TaskKind::kSequenceRule: return "sequence_rule";
    case TaskKind::kMaskedPretrain: return "masked_pretrain";
    case TaskKind::kTsv: return "tsv";
  }
  return "?";
}

TaskKind task_kind_from_string(const std::string& name) {
  if (name == "latent_linear") return TaskKind::kLatentLinear;
  if (name == "sequence_rule") return TaskKind::kSequenceRule;
  if (name == "masked_pretrain") return TaskKind::kMaskedPretrain;
  if (name == "tsv") return TaskKind::kTsv;
  throw ConfigError("unknown task kind '" + name + "'");
}

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t hash) {
  for (unsigned char c : bytes) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

void validate(const TaskSpec& s) {
  if (s.kind == TaskKind::kTsv) {
    if (s.tsv.path.empty()) throw ConfigError("tsv task needs a path");
    if (s.tsv.train_fraction <= 0.0 || s.tsv.train_fraction >= 1.0) {
      throw ConfigError("tsv train_fraction must be in (0, 1)");
    }
    if (!s.tsv.text_columns.empty() && s.tsv.hash_dim == 0) {
      throw ConfigError("tsv hash_dim must be positive");
    }
    return;
  }
  if (s.num_train == 0 || s.num_eval == 0) throw ConfigError("split sizes must be positive");
  if (s.num_classes < 2) throw ConfigError("num_classes must be >= 2");
  if (s.noise < 0.0 || s.noise > 1.0) throw ConfigError("noise must be in [0, 1]");
  if (s.kind == TaskKind::kLatentLinear) {
    if (s.input_dim == 0 || s.feature_dim == 0) {
      throw ConfigError("latent_linear needs positive input_dim and feature_dim");
    }
    return;
  }
  if (s.seq_len == 0) throw ConfigError("seq_len must be positive");
  if (s.num_topics < 2) throw ConfigError("num_topics must be >= 2");
  if (s.vocab_size < s.num_topics + 1) {
    throw ConfigError("vocab_size must leave at least one token per topic plus the mask token");
  }
  if (s.purity < 0.0 || s.purity > 1.0) throw ConfigError("purity must be in [0, 1]");
  if (s.kind == TaskKind::kMaskedPretrain) {
    if (s.num_classes != s.vocab_size) {
      throw ConfigError("masked_pretrain num_classes must equal vocab_size");
    }
    return;
  }
  if (s.rule_order == 0 || s.rule_order > s.seq_len) {
    throw ConfigError("rule_order must be in [1, seq_len]");
  }
  if (s.rule_order == 1 && s.num_classes > s.num_topics) {
    throw ConfigError("sequence_rule num_classes cannot exceed num_topics");
  }
  if (s.rule_order > 1 && s.num_classes != 2) {
    throw ConfigError("parity rules (rule_order > 1) are binary");
  }
}

namespace {

std::uint32_t flip_label(std::uint32_t label, std::size_t num_classes, double noise, Rng& rng) {
  if (noise <= 0.0 || rng.uniform() >= noise) return label;
  const auto shift = 1 + rng.bounded(num_classes - 1);
  return static_cast<std::uint32_t>((label + shift) % num_classes);
}

class LatentLinear {
 public:
  explicit LatentLinear(const TaskSpec& s) : s_(s) {
    Rng family(mix_seed(s.family_seed, 0));
    const double scale = 1.0 / std::sqrt(static_cast<double>(s.input_dim));
    a_.resize(s.feature_dim * s.input_dim);
    for (auto& v : a_) v = scale * family.normal();
    Rng task(mix_seed(s.seed, 0));
    const std::size_t rows = s.num_classes == 2 ? 1 : s.num_classes;
    w_.resize(rows * s.feature_dim);
    for (auto& v : w_) v = task.normal();
  }

  Batch sample(std::size_t n, Rng& rng, Rng& noise_rng) const {
    Batch b;
    b.size = n;
    b.width = s_.input_dim;
    b.features.resize(n * s_.input_dim);
    b.labels.resize(n);
    std::vector<double> phi(s_.feature_dim);
    for (std::size_t i = 0; i < n; ++i) {
      double* x = b.features.data() + i * s_.input_dim;
      for (std::size_t j = 0; j < s_.input_dim; ++j) x[j] = rng.normal();
      for (std::size_t f = 0; f < s_.feature_dim; ++f) {
        double acc = 0.0;
        for (std::size_t j = 0; j < s_.input_dim; ++j) acc += a_[f * s_.input_dim + j] * x[j];
        phi[f] = std::tanh(acc);
      }
      std::uint32_t label = 0;
      if (s_.num_classes == 2) {
        double score = 0.0;
        for (std::size_t f = 0; f < s_.feature_dim; ++f) score += w_[f] * phi[f];
        label = score > 0.0 ? 1u : 0u;
      } else {
        double best = -INFINITY;
        for (std::size_t k = 0; k < s_.num_classes; ++k) {
          double score = 0.0;
          for (std::size_t f = 0; f < s_.feature_dim; ++f) {
            score += w_[k * s_.feature_dim + f] * phi[f];
          }
          if (score > best) {
            best = score;
            label = static_cast<std::uint32_t>(k);
          }
        }
      }
      b.labels[i] = flip_label(label, s_.num_classes, s_.noise, noise_rng);
    }
    return b;
  }

 private:
  const TaskSpec& s_;
  std::vector<double> a_;
  std::vector<double> w_;
};

class TopicSequences {
 public:
  explicit TopicSequences(const TaskSpec& s) : s_(s) {
    const std::size_t regular = s.vocab_size - 1;
    std::vector<std::uint32_t> order(regular);
    std::iota(order.begin(), order.end(), 0u);
    Rng family(mix_seed(s.family_seed, 0));
    family.shuffle(std::span<std::uint32_t>(order));
    groups_.resize(s.num_topics);
    topic_of_.resize(regular);
    for (std::size_t i = 0; i < regular; ++i) {
      const std::size_t t = i * s.num_topics / regular;
      groups_[t].push_back(order[i]);
      topic_of_[order[i]] = t;
    }
  }

  std::uint32_t mask_token() const { return static_cast<std::uint32_t>(s_.vocab_size - 1); }

  // Fills `out` with one sequence and returns its topic.
  std::size_t draw(std::uint32_t* out, Rng& rng) const {
    const std::size_t topic = rng.bounded(s_.num_topics);
    const auto& g = groups_[topic];
    for (std::size_t t = 0; t < s_.seq_len; ++t) {
      if (rng.uniform() < s_.purity) {
        out[t] = g[rng.bounded(g.size())];
      } else {
        out[t] = static_cast<std::uint32_t>(rng.bounded(s_.vocab_size - 1));
      }
    }
    return topic;
  }

  std::uint32_t rule_label(const std::uint32_t* seq, std::size_t topic) const {
    if (s_.rule_order == 1) {
      return static_cast<std::uint32_t>(topic * s_.num_classes / s_.num_topics);
    }
    std::uint32_t parity = 0;
    for (std::size_t p = 0; p < s_.rule_order; ++p) {
      parity ^= topic_of_[seq[p]] < s_.num_topics / 2 ? 1u : 0u;
    }
    return parity;
  }

  Batch sample(std::size_t n, Rng& rng, Rng& noise_rng) const {
    Batch b;
    b.size = n;
    b.width = s_.seq_len;
    b.tokens.resize(n * s_.seq_len);
    b.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::uint32_t* seq = b.tokens.data() + i * s_.seq_len;
      const std::size_t topic = draw(seq, rng);
      std::uint32_t label = 0;
      if (s_.kind == TaskKind::kMaskedPretrain) {
        const std::size_t pos = rng.bounded(s_.seq_len);
        label = seq[pos];
        seq[pos] = mask_token();
      } else {
        label = flip_label(rule_label(seq, topic), s_.num_classes, s_.noise, noise_rng);
      }
      b.labels[i] = label;
    }
    return b;
  }

 private:
  const TaskSpec& s_;
  std::vector<std::vector<std::uint32_t>> groups_;
  std::vector<std::size_t> topic_of_;
};

template <typename Gen>
Dataset make_dataset(const TaskSpec& spec, const Gen& gen) {
  Dataset ds;
  ds.spec = spec;
  ds.num_classes = spec.num_classes;
  Rng train_rng(mix_seed(spec.seed, 1));
  Rng eval_rng(mix_seed(spec.seed, 2));
  // Label noise has its own streams so inputs do not depend on `noise`.
  Rng train_noise(mix_seed(spec.seed, 3));
  Rng eval_noise(mix_seed(spec.seed, 4));
  ds.train = gen.sample(spec.num_train, train_rng, train_noise);
  ds.eval = gen.sample(spec.num_eval, eval_rng, eval_noise);
  return ds;
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    out.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  if (!out.empty() && !out.back().empty() && out.back().back() == '\r') out.back().pop_back();
  return out;
}

std::size_t column_index(const std::vector<std::string>& header, const std::string& name) {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw DataError("tsv header has no column '" + name + "'");
  return static_cast<std::size_t>(it - header.begin());
}

}  // namespace

Dataset generate(const TaskSpec& spec) {
  validate(spec);
  switch (spec.kind) {
    case TaskKind::kLatentLinear:
      return make_dataset(spec, LatentLinear(spec));
    case TaskKind::kSequenceRule:
    case TaskKind::kMaskedPretrain:
      return make_dataset(spec, TopicSequences(spec));
    case TaskKind::kTsv: {
      Dataset ds = load_tsv(spec.tsv);
      ds.spec = spec;
      return ds;
    }
  }
  throw ConfigError("unhandled task kind");
}

Dataset load_tsv(const TsvSchema& schema) {
  std::ifstream in(schema.path);
  if (!in) throw DataError("cannot open tsv file '" + schema.path + "'");
  std::string line;
  if (!std::getline(in, line)) throw DataError("tsv file '" + schema.path + "' has no header");
  const auto header = split_tabs(line);
  std::vector<std::size_t> float_cols, text_cols;
  for (const auto& c : schema.float_columns) float_cols.push_back(column_index(header, c));
  for (const auto& c : schema.text_columns) text_cols.push_back(column_index(header, c));
  const std::size_t label_col = column_index(header, schema.label_column);
  const std::size_t width = float_cols.size() + (text_cols.empty() ? 0 : schema.hash_dim);
  if (width == 0) throw DataError("tsv schema selects no feature columns");

  std::vector<std::vector<double>> rows;
  std::vector<std::uint32_t> labels;
  std::size_t row_number = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    ++row_number;
    const auto fields = split_tabs(line);
    if (fields.size() != header.size()) {
      throw DataError("tsv row " + std::to_string(row_number) + " has " +
                      std::to_string(fields.size()) + " fields, header has " +
                      std::to_string(header.size()));
    }
    std::vector<double> feat(width, 0.0);
    for (std::size_t j = 0; j < float_cols.size(); ++j) {
      const std::string& f = fields[float_cols[j]];
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
      if (ec != std::errc() || ptr != f.data() + f.size() || f.empty()) {
        throw DataError("tsv row " + std::to_string(row_number) + ": cannot parse '" + f +
                        "' in float column '" + schema.float_columns[j] + "'");
      }
      feat[j] = v;
    }
    for (auto c : text_cols) {
      std::istringstream words(fields[c]);
      std::string w;
      while (words >> w) {
        std::transform(w.begin(), w.end(), w.begin(),
                       [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
        feat[float_cols.size() + fnv1a64(w) % schema.hash_dim] += 1.0;
      }
    }
    const std::string& lf = fields[label_col];
    unsigned long label = 0;
    const auto [ptr, ec] = std::from_chars(lf.data(), lf.data() + lf.size(), label);
    if (ec != std::errc() || ptr != lf.data() + lf.size() || lf.empty()) {
      throw DataError("tsv row " + std::to_string(row_number) + ": label '" + lf +
                      "' is not a non-negative integer");
    }
    rows.push_back(std::move(feat));
    labels.push_back(static_cast<std::uint32_t>(label));
  }
  if (rows.size() < 2) throw DataError("tsv file needs at least two data rows");

  // Order rows by a seeded hash of their index; the first fraction trains.
  std::vector<std::pair<std::uint64_t, std::size_t>> keyed;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::uint64_t h = fnv1a64(std::string_view(reinterpret_cast<const char*>(&schema.split_seed),
                                               sizeof(schema.split_seed)));
    const std::uint64_t idx = i;
    h = fnv1a64(std::string_view(reinterpret_cast<const char*>(&idx), sizeof(idx)), h);
    keyed.emplace_back(h, i);
  }
  std::sort(keyed.begin(), keyed.end());
  auto n_train = static_cast<std::size_t>(
      std::llround(schema.train_fraction * static_cast<double>(rows.size())));
  n_train = std::clamp<std::size_t>(n_train, 1, rows.size() - 1);
  std::vector<std::size_t> train_idx, eval_idx;
  for (std::size_t k = 0; k < keyed.size(); ++k) {
    (k < n_train ? train_idx : eval_idx).push_back(keyed[k].second);
  }
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(eval_idx.begin(), eval_idx.end());

  const std::uint32_t max_label = *std::max_element(labels.begin(), labels.end());
  auto build = [&](const std::vector<std::size_t>& idx) {
    Batch b;
    b.size = idx.size();
    b.width = width;
    for (auto i : idx) {
      b.features.insert(b.features.end(), rows[i].begin(), rows[i].end());
      b.labels.push_back(labels[i]);
    }
    return b;
  };
  Dataset ds;
  ds.spec.kind = TaskKind::kTsv;
  ds.spec.tsv = schema;
  ds.spec.num_train = train_idx.size();
  ds.spec.num_eval = eval_idx.size();
  ds.num_classes = std::max<std::size_t>(2, max_label + 1);
  ds.spec.num_classes = ds.num_classes;
  ds.train = build(train_idx);
  ds.eval = build(eval_idx);
  return ds;
}

}  // namespace idim
