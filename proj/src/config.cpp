// SPDX-License-Identifier: Apache-2.0

#include "idim/config.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <type_traits>

#include "idim/error.hpp"

namespace idim {

namespace {

using nlohmann::json;

std::string type_error(const json::exception& e) {
  std::string what = e.what();
  const auto pos = what.find("] ");
  return pos == std::string::npos ? what : what.substr(pos + 2);
}

// Tracks consumed keys so leftovers can be reported as unknown.
class ObjectReader {
 public:
  explicit ObjectReader(const json& j) : j_(j) {
    if (!j.is_object()) throw ConfigError("expected an object, got " + std::string(j.type_name()));
  }

  template <typename T>
  void value(const char* key, T& out) {
    const json* v = take(key);
    if (v == nullptr) return;
    if constexpr (std::is_unsigned_v<T>) {
      if (!v->is_number_unsigned()) {
        throw ConfigError(std::string(key) + ": expected a non-negative integer");
      }
    }
    try {
      out = v->get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(std::string(key) + ": " + type_error(e));
    }
  }

  template <typename Parse>
  void parsed(const char* key, Parse&& parse) {
    const json* v = take(key);
    if (v == nullptr) return;
    if (!v->is_string()) throw ConfigError(std::string(key) + ": expected a string");
    try {
      parse(v->get<std::string>());
    } catch (const ConfigError& e) {
      throw ConfigError(std::string(key) + ": " + e.what());
    }
  }

  template <typename T>
  void object(const char* key, T& out) {
    const json* v = take(key);
    if (v == nullptr) return;
    nested(key, *v, out);
  }

  const json* take(const char* key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void finish() const {
    for (const auto& item : j_.items()) {
      if (!seen_.count(item.key())) throw ConfigError(item.key() + ": unknown key");
    }
  }

  template <typename T>
  static void nested(const std::string& path, const json& v, T& out) {
    try {
      from_json(v, out);
    } catch (const ConfigError& e) {
      throw ConfigError(path + "." + e.what());
    }
  }

 private:
  const json& j_;
  std::set<std::string> seen_;
};

}  // namespace

void to_json(json& j, const ModelSpec& spec) {
  j = json{{"arch", to_string(spec.arch)},
           {"num_classes", spec.num_classes},
           {"head_init_seed", spec.head_init_seed},
           {"input_dim", spec.dims.input_dim},
           {"hidden", spec.dims.hidden},
           {"vocab_size", spec.dims.vocab_size},
           {"seq_len", spec.dims.seq_len},
           {"model_dim", spec.dims.model_dim},
           {"ff_dim", spec.dims.ff_dim},
           {"num_blocks", spec.dims.num_blocks}};
}

void from_json(const json& j, ModelSpec& spec) {
  ObjectReader r(j);
  r.parsed("arch", [&](const std::string& s) { spec.arch = arch_from_string(s); });
  r.value("num_classes", spec.num_classes);
  r.value("head_init_seed", spec.head_init_seed);
  r.value("input_dim", spec.dims.input_dim);
  r.value("hidden", spec.dims.hidden);
  r.value("vocab_size", spec.dims.vocab_size);
  r.value("seq_len", spec.dims.seq_len);
  r.value("model_dim", spec.dims.model_dim);
  r.value("ff_dim", spec.dims.ff_dim);
  r.value("num_blocks", spec.dims.num_blocks);
  r.finish();
}

static void to_json(json& j, const TsvSchema& s) {
  j = json{{"path", s.path},
           {"float_columns", s.float_columns},
           {"text_columns", s.text_columns},
           {"label_column", s.label_column},
           {"hash_dim", s.hash_dim},
           {"train_fraction", s.train_fraction},
           {"split_seed", s.split_seed}};
}

static void from_json(const json& j, TsvSchema& s) {
  ObjectReader r(j);
  r.value("path", s.path);
  r.value("float_columns", s.float_columns);
  r.value("text_columns", s.text_columns);
  r.value("label_column", s.label_column);
  r.value("hash_dim", s.hash_dim);
  r.value("train_fraction", s.train_fraction);
  r.value("split_seed", s.split_seed);
  r.finish();
}

void to_json(json& j, const TaskSpec& spec) {
  j = json{{"kind", to_string(spec.kind)},
           {"name", spec.name},
           {"seed", spec.seed},
           {"family_seed", spec.family_seed},
           {"num_train", spec.num_train},
           {"num_eval", spec.num_eval},
           {"num_classes", spec.num_classes},
           {"noise", spec.noise},
           {"input_dim", spec.input_dim},
           {"feature_dim", spec.feature_dim},
           {"vocab_size", spec.vocab_size},
           {"seq_len", spec.seq_len},
           {"num_topics", spec.num_topics},
           {"purity", spec.purity},
           {"rule_order", spec.rule_order}};
  if (spec.kind == TaskKind::kTsv) j["tsv"] = spec.tsv;
}

void from_json(const json& j, TaskSpec& spec) {
  ObjectReader r(j);
  r.parsed("kind", [&](const std::string& s) { spec.kind = task_kind_from_string(s); });
  r.value("name", spec.name);
  r.value("seed", spec.seed);
  r.value("family_seed", spec.family_seed);
  r.value("num_train", spec.num_train);
  r.value("num_eval", spec.num_eval);
  r.value("num_classes", spec.num_classes);
  r.value("noise", spec.noise);
  r.value("input_dim", spec.input_dim);
  r.value("feature_dim", spec.feature_dim);
  r.value("vocab_size", spec.vocab_size);
  r.value("seq_len", spec.seq_len);
  r.value("num_topics", spec.num_topics);
  r.value("purity", spec.purity);
  r.value("rule_order", spec.rule_order);
  if (const json* v = r.take("tsv")) {
    if (spec.kind != TaskKind::kTsv) throw ConfigError("tsv: only allowed with kind \"tsv\"");
    ObjectReader::nested("tsv", *v, spec.tsv);
  }
  r.finish();
}

void to_json(json& j, const TrainConfig& cfg) {
  j = json{{"steps", cfg.steps},
           {"batch_size", cfg.batch_size},
           {"optimizer", to_string(cfg.optimizer)},
           {"lr", cfg.lr},
           {"eval_every", cfg.eval_every},
           {"projection", to_string(cfg.projection)}};
}

void from_json(const json& j, TrainConfig& cfg) {
  ObjectReader r(j);
  r.value("steps", cfg.steps);
  r.value("batch_size", cfg.batch_size);
  r.parsed("optimizer", [&](const std::string& s) { cfg.optimizer = optimizer_kind_from_string(s); });
  r.value("lr", cfg.lr);
  r.value("eval_every", cfg.eval_every);
  r.parsed("projection", [&](const std::string& s) { cfg.projection = projection_kind_from_string(s); });
  r.finish();
}

void to_json(json& j, const D90Config& cfg) {
  j = json{{"d_grid", cfg.d_grid},
           {"lr_grid", cfg.lr_grid},
           {"threshold_ratio", cfg.threshold_ratio},
           {"search", to_string(cfg.search)},
           {"d_min", cfg.d_min},
           {"d_max", cfg.d_max}};
}

void from_json(const json& j, D90Config& cfg) {
  ObjectReader r(j);
  r.value("d_grid", cfg.d_grid);
  r.value("lr_grid", cfg.lr_grid);
  r.value("threshold_ratio", cfg.threshold_ratio);
  r.parsed("search", [&](const std::string& s) { cfg.search = search_mode_from_string(s); });
  r.value("d_min", cfg.d_min);
  r.value("d_max", cfg.d_max);
  r.finish();
}

void to_json(json& j, const PretrainSection& p) {
  j = json{{"task", p.task}, {"train", p.train}, {"checkpoints", p.checkpoints}, {"steps", p.steps}};
}

void from_json(const json& j, PretrainSection& p) {
  ObjectReader r(j);
  r.object("task", p.task);
  r.object("train", p.train);
  r.value("checkpoints", p.checkpoints);
  r.value("steps", p.steps);
  r.finish();
}

void to_json(json& j, const ExperimentConfig& cfg) {
  j = json{{"seed", cfg.seed},     {"model", cfg.model},   {"tasks", cfg.tasks},
           {"method", to_string(cfg.method)},              {"train", cfg.train},
           {"d90", cfg.d90},       {"output_dir", cfg.output_dir}};
  if (cfg.has_pretrain) j["pretrain"] = cfg.pretrain;
  if (!cfg.widths.empty()) j["widths"] = cfg.widths;
}

void from_json(const json& j, ExperimentConfig& cfg) {
  ObjectReader r(j);
  r.value("seed", cfg.seed);
  r.object("model", cfg.model);
  const json* one = r.take("task");
  const json* many = r.take("tasks");
  if (one != nullptr && many != nullptr) throw ConfigError("task: give either \"task\" or \"tasks\"");
  if (one != nullptr) {
    cfg.tasks.assign(1, TaskSpec{});
    ObjectReader::nested("task", *one, cfg.tasks[0]);
  }
  if (many != nullptr) {
    if (!many->is_array()) throw ConfigError("tasks: expected an array");
    cfg.tasks.assign(many->size(), TaskSpec{});
    for (std::size_t i = 0; i < many->size(); ++i) {
      ObjectReader::nested("tasks[" + std::to_string(i) + "]", (*many)[i], cfg.tasks[i]);
    }
  }
  r.parsed("method", [&](const std::string& s) { cfg.method = method_from_string(s); });
  r.object("train", cfg.train);
  r.object("d90", cfg.d90);
  r.value("output_dir", cfg.output_dir);
  if (const json* v = r.take("pretrain")) {
    cfg.has_pretrain = true;
    ObjectReader::nested("pretrain", *v, cfg.pretrain);
  }
  r.value("widths", cfg.widths);
  r.finish();
}

void validate(const ExperimentConfig& cfg) {
  const auto at = [](const std::string& path, auto&& check) {
    try {
      check();
    } catch (const ConfigError& e) {
      throw ConfigError(path + ": " + e.what());
    }
  };
  at("model", [&] { validate(cfg.model); });
  if (cfg.tasks.empty()) throw ConfigError("tasks: at least one task is required");
  for (std::size_t i = 0; i < cfg.tasks.size(); ++i) {
    at("tasks[" + std::to_string(i) + "]", [&] { validate(cfg.tasks[i]); });
  }
  at("train", [&] { validate(cfg.train); });
  at("d90", [&] { validate(cfg.d90); });
  if (cfg.has_pretrain) {
    at("pretrain.task", [&] { validate(cfg.pretrain.task); });
    at("pretrain.train", [&] { validate(cfg.pretrain.train); });
    for (std::size_t i = 1; i < cfg.pretrain.checkpoints.size(); ++i) {
      if (cfg.pretrain.checkpoints[i] <= cfg.pretrain.checkpoints[i - 1]) {
        throw ConfigError("pretrain.checkpoints: must be strictly increasing");
      }
    }
  }
  for (std::size_t w : cfg.widths) {
    if (w == 0) throw ConfigError("widths: entries must be positive");
  }
}

ExperimentConfig parse_experiment(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    std::size_t line = 1;
    std::size_t column = 1;
    const std::size_t end = std::min<std::size_t>(e.byte == 0 ? 0 : e.byte - 1, text.size());
    for (std::size_t i = 0; i < end; ++i) {
      if (text[i] == '\n') {
        ++line;
        column = 1;
      } else {
        ++column;
      }
    }
    throw ConfigError("malformed JSON at line " + std::to_string(line) + ", column " +
                      std::to_string(column) + ": " + type_error(e));
  }
  ExperimentConfig cfg;
  from_json(doc, cfg);
  validate(cfg);
  return cfg;
}

ExperimentConfig load_experiment(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_experiment(buf.str());
}

std::string dump_experiment(const ExperimentConfig& cfg) {
  const json j = cfg;
  return j.dump(2) + "\n";
}

PretrainProtocol pretrain_protocol(const ExperimentConfig& cfg) {
  PretrainProtocol p;
  p.model = cfg.model;
  p.model.num_classes = cfg.pretrain.task.num_classes;
  p.task = cfg.pretrain.task;
  p.train = cfg.pretrain.train;
  p.train.seed = cfg.seed;
  p.init_seed = cfg.seed;
  return p;
}

FinetuneProtocol finetune_protocol(const ExperimentConfig& cfg) {
  FinetuneProtocol f;
  f.tasks = cfg.tasks;
  f.method = cfg.method;
  f.d90 = cfg.d90;
  f.train = cfg.train;
  f.train.seed = cfg.seed;
  f.head_init_seed = cfg.model.head_init_seed;
  return f;
}

}  // namespace idim
