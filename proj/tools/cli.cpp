// SPDX-License-Identifier: Apache-2.0

#include "cli.hpp"

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "idim/checkpoint.hpp"
#include "idim/config.hpp"
#include "idim/error.hpp"
#include "idim/fwht.hpp"
#include "idim/measure.hpp"
#include "idim/rng.hpp"
#include "output.hpp"

namespace idim::cli {

namespace {

using nlohmann::json;

struct Options {
  std::string config;
  bool exhaustive = false;
  std::size_t threads = 1;
  bool plot = false;
  std::size_t d = 0;
  std::vector<std::size_t> sizes;
  std::size_t reps = 20;
  std::string in;
  std::string out;
  bool paper_table = false;
};

struct Outputs {
  std::string csv;
  json summary;
  std::vector<std::pair<std::string, std::string>> charts;  // file name, svg
};

std::filesystem::path output_dir(const ExperimentConfig& cfg) {
  if (!cfg.output_dir.empty()) return cfg.output_dir;
  if (const char* env = std::getenv("IDIM_OUTPUT_DIR"); env != nullptr && *env != '\0') return env;
  return "results";
}

ExperimentConfig load(const Options& opt) {
  ExperimentConfig cfg = load_experiment(opt.config);
  if (opt.exhaustive) cfg.d90.search = SearchMode::kExhaustive;
  return cfg;
}

ParameterVector initial_body(const ExperimentConfig& cfg) {
  if (!cfg.has_pretrain || cfg.pretrain.steps == 0) return init_params(cfg.model, cfg.seed);
  const PretrainProtocol p = pretrain_protocol(cfg);
  const std::size_t steps[] = {cfg.pretrain.steps};
  return pretrain(p.model, init_params(p.model, p.init_seed), generate(p.task), p.train, steps)
      .front();
}

Dataset dataset_for(const TaskSpec& task) {
  return task.kind == TaskKind::kTsv ? load_tsv(task.tsv) : generate(task);
}

json optional_size(const std::optional<std::size_t>& v) { return v ? json(*v) : json(nullptr); }

json optional_double(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::string cell_model(const SweepCell& c, Arch arch, bool with_step) {
  std::string label = to_string(arch) + "[D=" + std::to_string(c.D) + "]";
  if (with_step) label += "@step=" + std::to_string(c.step);
  return label;
}

json cell_json(const SweepCell& c, std::size_t m_samples) {
  json j{{"task", c.task},
         {"D", c.D},
         {"d90", optional_size(c.d90)},
         {"full_eval_acc", c.full_metric},
         {"threshold", c.threshold},
         {"monotonicity_violation", c.result.monotonicity_violation}};
  if (c.d90) {
    j["d90_over_D"] = static_cast<double>(*c.d90) / static_cast<double>(c.D);
    j["d90_train_acc"] = c.d90_train_acc;
    j["d90_eval_acc"] = c.d90_eval_acc;
    j["relative_gap"] =
        c.d90_eval_acc < 1.0 ? json(relative_gap(c.d90_train_acc, c.d90_eval_acc)) : json(nullptr);
    j["bound"] = generalization_bound(*c.d90, m_samples, 1.0 - c.d90_train_acc);
  }
  if (!c.error.empty()) j["error"] = c.error;
  return j;
}

void append_rows(std::string& csv, const D90Result& r, const std::string& model) {
  for (const RunRecord& run : r.full_runs) csv += csv_row(run, model) + "\n";
  for (const RunRecord& run : r.trials) csv += csv_row(run, model) + "\n";
}

Chart d_vs_metric_chart(const std::vector<std::pair<std::string, const D90Result*>>& results) {
  Chart chart{"eval accuracy vs subspace dimension", "d", "eval accuracy", true, false, {}, {}};
  for (const auto& [name, r] : results) {
    std::map<std::size_t, double> best;
    for (const RunRecord& t : r->trials) best[t.d] = std::max(best[t.d], t.eval_acc);
    Series s{name, {}};
    for (const auto& [d, acc] : best) s.points.emplace_back(static_cast<double>(d), acc);
    chart.series.push_back(std::move(s));
    chart.hlines.emplace_back("90% " + name, r->threshold);
  }
  return chart;
}

Outputs cmd_train(const Options& opt, const ExperimentConfig& cfg) {
  if (cfg.method != Method::kFull && opt.d == 0) throw ConfigError("train needs --d for did/said");
  const ParameterVector body = initial_body(cfg);
  Outputs o;
  o.csv = std::string(kCsvHeader) + "\n";
  json runs = json::array();
  for (const TaskSpec& task : cfg.tasks) {
    const ModelSpec spec = downstream_spec(cfg.model, task, cfg.model.head_init_seed);
    const ParameterVector theta0 = attach_head(spec, body);
    const Dataset data = dataset_for(task);
    TrainConfig train = cfg.train;
    train.seed = cfg.seed;
    const RunRecord r = cfg.method == Method::kFull
                            ? train_full(spec, theta0, data, train)
                            : train_subspace(spec, theta0, data, cfg.method, opt.d, train);
    if (r.failed) throw NumericError("run on task '" + task.name + "' diverged: " + r.failure);
    o.csv += csv_row(r) + "\n";
    json j{{"task", r.task},           {"model", r.model},         {"method", to_string(r.method)},
           {"d", r.d},                 {"D", r.D},                 {"best_step", r.best_step},
           {"train_acc", r.train_acc}, {"eval_acc", r.eval_acc}};
    if (r.method != Method::kFull) {
      const TaskEncoding enc = encode_task(r);
      const std::string name = "encoding_" + task.name + ".idte";
      std::filesystem::create_directories(output_dir(cfg));
      save_task_encoding(output_dir(cfg) / name, enc);
      j["encoding"] = name;
      j["encoding_bytes"] = std::filesystem::file_size(output_dir(cfg) / name);
    }
    runs.push_back(std::move(j));
  }
  o.summary = json{{"command", "train"}, {"config", cfg}, {"runs", runs}};
  return o;
}

Outputs cmd_d90(const Options& opt, const ExperimentConfig& cfg) {
  if (cfg.method == Method::kFull) throw ConfigError("d90 needs method did or said");
  const ParameterVector body = initial_body(cfg);
  Outputs o;
  o.csv = std::string(kCsvHeader) + "\n";
  json results = json::array();
  std::vector<D90Result> all;
  all.reserve(cfg.tasks.size());
  for (const TaskSpec& task : cfg.tasks) {
    const ModelSpec spec = downstream_spec(cfg.model, task, cfg.model.head_init_seed);
    const ParameterVector theta0 = attach_head(spec, body);
    const Dataset data = dataset_for(task);
    TrainConfig train = cfg.train;
    train.seed = cfg.seed;
    all.push_back(find_d90(spec, theta0, data, cfg.method, cfg.d90, train, opt.threads));
    const D90Result& r = all.back();
    append_rows(o.csv, r, model_label(spec));
    SweepCell cell;
    cell.task = task.name;
    cell.D = r.D;
    cell.d90 = r.d90;
    cell.full_metric = r.full_metric;
    cell.threshold = r.threshold;
    cell.result = r;
    for (const RunRecord& t : r.trials) {
      if (r.d90 && t.d == *r.d90 && t.eval_acc > cell.d90_eval_acc) {
        cell.d90_eval_acc = t.eval_acc;
        cell.d90_train_acc = t.train_acc;
      }
    }
    json j = cell_json(cell, data.train.size);
    j["model"] = model_label(spec);
    j["method"] = to_string(cfg.method);
    j["full_train_acc"] = r.full_train_metric;
    j["trials"] = r.trials.size();
    results.push_back(std::move(j));
  }
  o.summary = json{{"command", "d90"}, {"config", cfg}, {"results", results}};
  if (opt.plot) {
    std::vector<std::pair<std::string, const D90Result*>> series;
    for (std::size_t i = 0; i < all.size(); ++i) series.emplace_back(cfg.tasks[i].name, &all[i]);
    o.charts.emplace_back("d90.svg", render_svg(d_vs_metric_chart(series)));
  }
  return o;
}

json trend_json(const std::vector<SweepCell>& cells) {
  std::vector<double> d90, acc, gap;
  for (const SweepCell& c : cells) {
    if (!c.d90 || c.d90_eval_acc >= 1.0) continue;
    d90.push_back(static_cast<double>(*c.d90));
    acc.push_back(c.d90_eval_acc);
    gap.push_back(relative_gap(c.d90_train_acc, c.d90_eval_acc));
  }
  return json{{"cells_used", d90.size()},
              {"spearman_d90_eval_acc", optional_double(spearman(d90, acc))},
              {"spearman_d90_relative_gap", optional_double(spearman(d90, gap))}};
}

Outputs cmd_trajectory(const Options& opt, const ExperimentConfig& cfg) {
  if (!cfg.has_pretrain || cfg.pretrain.checkpoints.empty()) {
    throw ConfigError("trajectory needs pretrain.checkpoints");
  }
  if (cfg.method == Method::kFull) throw ConfigError("trajectory needs method did or said");
  const TrajectoryResult res =
      trajectory(pretrain_protocol(cfg), cfg.pretrain.checkpoints, finetune_protocol(cfg),
                 opt.threads, output_dir(cfg) / "checkpoints");
  Outputs o;
  o.csv = std::string(kCsvHeader) + "\n";
  json cells = json::array();
  for (const SweepCell& c : res.cells) {
    append_rows(o.csv, c.result, cell_model(c, cfg.model.arch, true));
    json j = cell_json(c, cfg.tasks.front().num_train);
    j["step"] = c.step;
    cells.push_back(std::move(j));
  }
  o.summary = json{{"command", "trajectory"},
                   {"config", cfg},
                   {"cells", cells},
                   {"trends", trend_json(res.cells)}};
  if (opt.plot) {
    Chart chart{"d90 vs pretraining step", "pretraining step", "d90", false, true, {}, {}};
    for (const TaskSpec& t : cfg.tasks) {
      Series s{t.name, {}};
      for (const SweepCell& c : res.cells) {
        if (c.task == t.name && c.d90) s.points.emplace_back(c.step, static_cast<double>(*c.d90));
      }
      chart.series.push_back(std::move(s));
    }
    o.charts.emplace_back("trajectory.svg", render_svg(chart));
  }
  return o;
}

Outputs cmd_widths(const Options& opt, const ExperimentConfig& cfg) {
  if (cfg.widths.empty()) throw ConfigError("widths needs a non-empty widths list");
  if (cfg.method == Method::kFull) throw ConfigError("widths needs method did or said");
  PretrainProtocol pre = pretrain_protocol(cfg);
  const std::size_t steps = cfg.has_pretrain ? cfg.pretrain.steps : 0;
  if (!cfg.has_pretrain) pre.model.num_classes = cfg.model.num_classes;
  const WidthSweepResult res =
      width_sweep(pre, cfg.widths, steps, finetune_protocol(cfg), opt.threads);
  Outputs o;
  o.csv = std::string(kCsvHeader) + "\n";
  json cells = json::array();
  std::vector<double> Ds, d90s;
  for (const SweepCell& c : res.cells) {
    append_rows(o.csv, c.result, cell_model(c, cfg.model.arch, false));
    json j = cell_json(c, cfg.tasks.front().num_train);
    j["width"] = c.width;
    cells.push_back(std::move(j));
    if (c.d90) {
      Ds.push_back(static_cast<double>(c.D));
      d90s.push_back(static_cast<double>(*c.d90));
    }
  }
  json trends = trend_json(res.cells);
  trends["spearman_D_d90"] = optional_double(spearman(Ds, d90s));
  o.summary = json{{"command", "widths"}, {"config", cfg}, {"cells", cells}, {"trends", trends}};
  if (opt.plot) {
    Chart chart{"d90 vs number of parameters", "D", "d90", true, true, {}, {}};
    for (const TaskSpec& t : cfg.tasks) {
      Series s{t.name, {}};
      for (const SweepCell& c : res.cells) {
        if (c.task == t.name && c.d90) {
          s.points.emplace_back(static_cast<double>(c.D), static_cast<double>(*c.d90));
        }
      }
      chart.series.push_back(std::move(s));
    }
    o.charts.emplace_back("widths.svg", render_svg(chart));
  }
  return o;
}

int run_experiment(const std::string& name, const Options& opt, std::ostream& out,
                   Outputs (*command)(const Options&, const ExperimentConfig&)) {
  const ExperimentConfig cfg = load(opt);
  const Outputs o = command(opt, cfg);
  const std::filesystem::path dir = output_dir(cfg);
  // Summaries first: the CSV appearing marks a finished run.
  write_atomic(dir / (name + "_summary.json"), o.summary.dump(2) + "\n");
  for (const auto& [file, svg] : o.charts) write_atomic(dir / file, svg);
  write_atomic(dir / (name + ".csv"), o.csv);
  out << "wrote " << (dir / (name + ".csv")).string() << "\n";
  return kExitOk;
}

int cmd_fwht_bench(const Options& opt, std::ostream& out) {
  std::vector<std::size_t> sizes = opt.sizes;
  if (sizes.empty()) {
    for (std::size_t n = std::size_t{1} << 10; n <= (std::size_t{1} << 20); n <<= 1) sizes.push_back(n);
  }
  for (std::size_t n : sizes) {
    if (!is_power_of_two(n)) {
      throw ConfigError("--size " + std::to_string(n) + " is not a power of two");
    }
  }
  if (opt.reps == 0) throw ConfigError("--reps must be >= 1");
  out << "size,ns_per_transform,ratio_to_previous\n";
  double prev = 0.0;
  for (std::size_t n : sizes) {
    Rng rng(n);
    std::vector<double> x(n);
    for (double& v : x) v = rng.uniform() - 0.5;
    fwht_inplace(x);
    const auto t0 = std::chrono::steady_clock::now();
    for (std::size_t r = 0; r < opt.reps; ++r) fwht_inplace(x);
    const auto t1 = std::chrono::steady_clock::now();
    const double ns =
        std::chrono::duration<double, std::nano>(t1 - t0).count() / static_cast<double>(opt.reps);
    out << n << ',' << format_number(ns) << ',';
    if (prev > 0.0) {
      out << format_number(ns / prev);
    } else {
      out << '-';
    }
    out << '\n';
    prev = ns;
  }
  return kExitOk;
}

int cmd_report(const Options& opt, std::ostream& out) {
  std::string text;
  if (!opt.in.empty()) {
    std::ifstream in(opt.in, std::ios::binary);
    if (!in) throw FormatError("cannot open results file '" + opt.in + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    text = buf.str();
  } else if (!opt.paper_table) {
    throw ConfigError("report needs --in and/or --paper-table");
  }
  const auto rows = text.empty() ? std::vector<CsvRecord>{} : parse_results_csv(text);
  const std::string table = render_report(rows, opt.paper_table);
  if (!opt.out.empty()) write_atomic(opt.out, table);
  out << table;
  return kExitOk;
}

int exit_code_for(const Error& e) {
  const std::string& k = e.kind();
  if (k == "baseline-degenerate" || k == "numeric" || k == "undefined-gap") return kExitFailure;
  return kExitUsage;
}

std::string one_line(std::string s) {
  for (char& c : s) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  return s;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Intrinsic-dimension measurement with Fastfood subspace training", "idim"};
  app.require_subcommand(1);
  Options opt;

  auto add_experiment = [&](const char* name, const char* help) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", opt.config, "experiment JSON")->required();
    sub->add_flag("--exhaustive", opt.exhaustive, "probe every grid point");
    sub->add_option("--threads", opt.threads, "worker threads")->check(CLI::PositiveNumber);
    sub->add_flag("--plot", opt.plot, "also write SVG charts");
    return sub;
  };
  CLI::App* train = add_experiment("train", "train one run per task");
  train->add_option("--d", opt.d, "subspace budget for did/said");
  CLI::App* d90 = add_experiment("d90", "search d90 per task");
  CLI::App* traj = add_experiment("trajectory", "d90 across pretraining checkpoints");
  CLI::App* widths = add_experiment("widths", "d90 across model widths");

  CLI::App* bench = app.add_subcommand("fwht-bench", "time the fast Walsh-Hadamard transform");
  bench->add_option("--size", opt.sizes, "transform length(s); powers of two");
  bench->add_option("--reps", opt.reps, "repetitions per size");

  CLI::App* report = app.add_subcommand("report", "tabulate d90 from a results CSV");
  report->add_option("--in", opt.in, "results CSV");
  report->add_flag("--paper-table", opt.paper_table, "append published reference rows");
  report->add_option("--out", opt.out, "also write the table here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "idim: error[usage]: " << one_line(e.what()) << "\n";
    return kExitUsage;
  }

  try {
    if (*train) return run_experiment("train", opt, out, cmd_train);
    if (*d90) return run_experiment("d90", opt, out, cmd_d90);
    if (*traj) return run_experiment("trajectory", opt, out, cmd_trajectory);
    if (*widths) return run_experiment("widths", opt, out, cmd_widths);
    if (*bench) return cmd_fwht_bench(opt, out);
    if (*report) return cmd_report(opt, out);
  } catch (const Error& e) {
    err << "idim: error[" << e.kind() << "]: " << one_line(e.what()) << "\n";
    return exit_code_for(e);
  } catch (const std::filesystem::filesystem_error& e) {
    err << "idim: error[io]: " << one_line(e.what()) << "\n";
    return kExitFailure;
  } catch (const std::exception& e) {
    err << "idim: error[internal]: " << one_line(e.what()) << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace idim::cli
