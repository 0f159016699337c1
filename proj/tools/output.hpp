// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "idim/subspace.hpp"

namespace idim::cli {

inline constexpr const char* kCsvHeader =
    "task,model,method,d,lr,seed,steps,train_acc,eval_acc,full_eval_acc,threshold,passed";

// Shortest round-trip-safe rendering used in CSV cells.
std::string format_number(double v);

// One CSV line (no newline). `model` overrides run.model when non-empty.
std::string csv_row(const RunRecord& run, const std::string& model = "");

// Writes to a sibling temp file, then renames over `path`.
void write_atomic(const std::filesystem::path& path, const std::string& content);

struct Series {
  std::string name;
  std::vector<std::pair<double, double>> points;
};

struct Chart {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_x = false;
  bool log_y = false;
  std::vector<Series> series;
  std::vector<std::pair<std::string, double>> hlines;
};

std::string render_svg(const Chart& chart);

struct CsvRecord {
  std::string task;
  std::string model;
  std::string method;
  std::size_t d = 0;
  double lr = 0.0;
  std::uint64_t seed = 0;
  std::size_t steps = 0;
  double train_acc = 0.0;
  double eval_acc = 0.0;
  double full_eval_acc = 0.0;
  double threshold = 0.0;
  bool passed = false;
};

// Throws FormatError on a header or field that does not match the schema.
std::vector<CsvRecord> parse_results_csv(const std::string& text);

// D encoded in a model label such as "mlp[D=1522]"; nullopt if absent.
std::optional<std::size_t> parse_model_D(const std::string& label);

struct ReferenceRow {
  const char* model;
  const char* task;
  const char* method;
  std::size_t d90;
};

// Published d90 estimates for full-scale pretrained transformers.
inline constexpr ReferenceRow kReferenceTable[] = {
    {"BERT-Base", "MRPC", "SAID", 1608},     {"BERT-Base", "QQP", "SAID", 8030},
    {"BERT-Base", "MRPC", "DID", 1861},      {"BERT-Base", "QQP", "DID", 9295},
    {"BERT-Large", "MRPC", "SAID", 1037},    {"BERT-Large", "QQP", "SAID", 1200},
    {"BERT-Large", "MRPC", "DID", 2493},     {"BERT-Large", "QQP", "DID", 1389},
    {"RoBERTa-Base", "MRPC", "SAID", 896},   {"RoBERTa-Base", "QQP", "SAID", 896},
    {"RoBERTa-Base", "MRPC", "DID", 1000},   {"RoBERTa-Base", "QQP", "DID", 1389},
    {"RoBERTa-Large", "MRPC", "SAID", 207},  {"RoBERTa-Large", "QQP", "SAID", 774},
    {"RoBERTa-Large", "MRPC", "DID", 322},   {"RoBERTa-Large", "QQP", "DID", 774},
};

// Markdown table of measured d90 (smallest passing d per task/model/method)
// with d90/D to 4 significant digits, followed by the reference rows when
// requested.
std::string render_report(const std::vector<CsvRecord>& rows, bool reference_rows);

}  // namespace idim::cli
