// SPDX-License-Identifier: Apache-2.0

#include "output.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "idim/error.hpp"

namespace idim::cli {

std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        out.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        out.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.emplace_back();
    } else {
      out.back() += c;
    }
  }
  return out;
}

template <typename T>
T parse_field(const std::string& s, std::size_t line, const char* column) {
  std::istringstream in(s);
  T v{};
  in >> v;
  if (s.empty() || !in || !in.eof()) {
    throw FormatError("results line " + std::to_string(line) + ": bad " + column + " '" + s + "'");
  }
  return v;
}

}  // namespace

std::string csv_row(const RunRecord& run, const std::string& model) {
  std::ostringstream out;
  out << csv_field(run.task) << ',' << csv_field(model.empty() ? run.model : model) << ','
      << to_string(run.method) << ',' << run.d << ',' << format_number(run.lr) << ',' << run.seed
      << ',' << run.steps << ',' << format_number(run.train_acc) << ','
      << format_number(run.eval_acc) << ',' << format_number(run.full_eval_acc) << ','
      << format_number(run.threshold) << ',' << (run.passed ? 1 : 0);
  return out.str();
}

void write_atomic(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw FormatError("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::optional<std::size_t> parse_model_D(const std::string& label) {
  const auto pos = label.find("D=");
  if (pos == std::string::npos) return std::nullopt;
  std::size_t end = pos + 2;
  while (end < label.size() && std::isdigit(static_cast<unsigned char>(label[end]))) ++end;
  if (end == pos + 2) return std::nullopt;
  return std::stoull(label.substr(pos + 2, end - pos - 2));
}

std::vector<CsvRecord> parse_results_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw FormatError("results file is empty (no header)");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kCsvHeader) throw FormatError("results header does not match the expected schema");
  std::vector<CsvRecord> rows;
  std::size_t number = 1;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 12) {
      throw FormatError("results line " + std::to_string(number) + ": expected 12 fields, got " +
                        std::to_string(f.size()));
    }
    CsvRecord r;
    r.task = f[0];
    r.model = f[1];
    r.method = f[2];
    if (r.method != "did" && r.method != "said" && r.method != "full") {
      throw FormatError("results line " + std::to_string(number) + ": bad method '" + r.method + "'");
    }
    r.d = parse_field<std::size_t>(f[3], number, "d");
    r.lr = parse_field<double>(f[4], number, "lr");
    r.seed = parse_field<std::uint64_t>(f[5], number, "seed");
    r.steps = parse_field<std::size_t>(f[6], number, "steps");
    r.train_acc = parse_field<double>(f[7], number, "train_acc");
    r.eval_acc = parse_field<double>(f[8], number, "eval_acc");
    r.full_eval_acc = parse_field<double>(f[9], number, "full_eval_acc");
    r.threshold = parse_field<double>(f[10], number, "threshold");
    if (f[11] != "0" && f[11] != "1") {
      throw FormatError("results line " + std::to_string(number) + ": bad passed '" + f[11] + "'");
    }
    r.passed = f[11] == "1";
    rows.push_back(std::move(r));
  }
  return rows;
}

std::string render_report(const std::vector<CsvRecord>& rows, bool reference_rows) {
  struct Group {
    std::string task, model, method;
    std::optional<std::size_t> d90;
  };
  std::vector<Group> groups;
  std::map<std::string, std::size_t> index;
  for (const CsvRecord& r : rows) {
    if (r.method == "full") continue;
    const std::string key = r.task + '\n' + r.model + '\n' + r.method;
    auto [it, fresh] = index.emplace(key, groups.size());
    if (fresh) groups.push_back({r.task, r.model, r.method, std::nullopt});
    Group& g = groups[it->second];
    if (r.passed && (!g.d90 || r.d < *g.d90)) g.d90 = r.d;
  }

  std::ostringstream out;
  out << "| source | model | task | method | d90 | d90/D |\n";
  out << "|---|---|---|---|---|---|\n";
  for (const Group& g : groups) {
    std::string ratio = "-";
    const auto D = parse_model_D(g.model);
    if (g.d90 && D && *D > 0) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%#.4g", static_cast<double>(*g.d90) / static_cast<double>(*D));
      ratio = buf;
    }
    out << "| measured | " << g.model << " | " << g.task << " | " << g.method << " | "
        << (g.d90 ? std::to_string(*g.d90) : std::string("not found")) << " | " << ratio << " |\n";
  }
  if (reference_rows) {
    for (const ReferenceRow& r : kReferenceTable) {
      out << "| reference (published, not reproduced here) | " << r.model << " | " << r.task
          << " | " << r.method << " | " << r.d90 << " | - |\n";
    }
  }
  return out.str();
}

namespace {

constexpr double kWidth = 720.0;
constexpr double kHeight = 440.0;
constexpr double kLeft = 70.0;
constexpr double kRight = 180.0;
constexpr double kTop = 40.0;
constexpr double kBottom = 60.0;
constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                    "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

struct Axis {
  bool log = false;
  double lo = 0.0;
  double hi = 1.0;

  double map(double v) const { return log ? std::log10(v) : v; }
  double frac(double v) const { return hi > lo ? (map(v) - lo) / (hi - lo) : 0.5; }

  std::vector<double> ticks() const {
    std::vector<double> out;
    if (log) {
      for (double e = std::floor(lo); e <= std::ceil(hi); e += 1.0) {
        if (e >= lo - 1e-9 && e <= hi + 1e-9) out.push_back(std::pow(10.0, e));
      }
      if (out.size() < 2) out = {std::pow(10.0, lo), std::pow(10.0, hi)};
    } else {
      for (int i = 0; i <= 4; ++i) out.push_back(lo + (hi - lo) * i / 4.0);
    }
    return out;
  }
};

Axis make_axis(bool log, std::vector<double> values) {
  Axis a;
  a.log = log;
  std::vector<double> mapped;
  for (double v : values) {
    if (!std::isfinite(v) || (log && v <= 0.0)) continue;
    mapped.push_back(a.map(v));
  }
  if (mapped.empty()) return a;
  a.lo = *std::min_element(mapped.begin(), mapped.end());
  a.hi = *std::max_element(mapped.begin(), mapped.end());
  if (a.hi - a.lo < 1e-12) {
    a.lo -= log ? 0.5 : 0.5;
    a.hi += log ? 0.5 : 0.5;
  }
  return a;
}

}  // namespace

std::string render_svg(const Chart& chart) {
  std::vector<double> xs, ys;
  for (const Series& s : chart.series) {
    for (const auto& [x, y] : s.points) {
      xs.push_back(x);
      ys.push_back(y);
    }
  }
  for (const auto& h : chart.hlines) ys.push_back(h.second);
  const Axis ax = make_axis(chart.log_x, xs);
  const Axis ay = make_axis(chart.log_y, ys);
  const double pw = kWidth - kLeft - kRight;
  const double ph = kHeight - kTop - kBottom;
  const auto px = [&](double x) { return kLeft + ax.frac(x) * pw; };
  const auto py = [&](double y) { return kTop + (1.0 - ay.frac(y)) * ph; };
  const auto num = [](double v) { return format_number(std::round(v * 100.0) / 100.0); };
  const auto usable = [&](double x, double y) {
    return std::isfinite(x) && std::isfinite(y) && (!chart.log_x || x > 0) && (!chart.log_y || y > 0);
  };

  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
      << kHeight << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
      << xml_escape(chart.title) << "</text>\n";
  out << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << pw << "\" height=\"" << ph
      << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (double t : ax.ticks()) {
    out << "<line x1=\"" << num(px(t)) << "\" y1=\"" << kTop + ph << "\" x2=\"" << num(px(t))
        << "\" y2=\"" << kTop + ph + 5 << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << num(px(t)) << "\" y=\"" << kTop + ph + 18
        << "\" text-anchor=\"middle\">" << format_number(std::round(t * 1000.0) / 1000.0)
        << "</text>\n";
  }
  for (double t : ay.ticks()) {
    out << "<line x1=\"" << kLeft - 5 << "\" y1=\"" << num(py(t)) << "\" x2=\"" << kLeft
        << "\" y2=\"" << num(py(t)) << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << kLeft - 8 << "\" y=\"" << num(py(t) + 4)
        << "\" text-anchor=\"end\">" << format_number(std::round(t * 1000.0) / 1000.0)
        << "</text>\n";
  }
  out << "<text x=\"" << kLeft + pw / 2 << "\" y=\"" << kHeight - 15
      << "\" text-anchor=\"middle\">" << xml_escape(chart.x_label) << "</text>\n";
  out << "<text transform=\"translate(18," << kTop + ph / 2
      << ") rotate(-90)\" text-anchor=\"middle\">" << xml_escape(chart.y_label) << "</text>\n";
  for (const auto& [label, y] : chart.hlines) {
    out << "<line x1=\"" << kLeft << "\" y1=\"" << num(py(y)) << "\" x2=\"" << kLeft + pw
        << "\" y2=\"" << num(py(y)) << "\" stroke=\"gray\" stroke-dasharray=\"4 3\"/>\n";
    out << "<text x=\"" << kLeft + pw + 4 << "\" y=\"" << num(py(y) + 4) << "\" fill=\"gray\">"
        << xml_escape(label) << "</text>\n";
  }
  for (std::size_t i = 0; i < chart.series.size(); ++i) {
    const Series& s = chart.series[i];
    const char* color = kPalette[i % std::size(kPalette)];
    std::string pts;
    for (const auto& [x, y] : s.points) {
      if (!usable(x, y)) continue;
      pts += num(px(x)) + "," + num(py(y)) + " ";
    }
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"" << pts
        << "\"/>\n";
    for (const auto& [x, y] : s.points) {
      if (!usable(x, y)) continue;
      out << "<circle cx=\"" << num(px(x)) << "\" cy=\"" << num(py(y)) << "\" r=\"3\" fill=\""
          << color << "\"/>\n";
    }
    const double ly = kTop + 20.0 + 18.0 * static_cast<double>(i);
    out << "<line x1=\"" << kLeft + pw + 10 << "\" y1=\"" << ly << "\" x2=\"" << kLeft + pw + 30
        << "\" y2=\"" << ly << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    out << "<text x=\"" << kLeft + pw + 35 << "\" y=\"" << ly + 4 << "\">" << xml_escape(s.name)
        << "</text>\n";
  }
  out << "</svg>\n";
  return out.str();
}

}  // namespace idim::cli
