#include "pmcphd/plots.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "pmcphd/errors.hpp"
#include "pmcphd/scenario.hpp"

namespace pmcphd {

namespace fs = std::filesystem;

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

double to_double(const std::string& s) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{}) throw Error("csv: not a number '" + s + "'");
  return v;
}

struct Extent {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  void add(double v) {
    if (!std::isfinite(v)) return;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  bool valid() const { return lo <= hi; }
};

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

// Fixed-size canvas with a linear data-to-pixel map over [x, y] extents.
class SvgPlot {
 public:
  SvgPlot(std::string title, std::string xlabel, std::string ylabel, Extent x, Extent y)
      : title_(std::move(title)), xlabel_(std::move(xlabel)), ylabel_(std::move(ylabel)), x_(x), y_(y) {
    if (!x_.valid()) x_ = Extent{0.0, 1.0};
    if (!y_.valid()) y_ = Extent{0.0, 1.0};
  }

  void polyline(const std::vector<std::pair<double, double>>& pts, const std::string& colour, double width,
                const std::string& dash = "") {
    if (pts.empty()) return;
    body_ << "    <polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"" << width << "\"";
    if (!dash.empty()) body_ << " stroke-dasharray=\"" << dash << "\"";
    body_ << " points=\"";
    for (const auto& [x, y] : pts) body_ << px(x) << ',' << py(y) << ' ';
    body_ << "\"/>\n";
  }

  void points(const std::vector<std::pair<double, double>>& pts, const std::string& colour, double radius) {
    for (const auto& [x, y] : pts) {
      body_ << "    <circle cx=\"" << px(x) << "\" cy=\"" << py(y) << "\" r=\"" << radius << "\" fill=\"" << colour
            << "\"/>\n";
    }
  }

  void legend(const std::string& label, const std::string& colour) { legend_.emplace_back(label, colour); }

  void write(const fs::path& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write '" + path.string() + "'");
    os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
       << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
       << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\">\n"
       << "  <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
       << "  <text x=\"" << kWidth / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">"
       << title_ << "</text>\n"
       << "  <g class=\"plot-area\" data-xmin=\"" << format_number(x_.lo) << "\" data-xmax=\"" << format_number(x_.hi)
       << "\" data-ymin=\"" << format_number(y_.lo) << "\" data-ymax=\"" << format_number(y_.hi) << "\">\n"
       << "    <rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << (kWidth - kLeft - kRight)
       << "\" height=\"" << (kHeight - kTop - kBottom) << "\" fill=\"none\" stroke=\"black\"/>\n"
       << body_.str() << "  </g>\n";
    // Axis labels and tick values at the extents.
    os << "  <g font-family=\"sans-serif\" font-size=\"12\">\n"
       << "    <text x=\"" << kLeft << "\" y=\"" << (kHeight - kBottom + 16) << "\" text-anchor=\"middle\">"
       << tick(x_.lo) << "</text>\n"
       << "    <text x=\"" << (kWidth - kRight) << "\" y=\"" << (kHeight - kBottom + 16) << "\" text-anchor=\"middle\">"
       << tick(x_.hi) << "</text>\n"
       << "    <text x=\"" << (kLeft - 6) << "\" y=\"" << (kHeight - kBottom) << "\" text-anchor=\"end\">" << tick(y_.lo)
       << "</text>\n"
       << "    <text x=\"" << (kLeft - 6) << "\" y=\"" << (kTop + 4) << "\" text-anchor=\"end\">" << tick(y_.hi)
       << "</text>\n"
       << "    <text x=\"" << kWidth / 2 << "\" y=\"" << (kHeight - 12) << "\" text-anchor=\"middle\">" << xlabel_
       << "</text>\n"
       << "    <text x=\"16\" y=\"" << kHeight / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
       << kHeight / 2 << ")\">" << ylabel_ << "</text>\n";
    double ly = kTop + 16;
    for (const auto& [label, colour] : legend_) {
      os << "    <rect x=\"" << (kWidth - kRight - 150) << "\" y=\"" << (ly - 10) << "\" width=\"12\" height=\"12\" fill=\""
         << colour << "\"/>\n"
         << "    <text x=\"" << (kWidth - kRight - 132) << "\" y=\"" << ly << "\">" << label << "</text>\n";
      ly += 18;
    }
    os << "  </g>\n</svg>\n";
  }

 private:
  static constexpr double kWidth = 800;
  static constexpr double kHeight = 560;
  static constexpr double kLeft = 70;
  static constexpr double kRight = 20;
  static constexpr double kTop = 40;
  static constexpr double kBottom = 50;

  static std::string tick(double v) {
    std::ostringstream os;
    os.precision(6);
    os << v;
    return os.str();
  }

  double px(double x) const {
    const double span = x_.hi > x_.lo ? x_.hi - x_.lo : 1.0;
    return kLeft + (x - x_.lo) / span * (kWidth - kLeft - kRight);
  }
  double py(double y) const {
    const double span = y_.hi > y_.lo ? y_.hi - y_.lo : 1.0;
    return kHeight - kBottom - (y - y_.lo) / span * (kHeight - kTop - kBottom);
  }

  std::string title_, xlabel_, ylabel_;
  Extent x_, y_;
  std::ostringstream body_;
  std::vector<std::pair<std::string, std::string>> legend_;
};

int require_column(const CsvTable& t, const std::string& name, const std::string& file) {
  const int c = t.column(name);
  if (c < 0) throw Error(file + ": missing column '" + name + "'");
  return c;
}

// Per-step mean of one metrics column over all runs present.
std::map<int, double> step_means(const CsvTable& t, int column, int step_col) {
  std::map<int, std::pair<double, int>> acc;
  for (const auto& row : t.rows) {
    auto& a = acc[static_cast<int>(to_double(row[static_cast<std::size_t>(step_col)]))];
    a.first += to_double(row[static_cast<std::size_t>(column)]);
    a.second += 1;
  }
  std::map<int, double> out;
  for (const auto& [k, a] : acc) out[k] = a.first / a.second;
  return out;
}

}  // namespace

int CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return static_cast<int>(i);
  }
  return -1;
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read '" + path + "'");
  CsvTable t;
  std::string line;
  if (std::getline(in, line)) t.header = split(line);
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    auto row = split(line);
    if (row.size() != t.header.size()) throw Error(path + ": row has " + std::to_string(row.size()) + " fields");
    t.rows.push_back(std::move(row));
  }
  return t;
}

std::vector<std::string> emit_plots(const std::string& output_dir) {
  const fs::path dir(output_dir);
  std::vector<std::string> filters;
  std::error_code ec;
  if (fs::is_directory(dir, ec)) {
    for (const auto& entry : fs::directory_iterator(dir)) {
      const std::string name = entry.path().filename().string();
      if (name.rfind("metrics_", 0) == 0 && entry.path().extension() == ".csv") {
        filters.push_back(name.substr(8, name.size() - 12));
      }
    }
  }
  std::sort(filters.begin(), filters.end());
  std::vector<std::string> missing;
  for (const char* f : {"truth.csv", "meas.csv"}) {
    if (!fs::exists(dir / f)) missing.push_back((dir / f).string());
  }
  if (filters.empty()) missing.push_back((dir / "metrics_<filter>.csv").string());
  for (const auto& f : filters) {
    if (!fs::exists(dir / ("estimates_" + f + ".csv"))) missing.push_back((dir / ("estimates_" + f + ".csv")).string());
  }
  if (!missing.empty()) {
    std::string msg = "emit_plots: missing input files:";
    for (const auto& m : missing) msg += " " + m;
    throw IoError(msg);
  }

  const CsvTable truth = read_csv((dir / "truth.csv").string());
  const CsvTable meas = read_csv((dir / "meas.csv").string());
  std::map<std::string, CsvTable> metrics;
  std::map<std::string, CsvTable> estimates;
  for (const auto& f : filters) {
    metrics[f] = read_csv((dir / ("metrics_" + f + ".csv")).string());
    estimates[f] = read_csv((dir / ("estimates_" + f + ".csv")).string());
    if (metrics[f].rows.empty()) throw Error("emit_plots: metrics_" + f + ".csv has no rows");
  }

  std::vector<std::string> written;

  // Trajectories of run 0.
  {
    const int run_t = require_column(truth, "run", "truth.csv");
    const int tgt = require_column(truth, "target", "truth.csv");
    const int tpx = truth.column("px") >= 0 ? truth.column("px") : 3;
    const int tpy = truth.column("py") >= 0 ? truth.column("py") : 4;
    const int run_m = require_column(meas, "run", "meas.csv");
    const int mzx = meas.column("zx") >= 0 ? meas.column("zx") : 2;
    const int mzy = meas.column("zy") >= 0 ? meas.column("zy") : 3;
    Extent ex, ey;
    std::map<int, std::vector<std::pair<double, double>>> tracks;
    for (const auto& r : truth.rows) {
      if (to_double(r[static_cast<std::size_t>(run_t)]) != 0.0) continue;
      const double x = to_double(r[static_cast<std::size_t>(tpx)]);
      const double y = to_double(r[static_cast<std::size_t>(tpy)]);
      tracks[static_cast<int>(to_double(r[static_cast<std::size_t>(tgt)]))].emplace_back(x, y);
      ex.add(x);
      ey.add(y);
    }
    std::vector<std::pair<double, double>> zs;
    for (const auto& r : meas.rows) {
      if (to_double(r[static_cast<std::size_t>(run_m)]) != 0.0) continue;
      zs.emplace_back(to_double(r[static_cast<std::size_t>(mzx)]), to_double(r[static_cast<std::size_t>(mzy)]));
      ex.add(zs.back().first);
      ey.add(zs.back().second);
    }
    std::map<std::string, std::vector<std::pair<double, double>>> est_pts;
    for (const auto& f : filters) {
      const CsvTable& e = estimates[f];
      const int er = require_column(e, "run", "estimates_" + f + ".csv");
      const int epx = require_column(e, "px", "estimates_" + f + ".csv");
      const int epy = require_column(e, "py", "estimates_" + f + ".csv");
      for (const auto& r : e.rows) {
        if (to_double(r[static_cast<std::size_t>(er)]) != 0.0) continue;
        est_pts[f].emplace_back(to_double(r[static_cast<std::size_t>(epx)]), to_double(r[static_cast<std::size_t>(epy)]));
        ex.add(est_pts[f].back().first);
        ey.add(est_pts[f].back().second);
      }
    }
    SvgPlot plot("Target trajectories, measurements and estimates (run 0)", "x position", "y position", ex, ey);
    plot.points(zs, "#bbbbbb", 1.5);
    plot.legend("measurements", "#bbbbbb");
    for (const auto& [id, pts] : tracks) plot.polyline(pts, "black", 1.5);
    plot.legend("truth", "black");
    std::size_t ci = 0;
    for (const auto& f : filters) {
      const char* colour = kPalette[ci++ % 6];
      plot.points(est_pts[f], colour, 2.5);
      plot.legend("estimates " + f, colour);
    }
    plot.write(dir / "trajectories.svg");
    written.push_back((dir / "trajectories.svg").string());
  }

  // Cardinality and OSPA per step.
  std::map<int, int> truth_count;
  {
    const int run_t = require_column(truth, "run", "truth.csv");
    const int st = require_column(truth, "step", "truth.csv");
    for (const auto& r : truth.rows) {
      if (to_double(r[static_cast<std::size_t>(run_t)]) != 0.0) continue;
      ++truth_count[static_cast<int>(to_double(r[static_cast<std::size_t>(st)]))];
    }
  }
  for (const std::string which : {"nhat", "ospa"}) {
    Extent ex, ey;
    std::map<std::string, std::map<int, double>> series;
    for (const auto& f : filters) {
      const CsvTable& t = metrics[f];
      const int sc = require_column(t, "step", "metrics_" + f + ".csv");
      const int vc = require_column(t, which, "metrics_" + f + ".csv");
      series[f] = step_means(t, vc, sc);
      for (const auto& [k, v] : series[f]) {
        ex.add(k);
        ey.add(v);
      }
    }
    if (which == "nhat") {
      for (const auto& [k, n] : truth_count) {
        ex.add(k);
        ey.add(n);
      }
    }
    const bool card = which == "nhat";
    SvgPlot plot(card ? "Mean cardinality estimate per step" : "Mean OSPA distance per step", "time step",
                 card ? "estimated number of targets" : "OSPA", ex, ey);
    if (card) {
      std::vector<std::pair<double, double>> stairs;
      for (const auto& [k, n] : truth_count) {
        if (!stairs.empty()) stairs.emplace_back(k, stairs.back().second);
        stairs.emplace_back(k, n);
      }
      plot.polyline(stairs, "black", 1.5, "6,4");
      plot.legend("true count", "black");
    }
    std::size_t ci = 0;
    for (const auto& f : filters) {
      std::vector<std::pair<double, double>> pts(series[f].begin(), series[f].end());
      const char* colour = kPalette[ci++ % 6];
      plot.polyline(pts, colour, 2.0);
      plot.legend(f, colour);
    }
    const fs::path out = dir / (card ? "cardinality.svg" : "ospa.svg");
    plot.write(out);
    written.push_back(out.string());
  }
  return written;
}

}  // namespace pmcphd
