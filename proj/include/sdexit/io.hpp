#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "sdexit/learn.hpp"
#include "sdexit/oracle.hpp"
#include "sdexit/pde.hpp"

namespace sdexit {

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

inline std::string fmt(double v, const char* spec = "%.15g") {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

inline FilePtr open_write(const std::filesystem::path& path) {
  std::filesystem::create_directories(path.parent_path());
  FilePtr f(std::fopen(path.string().c_str(), "w"));
  if (!f) throw IoError("cannot open for writing: " + path.string());
  return f;
}

inline std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream is(line);
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Trajectories: header row, then t, x_1..x_n, dB_1..dB_m per line with 15
// significant digits. The final row pads the increment columns with zeros
// (there are steps+1 states but only steps increments).
// ---------------------------------------------------------------------------

inline void write_trajectory(const std::filesystem::path& path, const TrajectoryRecord& rec) {
  auto f = detail::open_write(path);
  const int n = rec.state_dim();
  const int m = rec.path.channels();
  std::fprintf(f.get(), "t");
  for (int c = 0; c < n; ++c) std::fprintf(f.get(), " x%d", c + 1);
  for (int k = 0; k < m; ++k) std::fprintf(f.get(), " dB%d", k + 1);
  std::fprintf(f.get(), "\n");
  const int T = rec.steps();
  for (int i = 0; i <= T; ++i) {
    std::fprintf(f.get(), "%.15g", rec.times(i));
    for (int c = 0; c < n; ++c) std::fprintf(f.get(), " %.15g", rec.states(i, c));
    for (int k = 0; k < m; ++k)
      std::fprintf(f.get(), " %.15g", i < T ? rec.path.increments(i, k) : 0.0);
    std::fprintf(f.get(), "\n");
  }
}

inline TrajectoryRecord read_trajectory(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open trajectory file: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty trajectory file: " + path.string());
  const auto header = detail::split_ws(line);
  if (header.empty() || header[0] != "t") throw IoError("bad trajectory header in " + path.string());
  int n = 0, m = 0;
  for (std::size_t i = 1; i < header.size(); ++i) {
    if (header[i].rfind("dB", 0) == 0)
      ++m;
    else
      ++n;
  }
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto toks = detail::split_ws(line);
    if (static_cast<int>(toks.size()) != 1 + n + m)
      throw IoError("bad trajectory row in " + path.string());
    std::vector<double> vals(toks.size());
    for (std::size_t i = 0; i < toks.size(); ++i) vals[i] = std::stod(toks[i]);
    rows.push_back(std::move(vals));
  }
  if (rows.size() < 2) throw IoError("trajectory needs at least 2 rows: " + path.string());
  const int T = static_cast<int>(rows.size()) - 1;
  TrajectoryRecord rec;
  rec.times.resize(T + 1);
  rec.states.resize(T + 1, n);
  rec.path.increments.resize(T, m);
  for (int i = 0; i <= T; ++i) {
    rec.times(i) = rows[static_cast<std::size_t>(i)][0];
    for (int c = 0; c < n; ++c) rec.states(i, c) = rows[static_cast<std::size_t>(i)][1 + c];
    if (i < T)
      for (int k = 0; k < m; ++k)
        rec.path.increments(i, k) = rows[static_cast<std::size_t>(i)][1 + n + k];
  }
  rec.path.dt = T > 0 ? (rec.times(T) - rec.times(0)) / T : 0.0;
  return rec;
}

// ---------------------------------------------------------------------------
// Coefficient tables: one row per basis term, one column per state
// derivative, scientific notation with 8 significant digits. Files are
// self-describing; the basis is reconstructed from the row labels.
// ---------------------------------------------------------------------------

inline void write_coefficient_table(const std::filesystem::path& path,
                                    const CoefficientTable& table) {
  auto f = detail::open_write(path);
  static const char* dnames[3] = {"dx/dt", "dy/dt", "dz/dt"};
  std::fprintf(f.get(), "basis");
  for (int c = 0; c < table.basis.state_dim; ++c) {
    if (table.basis.state_dim <= 3)
      std::fprintf(f.get(), " %s", dnames[c]);
    else
      std::fprintf(f.get(), " dx%d/dt", c + 1);
  }
  std::fprintf(f.get(), "\n");
  const auto labels = table.row_labels();
  for (std::size_t r = 0; r < labels.size(); ++r) {
    std::fprintf(f.get(), "%s", labels[r].c_str());
    for (int c = 0; c < table.basis.state_dim; ++c)
      std::fprintf(f.get(), " %.7e", table.xi(static_cast<Eigen::Index>(r), c));
    std::fprintf(f.get(), "\n");
  }
}

inline CoefficientTable read_coefficient_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open coefficient table: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty coefficient table: " + path.string());
  const auto header = detail::split_ws(line);
  if (header.size() < 2 || header[0] != "basis")
    throw IoError("bad coefficient-table header in " + path.string());
  const int n = static_cast<int>(header.size()) - 1;

  std::vector<std::string> labels;
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto toks = detail::split_ws(line);
    if (static_cast<int>(toks.size()) != n + 1)
      throw IoError("bad coefficient row in " + path.string());
    labels.push_back(toks[0]);
    std::vector<double> vals(static_cast<std::size_t>(n));
    for (int c = 0; c < n; ++c) vals[static_cast<std::size_t>(c)] = std::stod(toks[static_cast<std::size_t>(c) + 1]);
    rows.push_back(std::move(vals));
  }

  BasisSpec spec;
  spec.state_dim = n;
  spec.max_degree = 0;
  for (const auto& label : labels) {
    Monomial mono;
    NoiseColumn nc;
    bool is_noise = false;
    if (!parse_basis_label(label, n, mono, nc, is_noise))
      throw IoError("unparseable basis label '" + label + "' in " + path.string());
    if (is_noise)
      spec.noise_columns.push_back(nc);
    else
      spec.max_degree = std::max(spec.max_degree, mono.degree());
  }
  const auto expected = basis_labels(spec);
  if (expected != labels)
    throw IoError("coefficient-table rows are not in canonical basis order: " + path.string());

  CoefficientTable table;
  table.basis = spec;
  table.xi.resize(static_cast<Eigen::Index>(rows.size()), n);
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (int c = 0; c < n; ++c) table.xi(static_cast<Eigen::Index>(r), c) = rows[r][static_cast<std::size_t>(c)];
  return table;
}

// ---------------------------------------------------------------------------
// Fields: columnar x[,y[,z]],value over interior+boundary nodes, and a
// legacy structured-points file for volume visualization.
// ---------------------------------------------------------------------------

inline void write_field_columnar(const std::filesystem::path& path, const FieldSolution& field) {
  auto f = detail::open_write(path);
  const GridDiscretization& g = *field.grid;
  std::fprintf(f.get(), g.dim == 2 ? "x y value\n" : "x y z value\n");
  for (std::int64_t node = 0; node < g.total_nodes(); ++node) {
    if (g.node_class[static_cast<std::size_t>(node)] == GridDiscretization::NodeClass::Exterior)
      continue;
    const Vec p = g.node_coord(node);
    for (int a = 0; a < g.dim; ++a) std::fprintf(f.get(), "%.15g ", p(a));
    std::fprintf(f.get(), "%.15g\n", field.node_values[static_cast<std::size_t>(node)]);
  }
}

struct FieldFile {
  int dim = 0;
  std::vector<Vec> points;
  std::vector<double> values;
};

inline FieldFile read_field_columnar(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open field file: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty field file: " + path.string());
  const auto header = detail::split_ws(line);
  FieldFile ff;
  ff.dim = static_cast<int>(header.size()) - 1;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto toks = detail::split_ws(line);
    if (static_cast<int>(toks.size()) != ff.dim + 1) throw IoError("bad field row in " + path.string());
    Vec p(ff.dim);
    for (int a = 0; a < ff.dim; ++a) p(a) = std::stod(toks[static_cast<std::size_t>(a)]);
    ff.points.push_back(std::move(p));
    ff.values.push_back(std::stod(toks.back()));
  }
  return ff;
}

inline void write_field_vtk(const std::filesystem::path& path, const FieldSolution& field,
                            const std::string& name) {
  auto f = detail::open_write(path);
  const GridDiscretization& g = *field.grid;
  std::fprintf(f.get(), "# vtk DataFile Version 3.0\n%s\nASCII\nDATASET STRUCTURED_POINTS\n",
               name.c_str());
  std::fprintf(f.get(), "DIMENSIONS %d %d %d\n", g.npts[0], g.npts[1], g.npts[2]);
  std::fprintf(f.get(), "ORIGIN %.15g %.15g %.15g\n", g.origin[0], g.origin[1],
               g.dim > 2 ? g.origin[2] : 0.0);
  std::fprintf(f.get(), "SPACING %.15g %.15g %.15g\n", g.spacing[0], g.spacing[1],
               g.dim > 2 ? g.spacing[2] : 1.0);
  std::fprintf(f.get(), "POINT_DATA %lld\nSCALARS %s double 1\nLOOKUP_TABLE default\n",
               static_cast<long long>(g.total_nodes()), name.c_str());
  for (std::int64_t node = 0; node < g.total_nodes(); ++node)
    std::fprintf(f.get(), "%.9g\n", field.node_values[static_cast<std::size_t>(node)]);
}

// ---------------------------------------------------------------------------
// Key-value reports
// ---------------------------------------------------------------------------

using Report = std::vector<std::pair<std::string, std::string>>;

inline void write_report(const std::filesystem::path& path, const Report& report) {
  auto f = detail::open_write(path);
  for (const auto& [k, v] : report) std::fprintf(f.get(), "%s = %s\n", k.c_str(), v.c_str());
}

inline std::map<std::string, std::string> read_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open report: " + path.string());
  std::map<std::string, std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) continue;
    out[line.substr(0, eq)] = line.substr(eq + 3);
  }
  return out;
}

inline double report_number(const std::map<std::string, std::string>& report,
                            const std::string& key) {
  const auto it = report.find(key);
  if (it == report.end()) throw IoError("report is missing key '" + key + "'");
  return std::stod(it->second);
}

inline void append_exit_estimate(Report& report, const std::string& prefix,
                                 const ExitEstimate& est,
                                 const std::vector<std::string>& gamma_names) {
  auto num = [](double v) { return detail::fmt(v); };
  std::string start;
  for (Eigen::Index i = 0; i < est.start.size(); ++i) {
    if (i) start += " ";
    start += detail::fmt(est.start(i));
  }
  report.emplace_back(prefix + ".start", start);
  report.emplace_back(prefix + ".paths", std::to_string(est.paths));
  report.emplace_back(prefix + ".dt", num(est.dt));
  report.emplace_back(prefix + ".horizon", num(est.horizon));
  report.emplace_back(prefix + ".mean_exit_time", num(est.mean_exit_time));
  report.emplace_back(prefix + ".exit_time_stderr", num(est.exit_time_stderr));
  for (std::size_t l = 0; l < gamma_names.size(); ++l) {
    report.emplace_back(prefix + ".p_" + gamma_names[l], num(est.gamma_frequency[l]));
    report.emplace_back(prefix + ".p_" + gamma_names[l] + "_stderr", num(est.gamma_stderr[l]));
  }
  report.emplace_back(prefix + ".censored", std::to_string(est.censored));
  report.emplace_back(prefix + ".crossing_bias_scale", num(est.crossing_bias_scale));
  if (est.dt_check_done) {
    report.emplace_back(prefix + ".dt_half_shift", num(est.dt_half_shift));
    report.emplace_back(prefix + ".dt_sensitive", est.dt_sensitive ? "1" : "0");
  }
}

}  // namespace sdexit
