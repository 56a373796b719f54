#pragma once

#include <algorithm>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "sdexit/config.hpp"
#include "sdexit/io.hpp"
#include "sdexit/learn.hpp"
#include "sdexit/oracle.hpp"
#include "sdexit/pde.hpp"

namespace sdexit {

namespace fs = std::filesystem;

inline SdeModel model_from_config(const RunConfig& config) {
  return make_builtin(config.model.name, config.model.noise, config.model.jet());
}

inline BasisSpec basis_from_config(const RunConfig& config) {
  BasisSpec spec;
  spec.state_dim = config.model.state_dim();
  spec.max_degree = config.basis.degree;
  for (std::size_t k = 0; k < config.basis.noise.size(); ++k) {
    NoiseColumn nc;
    nc.noise_index = static_cast<int>(k);
    if (config.basis.noise[k] == "multiplicative") nc.state_multiplier = static_cast<int>(k);
    spec.noise_columns.push_back(nc);
  }
  spec.validate();
  return spec;
}

inline std::shared_ptr<const GridDiscretization> grid_from_config(const RunConfig& config) {
  if (config.domain.kind == "eddy2d") {
    EddyOptions opt;
    opt.resolution = config.domain.resolution;
    opt.reference = config.domain.reference;
    auto built = build_eddy_domain(config.model.jet(), opt);
    return std::make_shared<GridDiscretization>(std::move(built.grid));
  }
  std::array<std::array<double, 2>, 3> bounds{};
  for (int a = 0; a < 3; ++a) bounds[static_cast<std::size_t>(a)] = config.domain.bounds[static_cast<std::size_t>(a)];
  CuboidOptions opt;
  opt.resolution = config.domain.resolution3;
  auto built = build_cuboid_domain(bounds, opt);
  return std::make_shared<GridDiscretization>(std::move(built.grid));
}

/// Expands the configured initial conditions; an eddy lattice lays an
/// nx-by-ny grid over the cell's bounding box, keeps inside points (after
/// shrinking toward the stagnation point), and strides them down to exactly
/// `members` starts.
inline std::vector<Vec> initial_conditions(const RunConfig& config) {
  std::vector<Vec> out;
  if (!config.simulate.initials.eddy_lattice) {
    for (const auto& p : config.simulate.initials.list) {
      Vec v(static_cast<Eigen::Index>(p.size()));
      for (std::size_t i = 0; i < p.size(); ++i) v(static_cast<Eigen::Index>(i)) = p[i];
      out.push_back(std::move(v));
    }
    return out;
  }
  EddyOptions opt;
  opt.resolution = 64;
  opt.reference = config.domain.reference;
  const EddyBuildResult built = build_eddy_domain(config.model.jet(), opt);
  const EddyDomain& e = built.domain.eddy();
  const auto& init = config.simulate.initials;
  std::vector<Vec> inside;
  for (int j = 0; j < init.ny; ++j) {
    for (int i = 0; i < init.nx; ++i) {
      const double fx = (i + 0.5) / init.nx;
      const double fy = (j + 0.5) / init.ny;
      double x = e.x_left + fx * (e.x_right - e.x_left);
      double y = e.y_lo + fy * (e.y_hi - e.y_lo);
      x = e.center_x + init.shrink * (x - e.center_x);
      y = e.center_y + init.shrink * (y - e.center_y);
      if (e.contains(x, y)) {
        Vec v(2);
        v << x, y;
        inside.push_back(std::move(v));
      }
    }
  }
  if (static_cast<int>(inside.size()) < init.members)
    throw ConfigError("eddy_lattice: only " + std::to_string(inside.size()) +
                      " lattice points fall inside the cell, need " + std::to_string(init.members));
  for (int i = 0; i < init.members; ++i) {
    const std::size_t idx = static_cast<std::size_t>(static_cast<std::int64_t>(i) *
                                                     static_cast<std::int64_t>(inside.size()) /
                                                     init.members);
    out.push_back(inside[idx]);
  }
  return out;
}

namespace pipe_detail {

inline std::string member_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "member_%03zu.txt", i);
  return buf;
}

}  // namespace pipe_detail

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

struct SimulateOutput {
  std::vector<fs::path> files;
  std::vector<TrajectoryRecord> records;
};

inline SimulateOutput run_simulate(const RunConfig& config, const fs::path& outdir) {
  const SdeModel model = model_from_config(config);
  const std::vector<Vec> x0s = initial_conditions(config);
  SimulateOutput out;
  out.records = simulate_ensemble(model, x0s, config.simulate.steps, config.simulate.dt,
                                  config.simulate.seed);
  fs::create_directories(outdir);
  Report manifest;
  manifest.emplace_back("model", model.tag);
  manifest.emplace_back("members", std::to_string(out.records.size()));
  manifest.emplace_back("steps", std::to_string(config.simulate.steps));
  manifest.emplace_back("dt", detail::fmt(config.simulate.dt));
  manifest.emplace_back("seed", std::to_string(config.simulate.seed));
  for (std::size_t i = 0; i < out.records.size(); ++i) {
    const fs::path file = outdir / pipe_detail::member_name(i);
    write_trajectory(file, out.records[i]);
    out.files.push_back(file);
    manifest.emplace_back("file." + std::to_string(i), pipe_detail::member_name(i));
  }
  write_report(outdir / "manifest.txt", manifest);
  return out;
}

// ---------------------------------------------------------------------------
// learn
// ---------------------------------------------------------------------------

struct LearnOutput {
  CoefficientTable table;
  RegressionReport report;
};

inline LearnOutput run_learn(const RunConfig& config, const fs::path& outdir) {
  const auto manifest = read_report(outdir / "manifest.txt");
  const auto members = static_cast<std::size_t>(std::stoull(manifest.at("members")));
  std::vector<TrajectoryRecord> records;
  records.reserve(members);
  for (std::size_t i = 0; i < members; ++i)
    records.push_back(read_trajectory(outdir / manifest.at("file." + std::to_string(i))));

  const BasisSpec spec = basis_from_config(config);
  const auto [theta, y] = build_regression(records, spec);
  FitOptions fit;
  fit.threshold = config.learn.threshold;
  fit.max_sweeps = config.learn.max_sweeps;
  FitResult result = fit_least_squares(theta, y, spec, fit);

  write_coefficient_table(outdir / "coefficients.txt", result.table);
  Report rep;
  rep.emplace_back("samples", std::to_string(result.report.samples));
  rep.emplace_back("condition_estimate", detail::fmt(result.report.condition_estimate));
  for (Eigen::Index c = 0; c < result.report.residual_rms.size(); ++c)
    rep.emplace_back("residual_rms." + std::to_string(c + 1),
                     detail::fmt(result.report.residual_rms(c)));
  rep.emplace_back("thresholding_sweeps", std::to_string(result.report.thresholding_sweeps));
  rep.emplace_back("thresholding_converged", result.report.thresholding_converged ? "1" : "0");
  write_report(outdir / "learn_report.txt", rep);
  return LearnOutput{std::move(result.table), std::move(result.report)};
}

/// Model used by solve/oracle: the closed-form benchmark ("true") or the
/// extracted learned model read back from coefficients.txt ("learned").
inline SdeModel model_for_source(const RunConfig& config, const fs::path& outdir,
                                 const std::string& source) {
  if (source == "true") return model_from_config(config);
  if (source != "learned")
    throw ConfigError("model source must be 'true' or 'learned', got '" + source + "'");
  const CoefficientTable table = read_coefficient_table(outdir / "coefficients.txt");
  ExtractOptions opt;
  opt.crosstalk_tol = config.learn.crosstalk_tol;
  SdeModel model = extract_model(table, opt);
  model.tag = "learned:" + config.model.name;
  return model;
}

// ---------------------------------------------------------------------------
// solve
// ---------------------------------------------------------------------------

struct SolveOutput {
  std::vector<FieldSolution> fields;
  EllipticityCertificate certificate;
  std::shared_ptr<const GridDiscretization> grid;
};

inline SolveOutput run_solve(const RunConfig& config, const fs::path& outdir,
                             const std::string& source,
                             std::shared_ptr<const GridDiscretization> grid = nullptr) {
  const SdeModel model = model_for_source(config, outdir, source);
  if (!grid) grid = grid_from_config(config);
  SolveOutput out;
  out.grid = grid;
  out.certificate = check_ellipticity(model, *grid, 4096, config.solve.ellipticity_threshold);

  SolveOptions sopt;
  sopt.tol = config.solve.tol;
  sopt.max_iter = config.solve.max_iter;

  const fs::path dir = outdir / ("solve_" + source);
  fs::create_directories(dir);
  Report rep;
  rep.emplace_back("model", model.tag);
  rep.emplace_back("source", source);
  rep.emplace_back("ellipticity.samples", std::to_string(out.certificate.samples));
  rep.emplace_back("ellipticity.min_eigenvalue", detail::fmt(out.certificate.min_eigenvalue));
  rep.emplace_back("ellipticity.threshold", detail::fmt(out.certificate.threshold));
  rep.emplace_back("ellipticity.pass", out.certificate.pass ? "1" : "0");

  auto emit = [&](const FieldSolution& field, const std::string& stem, const std::string& key) {
    write_field_columnar(dir / (stem + ".txt"), field);
    write_field_vtk(dir / (stem + ".vtk"), field, key);
    rep.emplace_back(key + ".max", detail::fmt(field.max_value));
    rep.emplace_back(key + ".min_interior", detail::fmt(field.min_interior));
    rep.emplace_back(key + ".average", detail::fmt(field.average));
    rep.emplace_back(key + ".residual", detail::fmt(field.residual));
    rep.emplace_back(key + ".iterations", std::to_string(field.iterations));
    rep.emplace_back(key + ".upwinded_axes", std::to_string(field.assembly.upwinded_axes));
    rep.emplace_back(key + ".degenerate_axes", std::to_string(field.assembly.degenerate_axes));
  };

  for (const auto& problem : config.solve.problems) {
    if (problem == "mrt") {
      FieldSolution u = mean_residence_time(model, grid, sopt);
      emit(u, "field_mrt", "mrt");
      out.fields.push_back(std::move(u));
    } else {
      for (const auto& gamma : config.solve.gammas) {
        FieldSolution p = escape_probability(model, grid, gamma, sopt);
        emit(p, "field_escape_" + gamma, "escape." + gamma);
        out.fields.push_back(std::move(p));
      }
    }
  }
  write_report(dir / "solve_report.txt", rep);
  return out;
}

// ---------------------------------------------------------------------------
// oracle
// ---------------------------------------------------------------------------

/// Deterministic interior probe points: interior nodes ranked by depth
/// (distance from the boundary), the top half strided down to `count`.
inline std::vector<std::int64_t> pick_probe_nodes(const GridDiscretization& grid,
                                                  std::size_t count) {
  struct Cand {
    double depth;
    std::int64_t node;
  };
  std::vector<Cand> cands;
  cands.reserve(static_cast<std::size_t>(grid.interior_count()));
  const bool eddy = grid.domain.is_eddy();
  for (std::int64_t r = 0; r < grid.interior_count(); ++r) {
    const std::int64_t node = grid.node_of_row[static_cast<std::size_t>(r)];
    const Vec p = grid.node_coord(node);
    double depth;
    if (eddy) {
      const EddyDomain& e = grid.domain.eddy();
      depth = std::abs(jet_stream_function(p(0), p(1), e.jet).psi - e.psi_star);
    } else {
      depth = std::numeric_limits<double>::max();
      const auto& b = grid.domain.cuboid().bounds;
      for (int a = 0; a < grid.dim; ++a)
        depth = std::min({depth, p(a) - b[static_cast<std::size_t>(a)][0],
                          b[static_cast<std::size_t>(a)][1] - p(a)});
    }
    cands.push_back({depth, node});
  }
  std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
    return a.depth != b.depth ? a.depth > b.depth : a.node < b.node;
  });
  // Probes stay in the deepest quartile: the naive-crossing bias of the
  // Monte Carlo reference is largest near the boundary.
  const std::size_t pool = std::min(cands.size(), std::max(count, cands.size() / 4));
  std::vector<std::int64_t> out;
  for (std::size_t i = 0; i < count && i < cands.size(); ++i) {
    const std::size_t idx = i * pool / count;
    out.push_back(cands[idx].node);
  }
  return out;
}

struct OracleOutput {
  std::vector<ExitEstimate> probes;
};

inline OracleOutput run_oracle(const RunConfig& config, const fs::path& outdir,
                               const std::string& source = "true",
                               std::shared_ptr<const GridDiscretization> grid = nullptr) {
  const SdeModel model = model_for_source(config, outdir, source);
  if (!grid) grid = grid_from_config(config);
  const auto nodes = pick_probe_nodes(*grid, config.oracle.probe_points);
  OracleOutput out;
  Report rep;
  rep.emplace_back("model", model.tag);
  rep.emplace_back("probes", std::to_string(nodes.size()));
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const Vec x0 = grid->node_coord(nodes[i]);
    ExitEstimate est =
        estimate_exit(model, grid->domain, x0, config.oracle.paths, config.oracle.dt,
                      config.oracle.horizon, derive_stream_seed(config.oracle.seed, i),
                      config.oracle.check_dt);
    append_exit_estimate(rep, "probe" + std::to_string(i), est, grid->domain.gamma_names);
    out.probes.push_back(std::move(est));
  }
  write_report(outdir / "oracle_report.txt", rep);
  return out;
}

// ---------------------------------------------------------------------------
// compare
// ---------------------------------------------------------------------------

struct ProbeComparison {
  std::string field;  // "mrt" or "escape:<gamma>"
  std::size_t probe = 0;
  double pde = 0.0;
  double mc = 0.0;
  double ci99 = 0.0;
  double allowance = 0.0;
  bool ok = false;
};

struct CompareOutput {
  double error_u = 0.0;  // max |u_learn - u_true| over nodes
  double max_u_true = 0.0;
  double max_u_learned = 0.0;
  std::map<std::string, double> p_true;     // per gamma
  std::map<std::string, double> p_learned;  // per gamma
  std::map<std::string, double> error_p;    // per gamma
  std::vector<ProbeComparison> probe_rows;
  bool oracle_all_ok = true;
  bool has_oracle = false;
};

inline CompareOutput run_compare(const RunConfig& config, const fs::path& outdir) {
  CompareOutput out;
  const fs::path tdir = outdir / "solve_true";
  const fs::path ldir = outdir / "solve_learned";
  const auto treport = read_report(tdir / "solve_report.txt");
  const auto lreport = read_report(ldir / "solve_report.txt");
  Report rep;

  const bool has_mrt =
      std::find(config.solve.problems.begin(), config.solve.problems.end(), "mrt") !=
      config.solve.problems.end();
  FieldFile mrt_true, mrt_learned;
  if (has_mrt) {
    mrt_true = read_field_columnar(tdir / "field_mrt.txt");
    mrt_learned = read_field_columnar(ldir / "field_mrt.txt");
    if (mrt_true.values.size() != mrt_learned.values.size())
      throw IoError("compare: field sizes differ between true and learned solves");
    double maxdiff = 0.0;
    for (std::size_t i = 0; i < mrt_true.values.size(); ++i)
      maxdiff = std::max(maxdiff, std::abs(mrt_true.values[i] - mrt_learned.values[i]));
    out.error_u = maxdiff;
    out.max_u_true = report_number(treport, "mrt.max");
    out.max_u_learned = report_number(lreport, "mrt.max");
    rep.emplace_back("error_u", detail::fmt(out.error_u));
    rep.emplace_back("max_u_true", detail::fmt(out.max_u_true));
    rep.emplace_back("max_u_learned", detail::fmt(out.max_u_learned));
    rep.emplace_back("max_u_diff", detail::fmt(std::abs(out.max_u_true - out.max_u_learned)));
  }

  const bool has_escape =
      std::find(config.solve.problems.begin(), config.solve.problems.end(), "escape") !=
      config.solve.problems.end();
  if (has_escape) {
    for (const auto& gamma : config.solve.gammas) {
      const double pt = report_number(treport, "escape." + gamma + ".average");
      const double pl = report_number(lreport, "escape." + gamma + ".average");
      out.p_true[gamma] = pt;
      out.p_learned[gamma] = pl;
      out.error_p[gamma] = std::abs(pt - pl);
      rep.emplace_back("P_true_" + gamma, detail::fmt(pt));
      rep.emplace_back("P_learned_" + gamma, detail::fmt(pl));
      rep.emplace_back("error_P_" + gamma, detail::fmt(out.error_p[gamma]));
    }
  }

  // PDE against the Monte Carlo oracle at its probe points, when present.
  if (fs::exists(outdir / "oracle_report.txt")) {
    out.has_oracle = true;
    const auto oracle = read_report(outdir / "oracle_report.txt");
    const auto probes = static_cast<std::size_t>(std::stoull(oracle.at("probes")));
    auto grid = grid_from_config(config);
    double hmax = 0.0;
    for (int a = 0; a < grid->dim; ++a) hmax = std::max(hmax, grid->spacing[a]);

    auto lookup = [&](const FieldFile& ff, const Vec& x) {
      double best = std::numeric_limits<double>::max();
      std::size_t arg = 0;
      for (std::size_t i = 0; i < ff.points.size(); ++i) {
        const double d = (ff.points[i] - x).squaredNorm();
        if (d < best) {
          best = d;
          arg = i;
        }
      }
      if (best > 1e-12) throw IoError("compare: oracle probe does not align with a field node");
      return ff.values[arg];
    };

    std::map<std::string, FieldFile> escape_true;
    if (has_escape)
      for (const auto& gamma : config.solve.gammas)
        escape_true[gamma] = read_field_columnar(tdir / ("field_escape_" + gamma + ".txt"));

    for (std::size_t i = 0; i < probes; ++i) {
      const std::string prefix = "probe" + std::to_string(i);
      const auto start_toks = detail::split_ws(oracle.at(prefix + ".start"));
      Vec x(static_cast<Eigen::Index>(start_toks.size()));
      for (std::size_t a = 0; a < start_toks.size(); ++a)
        x(static_cast<Eigen::Index>(a)) = std::stod(start_toks[a]);

      if (has_mrt) {
        ProbeComparison pc;
        pc.field = "mrt";
        pc.probe = i;
        pc.pde = lookup(mrt_true, x);
        pc.mc = report_number(oracle, prefix + ".mean_exit_time");
        pc.ci99 = 2.5758293035489004 * report_number(oracle, prefix + ".exit_time_stderr");
        pc.allowance = 3.0 * hmax * hmax * out.max_u_true;
        pc.ok = std::abs(pc.pde - pc.mc) <= pc.ci99 + pc.allowance;
        out.oracle_all_ok = out.oracle_all_ok && pc.ok;
        rep.emplace_back(prefix + ".mrt.pde", detail::fmt(pc.pde));
        rep.emplace_back(prefix + ".mrt.mc", detail::fmt(pc.mc));
        rep.emplace_back(prefix + ".mrt.ci99", detail::fmt(pc.ci99));
        rep.emplace_back(prefix + ".mrt.allowance", detail::fmt(pc.allowance));
        rep.emplace_back(prefix + ".mrt.ok", pc.ok ? "1" : "0");
        out.probe_rows.push_back(std::move(pc));
      }
      if (has_escape) {
        for (const auto& gamma : config.solve.gammas) {
          ProbeComparison pc;
          pc.field = "escape:" + gamma;
          pc.probe = i;
          pc.pde = lookup(escape_true[gamma], x);
          pc.mc = report_number(oracle, prefix + ".p_" + gamma);
          pc.ci99 = 2.5758293035489004 * report_number(oracle, prefix + ".p_" + gamma + "_stderr");
          pc.allowance = 3.0 * hmax * hmax;
          pc.ok = std::abs(pc.pde - pc.mc) <= pc.ci99 + pc.allowance;
          out.oracle_all_ok = out.oracle_all_ok && pc.ok;
          rep.emplace_back(prefix + ".escape_" + gamma + ".pde", detail::fmt(pc.pde));
          rep.emplace_back(prefix + ".escape_" + gamma + ".mc", detail::fmt(pc.mc));
          rep.emplace_back(prefix + ".escape_" + gamma + ".ci99", detail::fmt(pc.ci99));
          rep.emplace_back(prefix + ".escape_" + gamma + ".allowance", detail::fmt(pc.allowance));
          rep.emplace_back(prefix + ".escape_" + gamma + ".ok", pc.ok ? "1" : "0");
          out.probe_rows.push_back(std::move(pc));
        }
      }
    }
    rep.emplace_back("oracle_all_ok", out.oracle_all_ok ? "1" : "0");
  }

  write_report(outdir / "compare_report.txt", rep);
  return out;
}

}  // namespace sdexit
