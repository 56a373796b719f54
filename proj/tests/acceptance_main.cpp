// Acceptance suite: runs every shipped experiment config end to end
// (simulate -> learn -> solve true/learned -> Monte Carlo probes -> compare)
// and prints one PASS/FAIL line per criterion check. Exits nonzero if any
// check fails.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "sdexit/pipeline.hpp"

using namespace sdexit;
namespace fs = std::filesystem;

namespace {

struct Checker {
  int failures = 0;
  int passes = 0;

  void check(bool ok, const std::string& what, const std::string& detail) {
    std::printf("%s  %s  [%s]\n", ok ? "PASS" : "FAIL", what.c_str(), detail.c_str());
    if (ok)
      ++passes;
    else
      ++failures;
  }

  void within(double got, double target, double tol, const std::string& what) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "got %.6g, target %.6g +- %.2g", got, target, tol);
    check(std::abs(got - target) <= tol, what, buf);
  }

  void below(double got, double bound, const std::string& what) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "got %.6g, bound %.2g", got, bound);
    check(got <= bound, what, buf);
  }
};

struct ExperimentRun {
  RunConfig config;
  fs::path out;
  LearnOutput learn;
  SolveOutput solved_true;
  SolveOutput solved_learned;
  CompareOutput compare;
};

ExperimentRun run_experiment(const std::string& config_name, const fs::path& workdir) {
  ExperimentRun run;
  run.config = read_config(fs::path(SDEXIT_SOURCE_DIR) / "configs" / config_name);
  run.out = workdir / run.config.model.name;
  fs::remove_all(run.out);
  std::fprintf(stderr, "== running %s ==\n", config_name.c_str());
  run_simulate(run.config, run.out);
  run.learn = run_learn(run.config, run.out);
  auto grid = grid_from_config(run.config);
  run.solved_true = run_solve(run.config, run.out, "true", grid);
  run.solved_learned = run_solve(run.config, run.out, "learned", grid);
  run_oracle(run.config, run.out, "true", grid);
  run.compare = run_compare(run.config, run.out);
  return run;
}

double table_rel_err(const CoefficientTable& t, const std::string& row, int col, double want) {
  return std::abs(t.entry(row, col) - want) / std::abs(want);
}

void check_partition(Checker& c, const SolveOutput& s, const std::string& tag) {
  const auto& grid = *s.grid;
  std::vector<const FieldSolution*> escapes;
  for (const auto& f : s.fields)
    if (f.problem.rfind("escape:", 0) == 0) escapes.push_back(&f);
  double worst = 0.0;
  for (std::int64_t r = 0; r < grid.interior_count(); ++r) {
    double sum = 0.0;
    for (const auto* f : escapes) sum += f->value_at_row(r);
    worst = std::max(worst, std::abs(sum - 1.0));
  }
  c.below(worst, 1e-3, "criterion6.partition." + tag);
}

void check_max_principle(Checker& c, const SolveOutput& s, const std::string& tag) {
  bool ok = true;
  double worst_escape_lo = 0.0, worst_escape_hi = 1.0, mrt_min = 1.0;
  for (const auto& f : s.fields) {
    if (f.problem == "mrt") {
      ok = ok && f.min_interior > 0.0;
      mrt_min = std::min(mrt_min, f.min_interior);
    } else {
      ok = ok && f.min_interior >= -1e-8 && f.max_value <= 1.0 + 1e-8;
      worst_escape_lo = std::min(worst_escape_lo, f.min_interior);
      worst_escape_hi = std::max(worst_escape_hi, f.max_value);
    }
  }
  char buf[160];
  std::snprintf(buf, sizeof(buf), "escape range [%.3g, %.9g], mrt interior min %.3g",
                worst_escape_lo, worst_escape_hi, mrt_min);
  c.check(ok, "criterion7.max_principle." + tag, buf);
}

void check_oracle(Checker& c, const CompareOutput& cmp, const std::string& tag) {
  std::size_t bad = 0;
  double worst_margin = 0.0;
  for (const auto& row : cmp.probe_rows) {
    const double excess = std::abs(row.pde - row.mc) - (row.ci99 + row.allowance);
    worst_margin = std::max(worst_margin, excess);
    if (!row.ok) ++bad;
  }
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%zu/%zu probe rows agree, worst excess %.3g",
                cmp.probe_rows.size() - bad, cmp.probe_rows.size(), worst_margin);
  c.check(cmp.has_oracle && bad == 0, "criterion8.pde_vs_mc." + tag, buf);
}

bool trees_identical(const fs::path& a, const fs::path& b) {
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  std::vector<fs::path> rel;
  for (const auto& e : fs::recursive_directory_iterator(a))
    if (e.is_regular_file()) rel.push_back(fs::relative(e.path(), a));
  for (const auto& r : rel) {
    if (!fs::exists(b / r)) return false;
    if (slurp(a / r) != slurp(b / r)) return false;
  }
  std::size_t count_b = 0;
  for (const auto& e : fs::recursive_directory_iterator(b))
    if (e.is_regular_file()) ++count_b;
  return count_b == rel.size();
}

}  // namespace

int main() {
  setvbuf(stdout, nullptr, _IOLBF, 0);
  Checker c;
  const fs::path work = fs::temp_directory_path() / "sdexit_acceptance";
  fs::create_directories(work);

  ExperimentRun jet_add = run_experiment("jet_additive.json", work);
  ExperimentRun jet_mult = run_experiment("jet_multiplicative.json", work);
  ExperimentRun linear = run_experiment("linear3d.json", work);
  ExperimentRun lor1 = run_experiment("lorenz_d1.json", work);
  ExperimentRun lor2 = run_experiment("lorenz_d2.json", work);

  // --- Criterion 1: noise-intensity recovery -------------------------------
  {
    const double sj = 0.547723;  // sqrt(0.3)
    c.below(table_rel_err(jet_add.learn.table, "dB1/dt", 0, sj), 0.02,
            "criterion1.jet_additive.sigma1");
    c.below(table_rel_err(jet_add.learn.table, "dB2/dt", 1, sj), 0.02,
            "criterion1.jet_additive.sigma2");
    c.below(std::abs(jet_add.learn.table.entry("dB2/dt", 0)), 1e-3,
            "criterion1.jet_additive.crosstalk_x");
    c.below(std::abs(jet_add.learn.table.entry("dB1/dt", 1)), 1e-3,
            "criterion1.jet_additive.crosstalk_y");
    const double sl = 0.948683;  // sqrt(0.9)
    for (int k = 0; k < 3; ++k)
      c.below(table_rel_err(linear.learn.table, "dB" + std::to_string(k + 1) + "/dt", k, sl),
              0.02, "criterion1.linear3d.sigma" + std::to_string(k + 1));
  }

  // --- Criterion 2: Lorenz drift recovery ----------------------------------
  {
    const CoefficientTable& t = lor1.learn.table;
    c.below(table_rel_err(t, "x", 0, -10.0), 0.02, "criterion2.xdot.x");
    c.below(table_rel_err(t, "y", 0, 10.0), 0.02, "criterion2.xdot.y");
    c.below(table_rel_err(t, "x", 1, 28.0), 0.02, "criterion2.ydot.x");
    c.below(table_rel_err(t, "y", 1, -1.0), 0.02, "criterion2.ydot.y");
    c.below(table_rel_err(t, "xz", 1, -1.0), 0.02, "criterion2.ydot.xz");
    c.below(table_rel_err(t, "z", 2, -8.0 / 3.0), 0.02, "criterion2.zdot.z");
    c.below(table_rel_err(t, "xy", 2, 1.0), 0.02, "criterion2.zdot.xy");
    const auto labels = t.row_labels();
    double worst = 0.0;
    std::string worst_at = "-";
    for (std::size_t r = 0; r < labels.size(); ++r) {
      if (labels[r].find("dB") != std::string::npos) continue;
      for (int col = 0; col < 3; ++col) {
        const std::string& l = labels[r];
        const bool named = (l == "x" && (col == 0 || col == 1)) ||
                           (l == "y" && (col == 0 || col == 1)) || (l == "z" && col == 2) ||
                           (l == "xz" && col == 1) || (l == "xy" && col == 2);
        if (named) continue;
        const double v = std::abs(t.xi(static_cast<Eigen::Index>(r), col));
        if (v > worst) {
          worst = v;
          worst_at = l + "/col" + std::to_string(col + 1);
        }
      }
    }
    c.below(worst, 0.05, "criterion2.spurious_rows(worst at " + worst_at + ")");
  }

  // --- Criterion 3: jet exit-statistics fidelity ---------------------------
  {
    c.below(std::abs(jet_add.compare.max_u_true - jet_add.compare.max_u_learned), 5e-3,
            "criterion3.jet_additive.max_u");
    c.below(std::abs(jet_mult.compare.max_u_true - jet_mult.compare.max_u_learned), 1e-2,
            "criterion3.jet_multiplicative.max_u");
    for (const auto* run : {&jet_add, &jet_mult})
      for (const auto& gamma : {"crest", "trough"})
        c.below(run->compare.error_p.at(gamma), 5e-3,
                "criterion3." + run->config.model.name + ".P_" + gamma);
  }

  // --- Criterion 4: 3-d linear cuboid --------------------------------------
  {
    c.below(linear.compare.error_p.at("zhi"), 1e-3, "criterion4.linear3d.P_top");
    c.below(linear.compare.error_p.at("zlo"), 1e-3, "criterion4.linear3d.P_bottom");
    c.below(linear.compare.error_u, 5e-3, "criterion4.linear3d.error_u");
  }

  // --- Criterion 5: Lorenz residence boxes ---------------------------------
  {
    c.within(lor1.compare.max_u_learned, 0.1238, 0.01, "criterion5.D1.max_u");
    c.within(lor2.compare.max_u_learned, 0.1236, 0.01, "criterion5.D2.max_u");
    const std::map<std::string, double> paper_d1 = {{"xlo", 0.1065}, {"xhi", 0.1167},
                                                    {"ylo", 0.0955}, {"yhi", 0.3485},
                                                    {"zlo", 0.2343}, {"zhi", 0.1244}};
    const std::map<std::string, double> paper_d2 = {{"xlo", 0.1161}, {"xhi", 0.1061},
                                                    {"ylo", 0.3469}, {"yhi", 0.0947},
                                                    {"zlo", 0.2367}, {"zhi", 0.1264}};
    for (const auto& [gamma, want] : paper_d1)
      c.within(lor1.compare.p_learned.at(gamma), want, 0.02, "criterion5.D1.P_" + gamma);
    for (const auto& [gamma, want] : paper_d2)
      c.within(lor2.compare.p_learned.at(gamma), want, 0.02, "criterion5.D2.P_" + gamma);
    c.below(lor1.compare.error_p.at("yhi"), 2e-2, "criterion5.D1.error_P(y=-8)");
    c.below(lor2.compare.error_p.at("ylo"), 2e-2, "criterion5.D2.error_P(y=8)");
  }

  // --- Criteria 6 & 7: partition and maximum principle ---------------------
  for (const auto* run : {&jet_add, &jet_mult, &linear, &lor1, &lor2}) {
    const std::string tag = run->config.output.substr(run->config.output.find('/') + 1);
    check_partition(c, run->solved_true, tag + ".true");
    check_partition(c, run->solved_learned, tag + ".learned");
    check_max_principle(c, run->solved_true, tag + ".true");
    check_max_principle(c, run->solved_learned, tag + ".learned");
  }

  // --- Criterion 8: PDE vs Monte Carlo probes ------------------------------
  for (const auto* run : {&jet_add, &jet_mult, &linear, &lor1, &lor2}) {
    const std::string tag = run->config.output.substr(run->config.output.find('/') + 1);
    check_oracle(c, run->compare, tag);
  }

  // --- Criterion 9: manufactured-solution convergence order ----------------
  {
    SdeModel m;
    m.state_dim = 3;
    m.noise_dim = 3;
    m.drift = PolynomialDrift(BasisSpec{3, 0, {}}, Mat::Zero(1, 3));
    m.diffusion.kind = DiffusionKind::Additive;
    m.diffusion.intensities = Vec::Constant(3, std::sqrt(2.0));
    m.tag = "pure-diffusion";
    auto ustar = [](const Vec& p) {
      return std::sin(M_PI * p(0)) * std::sin(M_PI * p(1)) * std::sin(M_PI * p(2));
    };
    std::vector<double> errs;
    for (int n : {9, 17, 33}) {
      auto built = build_cuboid_domain({{{0, 1}, {0, 1}, {0, 1}}}, CuboidOptions{{n, n, n}});
      auto grid = std::make_shared<GridDiscretization>(std::move(built.grid));
      SparseSystem sys = assemble(
          m, *grid, [&](const Vec& p) { return 3.0 * M_PI * M_PI * ustar(p); },
          [](int, const Vec&) { return 0.0; });
      SolveResult sol = solve_system(sys);
      double err = 0.0;
      for (std::int64_t r = 0; r < grid->interior_count(); ++r) {
        const Vec p = grid->node_coord(grid->node_of_row[static_cast<std::size_t>(r)]);
        err = std::max(err, std::abs(sol.solution(r) - ustar(p)));
      }
      errs.push_back(err);
    }
    const double order_a = std::log2(errs[0] / errs[1]);
    const double order_b = std::log2(errs[1] / errs[2]);
    char buf[160];
    std::snprintf(buf, sizeof(buf), "orders %.2f, %.2f (errors %.2e -> %.2e -> %.2e)", order_a,
                  order_b, errs[0], errs[1], errs[2]);
    c.check(order_a >= 1.8 && order_b >= 1.8, "criterion9.manufactured_solution", buf);
  }

  // --- Criterion 10: determinism ------------------------------------------
  {
    std::fprintf(stderr, "== determinism rerun: linear3d ==\n");
    const fs::path again = work / "linear3d_again";
    fs::remove_all(again);
    RunConfig config = linear.config;
    run_simulate(config, again);
    run_learn(config, again);
    auto grid = grid_from_config(config);
    run_solve(config, again, "true", grid);
    run_solve(config, again, "learned", grid);
    run_oracle(config, again, "true", grid);
    run_compare(config, again);
    c.check(trees_identical(linear.out, again), "criterion10.determinism.linear3d",
            "all output files byte-identical across reruns");

    std::fprintf(stderr, "== determinism rerun: jet_additive simulate+learn ==\n");
    const fs::path jagain = work / "jet_additive_again";
    fs::remove_all(jagain);
    run_simulate(jet_add.config, jagain);
    run_learn(jet_add.config, jagain);
    auto bytes = [](const fs::path& p) {
      std::ifstream in(p, std::ios::binary);
      return std::string(std::istreambuf_iterator<char>(in), {});
    };
    const bool same =
        bytes(jet_add.out / "coefficients.txt") == bytes(jagain / "coefficients.txt") &&
        bytes(jet_add.out / "member_000.txt") == bytes(jagain / "member_000.txt") &&
        bytes(jet_add.out / "member_199.txt") == bytes(jagain / "member_199.txt");
    c.check(same, "criterion10.determinism.jet_additive", "trajectories and table identical");
  }

  std::printf("\n%d checks passed, %d failed\n", c.passes, c.failures);
  return c.failures == 0 ? 0 : 1;
}
