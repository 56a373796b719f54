#pragma once

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/Sparse>
#include <Eigen/SparseCore>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "sdexit/grid.hpp"

namespace sdexit {

using SpMat = Eigen::SparseMatrix<double>;

struct AssemblyReport {
  std::int64_t upwinded_axes = 0;    // node-axis pairs switched to upwind
  std::int64_t degenerate_axes = 0;  // node-axis pairs with vanishing diffusion
};

struct SparseSystem {
  SpMat matrix;  // rows = interior nodes; L = -A with Dirichlet eliminated
  Vec rhs;
  AssemblyReport report;
};

/// Discretizes L = -A on the interior nodes: central second differences for
/// the diffusion terms, central first differences for drift where the cell
/// Peclet number allows an M-matrix row, first-order upwind otherwise.
/// Dirichlet values are folded into the right-hand side.
///
/// rhs_fn is the right-hand side of L u = f (so the mean-residence-time
/// problem A u = -1 uses f = +1); dirichlet_fn(label, position) supplies the
/// boundary data.
inline SparseSystem assemble(const SdeModel& model, const GridDiscretization& grid,
                             const std::function<double(const Vec&)>& rhs_fn,
                             const std::function<double(int, const Vec&)>& dirichlet_fn) {
  model.validate();
  if (model.state_dim != grid.dim)
    throw std::invalid_argument("assemble: model dimension does not match grid");
  const std::int64_t rows = grid.interior_count();
  SparseSystem sys;
  sys.rhs = Vec::Zero(rows);
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<std::size_t>(rows) * (2 * grid.dim + 1));

  for (std::int64_t r = 0; r < rows; ++r) {
    const std::int64_t node = grid.node_of_row[static_cast<std::size_t>(r)];
    const Vec p = grid.node_coord(node);
    const GeneratorCoefficients gc = coefficients_at(model, p);
    double diag = 0.0;
    sys.rhs(r) += rhs_fn(p);

    auto couple = [&](const GridDiscretization::Arm& a, int axis, int side, double coeff) {
      if (coeff == 0.0) return;
      if (a.neighbor_row >= 0) {
        trips.emplace_back(static_cast<int>(r), static_cast<int>(a.neighbor_row), coeff);
      } else {
        Vec q = p;
        q(axis) += (side == 0 ? -1.0 : 1.0) * a.dist;
        sys.rhs(r) -= coeff * dirichlet_fn(a.label, q);
      }
    };

    for (int axis = 0; axis < grid.dim; ++axis) {
      const GridDiscretization::Arm& am = grid.arm(r, axis, 0);
      const GridDiscretization::Arm& ap = grid.arm(r, axis, 1);
      const double hm = am.dist, hp = ap.dist;
      const double a = gc.diffusion_diag(axis);
      const double b = gc.drift(axis);

      if (a > 0.0) {
        // -(a/2) u'' on unequal arms.
        couple(am, axis, 0, -a / (hm * (hm + hp)));
        couple(ap, axis, 1, -a / (hp * (hm + hp)));
        diag += a / (hm * hp);
        if (std::abs(b) * std::max(hm, hp) < a) {
          // -b u', second-order on unequal arms; keeps the row an M-row
          // because |b| max(hm, hp) < a.
          couple(am, axis, 0, b * hp / (hm * (hm + hp)));
          couple(ap, axis, 1, -b * hm / (hp * (hm + hp)));
          diag -= b * (hp - hm) / (hm * hp);
          continue;
        }
        ++sys.report.upwinded_axes;
      } else if (b != 0.0) {
        ++sys.report.degenerate_axes;
      } else {
        continue;
      }
      // First-order upwind for -b u'.
      if (b > 0.0) {
        diag += b / hp;
        couple(ap, axis, 1, -b / hp);
      } else if (b < 0.0) {
        diag += -b / hm;
        couple(am, axis, 0, b / hm);
      }
    }
    trips.emplace_back(static_cast<int>(r), static_cast<int>(r), diag);
  }

  sys.matrix.resize(rows, rows);
  sys.matrix.setFromTriplets(trips.begin(), trips.end());
  sys.matrix.makeCompressed();
  return sys;
}

/// Spec-surface convenience: constant right-hand side and constant Dirichlet
/// data per boundary component.
inline SparseSystem assemble(const SdeModel& model, const GridDiscretization& grid,
                             double rhs_constant, const std::vector<double>& dirichlet_per_label) {
  return assemble(
      model, grid, [rhs_constant](const Vec&) { return rhs_constant; },
      [&dirichlet_per_label](int label, const Vec&) {
        return dirichlet_per_label.at(static_cast<std::size_t>(label));
      });
}

struct SolveOptions {
  double tol = 1e-10;
  int max_iter = 20000;
};

struct SolveResult {
  Vec solution;
  double residual = 0.0;  // relative, ||L x - f|| / ||f||
  int iterations = 0;
  std::string preconditioner;
};

struct SolveFailure : NumericalError {
  std::vector<double> residual_history;
  explicit SolveFailure(std::vector<double> history)
      : NumericalError("linear solve did not converge"), residual_history(std::move(history)) {}
};

/// Stabilized bi-conjugate gradient, diagonal preconditioning first (no
/// setup cost) and incomplete-LU as the fallback for harder systems.
/// Reports the true relative residual of the returned iterate.
inline SolveResult solve_system(const SparseSystem& sys, const SolveOptions& opt = {}) {
  const double bnorm = sys.rhs.norm();
  SolveResult out;
  if (bnorm == 0.0) {
    out.solution = Vec::Zero(sys.matrix.rows());
    out.preconditioner = "none";
    return out;
  }
  std::vector<double> history;

  {
    Eigen::BiCGSTAB<SpMat, Eigen::DiagonalPreconditioner<double>> solver;
    solver.setTolerance(opt.tol);
    solver.setMaxIterations(opt.max_iter);
    solver.compute(sys.matrix);
    Vec x = solver.solve(sys.rhs);
    const double res = (sys.matrix * x - sys.rhs).norm() / bnorm;
    history.push_back(res);
    if (res <= opt.tol * 10.0) {
      out.solution = std::move(x);
      out.residual = res;
      out.iterations = static_cast<int>(solver.iterations());
      out.preconditioner = "diagonal";
      return out;
    }
  }
  {
    Eigen::BiCGSTAB<SpMat, Eigen::IncompleteLUT<double>> solver;
    solver.preconditioner().setDroptol(1e-5);
    solver.preconditioner().setFillfactor(8);
    solver.setTolerance(opt.tol);
    solver.setMaxIterations(opt.max_iter);
    solver.compute(sys.matrix);
    if (solver.info() == Eigen::Success) {
      Vec x = solver.solve(sys.rhs);
      const double res = (sys.matrix * x - sys.rhs).norm() / bnorm;
      history.push_back(res);
      if (res <= opt.tol * 10.0) {
        out.solution = std::move(x);
        out.residual = res;
        out.iterations = static_cast<int>(solver.iterations());
        out.preconditioner = "ilut";
        return out;
      }
    }
  }
  throw SolveFailure(std::move(history));
}

/// Scalar field on a grid: solved values on interior nodes, Dirichlet data on
/// boundary nodes, NaN outside the domain.
struct FieldSolution {
  std::shared_ptr<const GridDiscretization> grid;
  std::vector<double> node_values;
  std::string problem;  // "mrt" or "escape:<gamma>"
  double residual = 0.0;
  int iterations = 0;
  double max_value = 0.0;      // max over interior nodes
  double min_interior = 0.0;   // min over interior nodes
  double average = 0.0;        // mask-weighted domain average
  AssemblyReport assembly;

  double value_at_row(std::int64_t row) const {
    return node_values[static_cast<std::size_t>(grid->node_of_row[static_cast<std::size_t>(row)])];
  }
};

/// Mask-weighted midpoint quadrature average of the field over the domain.
inline double average_over_domain(const FieldSolution& field) {
  const GridDiscretization& g = *field.grid;
  double acc = 0.0, vol = 0.0;
  for (std::int64_t r = 0; r < g.interior_count(); ++r) {
    const double w = g.cell_weight(r);
    acc += w * field.value_at_row(r);
    vol += w;
  }
  return vol > 0.0 ? acc / vol : 0.0;
}

namespace detail {

inline FieldSolution finish_field(std::shared_ptr<const GridDiscretization> grid,
                                  const SparseSystem& sys, SolveResult&& solve, std::string problem,
                                  const std::function<double(int)>& boundary_value) {
  FieldSolution f;
  f.grid = std::move(grid);
  f.problem = std::move(problem);
  f.residual = solve.residual;
  f.iterations = solve.iterations;
  f.assembly = sys.report;
  const GridDiscretization& g = *f.grid;
  f.node_values.assign(static_cast<std::size_t>(g.total_nodes()),
                       std::numeric_limits<double>::quiet_NaN());
  for (std::int64_t r = 0; r < g.interior_count(); ++r)
    f.node_values[static_cast<std::size_t>(g.node_of_row[static_cast<std::size_t>(r)])] =
        solve.solution(r);
  for (std::int64_t node = 0; node < g.total_nodes(); ++node) {
    if (g.node_class[static_cast<std::size_t>(node)] == GridDiscretization::NodeClass::Boundary)
      f.node_values[static_cast<std::size_t>(node)] =
          boundary_value(g.node_label[static_cast<std::size_t>(node)]);
  }
  f.max_value = -std::numeric_limits<double>::max();
  f.min_interior = std::numeric_limits<double>::max();
  for (std::int64_t r = 0; r < g.interior_count(); ++r) {
    const double v = f.value_at_row(r);
    f.max_value = std::max(f.max_value, v);
    f.min_interior = std::min(f.min_interior, v);
  }
  f.average = average_over_domain(f);
  return f;
}

}  // namespace detail

/// Solves A u = -1, u = 0 on the boundary: the expected first-exit time from
/// each interior point.
inline FieldSolution mean_residence_time(const SdeModel& model,
                                         std::shared_ptr<const GridDiscretization> grid,
                                         const SolveOptions& opt = {}) {
  const std::size_t labels = grid->domain.gamma_names.size();
  SparseSystem sys = assemble(model, *grid, 1.0, std::vector<double>(labels, 0.0));
  SolveResult sol = solve_system(sys, opt);
  return detail::finish_field(std::move(grid), sys, std::move(sol), "mrt",
                              [](int) { return 0.0; });
}

/// Solves A p = 0 with p = 1 on the component `gamma` ("all" for the entire
/// boundary) and 0 elsewhere: the probability of first exit through gamma.
inline FieldSolution escape_probability(const SdeModel& model,
                                        std::shared_ptr<const GridDiscretization> grid,
                                        const std::string& gamma, const SolveOptions& opt = {}) {
  const auto& names = grid->domain.gamma_names;
  std::vector<double> data(names.size(), 0.0);
  if (gamma == "all") {
    std::fill(data.begin(), data.end(), 1.0);
  } else {
    data[static_cast<std::size_t>(grid->domain.gamma_index(gamma))] = 1.0;
  }
  SparseSystem sys = assemble(model, *grid, 0.0, data);
  SolveResult sol = solve_system(sys, opt);
  return detail::finish_field(std::move(grid), sys, std::move(sol), "escape:" + gamma,
                              [data](int label) { return data.at(static_cast<std::size_t>(label)); });
}

}  // namespace sdexit
