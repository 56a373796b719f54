#pragma once

#include <Eigen/Dense>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sdexit/basis.hpp"
#include "sdexit/sde.hpp"

namespace sdexit {

/// Learned coefficient matrix: one row per basis term (polynomial rows first,
/// then noise rows), one column per state derivative.
struct CoefficientTable {
  BasisSpec basis;
  Mat xi;

  std::vector<std::string> row_labels() const { return basis_labels(basis); }

  double entry(const std::string& label, int component) const {
    const auto labels = row_labels();
    for (std::size_t r = 0; r < labels.size(); ++r) {
      if (labels[r] == label) return xi(static_cast<Eigen::Index>(r), component);
    }
    throw std::invalid_argument("CoefficientTable: no row labeled '" + label + "'");
  }
};

struct RegressionReport {
  Vec residual_rms;           // per state component
  double condition_estimate = 0.0;
  std::size_t samples = 0;
  int thresholding_sweeps = 0;
  bool thresholding_converged = true;
};

struct RankDeficiencyError : std::runtime_error {
  std::vector<int> columns;
  explicit RankDeficiencyError(std::vector<int> cols)
      : std::runtime_error("design matrix is rank deficient"), columns(std::move(cols)) {}
};

/// Stacks the Euler-increment regression for one or more trajectories:
/// row i of theta is the design row at state_i with recorded noise rates
/// dB_i/dt, row i of y is (state_{i+1} - state_i)/dt.
inline std::pair<Mat, Mat> build_regression(std::span<const TrajectoryRecord> data,
                                            const BasisSpec& spec) {
  spec.validate();
  if (data.empty()) throw std::invalid_argument("build_regression: no trajectories");
  std::size_t rows = 0;
  for (const auto& rec : data) {
    if (rec.state_dim() != spec.state_dim)
      throw std::invalid_argument("build_regression: trajectory dimension mismatch");
    rows += static_cast<std::size_t>(rec.steps());
  }
  if (rows < spec.column_count())
    throw std::invalid_argument("build_regression: too few samples (" + std::to_string(rows) +
                                " rows for " + std::to_string(spec.column_count()) +
                                " basis columns); system would be rank deficient");
  Mat theta(rows, spec.column_count());
  Mat y(rows, spec.state_dim);
  std::vector<double> state(static_cast<std::size_t>(spec.state_dim));
  std::vector<double> rates;
  std::size_t r = 0;
  for (const auto& rec : data) {
    const double dt = rec.path.dt;
    rates.assign(static_cast<std::size_t>(rec.path.channels()), 0.0);
    for (int i = 0; i < rec.steps(); ++i) {
      for (int c = 0; c < spec.state_dim; ++c) state[static_cast<std::size_t>(c)] = rec.states(i, c);
      for (int k = 0; k < rec.path.channels(); ++k)
        rates[static_cast<std::size_t>(k)] = rec.path.increments(i, k) / dt;
      theta.row(static_cast<Eigen::Index>(r)) = eval_design_row(spec, state, rates).transpose();
      for (int c = 0; c < spec.state_dim; ++c)
        y(static_cast<Eigen::Index>(r), c) = (rec.states(i + 1, c) - rec.states(i, c)) / dt;
      ++r;
    }
  }
  return {std::move(theta), std::move(y)};
}

struct FitOptions {
  double threshold = 0.0;  // 0 keeps the dense solution
  int max_sweeps = 10;
};

struct FitResult {
  CoefficientTable table;
  RegressionReport report;
};

namespace detail {

/// QR solve restricted to the active columns; zero-norm columns are excluded
/// up front (their coefficients are set to zero, the minimum-norm choice).
inline Mat solve_active(const Mat& theta, const Mat& y, const std::vector<int>& active,
                        double* condition_out) {
  Mat sub(theta.rows(), static_cast<Eigen::Index>(active.size()));
  for (std::size_t j = 0; j < active.size(); ++j) sub.col(static_cast<Eigen::Index>(j)) = theta.col(active[j]);
  Eigen::ColPivHouseholderQR<Mat> qr(sub);
  if (qr.rank() < sub.cols()) {
    // The trailing pivots identify the dependent columns.
    std::vector<int> offending;
    const auto& perm = qr.colsPermutation().indices();
    for (Eigen::Index j = qr.rank(); j < sub.cols(); ++j)
      offending.push_back(active[static_cast<std::size_t>(perm(j))]);
    throw RankDeficiencyError(std::move(offending));
  }
  if (condition_out) {
    const Mat r = qr.matrixR().topRows(sub.cols()).template triangularView<Eigen::Upper>();
    Eigen::JacobiSVD<Mat> svd(r);
    const auto& sv = svd.singularValues();
    *condition_out = sv(0) / sv(sv.size() - 1);
  }
  Mat coeffs(sub.cols(), y.cols());
  for (Eigen::Index c = 0; c < y.cols(); ++c) coeffs.col(c) = qr.solve(y.col(c));
  return coeffs;
}

}  // namespace detail

/// Least squares xi = argmin ||theta xi - y|| by column-pivoted Householder QR.
/// With options.threshold > 0 runs sequential hard-thresholding per component:
/// zero coefficients below the threshold, refit on the survivors, repeat.
inline FitResult fit_least_squares(const Mat& theta, const Mat& y, const BasisSpec& spec,
                                   FitOptions options = {}) {
  spec.validate();
  if (theta.rows() != y.rows()) throw std::invalid_argument("fit_least_squares: row mismatch");
  if (theta.cols() != static_cast<Eigen::Index>(spec.column_count()))
    throw std::invalid_argument("fit_least_squares: column count does not match basis");
  const Eigen::Index p = theta.cols();
  const Eigen::Index n = y.cols();

  std::vector<int> nonzero;
  for (Eigen::Index j = 0; j < p; ++j)
    if (theta.col(j).norm() > 0.0) nonzero.push_back(static_cast<int>(j));

  FitResult result;
  result.table.basis = spec;
  result.table.xi = Mat::Zero(p, n);
  result.report.samples = static_cast<std::size_t>(theta.rows());

  double condition = 0.0;
  const Mat dense = detail::solve_active(theta, y, nonzero, &condition);
  result.report.condition_estimate = condition;
  for (std::size_t j = 0; j < nonzero.size(); ++j)
    result.table.xi.row(nonzero[j]) = dense.row(static_cast<Eigen::Index>(j));

  if (options.threshold > 0.0) {
    for (Eigen::Index c = 0; c < n; ++c) {
      std::vector<int> active = nonzero;
      int sweeps = 0;
      bool converged = false;
      Vec col = result.table.xi.col(c);
      while (sweeps < options.max_sweeps) {
        ++sweeps;
        std::vector<int> kept;
        for (int j : active)
          if (std::abs(col(j)) >= options.threshold) kept.push_back(j);
        if (kept.size() == active.size()) {
          converged = true;
          break;
        }
        if (kept.empty()) {
          active.clear();
          converged = true;
          break;
        }
        const Mat sub = detail::solve_active(theta, y.col(c), kept, nullptr);
        col.setZero();
        for (std::size_t j = 0; j < kept.size(); ++j) col(kept[j]) = sub(static_cast<Eigen::Index>(j), 0);
        active = kept;
      }
      if (active.empty()) col.setZero();
      result.table.xi.col(c) = col;
      result.report.thresholding_sweeps = std::max(result.report.thresholding_sweeps, sweeps);
      if (!converged) result.report.thresholding_converged = false;
    }
  }

  result.report.residual_rms.resize(n);
  const Mat resid = theta * result.table.xi - y;
  for (Eigen::Index c = 0; c < n; ++c)
    result.report.residual_rms(c) = std::sqrt(resid.col(c).squaredNorm() / static_cast<double>(theta.rows()));
  return result;
}

struct ExtractOptions {
  double crosstalk_tol = 1e-2;
};

/// Off-channel noise weight above the tolerance; signals that the assumed
/// diagonal noise structure does not fit the data.
struct CrosstalkError : std::runtime_error {
  std::vector<std::pair<std::string, double>> entries;
  explicit CrosstalkError(std::vector<std::pair<std::string, double>> e)
      : std::runtime_error("noise cross-talk above tolerance"), entries(std::move(e)) {}
};

/// Reads an SdeModel off a learned table: polynomial rows become the drift,
/// the noise rows become a diagonal DiffusionSpec. Each state component must
/// have exactly one matching noise column (dB_k/dt for additive noise,
/// x_k dB_k/dt for multiplicative); other noise entries are dropped when
/// below the cross-talk tolerance.
inline SdeModel extract_model(const CoefficientTable& table, ExtractOptions options = {}) {
  const BasisSpec& spec = table.basis;
  spec.validate();
  const Eigen::Index p = static_cast<Eigen::Index>(spec.polynomial_count());
  if (table.xi.rows() != static_cast<Eigen::Index>(spec.column_count()) ||
      table.xi.cols() != spec.state_dim)
    throw std::invalid_argument("extract_model: table shape mismatch");

  SdeModel model;
  model.state_dim = spec.state_dim;
  model.noise_dim = spec.state_dim;
  BasisSpec poly = spec;
  poly.noise_columns.clear();
  model.drift = PolynomialDrift(poly, table.xi.topRows(p));

  if (spec.noise_columns.empty()) {
    model.noise_dim = 0;
    model.diffusion.kind = DiffusionKind::Additive;
    model.diffusion.intensities = Vec();
    model.tag = "extracted";
    model.validate();
    return model;
  }

  // Locate the diagonal column for each channel and decide the noise kind.
  bool multiplicative = spec.noise_columns.front().state_multiplier.has_value();
  std::vector<int> diag_row(static_cast<std::size_t>(spec.state_dim), -1);
  for (std::size_t c = 0; c < spec.noise_columns.size(); ++c) {
    const auto& nc = spec.noise_columns[c];
    if (nc.state_multiplier.has_value() != multiplicative)
      throw std::invalid_argument("extract_model: mixed additive/multiplicative noise columns");
    if (multiplicative && *nc.state_multiplier != nc.noise_index)
      throw std::invalid_argument("extract_model: multiplicative column must pair x_k with dB_k");
    if (nc.noise_index >= spec.state_dim)
      throw std::invalid_argument("extract_model: noise channel beyond state dimension");
    diag_row[static_cast<std::size_t>(nc.noise_index)] = static_cast<int>(p + static_cast<Eigen::Index>(c));
  }
  for (int k = 0; k < spec.state_dim; ++k)
    if (diag_row[static_cast<std::size_t>(k)] < 0)
      throw std::invalid_argument("extract_model: missing noise column for channel " + std::to_string(k + 1));

  model.diffusion.kind = multiplicative ? DiffusionKind::DiagonalMultiplicative : DiffusionKind::Additive;
  model.diffusion.intensities.resize(spec.state_dim);
  const auto labels = table.row_labels();
  std::vector<std::pair<std::string, double>> offending;
  for (Eigen::Index r = p; r < table.xi.rows(); ++r) {
    const int channel = spec.noise_columns[static_cast<std::size_t>(r - p)].noise_index;
    for (int c = 0; c < spec.state_dim; ++c) {
      const double v = table.xi(r, c);
      if (c == channel) {
        model.diffusion.intensities(c) = v;
      } else if (std::abs(v) > options.crosstalk_tol) {
        offending.emplace_back(labels[static_cast<std::size_t>(r)] + " -> component " + std::to_string(c + 1), v);
      }
    }
  }
  if (!offending.empty()) throw CrosstalkError(std::move(offending));
  model.tag = "extracted";
  model.validate();
  return model;
}

}  // namespace sdexit
