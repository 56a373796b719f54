#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace sdexit {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// A single monomial x1^e1 * ... * xn^en.
struct Monomial {
  std::vector<int> exponents;

  int degree() const {
    int d = 0;
    for (int e : exponents) d += e;
    return d;
  }
};

/// One Brownian-rate column of the regression library. Without a state
/// multiplier the column is dB_k/dt (additive noise); with one it is
/// x_j * dB_k/dt (diagonal multiplicative noise).
struct NoiseColumn {
  int noise_index = 0;
  std::optional<int> state_multiplier;
};

/// Polynomial library up to total degree max_degree in state_dim variables,
/// optionally extended with Brownian-rate columns. Term order is graded
/// lexicographic (degree blocks; within a block x-major descending), which
/// is the order every coefficient table in this toolkit uses.
struct BasisSpec {
  int state_dim = 0;
  int max_degree = 0;
  std::vector<NoiseColumn> noise_columns;

  std::size_t polynomial_count() const {
    // C(n + d, d)
    std::size_t num = 1;
    for (int i = 1; i <= state_dim; ++i) {
      num = num * static_cast<std::size_t>(max_degree + i) / static_cast<std::size_t>(i);
    }
    return num;
  }

  std::size_t column_count() const { return polynomial_count() + noise_columns.size(); }

  void validate() const {
    if (state_dim < 1) throw std::invalid_argument("basis: state_dim must be >= 1");
    if (max_degree < 0) throw std::invalid_argument("basis: max_degree must be >= 0");
    for (const auto& nc : noise_columns) {
      if (nc.noise_index < 0)
        throw std::invalid_argument("basis: noise_index must be non-negative");
      if (nc.state_multiplier && (*nc.state_multiplier < 0 || *nc.state_multiplier >= state_dim))
        throw std::invalid_argument("basis: state_multiplier out of range");
    }
  }
};

namespace detail {

inline void enumerate_degree(int dim, int remaining, std::vector<int>& stack,
                             std::vector<Monomial>& out) {
  if (dim == 1) {
    stack.push_back(remaining);
    out.push_back(Monomial{stack});
    stack.pop_back();
    return;
  }
  for (int e = remaining; e >= 0; --e) {
    stack.push_back(e);
    enumerate_degree(dim - 1, remaining - e, stack, out);
    stack.pop_back();
  }
}

inline const char* variable_name(int i, int dim) {
  static const char* xyz[3] = {"x", "y", "z"};
  if (dim <= 3) return xyz[i];
  return nullptr;  // caller formats x1..xn
}

}  // namespace detail

/// All monomials of total degree <= spec.max_degree, in the documented order.
inline std::vector<Monomial> enumerate_terms(const BasisSpec& spec) {
  spec.validate();
  std::vector<Monomial> terms;
  terms.reserve(spec.polynomial_count());
  std::vector<int> stack;
  for (int d = 0; d <= spec.max_degree; ++d) {
    detail::enumerate_degree(spec.state_dim, d, stack, terms);
  }
  return terms;
}

/// Human-readable label ("1", "x", "x^2y", ...) matching the printed
/// coefficient-table row names.
inline std::string term_label(const Monomial& m) {
  const int dim = static_cast<int>(m.exponents.size());
  std::string out;
  for (int i = 0; i < dim; ++i) {
    const int e = m.exponents[i];
    if (e == 0) continue;
    std::string var;
    if (const char* v = detail::variable_name(i, dim)) {
      var = v;
    } else {
      var = "x" + std::to_string(i + 1);
      if (!out.empty()) out += "*";
    }
    out += var;
    if (e > 1) out += "^" + std::to_string(e);
  }
  if (out.empty()) return "1";
  return out;
}

inline std::string noise_label(const NoiseColumn& nc, int state_dim) {
  std::string out;
  if (nc.state_multiplier) {
    if (const char* v = detail::variable_name(*nc.state_multiplier, state_dim)) {
      out += v;
    } else {
      out += "x" + std::to_string(*nc.state_multiplier + 1) + "*";
    }
  }
  out += "dB" + std::to_string(nc.noise_index + 1) + "/dt";
  return out;
}

/// Labels for every row of a coefficient table over this basis:
/// polynomial terms first, then noise columns.
inline std::vector<std::string> basis_labels(const BasisSpec& spec) {
  std::vector<std::string> labels;
  for (const auto& m : enumerate_terms(spec)) labels.push_back(term_label(m));
  for (const auto& nc : spec.noise_columns) labels.push_back(noise_label(nc, spec.state_dim));
  return labels;
}

/// Inverse of term_label/noise_label for table round-trips.
inline bool parse_basis_label(const std::string& label, int state_dim, Monomial& mono,
                              NoiseColumn& noise, bool& is_noise) {
  auto var_index = [&](char c) -> int {
    if (state_dim <= 3) {
      if (c == 'x') return 0;
      if (c == 'y') return 1;
      if (c == 'z') return 2;
    }
    return -1;
  };
  const auto db = label.find("dB");
  if (db != std::string::npos) {
    is_noise = true;
    noise = NoiseColumn{};
    std::string head = label.substr(0, db);
    if (!head.empty() && head.back() == '*') head.pop_back();
    if (!head.empty()) {
      if (head.size() == 1 && var_index(head[0]) >= 0) {
        noise.state_multiplier = var_index(head[0]);
      } else if (head.size() > 1 && head[0] == 'x') {
        noise.state_multiplier = std::stoi(head.substr(1)) - 1;
      } else {
        return false;
      }
    }
    const auto slash = label.find('/', db);
    if (slash == std::string::npos) return false;
    noise.noise_index = std::stoi(label.substr(db + 2, slash - db - 2)) - 1;
    return true;
  }
  is_noise = false;
  mono.exponents.assign(state_dim, 0);
  if (label == "1") return true;
  std::size_t i = 0;
  while (i < label.size()) {
    if (label[i] == '*') {
      ++i;
      continue;
    }
    int vi;
    if (state_dim <= 3) {
      vi = var_index(label[i]);
      if (vi < 0) return false;
      ++i;
    } else {
      if (label[i] != 'x') return false;
      std::size_t j = i + 1;
      while (j < label.size() && std::isdigit(static_cast<unsigned char>(label[j]))) ++j;
      vi = std::stoi(label.substr(i + 1, j - i - 1)) - 1;
      i = j;
    }
    int e = 1;
    if (i < label.size() && label[i] == '^') {
      std::size_t j = i + 1;
      while (j < label.size() && std::isdigit(static_cast<unsigned char>(label[j]))) ++j;
      e = std::stoi(label.substr(i + 1, j - i - 1));
      i = j;
    }
    if (vi < 0 || vi >= state_dim) return false;
    mono.exponents[vi] += e;
  }
  return true;
}

namespace detail {

/// Power table: pw(i, e) = state[i]^e for e <= max_degree.
inline void fill_powers(const BasisSpec& spec, std::span<const double> state, Mat& pw) {
  pw.resize(spec.state_dim, spec.max_degree + 1);
  for (int i = 0; i < spec.state_dim; ++i) {
    pw(i, 0) = 1.0;
    for (int e = 1; e <= spec.max_degree; ++e) pw(i, e) = pw(i, e - 1) * state[i];
  }
}

}  // namespace detail

/// One row of the regression design matrix: monomial values at `state`
/// followed by the Brownian-rate entries. `noise_rates` holds dB_k/dt per
/// channel; pass an empty span when the basis has no noise columns.
inline Vec eval_design_row(const BasisSpec& spec, std::span<const double> state,
                           std::span<const double> noise_rates = {}) {
  spec.validate();
  if (static_cast<int>(state.size()) != spec.state_dim)
    throw std::invalid_argument("eval_design_row: state dimension mismatch");
  if (!spec.noise_columns.empty()) {
    int max_channel = 0;
    for (const auto& nc : spec.noise_columns) max_channel = std::max(max_channel, nc.noise_index + 1);
    if (static_cast<int>(noise_rates.size()) < max_channel)
      throw std::invalid_argument("eval_design_row: missing noise rates");
  }
  const auto terms = enumerate_terms(spec);
  Vec row(spec.column_count());
  Mat pw;
  detail::fill_powers(spec, state, pw);
  for (std::size_t t = 0; t < terms.size(); ++t) {
    double v = 1.0;
    for (int i = 0; i < spec.state_dim; ++i) v *= pw(i, terms[t].exponents[i]);
    row(static_cast<Eigen::Index>(t)) = v;
  }
  for (std::size_t c = 0; c < spec.noise_columns.size(); ++c) {
    const auto& nc = spec.noise_columns[c];
    double v = noise_rates[static_cast<std::size_t>(nc.noise_index)];
    if (nc.state_multiplier) v *= state[static_cast<std::size_t>(*nc.state_multiplier)];
    row(static_cast<Eigen::Index>(terms.size() + c)) = v;
  }
  return row;
}

/// Sum of coeffs[t] * state^terms[t] over the polynomial part of the basis.
inline double eval_polynomial(const Vec& coeffs, const BasisSpec& spec,
                              std::span<const double> state) {
  spec.validate();
  if (static_cast<std::size_t>(coeffs.size()) != spec.polynomial_count())
    throw std::invalid_argument("eval_polynomial: coefficient length mismatch");
  if (static_cast<int>(state.size()) != spec.state_dim)
    throw std::invalid_argument("eval_polynomial: state dimension mismatch");
  const auto terms = enumerate_terms(spec);
  Mat pw;
  detail::fill_powers(spec, state, pw);
  double acc = 0.0;
  for (std::size_t t = 0; t < terms.size(); ++t) {
    double v = coeffs(static_cast<Eigen::Index>(t));
    for (int i = 0; i < spec.state_dim; ++i) v *= pw(i, terms[t].exponents[i]);
    acc += v;
  }
  return acc;
}

}  // namespace sdexit
