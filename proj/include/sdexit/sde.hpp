#pragma once

#include <cmath>
#include <cstdint>
#include <mutex>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "sdexit/basis.hpp"
#include "sdexit/parallel.hpp"
#include "sdexit/rng.hpp"

namespace sdexit {

// ---------------------------------------------------------------------------
// Bickley jet stream function
// ---------------------------------------------------------------------------

/// Parameters of the meandering-jet stream function
///   psi(x, y) = -tanh(y) + amplitude * sech(y)^2 * cos(k x) + c y
/// with c = (1 + sqrt(1 - 3 beta / 2)) / 3 and k = sqrt(6 c).
struct JetParams {
  double amplitude = 0.01;
  double beta = 1.0 / 3.0;

  void validate() const {
    if (beta < 0.0 || beta > 2.0 / 3.0)
      throw std::invalid_argument("jet: beta must lie in [0, 2/3]");
  }
  double c() const {
    validate();
    return (1.0 + std::sqrt(1.0 - 1.5 * beta)) / 3.0;
  }
  double k() const { return std::sqrt(6.0 * c()); }
};

struct JetEval {
  double psi, psi_x, psi_y;
};

struct JetEval2 {
  double psi, psi_x, psi_y, psi_xx, psi_xy, psi_yy;
};

inline JetEval2 jet_stream_function2(double x, double y, const JetParams& p) {
  const double c = p.c();
  const double k = p.k();
  const double a = p.amplitude;
  const double t = std::tanh(y);
  const double s2 = 1.0 - t * t;  // sech(y)^2
  const double ck = std::cos(k * x);
  const double sk = std::sin(k * x);
  JetEval2 e;
  e.psi = -t + a * s2 * ck + c * y;
  e.psi_x = -a * k * s2 * sk;
  e.psi_y = -s2 - 2.0 * a * ck * s2 * t + c;
  e.psi_xx = -a * k * k * s2 * ck;
  e.psi_xy = 2.0 * a * k * s2 * t * sk;
  e.psi_yy = 2.0 * s2 * t - 2.0 * a * ck * s2 * (s2 - 2.0 * t * t);
  return e;
}

inline JetEval jet_stream_function(double x, double y, const JetParams& p) {
  const JetEval2 e = jet_stream_function2(x, y, p);
  return JetEval{e.psi, e.psi_x, e.psi_y};
}

// ---------------------------------------------------------------------------
// Model representation
// ---------------------------------------------------------------------------

enum class DiffusionKind { Additive, DiagonalMultiplicative };

/// Diagonal diffusion: additive sigma(x)_kk = intensities[k], multiplicative
/// sigma(x)_kk = intensities[k] * x_k. Off-diagonal entries are zero.
struct DiffusionSpec {
  DiffusionKind kind = DiffusionKind::Additive;
  Vec intensities;
};

/// Drift given by per-component polynomials over a shared basis (the form
/// produced by learning).
struct PolynomialDrift {
  BasisSpec basis;               // only the polynomial part is used
  Mat coefficients;              // polynomial_count x state_dim
  std::vector<Monomial> terms;   // cached enumerate_terms(basis)

  PolynomialDrift() = default;
  PolynomialDrift(BasisSpec b, Mat coeffs) : basis(std::move(b)), coefficients(std::move(coeffs)) {
    terms = enumerate_terms(basis);
    if (coefficients.rows() != static_cast<Eigen::Index>(terms.size()) ||
        coefficients.cols() != basis.state_dim)
      throw std::invalid_argument("PolynomialDrift: coefficient shape mismatch");
  }

  void eval(const double* x, double* out) const {
    double pw[3][16];
    const int n = basis.state_dim;
    for (int i = 0; i < n; ++i) {
      pw[i][0] = 1.0;
      for (int e = 1; e <= basis.max_degree; ++e) pw[i][e] = pw[i][e - 1] * x[i];
    }
    for (int c = 0; c < n; ++c) out[c] = 0.0;
    for (std::size_t t = 0; t < terms.size(); ++t) {
      double v = 1.0;
      for (int i = 0; i < n; ++i) v *= pw[i][terms[t].exponents[i]];
      for (int c = 0; c < n; ++c) out[c] += v * coefficients(static_cast<Eigen::Index>(t), c);
    }
  }
};

/// Closed-form jet drift (-psi_y, psi_x); used for the "true" systems so exit
/// statistics are free of drift-approximation error.
struct JetDrift {
  JetParams params;
  void eval(const double* x, double* out) const {
    const JetEval e = jet_stream_function(x[0], x[1], params);
    out[0] = -e.psi_y;
    out[1] = e.psi_x;
  }
};

struct Linear3dDrift {
  void eval(const double* x, double* out) const {
    out[0] = -0.1 * x[0] - 2.0 * x[1];
    out[1] = 2.0 * x[0] - 0.1 * x[1];
    out[2] = -0.3 * x[2];
  }
};

struct LorenzDrift {
  double sigma = 10.0, rho = 28.0, beta = 8.0 / 3.0;
  void eval(const double* x, double* out) const {
    out[0] = sigma * (x[1] - x[0]);
    out[1] = rho * x[0] - x[0] * x[2] - x[1];
    out[2] = x[0] * x[1] - beta * x[2];
  }
};

using DriftField = std::variant<PolynomialDrift, JetDrift, Linear3dDrift, LorenzDrift>;

struct SdeModel {
  int state_dim = 0;
  int noise_dim = 0;
  DriftField drift;
  DiffusionSpec diffusion;
  std::string tag;

  void validate() const {
    if (state_dim < 1) throw std::invalid_argument("SdeModel: state_dim must be >= 1");
    if (diffusion.intensities.size() != noise_dim)
      throw std::invalid_argument("SdeModel: diffusion channel count mismatch");
    if (noise_dim != state_dim && noise_dim != 0)
      throw std::invalid_argument("SdeModel: diagonal diffusion requires noise_dim == state_dim");
    if (const auto* p = std::get_if<PolynomialDrift>(&drift)) {
      if (p->basis.state_dim != state_dim)
        throw std::invalid_argument("SdeModel: drift basis dimension mismatch");
    }
  }

  void drift_at(const double* x, double* out) const {
    std::visit([&](const auto& d) { d.eval(x, out); }, drift);
  }

  Vec drift_at(const Vec& x) const {
    Vec out(state_dim);
    drift_at(x.data(), out.data());
    return out;
  }

  /// sigma(x)_kk for channel k.
  double sigma_entry(int k, const double* x) const {
    const double s = diffusion.intensities(k);
    return diffusion.kind == DiffusionKind::Additive ? s : s * x[k];
  }
};

/// Built-in benchmark systems. `noise` is the intensity sigma for the jet
/// models and the intensity epsilon (variance rate, sigma = sqrt(epsilon))
/// for the 3-d models, following each system's customary parameterization.
inline SdeModel make_builtin(const std::string& name, double noise, JetParams jet = {}) {
  SdeModel m;
  auto additive = [](int dim, double s) {
    DiffusionSpec d;
    d.kind = DiffusionKind::Additive;
    d.intensities = Vec::Constant(dim, s);
    return d;
  };
  if (name == "jet-additive" || name == "jet-multiplicative") {
    if (noise < 0.0 || noise >= 1.0)
      throw std::invalid_argument("make_builtin: jet noise intensity must lie in [0, 1)");
    jet.validate();
    m.state_dim = m.noise_dim = 2;
    m.drift = JetDrift{jet};
    m.diffusion = additive(2, noise);
    if (name == "jet-multiplicative") m.diffusion.kind = DiffusionKind::DiagonalMultiplicative;
  } else if (name == "linear3d") {
    if (noise < 0.0) throw std::invalid_argument("make_builtin: epsilon must be >= 0");
    m.state_dim = m.noise_dim = 3;
    m.drift = Linear3dDrift{};
    m.diffusion = additive(3, std::sqrt(noise));
  } else if (name == "lorenz") {
    if (noise < 0.0) throw std::invalid_argument("make_builtin: epsilon must be >= 0");
    m.state_dim = m.noise_dim = 3;
    m.drift = LorenzDrift{};
    m.diffusion = additive(3, std::sqrt(noise));
  } else {
    throw std::invalid_argument("make_builtin: unknown model '" + name + "'");
  }
  m.tag = name;
  m.validate();
  return m;
}

// ---------------------------------------------------------------------------
// Simulation
// ---------------------------------------------------------------------------

/// Gaussian increments dB ~ N(0, dt), one row per step.
struct BrownianPath {
  double dt = 0.0;
  Mat increments;  // steps x channels

  int steps() const { return static_cast<int>(increments.rows()); }
  int channels() const { return static_cast<int>(increments.cols()); }
};

inline BrownianPath sample_brownian(int steps, int channels, double dt, std::uint64_t seed) {
  if (steps < 1 || channels < 1) throw std::invalid_argument("sample_brownian: bad shape");
  if (!(dt > 0.0)) throw std::invalid_argument("sample_brownian: dt must be positive");
  BrownianPath path;
  path.dt = dt;
  path.increments.resize(steps, channels);
  GaussianStream g(seed);
  const double s = std::sqrt(dt);
  for (int i = 0; i < steps; ++i)
    for (int k = 0; k < channels; ++k) path.increments(i, k) = s * g.normal();
  return path;
}

struct TrajectoryRecord {
  Vec times;          // steps + 1
  Mat states;         // (steps + 1) x state_dim
  BrownianPath path;  // the increments that generated the states
  std::string model_tag;

  int steps() const { return static_cast<int>(states.rows()) - 1; }
  int state_dim() const { return static_cast<int>(states.cols()); }
};

/// Thrown when a simulated state leaves the finite range; `step` is the
/// first offending step.
struct BlowupError : std::runtime_error {
  std::size_t step;
  explicit BlowupError(std::size_t s)
      : std::runtime_error("simulation blew up at step " + std::to_string(s)), step(s) {}
};

inline TrajectoryRecord euler_maruyama(const SdeModel& model, const Vec& x0,
                                       const BrownianPath& path) {
  model.validate();
  if (x0.size() != model.state_dim)
    throw std::invalid_argument("euler_maruyama: initial condition dimension mismatch");
  if (path.channels() != model.noise_dim)
    throw std::invalid_argument("euler_maruyama: path channel count mismatch");
  const int T = path.steps();
  const double dt = path.dt;
  TrajectoryRecord rec;
  rec.times.resize(T + 1);
  rec.states.resize(T + 1, model.state_dim);
  rec.path = path;
  rec.model_tag = model.tag;
  rec.states.row(0) = x0.transpose();
  rec.times(0) = 0.0;
  // states is column-major; step through a contiguous copy of the state.
  std::vector<double> x(x0.data(), x0.data() + x0.size());
  std::vector<double> b(static_cast<std::size_t>(model.state_dim));
  for (int i = 0; i < T; ++i) {
    model.drift_at(x.data(), b.data());
    for (int c = 0; c < model.state_dim; ++c) {
      double v = x[static_cast<std::size_t>(c)] + b[static_cast<std::size_t>(c)] * dt;
      if (c < model.noise_dim) v += model.sigma_entry(c, x.data()) * path.increments(i, c);
      if (!std::isfinite(v)) throw BlowupError(static_cast<std::size_t>(i));
      b[static_cast<std::size_t>(c)] = v;  // reuse as next-state scratch
    }
    for (int c = 0; c < model.state_dim; ++c) {
      x[static_cast<std::size_t>(c)] = b[static_cast<std::size_t>(c)];
      rec.states(i + 1, c) = x[static_cast<std::size_t>(c)];
    }
    rec.times(i + 1) = (i + 1) * dt;
  }
  return rec;
}

/// Independent members, one seed-derived Brownian stream each: member i is a
/// pure function of (seed, i) so results do not depend on scheduling.
inline std::vector<TrajectoryRecord> simulate_ensemble(const SdeModel& model,
                                                       const std::vector<Vec>& x0s, int steps,
                                                       double dt, std::uint64_t seed) {
  std::vector<TrajectoryRecord> out(x0s.size());
  std::exception_ptr failure;
  std::mutex failure_mutex;
  parallel_for(x0s.size(), [&](std::size_t i) {
    try {
      const BrownianPath p = sample_brownian(steps, model.noise_dim, dt, derive_stream_seed(seed, i));
      out[i] = euler_maruyama(model, x0s[i], p);
    } catch (...) {
      std::lock_guard<std::mutex> lock(failure_mutex);
      if (!failure) failure = std::current_exception();
    }
  });
  if (failure) std::rethrow_exception(failure);
  return out;
}

}  // namespace sdexit
