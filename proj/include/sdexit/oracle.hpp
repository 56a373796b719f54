#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "sdexit/grid.hpp"
#include "sdexit/parallel.hpp"

namespace sdexit {

/// Monte Carlo exit statistics from one start point. Frequencies are over
/// all paths, so per-Gamma frequencies plus the censored fraction sum to 1;
/// censored paths are excluded from the exit-time mean.
struct ExitEstimate {
  Vec start;
  std::size_t paths = 0;
  double dt = 0.0;
  double horizon = 0.0;
  double mean_exit_time = 0.0;
  double exit_time_stderr = 0.0;
  std::vector<double> gamma_frequency;
  std::vector<double> gamma_stderr;
  std::size_t censored = 0;
  /// Barrier-shift length of naive discrete crossing detection,
  /// 0.5826 * max_k |sigma_kk(start)| * sqrt(dt); the induced exit-time bias
  /// is one-sided (residence time is overestimated).
  double crossing_bias_scale = 0.0;
  bool dt_check_done = false;
  bool dt_sensitive = false;   // halving dt moved the mean by > 1 stderr
  double dt_half_shift = 0.0;
};

namespace detail {

struct PathOutcome {
  double time = 0.0;
  int label = -1;  // -1: censored
};

template <class Drift>
inline void run_exit_paths(const SdeModel& model, const Drift& drift, const Domain& domain,
                           const Vec& x0, double dt, std::int64_t max_steps, std::uint64_t seed,
                           std::vector<PathOutcome>& out) {
  const int n = model.state_dim;
  const bool mult = model.diffusion.kind == DiffusionKind::DiagonalMultiplicative;
  const double* intens = model.diffusion.intensities.data();
  const int m = model.noise_dim;
  const double sqdt = std::sqrt(dt);
  std::exception_ptr failure;
  std::mutex failure_mutex;
  parallel_for(out.size(), [&](std::size_t pi) {
    try {
      GaussianStream g(derive_stream_seed(seed, pi));
      double x[3], xn[3], b[3];
      for (int c = 0; c < n; ++c) x[c] = x0(c);
      PathOutcome res;
      for (std::int64_t step = 0; step < max_steps; ++step) {
        drift.eval(x, b);
        for (int c = 0; c < n; ++c) {
          double v = x[c] + b[c] * dt;
          if (c < m) {
            const double s = mult ? intens[c] * x[c] : intens[c];
            v += s * sqdt * g.normal();
          }
          xn[c] = v;
        }
        for (int c = 0; c < n; ++c)
          if (!std::isfinite(xn[c])) throw BlowupError(static_cast<std::size_t>(step));
        if (!domain.contains(xn)) {
          res.time = static_cast<double>(step + 1) * dt;
          res.label = domain.label_for_exit(x, xn);
          break;
        }
        for (int c = 0; c < n; ++c) x[c] = xn[c];
      }
      out[pi] = res;
    } catch (...) {
      std::lock_guard<std::mutex> lock(failure_mutex);
      if (!failure) failure = std::current_exception();
    }
  });
  if (failure) std::rethrow_exception(failure);
}

inline ExitEstimate reduce_outcomes(const Domain& domain, const Vec& x0,
                                    const std::vector<PathOutcome>& outcomes, double dt,
                                    double horizon) {
  ExitEstimate est;
  est.start = x0;
  est.paths = outcomes.size();
  est.dt = dt;
  est.horizon = horizon;
  const std::size_t labels = domain.gamma_names.size();
  std::vector<std::size_t> counts(labels, 0);
  double sum = 0.0, sumsq = 0.0;
  std::size_t exited = 0;
  for (const auto& o : outcomes) {
    if (o.label < 0) {
      ++est.censored;
      continue;
    }
    ++counts[static_cast<std::size_t>(o.label)];
    ++exited;
    sum += o.time;
    sumsq += o.time * o.time;
  }
  if (exited > 0) {
    est.mean_exit_time = sum / static_cast<double>(exited);
    if (exited > 1) {
      const double var =
          (sumsq - sum * sum / static_cast<double>(exited)) / static_cast<double>(exited - 1);
      est.exit_time_stderr = std::sqrt(std::max(0.0, var) / static_cast<double>(exited));
    }
  }
  est.gamma_frequency.resize(labels);
  est.gamma_stderr.resize(labels);
  const double np = static_cast<double>(est.paths);
  for (std::size_t l = 0; l < labels; ++l) {
    const double f = static_cast<double>(counts[l]) / np;
    est.gamma_frequency[l] = f;
    est.gamma_stderr[l] = std::sqrt(f * (1.0 - f) / np);
  }
  return est;
}

}  // namespace detail

/// Euler paths from x0 until the first step lands outside the domain.
/// Exit detection is naive (first state outside); the reported
/// crossing_bias_scale bounds the induced barrier shift. With check_dt the
/// run is repeated at dt/2 and flagged when the mean moves by more than one
/// standard error.
inline ExitEstimate estimate_exit(const SdeModel& model, const Domain& domain, const Vec& x0,
                                  std::size_t n_paths, double dt, double horizon,
                                  std::uint64_t seed, bool check_dt = false) {
  model.validate();
  if (model.state_dim != domain.dim)
    throw std::invalid_argument("estimate_exit: model/domain dimension mismatch");
  if (x0.size() != domain.dim || !domain.contains(x0.data()))
    throw std::invalid_argument("estimate_exit: start point is not interior");
  if (n_paths < 2) throw std::invalid_argument("estimate_exit: need at least 2 paths");
  if (!(dt > 0.0) || !(horizon > dt)) throw std::invalid_argument("estimate_exit: bad dt/horizon");

  const std::int64_t max_steps = static_cast<std::int64_t>(std::ceil(horizon / dt));
  std::vector<detail::PathOutcome> outcomes(n_paths);
  std::visit(
      [&](const auto& drift_impl) {
        detail::run_exit_paths(model, drift_impl, domain, x0, dt, max_steps, seed, outcomes);
      },
      model.drift);
  ExitEstimate est = detail::reduce_outcomes(domain, x0, outcomes, dt, horizon);
  double smax = 0.0;
  for (int k = 0; k < model.noise_dim; ++k)
    smax = std::max(smax, std::abs(model.sigma_entry(k, x0.data())));
  est.crossing_bias_scale = 0.5826 * smax * std::sqrt(dt);

  if (check_dt) {
    std::vector<detail::PathOutcome> half(n_paths);
    const std::uint64_t seed2 = derive_stream_seed(seed, 0xD7D7);
    std::visit(
        [&](const auto& drift_impl) {
          detail::run_exit_paths(model, drift_impl, domain, x0, dt * 0.5, 2 * max_steps, seed2,
                                 half);
        },
        model.drift);
    const ExitEstimate est2 = detail::reduce_outcomes(domain, x0, half, dt * 0.5, horizon);
    est.dt_check_done = true;
    est.dt_half_shift = est.mean_exit_time - est2.mean_exit_time;
    est.dt_sensitive = std::abs(est.dt_half_shift) > est.exit_time_stderr;
  }
  return est;
}

struct AverageEscapeEstimate {
  double value = 0.0;
  double ci99 = 0.0;
  std::size_t points = 0;
  std::size_t paths_per_point = 0;
  std::vector<Vec> starts;
  std::vector<double> point_frequencies;
};

/// Average escape probability through `gamma` for starts uniformly
/// distributed over the domain: rejection-samples n_points interior starts
/// and averages the per-start exit frequencies.
inline AverageEscapeEstimate estimate_average_escape(const SdeModel& model, const Domain& domain,
                                                     const std::string& gamma,
                                                     std::size_t n_points, std::size_t n_paths,
                                                     double dt, double horizon,
                                                     std::uint64_t seed) {
  if (n_points < 1) throw std::invalid_argument("estimate_average_escape: need n_points >= 1");
  const int gi = domain.gamma_index(gamma);

  std::array<double, 3> lo{}, hi{};
  if (domain.is_eddy()) {
    const EddyDomain& e = domain.eddy();
    lo = {e.x_left, e.y_lo, 0.0};
    hi = {e.x_right, e.y_hi, 0.0};
  } else {
    for (int a = 0; a < domain.dim; ++a) {
      lo[static_cast<std::size_t>(a)] = domain.cuboid().bounds[static_cast<std::size_t>(a)][0];
      hi[static_cast<std::size_t>(a)] = domain.cuboid().bounds[static_cast<std::size_t>(a)][1];
    }
  }

  AverageEscapeEstimate avg;
  avg.points = n_points;
  avg.paths_per_point = n_paths;
  GaussianStream sampler(derive_stream_seed(seed, 0xA11E));
  std::size_t attempts = 0;
  while (avg.starts.size() < n_points) {
    if (++attempts > 1000 * n_points + 1000)
      throw NumericalError("estimate_average_escape: rejection sampling failed");
    Vec p(domain.dim);
    for (int a = 0; a < domain.dim; ++a)
      p(a) = lo[static_cast<std::size_t>(a)] +
             sampler.uniform01() * (hi[static_cast<std::size_t>(a)] - lo[static_cast<std::size_t>(a)]);
    if (domain.contains(p.data())) avg.starts.push_back(std::move(p));
  }

  double sum = 0.0, sumsq = 0.0;
  double within = 0.0;
  for (std::size_t i = 0; i < n_points; ++i) {
    const ExitEstimate e = estimate_exit(model, domain, avg.starts[i], n_paths, dt, horizon,
                                         derive_stream_seed(seed, 1 + i));
    const double f = e.gamma_frequency[static_cast<std::size_t>(gi)];
    avg.point_frequencies.push_back(f);
    sum += f;
    sumsq += f * f;
    within += e.gamma_stderr[static_cast<std::size_t>(gi)] *
              e.gamma_stderr[static_cast<std::size_t>(gi)];
  }
  const double p = static_cast<double>(n_points);
  avg.value = sum / p;
  double se;
  if (n_points > 1) {
    const double var = (sumsq - sum * sum / p) / (p - 1.0);
    se = std::sqrt(std::max(0.0, var) / p);
  } else {
    se = std::sqrt(within) / p;
  }
  avg.ci99 = 2.5758293035489004 * se;
  return avg;
}

}  // namespace sdexit
