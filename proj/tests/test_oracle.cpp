#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "sdexit/oracle.hpp"
#include "sdexit/pde.hpp"

using namespace sdexit;

namespace {

// Brownian motion in x only (sigma = (1,0,0), zero drift) inside
// [0,L] x [-50,50]^2: the classical 1-d exit problem in disguise.
SdeModel brownian_x() {
  SdeModel m;
  m.state_dim = 3;
  m.noise_dim = 3;
  m.drift = PolynomialDrift(BasisSpec{3, 0, {}}, Mat::Zero(1, 3));
  m.diffusion.kind = DiffusionKind::Additive;
  Vec s(3);
  s << 1.0, 0.0, 0.0;
  m.diffusion.intensities = s;
  m.tag = "brownian-x";
  return m;
}

Domain slab_domain(double L) {
  auto built = build_cuboid_domain({{{0, L}, {-50, 50}, {-50, 50}}}, CuboidOptions{{5, 5, 5}});
  return built.domain;
}

Vec vec3(double a, double b, double c) {
  Vec v(3);
  v << a, b, c;
  return v;
}

}  // namespace

TEST_CASE("1-d Brownian benchmark: mean exit time x(L-x)", "[oracle]") {
  const double L = 1.0, x = 0.3;
  const Domain dom = slab_domain(L);
  const SdeModel m = brownian_x();
  const ExitEstimate est = estimate_exit(m, dom, vec3(x, 0, 0), 10000, 1e-4, 50.0, 11);
  const double exact = x * (L - x);  // solves (1/2) u'' = -1, u(0) = u(L) = 0
  REQUIRE(est.censored == 0);
  // Three standard errors plus the reported crossing-bias scale (|grad u| <= L).
  const double tol = 3.0 * est.exit_time_stderr + est.crossing_bias_scale * L;
  REQUIRE(std::abs(est.mean_exit_time - exact) < tol);
  // Exit probabilities through the two x faces: p(xhi) = x / L.
  REQUIRE(std::abs(est.gamma_frequency[1] - x / L) <
          3.0 * est.gamma_stderr[1] + est.crossing_bias_scale);
  REQUIRE(est.gamma_frequency[2] == 0.0);  // never reaches the roomy y faces
  // The exit-time bias of naive crossing detection is one-sided upward.
  REQUIRE(est.mean_exit_time > exact - 3.0 * est.exit_time_stderr);
}

TEST_CASE("frequencies plus censored fraction sum to one exactly", "[oracle]") {
  const Domain dom = slab_domain(1.0);
  const SdeModel m = brownian_x();
  // Short horizon forces censoring.
  const ExitEstimate est = estimate_exit(m, dom, vec3(0.5, 0, 0), 2000, 1e-4, 0.05, 3);
  REQUIRE(est.censored > 0);
  double total = static_cast<double>(est.censored) / static_cast<double>(est.paths);
  for (double f : est.gamma_frequency) total += f;
  REQUIRE(total == 1.0);
}

TEST_CASE("estimates are deterministic under a fixed seed", "[oracle]") {
  const Domain dom = slab_domain(1.0);
  const SdeModel m = brownian_x();
  const ExitEstimate a = estimate_exit(m, dom, vec3(0.4, 0, 0), 3000, 1e-3, 20.0, 17);
  const ExitEstimate b = estimate_exit(m, dom, vec3(0.4, 0, 0), 3000, 1e-3, 20.0, 17);
  REQUIRE(a.mean_exit_time == b.mean_exit_time);
  REQUIRE(a.gamma_frequency == b.gamma_frequency);
  REQUIRE(a.censored == b.censored);
}

TEST_CASE("confidence intervals shrink like 1/sqrt(N)", "[oracle]") {
  const Domain dom = slab_domain(1.0);
  const SdeModel m = brownian_x();
  const ExitEstimate small = estimate_exit(m, dom, vec3(0.5, 0, 0), 2000, 1e-3, 50.0, 23);
  const ExitEstimate large = estimate_exit(m, dom, vec3(0.5, 0, 0), 8000, 1e-3, 50.0, 29);
  REQUIRE(large.exit_time_stderr <= 0.6 * small.exit_time_stderr);
}

TEST_CASE("coarse stepping trips the dt-sensitivity flag", "[oracle]") {
  const Domain dom = slab_domain(1.0);
  const SdeModel m = brownian_x();
  const ExitEstimate est = estimate_exit(m, dom, vec3(0.5, 0, 0), 20000, 0.01, 50.0, 5, true);
  REQUIRE(est.dt_check_done);
  REQUIRE(est.dt_sensitive);         // bias ~ 0.58 sqrt(dt) |grad u| >> stderr here
  REQUIRE(est.dt_half_shift > 0.0);  // halving dt reduces the overestimate
}

TEST_CASE("exterior start points are rejected", "[oracle]") {
  const Domain dom = slab_domain(1.0);
  const SdeModel m = brownian_x();
  REQUIRE_THROWS_AS(estimate_exit(m, dom, vec3(1.5, 0, 0), 100, 1e-3, 1.0, 1),
                    std::invalid_argument);
}

TEST_CASE("average escape with one point reduces to a point estimate", "[oracle]") {
  const Domain dom = slab_domain(1.0);
  const SdeModel m = brownian_x();
  const std::uint64_t seed = 4321;
  const AverageEscapeEstimate avg =
      estimate_average_escape(m, dom, "xhi", 1, 2000, 1e-3, 50.0, seed);
  REQUIRE(avg.starts.size() == 1);
  const ExitEstimate direct =
      estimate_exit(m, dom, avg.starts[0], 2000, 1e-3, 50.0, derive_stream_seed(seed, 1));
  REQUIRE(avg.value == direct.gamma_frequency[1]);
  REQUIRE(avg.point_frequencies[0] == direct.gamma_frequency[1]);
}

TEST_CASE("average escape through the whole boundary is one", "[oracle]") {
  const Domain dom = slab_domain(1.0);
  const SdeModel m = brownian_x();
  const AverageEscapeEstimate lo =
      estimate_average_escape(m, dom, "xlo", 20, 500, 1e-3, 100.0, 9);
  const AverageEscapeEstimate hi =
      estimate_average_escape(m, dom, "xhi", 20, 500, 1e-3, 100.0, 9);
  // Same seed, same starts and paths; every path exits through one x face.
  REQUIRE(lo.value + hi.value == 1.0);
}

TEST_CASE("linear3d: Monte Carlo agrees with the PDE at a probe point", "[oracle]") {
  auto built = build_cuboid_domain({{{-2, 2}, {-2, 2}, {0, 1}}}, CuboidOptions{{64, 64, 64}});
  auto grid = std::make_shared<GridDiscretization>(std::move(built.grid));
  const SdeModel lin = make_builtin("linear3d", 0.9);
  const FieldSolution u = mean_residence_time(lin, grid);
  const FieldSolution p = escape_probability(lin, grid, "zhi");

  const Vec x0 = vec3(0.0, 0.0, 0.5);  // a grid node (even spacings)
  const ExitEstimate est = estimate_exit(lin, grid->domain, x0, 20000, 2e-5, 20.0, 31);
  const double u_pde = grid->interpolate(u.node_values, x0);
  const double p_pde = grid->interpolate(p.node_values, x0);
  double hmax = 0.0;
  for (int a = 0; a < 3; ++a) hmax = std::max(hmax, grid->spacing[a]);

  const double u_tol = 2.5758 * est.exit_time_stderr + 3.0 * hmax * hmax * u.max_value +
                       est.crossing_bias_scale;
  REQUIRE(std::abs(u_pde - est.mean_exit_time) < u_tol);
  const double p_tol = 2.5758 * est.gamma_stderr[5] + 3.0 * hmax * hmax +
                       2.0 * est.crossing_bias_scale;
  REQUIRE(std::abs(p_pde - est.gamma_frequency[5]) < p_tol);
}
