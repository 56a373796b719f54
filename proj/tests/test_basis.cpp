#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <random>

#include "sdexit/basis.hpp"

using namespace sdexit;

namespace {

// Independent binomial for the expected term count.
std::size_t binom(int n, int k) {
  if (k < 0 || k > n) return 0;
  std::size_t r = 1;
  for (int i = 1; i <= k; ++i) r = r * static_cast<std::size_t>(n - k + i) / static_cast<std::size_t>(i);
  return r;
}

// Naive monomial evaluation, independent of the power-table path.
double naive_monomial(const Monomial& m, const std::vector<double>& x) {
  double v = 1.0;
  for (std::size_t i = 0; i < x.size(); ++i)
    for (int e = 0; e < m.exponents[i]; ++e) v *= x[i];
  return v;
}

}  // namespace

TEST_CASE("constant basis for n=1, d=0", "[basis]") {
  BasisSpec spec{1, 0, {}};
  const auto terms = enumerate_terms(spec);
  REQUIRE(terms.size() == 1);
  REQUIRE(terms[0].exponents == std::vector<int>{0});
  REQUIRE(term_label(terms[0]) == "1");
}

TEST_CASE("2-d degree-5 basis has 21 terms in table order", "[basis]") {
  BasisSpec spec{2, 5, {}};
  const auto terms = enumerate_terms(spec);
  REQUIRE(terms.size() == 21);
  // Printed row order of the degree-5 tables.
  const std::vector<std::string> expected = {
      "1",   "x",    "y",    "x^2",   "xy",    "y^2",  "x^3",  "x^2y", "xy^2", "y^3",  "x^4",
      "x^3y", "x^2y^2", "xy^3", "y^4", "x^5", "x^4y", "x^3y^2", "x^2y^3", "xy^4", "y^5"};
  std::vector<std::string> got;
  for (const auto& t : terms) got.push_back(term_label(t));
  REQUIRE(got == expected);
}

TEST_CASE("3-d degree-4 basis has 35 terms; order matches the table", "[basis]") {
  BasisSpec spec{3, 4, {}};
  const auto terms = enumerate_terms(spec);
  REQUIRE(terms.size() == 35);
  REQUIRE(term_label(terms[0]) == "1");
  REQUIRE(term_label(terms[1]) == "x");
  REQUIRE(term_label(terms[2]) == "y");
  REQUIRE(term_label(terms[3]) == "z");
  REQUIRE(term_label(terms[4]) == "x^2");
  REQUIRE(term_label(terms[5]) == "xy");
  REQUIRE(term_label(terms[6]) == "xz");
  REQUIRE(term_label(terms[7]) == "y^2");
  REQUIRE(term_label(terms[8]) == "yz");
  REQUIRE(term_label(terms[9]) == "z^2");
  REQUIRE(term_label(terms[34]) == "z^4");
}

TEST_CASE("term count is C(n+d, d) and ordering is deterministic", "[basis]") {
  for (int n = 1; n <= 4; ++n) {
    for (int d = 0; d <= 6; ++d) {
      BasisSpec spec{n, d, {}};
      const auto a = enumerate_terms(spec);
      const auto b = enumerate_terms(spec);
      REQUIRE(a.size() == binom(n + d, d));
      for (std::size_t i = 0; i < a.size(); ++i) REQUIRE(a[i].exponents == b[i].exponents);
    }
  }
}

TEST_CASE("design row at the origin is the first unit vector", "[basis]") {
  BasisSpec spec{2, 5, {NoiseColumn{0, {}}, NoiseColumn{1, {}}}};
  const std::vector<double> state{0.0, 0.0};
  const std::vector<double> rates{0.0, 0.0};
  const Vec row = eval_design_row(spec, state, rates);
  REQUIRE(row.size() == 23);
  REQUIRE(row(0) == 1.0);
  for (Eigen::Index i = 1; i < row.size(); ++i) REQUIRE(row(i) == 0.0);
}

TEST_CASE("design row of all-ones state", "[basis]") {
  BasisSpec spec{2, 2, {}};
  const std::vector<double> state{1.0, 1.0};
  const Vec row = eval_design_row(spec, state);
  REQUIRE(row.size() == 6);
  for (Eigen::Index i = 0; i < 6; ++i) REQUIRE(row(i) == 1.0);
}

TEST_CASE("xy^2 entry at state (2,3) is 18", "[basis]") {
  BasisSpec spec{2, 3, {}};
  const auto terms = enumerate_terms(spec);
  const std::vector<double> state{2.0, 3.0};
  const Vec row = eval_design_row(spec, state);
  bool found = false;
  for (std::size_t t = 0; t < terms.size(); ++t) {
    if (term_label(terms[t]) == "xy^2") {
      REQUIRE(row(static_cast<Eigen::Index>(t)) == 18.0);
      found = true;
    }
  }
  REQUIRE(found);
}

TEST_CASE("multiplicative noise columns scale the rate by the state", "[basis]") {
  BasisSpec spec{2, 1, {NoiseColumn{0, 0}, NoiseColumn{1, 1}}};
  const std::vector<double> state{2.0, -3.0};
  const std::vector<double> rates{5.0, 7.0};
  const Vec row = eval_design_row(spec, state, rates);
  REQUIRE(row.size() == 5);
  REQUIRE(row(3) == Catch::Approx(10.0));
  REQUIRE(row(4) == Catch::Approx(-21.0));
}

TEST_CASE("dimension mismatches are rejected", "[basis]") {
  BasisSpec spec{2, 2, {NoiseColumn{0, {}}}};
  const std::vector<double> bad_state{1.0};
  REQUIRE_THROWS_AS(eval_design_row(spec, bad_state), std::invalid_argument);
  const std::vector<double> state{1.0, 2.0};
  REQUIRE_THROWS_AS(eval_design_row(spec, state, {}), std::invalid_argument);
  Vec coeffs = Vec::Zero(3);
  REQUIRE_THROWS_AS(eval_polynomial(coeffs, spec, state), std::invalid_argument);
}

TEST_CASE("zero coefficients evaluate to zero", "[basis]") {
  BasisSpec spec{3, 3, {}};
  const Vec coeffs = Vec::Zero(static_cast<Eigen::Index>(spec.polynomial_count()));
  const std::vector<double> state{1.3, -2.4, 0.7};
  REQUIRE(eval_polynomial(coeffs, spec, state) == 0.0);
}

TEST_CASE("linear drift coefficients reproduce -0.1x - 2y at (1,1)", "[basis]") {
  BasisSpec spec{2, 2, {}};
  const auto terms = enumerate_terms(spec);
  Vec coeffs = Vec::Zero(static_cast<Eigen::Index>(terms.size()));
  for (std::size_t t = 0; t < terms.size(); ++t) {
    if (term_label(terms[t]) == "x") coeffs(static_cast<Eigen::Index>(t)) = -0.1;
    if (term_label(terms[t]) == "y") coeffs(static_cast<Eigen::Index>(t)) = -2.0;
  }
  const std::vector<double> state{1.0, 1.0};
  REQUIRE(eval_polynomial(coeffs, spec, state) == Catch::Approx(-2.1).epsilon(1e-14));
}

TEST_CASE("polynomial evaluation matches a naive term-by-term oracle", "[basis]") {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> unif(-2.0, 2.0);
  for (int n = 1; n <= 3; ++n) {
    BasisSpec spec{n, 4, {}};
    const auto terms = enumerate_terms(spec);
    Vec coeffs(static_cast<Eigen::Index>(terms.size()));
    for (Eigen::Index i = 0; i < coeffs.size(); ++i) coeffs(i) = unif(rng);
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<double> x(static_cast<std::size_t>(n));
      for (auto& v : x) v = unif(rng);
      double expected = 0.0;
      for (std::size_t t = 0; t < terms.size(); ++t)
        expected += coeffs(static_cast<Eigen::Index>(t)) * naive_monomial(terms[t], x);
      const double got = eval_polynomial(coeffs, spec, x);
      REQUIRE(got == Catch::Approx(expected).epsilon(1e-12).margin(1e-12));
      // The design row restricted to polynomial columns agrees too.
      const Vec row = eval_design_row(spec, x);
      for (std::size_t t = 0; t < terms.size(); ++t)
        REQUIRE(row(static_cast<Eigen::Index>(t)) ==
                Catch::Approx(naive_monomial(terms[t], x)).epsilon(1e-12).margin(1e-12));
    }
  }
}

TEST_CASE("labels round-trip through the parser", "[basis]") {
  BasisSpec spec{3, 4, {NoiseColumn{0, {}}, NoiseColumn{1, 1}, NoiseColumn{2, {}}}};
  const auto labels = basis_labels(spec);
  REQUIRE(labels.size() == 38);
  const auto terms = enumerate_terms(spec);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    Monomial mono;
    NoiseColumn nc;
    bool is_noise = false;
    REQUIRE(parse_basis_label(labels[i], 3, mono, nc, is_noise));
    if (i < terms.size()) {
      REQUIRE_FALSE(is_noise);
      REQUIRE(mono.exponents == terms[i].exponents);
    } else {
      REQUIRE(is_noise);
      const auto& expected = spec.noise_columns[i - terms.size()];
      REQUIRE(nc.noise_index == expected.noise_index);
      REQUIRE(nc.state_multiplier == expected.state_multiplier);
    }
  }
}
