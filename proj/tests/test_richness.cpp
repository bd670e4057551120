#include <Eigen/Dense>
#include <cmath>

#include "doctest.h"
#include "mvpibp/richness.hpp"
#include "mvpibp/rng.hpp"

using namespace mvpibp;
using namespace mvpibp::richness;

TEST_SUITE_BEGIN("richness");

TEST_CASE("expected richness closed forms") {
  Eigen::VectorXd zero = Eigen::VectorXd::Zero(5);
  for (int n : {1, 3, 10}) CHECK(expected_richness(zero, n) == 0.0);

  Eigen::VectorXd one(1);
  one << 1.0;
  CHECK(expected_richness(one, 3) == doctest::Approx(1.0));

  Eigen::VectorXd half(2);
  half << 0.5, 0.5;
  CHECK(expected_richness(half, 1) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(expected_richness(half, 2) == doctest::Approx(1.5).epsilon(1e-14));

  Eigen::VectorXd bad(1);
  bad << 1.5;
  CHECK_THROWS_AS(expected_richness(bad, 3), std::invalid_argument);
}

TEST_CASE("expected richness is monotone in n and bounded by P") {
  RngStream rng(61);
  for (int trial = 0; trial < 20; ++trial) {
    const int P = 1 + static_cast<int>(rng.uniform_int(40));
    Eigen::VectorXd pis(P);
    for (int j = 0; j < P; ++j) pis[j] = rng.uniform();
    double prev = 0.0;
    for (int n = 1; n <= 64; n *= 2) {
      const double v = expected_richness(pis, n);
      CHECK(v >= prev - 1e-12);
      CHECK(v <= P + 1e-12);
      prev = v;
    }
  }
}

TEST_CASE("expected richness matches brute Monte Carlo occupancy") {
  RngStream rng(62);
  for (int cfg = 0; cfg < 20; ++cfg) {
    const int P = 3 + static_cast<int>(rng.uniform_int(25));
    const int n = 1 + static_cast<int>(rng.uniform_int(20));
    Eigen::VectorXd pis(P);
    for (int j = 0; j < P; ++j) pis[j] = rng.uniform() * 0.6;
    const int reps = 4000;
    double s = 0.0, s2 = 0.0;
    for (int r = 0; r < reps; ++r) {
      int occupied = 0;
      for (int j = 0; j < P; ++j) {
        bool seen = false;
        for (int i = 0; i < n && !seen; ++i) seen = rng.bernoulli(pis[j]);
        occupied += seen;
      }
      s += occupied;
      s2 += static_cast<double>(occupied) * occupied;
    }
    const double mean = s / reps;
    const double se = std::sqrt(std::max(s2 / reps - mean * mean, 1e-12) / reps);
    CHECK(std::fabs(expected_richness(pis, n) - mean) < 3.0 * se + 1e-9);
  }
}

TEST_CASE("delta prediction") {
  // degenerate single draw with zero occupancy flags prior-data conflict
  Eigen::MatrixXd pi0 = Eigen::MatrixXd::Zero(1, 4);
  const RichnessForecast fc0 = predict_delta(pi0, 3, 2, 5.0);
  CHECK(fc0.delta_draws.size() == 1);
  CHECK(fc0.delta_draws[0] == doctest::Approx(-5.0));
  CHECK(fc0.delta_median == doctest::Approx(-5.0));

  // single draw equal to the truth reproduces the oracle increment
  Eigen::MatrixXd pi(1, 3);
  pi << 0.2, 0.5, 0.05;
  const double p50 = expected_richness(pi.row(0), 50);
  const RichnessForecast fc = predict_delta(pi, 40, 10, 17.0);
  CHECK(fc.delta_draws[0] == doctest::Approx(p50 - 17.0).epsilon(1e-14));
  CHECK(fc.model_pstar_n0_draws[0] ==
        doctest::Approx(expected_richness(pi.row(0), 40)).epsilon(1e-14));

  CHECK_THROWS_AS(predict_delta(pi, 0, 10, 1.0), std::invalid_argument);
}

TEST_CASE("accumulation curve") {
  // constant draws give a zero-width band
  Eigen::MatrixXd pi = Eigen::MatrixXd::Constant(5, 1, 0.5);
  const auto curve = accumulation_curve(pi, {1, 2, 3, 8});
  for (std::size_t g = 0; g < curve.n_grid.size(); ++g) {
    const double exact = 1.0 - std::pow(0.5, curve.n_grid[g]);
    CHECK(curve.mean[static_cast<Eigen::Index>(g)] == doctest::Approx(exact).epsilon(1e-12));
    CHECK(curve.q025[static_cast<Eigen::Index>(g)] ==
          doctest::Approx(curve.q975[static_cast<Eigen::Index>(g)]).epsilon(1e-12));
  }
  CHECK_THROWS_AS(accumulation_curve(pi, {}), std::invalid_argument);
  CHECK_THROWS_AS(accumulation_curve(pi, {3, 2}), std::invalid_argument);
}

TEST_CASE("quantile helper") {
  Eigen::VectorXd v(5);
  v << 5, 1, 4, 2, 3;
  CHECK(quantile(v, 0.5) == doctest::Approx(3.0));
  CHECK(quantile(v, 0.0) == doctest::Approx(1.0));
  CHECK(quantile(v, 1.0) == doctest::Approx(5.0));
}

TEST_SUITE_END();
