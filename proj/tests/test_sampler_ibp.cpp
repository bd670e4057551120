#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "mvpibp/genprior.hpp"
#include "mvpibp/sampler_ibp.hpp"

using namespace mvpibp;

namespace {

// Geweke z-diagnostic between the first 10% and last 50% of a chain, with
// batch-means standard errors
double geweke_z(const Eigen::VectorXd& chain) {
  const auto n = chain.size();
  const auto na = n / 10;
  const auto nb = n / 2;
  const Eigen::VectorXd a = chain.head(na);
  const Eigen::VectorXd b = chain.tail(nb);
  auto batch_se = [](const Eigen::VectorXd& x) {
    const int nbatch = 20;
    const auto len = x.size() / nbatch;
    Eigen::VectorXd means(nbatch);
    for (int i = 0; i < nbatch; ++i) means[i] = x.segment(i * len, len).mean();
    const double m = means.mean();
    const double v = (means.array() - m).square().sum() / (nbatch - 1);
    return std::sqrt(v / nbatch);
  };
  const double sea = batch_se(a);
  const double seb = batch_se(b);
  return (a.mean() - b.mean()) / std::sqrt(sea * sea + seb * seb);
}

}  // namespace

TEST_SUITE_BEGIN("sampler_ibp");

TEST_CASE("uninformative data reproduces the beta prior mean") {
  // all-zero 1 x 10 matrix, alpha fixed at 1: pi_j | y ~ Beta(0.1, 2)
  FeatureMatrix y = FeatureMatrix::from_matrix(
      Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>::Zero(1, 10));
  McmcConfig mc{6000, 1000, 1, 71};
  const IbpChain chain = fit_ibp(y, 10, 1.0, 1.0, mc, /*fix_alpha=*/true, /*alpha0=*/1.0);
  const double mean = chain.pi_draws.mean();
  const double cells = static_cast<double>(chain.pi_draws.size());
  // Beta(0.1, 2): mean 0.1/2.1; draws across columns are independent
  const double expect = 0.1 / 2.1;
  const double sd = std::sqrt(0.1 * 2.0 / (2.1 * 2.1 * 3.1));
  CHECK(std::fabs(mean - expect) < 3.0 * sd / std::sqrt(cells));
}

TEST_CASE("saturated data: conjugate posterior mean") {
  FeatureMatrix y = FeatureMatrix::from_matrix(
      Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>::Ones(20, 1));
  McmcConfig mc{9000, 1000, 1, 72};
  const IbpChain chain = fit_ibp(y, 1, 1.0, 1.0, mc, true, 1.0);
  // pi | y ~ Beta(alpha/P + 20, 1), mean 21/22
  CHECK(chain.pi_draws.mean() == doctest::Approx(21.0 / 22.0).epsilon(0.002));
}

TEST_CASE("single Gibbs pi-update matches independent Beta draws (KS)") {
  // 2 x 2 toy, first column fully occupied: the pi_1 sweep marginal must be
  // exactly Beta(alpha/P + 2, 1), whose CDF is x^3 at alpha = 2
  Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> m(2, 2);
  m << 1, 0, 1, 0;
  FeatureMatrix y = FeatureMatrix::from_matrix(m);
  McmcConfig mc{101000, 1000, 1, 73};
  const IbpChain chain = fit_ibp(y, 2, 2.0, 1.0, mc, true, 2.0);
  Eigen::VectorXd draws = chain.pi_draws.col(0);
  std::sort(draws.data(), draws.data() + draws.size());
  double dmax = 0.0;
  const auto N = draws.size();
  for (Eigen::Index i = 0; i < N; ++i) {
    const double cdf = std::pow(draws[i], 3.0);
    dmax = std::max(dmax, std::fabs(cdf - (i + 1.0) / N));
    dmax = std::max(dmax, std::fabs(cdf - static_cast<double>(i) / N));
  }
  const double crit = std::sqrt(-std::log(0.0005) / (2.0 * N));
  CHECK(dmax < crit);
}

TEST_CASE("alpha MH kernel has the exact conjugate gamma stationary law") {
  // for fixed pi the target Ga(a,b) prod_j Beta(pi_j; alpha/P, 1) is exactly
  // Ga(a + P, b - sum_j log(pi_j)/P); run the MH kernel alone and compare
  RngStream rng(74);
  const int P = 12;
  Eigen::VectorXd pis(P);
  double sum_log_pi = 0.0;
  for (int j = 0; j < P; ++j) {
    pis[j] = rng.uniform(0.01, 0.9);
    sum_log_pi += std::log(pis[j]);
  }
  const double a = 2.0, b = 1.0;
  const double shape = a + P;
  const double rate = b - sum_log_pi / P;

  double alpha = 1.0;
  const int iters = 400000, burn = 20000;
  double s = 0.0, s2 = 0.0;
  int kept = 0;
  for (int t = 0; t < iters; ++t) {
    alpha = ibp_alpha_mh_step(alpha, sum_log_pi, P, a, b, 0.35, rng);
    if (t >= burn) {
      s += alpha;
      s2 += alpha * alpha;
      ++kept;
    }
  }
  const double mean = s / kept;
  const double var = s2 / kept - mean * mean;
  CHECK(mean == doctest::Approx(shape / rate).epsilon(0.02));
  CHECK(var == doctest::Approx(shape / (rate * rate)).epsilon(0.08));
}

TEST_CASE("generate-and-recover beats the pooled null predictor") {
  int wins = 0;
  const int reps = 20;
  for (int r = 0; r < reps; ++r) {
    RngStream rng(75 + static_cast<std::uint64_t>(r));
    auto [y, pis] = genprior::simulate_ibp_finite(10.0, 300, 80, rng);
    McmcConfig mc{1200, 300, 1, 750 + static_cast<std::uint64_t>(r)};
    const double a_alpha = y.row_counts().cast<double>().mean();
    const IbpChain chain = fit_ibp(y, 300, a_alpha, 1.0, mc);
    const Eigen::VectorXd pihat = chain.pi_draws.colwise().mean();
    const double ybar = y.y.cast<double>().mean();
    const double mse_fit = (pihat - pis).squaredNorm() / pis.size();
    const double mse_null =
        (Eigen::VectorXd::Constant(pis.size(), ybar) - pis).squaredNorm() / pis.size();
    wins += mse_fit < mse_null;
  }
  CHECK(wins >= 19);
}

TEST_CASE("alpha chain is stationary under a centered prior (Geweke |z| < 3)") {
  RngStream rng(76);
  auto [y, pis] = genprior::simulate_ibp_finite(8.0, 200, 60, rng);
  const double mean_ni = y.row_counts().cast<double>().mean();
  McmcConfig mc{21000, 1000, 1, 77};
  const IbpChain chain = fit_ibp(y, 200, mean_ni, 1.0, mc);
  CHECK(std::fabs(geweke_z(chain.alpha_draws)) < 3.0);
  CHECK(chain.acceptance_alpha > 0.15);
  CHECK(chain.acceptance_alpha < 0.7);
}

TEST_CASE("config validation") {
  FeatureMatrix y = FeatureMatrix::from_matrix(
      Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>::Zero(2, 3));
  CHECK_THROWS_AS(fit_ibp(y, 3, 1, 1, McmcConfig{100, 100, 1, 1}), std::invalid_argument);
  CHECK_THROWS_AS(fit_ibp(y, 3, 1, 1, McmcConfig{100, 10, 0, 1}), std::invalid_argument);
  CHECK_THROWS_AS(fit_ibp(y, 2, 1, 1, McmcConfig{100, 10, 1, 1}), std::invalid_argument);
  y.y(0, 0) = 2;
  CHECK_THROWS_AS(fit_ibp(y, 3, 1, 1, McmcConfig{100, 10, 1, 1}), std::invalid_argument);
}

TEST_SUITE_END();
