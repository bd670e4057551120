#include <Eigen/Dense>
#include <cmath>

#include "doctest.h"
#include "mvpibp/model.hpp"
#include "mvpibp/numkit.hpp"

using namespace mvpibp;

TEST_SUITE_BEGIN("model");

TEST_CASE("calibrate pins the Eq.-style hyperparameters") {
  // symmetric case: alpha = p gives a zero mean
  {
    const IbpCalibration cal = calibrate(300.0, 300);
    CHECK(std::fabs(cal.mu_p) < 1e-12);
    CHECK(std::fabs(cal.tau_p - 3.3775086897463938455) < 1e-12);
  }
  {
    const IbpCalibration cal = calibrate(10.0, 300);
    CHECK(std::fabs(cal.tau_p - 3.3775086897463938455) < 1e-12);
    CHECK(std::fabs(cal.mu_p - (-6.5115646286497795829)) < 1e-10);
    // invariants
    CHECK(std::fabs(cal.tau_p - std::sqrt(2.0 * std::log(300.0))) < 1e-12);
    CHECK(std::fabs(cal.mu_p - std::sqrt(1.0 + cal.tau_p * cal.tau_p) *
                                   numkit::std_normal_quantile(10.0 / 310.0)) < 1e-10);
  }
  {
    const IbpCalibration cal = calibrate(2.0, 100);
    CHECK(std::fabs(numkit::owen_probit_integral(cal.mu_p, cal.tau_p) - 2.0 / 102.0) < 1e-10);
  }
  CHECK_THROWS_AS(calibrate(0.0, 100), std::invalid_argument);
  CHECK_THROWS_AS(calibrate(-1.0, 100), std::invalid_argument);
  CHECK_THROWS_AS(calibrate(5.0, 1), std::invalid_argument);
}

TEST_CASE("calibrate monotonicity and the Owen identity on a grid") {
  double prev = -1e300;
  for (double a : {0.5, 1.0, 2.0, 5.0, 10.0, 50.0, 200.0}) {
    const IbpCalibration cal = calibrate(a, 500);
    CHECK(cal.mu_p > prev);
    prev = cal.mu_p;
    CHECK(std::fabs(numkit::owen_probit_integral(cal.mu_p, cal.tau_p) * (a + 500.0) / a - 1.0) <
          1e-8);
  }
  prev = 1e300;
  for (int p : {10, 30, 100, 300, 1000, 10000}) {
    const IbpCalibration cal = calibrate(5.0, p);
    CHECK(cal.mu_p < prev);
    prev = cal.mu_p;
    CHECK(std::fabs(numkit::owen_probit_integral(cal.mu_p, cal.tau_p) * (5.0 + p) / 5.0 - 1.0) <
          1e-8);
  }
}

TEST_CASE("marginal probability is the probit link") {
  CHECK(marginal_prob(0.0) == 0.5);
  CHECK(marginal_prob(-6.512) == doctest::Approx(numkit::std_normal_cdf(-6.512)).epsilon(1e-15));
  CHECK(std::fabs(marginal_prob(1.281551565544600467) - 0.9) < 1e-12);
}

TEST_CASE("equicorrelation positive definiteness matches the analytic bound") {
  const int p = 5;
  // eigenvalues are 1 + (p-1) rho and 1 - rho
  CHECK(equicorrelation_pd(-0.2499, p));
  CHECK_FALSE(equicorrelation_pd(-0.2501, p));
  CHECK_FALSE(equicorrelation_pd(1.0, p));
  CHECK(equicorrelation_pd(0.999, p));
  // cross-check with a dense Cholesky at the boundary
  for (double rho : {-0.26, -0.24, 0.3, 0.9}) {
    Eigen::MatrixXd s = Eigen::MatrixXd::Constant(p, p, rho);
    s.diagonal().setOnes();
    Eigen::LLT<Eigen::MatrixXd> llt(s);
    CHECK((llt.info() == Eigen::Success) == equicorrelation_pd(rho, p));
    const double lam1 = 1.0 + (p - 1) * rho;
    const double lam2 = 1.0 - rho;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s);
    CHECK(es.eigenvalues().minCoeff() == doctest::Approx(std::min(lam1, lam2)).epsilon(1e-10));
    CHECK(es.eigenvalues().maxCoeff() == doctest::Approx(std::max(lam1, lam2)).epsilon(1e-10));
  }
}

TEST_CASE("feature matrix validation") {
  FeatureMatrix fm = FeatureMatrix::from_matrix(
      Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>::Zero(3, 4));
  fm.y(1, 2) = 1;
  fm.validate();
  CHECK(fm.richness() == 1);
  CHECK(fm.column_counts()(2) == 1);
  CHECK(fm.row_counts()(1) == 1);

  FeatureMatrix padded = fm.padded(6);
  padded.validate();
  CHECK(padded.p() == 6);
  CHECK(padded.richness() == 1);
  CHECK_THROWS_AS(fm.padded(2), std::invalid_argument);

  fm.y(0, 0) = 2;
  CHECK_THROWS_AS(fm.validate(), std::invalid_argument);
  fm.y(0, 0) = 0;
  fm.sample_ids.pop_back();
  CHECK_THROWS_AS(fm.validate(), std::invalid_argument);
}

TEST_CASE("cusp hyperparameter validation") {
  CuspHyper ok;
  ok.validate();
  CuspHyper bad = ok;
  bad.theta_inf = 2.0;  // spike above the slab mean b/a = 1
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = ok;
  bad.kappa = 0.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("covariate design validation") {
  CovariateDesign d;
  d.x = Eigen::MatrixXd::Random(6, 2);
  d.validate();
  NiwPrior niw;
  niw.gamma0 = Eigen::VectorXd::Zero(2);
  niw.d = 4.0;
  niw.xi = Eigen::MatrixXd::Identity(2, 2);
  d.prior = niw;
  d.validate();
  niw.d = 0.5;  // needs d > q - 1
  d.prior = niw;
  CHECK_THROWS_AS(d.validate(), std::invalid_argument);
}

TEST_SUITE_END();
