#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "mvpibp/numkit.hpp"

namespace mvpibp {

// n x p binary occurrence matrix with row/column labels
struct FeatureMatrix {
  Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> y;
  std::vector<std::string> sample_ids;
  std::vector<std::string> feature_ids;

  Eigen::Index n() const { return y.rows(); }
  Eigen::Index p() const { return y.cols(); }

  // throws std::invalid_argument on any violated invariant
  void validate() const;

  Eigen::VectorXi column_counts() const;  // n_j
  Eigen::VectorXi row_counts() const;     // n_i
  int richness() const;                   // p* = # nonempty columns

  // widen with all-zero padding columns up to target_p (labels pad_k)
  FeatureMatrix padded(Eigen::Index target_p) const;

  static FeatureMatrix from_matrix(
      Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> m);
};

// hyperparameter bundle tying alpha to the probit intercept prior:
//   tau_p = sqrt(2 log p),  mu_p = sqrt(1 + tau_p^2) * Phi^-1(alpha/(alpha+p))
struct IbpCalibration {
  double alpha = 1.0;
  int p = 2;
  double mu_p = 0.0;
  double tau_p = 1.0;
};

IbpCalibration calibrate(double alpha, int p);

// recompute mu_p for a new alpha at fixed truncation p
double calibrated_mu(double alpha, int p);

// pr(y = 1 | beta) = Phi(beta)
double marginal_prob(double beta);

using numkit::fisher_z;
using numkit::fisher_z_inv;

struct CuspHyper {
  double a_theta = 2.0;
  double b_theta = 2.0;
  double theta_inf = 0.05;
  double kappa = 5.0;

  void validate() const;
};

// correlation-model priors for the samplers
struct IdentityCorr {};
struct CommonRhoCorr {
  double rho = 0.0;  // current / fixed value
  double w0 = 1.0;   // prior sd of the Fisher-z of rho
};
struct HierarchicalZCorr {
  double a_omega = 2.0;
  double b_omega = 1.0;
};
struct FactorCorr {
  int k_max = 30;
  CuspHyper cusp;
};
using CorrelationModel = std::variant<IdentityCorr, CommonRhoCorr, HierarchicalZCorr, FactorCorr>;

// fully-specified correlation structures for the generative simulators
struct FixedIdentity {};
struct FixedEquicorrelation {
  double rho = 0.0;
};
struct FixedLowRank {
  Eigen::MatrixXd loadings;
};
using FixedCorrelation = std::variant<FixedIdentity, FixedEquicorrelation, FixedLowRank>;

// equicorrelation matrices are PD iff rho > -1/(p-1) (and rho < 1)
bool equicorrelation_pd(double rho, int p);

// covariate block: X and the prior on the species coefficients b_j
struct IndependentNormalPrior {
  double psi = 1.0;  // b_j ~ N_q(0, psi I)
};
struct NiwPrior {
  Eigen::VectorXd gamma0;
  double iota = 1.0;
  double d = 3.0;
  Eigen::MatrixXd xi;
};
struct CovariateDesign {
  Eigen::MatrixXd x;  // n x q
  std::variant<IndependentNormalPrior, NiwPrior> prior = IndependentNormalPrior{};

  Eigen::Index q() const { return x.cols(); }
  void validate() const;
};

}  // namespace mvpibp
