#pragma once

#include <Eigen/Dense>
#include <optional>
#include <utility>
#include <vector>

#include "mvpibp/model.hpp"
#include "mvpibp/rng.hpp"

namespace mvpibp::genprior {

struct PriorDraw {
  FeatureMatrix matrix;
  Eigen::VectorXd betas;  // beta_j (the scaled coefficients where that applies)
  Eigen::VectorXd pis;    // Phi(beta_j)
  std::optional<Eigen::MatrixXd> latent;  // z, kept on request only
};

// sequential buffet scheme; column count is random
FeatureMatrix simulate_ibp_sequential(double alpha, int n, RngStream& rng);

// truncated beta-Bernoulli representation: pi_j ~ Beta(alpha/P, 1)
std::pair<FeatureMatrix, Eigen::VectorXd> simulate_ibp_finite(double alpha, int P, int n,
                                                              RngStream& rng);

PriorDraw simulate_mvpibp(const IbpCalibration& cal, const FixedCorrelation& corr, int n,
                          RngStream& rng, bool keep_latent = false);

// z_ij = beta_j + x_i^T b_j + eps_ij with b_j ~ N_q(gamma, Psi) drawn here
PriorDraw simulate_covariate_mvpibp(const IbpCalibration& cal, const FixedCorrelation& corr,
                                    const Eigen::MatrixXd& x, const Eigen::VectorXd& gamma,
                                    const Eigen::MatrixXd& psi, RngStream& rng,
                                    bool keep_latent = false);

// Marginal feature counts n_i: each replicate draws fresh betas (and b_j when
// covariates are present), i.e. samples from the marginal law of one row.
Eigen::VectorXi simulate_marginal_counts(const IbpCalibration& cal, const FixedCorrelation& corr,
                                         int replicates, std::uint64_t seed, int threads = 0);

Eigen::VectorXi simulate_covariate_marginal_counts(const IbpCalibration& cal,
                                                   const FixedCorrelation& corr,
                                                   const Eigen::VectorXd& x_row,
                                                   const Eigen::VectorXd& gamma,
                                                   const Eigen::MatrixXd& psi, int replicates,
                                                   std::uint64_t seed, int threads = 0);

// common-feature counts c^(eps) over fresh prior draws of beta (and b)
Eigen::VectorXi simulate_common_counts(const IbpCalibration& cal, double eps, int replicates,
                                       std::uint64_t seed);
Eigen::VectorXi simulate_covariate_common_counts(const IbpCalibration& cal, double eps,
                                                 const Eigen::VectorXd& x_row,
                                                 const Eigen::VectorXd& gamma,
                                                 const Eigen::MatrixXd& psi, int replicates,
                                                 std::uint64_t seed);

// richness p* over fresh prior draws at identity Sigma (n rows each)
Eigen::VectorXi simulate_pstar_replicates(const IbpCalibration& cal, int n, int replicates,
                                          std::uint64_t seed, int threads = 0);

// ---- exact integer summaries -------------------------------------------

Eigen::VectorXi features_per_sample(const FeatureMatrix& y);
int richness(const FeatureMatrix& y);
int common_count(const Eigen::VectorXd& pis, double eps);

// ---- closed-form limit oracles -----------------------------------------

double harmonic_number(long n);

// lim E(c^(eps)) = alpha exp{-Phi^-1(eps) - 1/2}
double oracle_expected_common(double alpha, double eps);
// IBP counterpart -alpha log eps
double oracle_expected_common_ibp(double alpha, double eps);
// (alpha (H_n - 0.073), alpha (H_n - 0.02))
std::pair<double, double> oracle_pstar_bounds(double alpha, long n);
// limiting var(n_i) bounds over a finite correlation set
std::pair<double, double> oracle_variance_bounds(double alpha, const std::vector<double>& rhos);
// covariate-adjusted limits
double oracle_covariate_mean(double alpha, const Eigen::VectorXd& x, const Eigen::VectorXd& gamma,
                             const Eigen::MatrixXd& psi);
double oracle_covariate_common(double alpha, double eps, const Eigen::VectorXd& x,
                               const Eigen::VectorXd& gamma, const Eigen::MatrixXd& psi);

// ---- exact finite-truncation expectations (diagnostics for the limit
//      oracles; everything here is at the model's truncation level) -------

double exact_cell_prob(const IbpCalibration& cal);  // alpha/(alpha+p), via the Owen identity
double exact_common_expectation(const IbpCalibration& cal, double eps);
double exact_pstar_expectation(const IbpCalibration& cal, int n);
double exact_covariate_mean(const IbpCalibration& cal, const Eigen::VectorXd& x,
                            const Eigen::VectorXd& gamma, const Eigen::MatrixXd& psi);
double exact_covariate_common(const IbpCalibration& cal, double eps, const Eigen::VectorXd& x,
                              const Eigen::VectorXd& gamma, const Eigen::MatrixXd& psi);

}  // namespace mvpibp::genprior
