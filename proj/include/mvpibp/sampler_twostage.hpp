#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <vector>

#include "mvpibp/model.hpp"
#include "mvpibp/rng.hpp"

namespace mvpibp::twostage {

// Gaussian approximation to the marginal posterior of one intercept
struct LaplaceMarginal {
  double beta_hat = 0.0;  // posterior mode
  double q = 1.0;         // inverse negative Hessian at the mode
};

// multivariate version for covariate models
struct LaplaceMarginalVec {
  Eigen::VectorXd mode;
  Eigen::MatrixXd q;
};

struct PairPosterior {
  double sigma_hat = 0.0;  // posterior mean on the correlation scale
  double s2 = 0.0;         // posterior variance on the correlation scale
  double zeta_hat = 0.0;   // same moments on the Fisher-z scale
  double zeta_var = 0.0;
  int grid_widenings = 0;
};

struct PairCounts {
  int n11 = 0, n10 = 0, n01 = 0, n00 = 0;
  int n() const { return n11 + n10 + n01 + n00; }
};

struct PairOptions {
  int nodes = 40;
  double halfwidth_sds = 6.0;  // grid = [-h*omega, h*omega]
  bool gh_integration = false;  // integrate the betas over their pseudo-posteriors
  int max_widenings = 4;
};

// Newton Laplace fit of the intercept-only probit posterior from sufficient
// statistics (n observations, n1 successes); prior beta ~ N(mu, tau^2)
LaplaceMarginal laplace_beta_counts(int n, int n1, double mu, double tau);

LaplaceMarginal laplace_beta(const Eigen::Ref<const Eigen::Matrix<std::uint8_t, Eigen::Dynamic, 1>>& y_col,
                             double mu, double tau);

// probit regression Laplace fit: rows of w are covariate vectors
LaplaceMarginalVec laplace_probit(const Eigen::MatrixXd& w,
                                  const Eigen::Matrix<std::uint8_t, Eigen::Dynamic, 1>& y,
                                  const Eigen::VectorXd& prior_mean,
                                  const Eigen::MatrixXd& prior_cov);

// Posterior of zeta = fisher_z(sigma_jj') on a Gauss-Legendre grid against the
// bivariate-probit composite likelihood at the plug-in Laplace means (or the
// 3-point Gauss-Hermite integrated likelihood), times the N(0, omega^2) prior.
PairPosterior pair_sigma_posterior(const PairCounts& counts, const LaplaceMarginal& lm1,
                                   const LaplaceMarginal& lm2, double omega,
                                   const PairOptions& opts = {});

struct TwoStagePriors {
  double a_alpha = 1.0, b_alpha = 1.0;
  double a_omega = 2.0, b_omega = 1.0;
  double w0 = 1.0;  // common-rho prior sd on the Fisher-z scale
  // flat ablation: beta_j ~ N(flat_mu, flat_tau^2), alpha not updated
  bool flat = false;
  double flat_mu = 0.0, flat_tau = 10.0;
};

struct TwoStageConfig {
  int iterations = 200;
  int discard = -1;  // -1 -> iterations/4
  std::uint64_t seed = 1;
  PairOptions pair;
  bool store_pairs = false;
  int threads = 0;
  int effective_discard() const { return discard < 0 ? iterations / 4 : discard; }
};

struct TwoStageOutput {
  Eigen::MatrixXd beta_draws;   // B x P (intercepts)
  Eigen::MatrixXd pi_draws;     // Phi(beta)
  Eigen::VectorXd alpha_draws;  // B (empty when not updated)
  Eigen::VectorXd omega2_draws;
  Eigen::VectorXd rho_draws;  // common-rho variant
  // streaming first/second moments of the sigma draws, pair-indexed j < j'
  Eigen::VectorXd sigma_sum;
  Eigen::VectorXd sigma_sumsq;
  std::optional<Eigen::MatrixXd> sigma_draws;
  // covariate mode
  Eigen::MatrixXd gamma_draws;  // B x q
  Eigen::MatrixXd psi_draws;    // B x q*q, row-major flats
  Eigen::MatrixXd b_mean_sum;   // P x q accumulated slope draws
  int P = 0;
  int n_pairs = 0;
  int stored = 0;
  double acceptance_alpha = 0.0;
  double acceptance_rho = 0.0;

  static int pair_index(int j, int k, int P);  // j < k
  Eigen::MatrixXd sigma_posterior_mean() const;
};

TwoStageOutput run_hierarchical(const FeatureMatrix& y, int P, const TwoStagePriors& priors,
                                const TwoStageConfig& cfg);

TwoStageOutput run_common_rho(const FeatureMatrix& y, int P, const TwoStagePriors& priors,
                              const TwoStageConfig& cfg);

TwoStageOutput run_covariate(const FeatureMatrix& y, const Eigen::MatrixXd& x, int P,
                             const NiwPrior& niw, const TwoStagePriors& priors,
                             const TwoStageConfig& cfg);

// random-walk MH step on log alpha against Ga(a,b) x prod_j N(beta_j; mu_P(alpha), tau_P^2)
double alpha_mh_step(double alpha, double sum_beta, double sum_beta_sq, int P, double tau_p,
                     double a_alpha, double b_alpha, double step_sd, RngStream& rng,
                     bool* accepted = nullptr);

// omega^2 ~ IG(P(P-1)/2 + a_omega, sum zeta^2 / 2 + b_omega)
double omega2_conjugate_draw(int n_pairs, double sum_zeta_sq, double a_omega, double b_omega,
                             RngStream& rng);

// conjugate normal-inverse-Wishart update from the P species coefficient
// draws (the paper indexes the count by q; the observation count here is P)
struct NiwPosterior {
  Eigen::VectorXd gamma_n;
  double iota_n = 0.0;
  double d_n = 0.0;
  Eigen::MatrixXd xi_n;
};
NiwPosterior niw_update(const Eigen::MatrixXd& slopes, const NiwPrior& prior);
// draw (gamma, Psi): Psi ~ IW(d_n, xi_n) by Bartlett, gamma | Psi ~ N(gamma_n, Psi/iota_n)
std::pair<Eigen::VectorXd, Eigen::MatrixXd> niw_draw(const NiwPosterior& post, RngStream& rng);

}  // namespace mvpibp::twostage
