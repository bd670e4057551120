#pragma once

#include <Eigen/Dense>
#include <optional>

#include "mvpibp/model.hpp"
#include "mvpibp/rng.hpp"
#include "mvpibp/sampler_ibp.hpp"  // McmcConfig

namespace mvpibp::factor {

struct FactorHyper {
  CuspHyper cusp;
  double a_alpha = 1.0, b_alpha = 1.0;
  int k_max = 30;
};

struct FactorConfig {
  McmcConfig mcmc;
  bool adapt = true;
  int adapt_start = 200;
  double adapt_c0 = 1.0;
  double adapt_c1 = 5e-4;
  // beta/beta-tilde bookkeeping: default evolves unscaled beta and back-scales
  // after the scaled conditional draw; the comparison variant feeds the
  // unscaled z-bar into the same formula and skips the back-scaling
  bool scale_in_cycle = false;
  // Metropolis correction on the lambda rows for the prior-on-scaled-beta
  // factor the conjugate update drops
  bool exact_prior_correction = true;
  int threads = 0;
};

struct FactorState {
  Eigen::MatrixXd z;        // n x P latents
  Eigen::MatrixXd eta;      // n x K factors
  Eigen::MatrixXd lambda;   // P x K loadings
  Eigen::VectorXd beta;     // unscaled intercepts
  Eigen::MatrixXd bcoef;    // P x q covariate slopes (0 x 0 when unused)
  double alpha = 1.0;
  Eigen::VectorXi s;        // CUSP indicators, 1-based labels in {1..K}
  Eigen::VectorXd nu;       // stick fractions
  Eigen::VectorXd omega;    // stick weights
  Eigen::VectorXd theta;    // column scales
  double alpha_step_sd = 0.25;

  int K() const { return static_cast<int>(lambda.cols()); }
  Eigen::VectorXd dscale() const;      // d_j = sqrt(1 + |lambda_j|^2)
  Eigen::VectorXd beta_tilde() const;  // beta / d
  int kstar() const;                   // active columns (S_k > k)
  Eigen::MatrixXd correlation() const; // D^-1 (Lambda Lambda^T + I) D^-1
};

struct FactorChainOutput {
  Eigen::MatrixXd beta_tilde_draws;  // B x P
  Eigen::MatrixXd pi_draws;          // Phi(beta_tilde)
  Eigen::VectorXd alpha_draws;
  Eigen::VectorXi kstar_draws;
  Eigen::MatrixXd sigma_sum;    // running sums of Sigma draws
  Eigen::MatrixXd sigma_sumsq;  // elementwise second moments
  Eigen::MatrixXd b_sum;        // P x q accumulated slope draws
  int stored = 0;
  int P = 0;
  double acceptance_alpha = 0.0;
  double acceptance_lambda = 1.0;  // Metropolis correction acceptance
  McmcConfig config;

  Eigen::MatrixXd sigma_posterior_mean() const;
};

// initial state with K columns; loadings start in the spike
FactorState init_state(const FeatureMatrix& y, int P, const FactorHyper& hyper, int K,
                       std::uint64_t seed, const Eigen::MatrixXd* x = nullptr);

// forward draw of all parameters and data from the generative model
// (toy sizes; used by the successive-conditional correctness test)
FactorState sample_prior_state(int n, int P, const FactorHyper& hyper, int K, RngStream& rng);

// redraw (z, Y) given the current parameters
void regenerate_data(FactorState& st, FeatureMatrix& y, RngStream& rng,
                     const Eigen::MatrixXd* x = nullptr);

struct CycleStats {
  bool alpha_accepted = false;
  int lambda_proposed = 0;
  int lambda_accepted = 0;
};

// one full Gibbs cycle; `iter` keys the per-step RNG sub-streams
CycleStats gibbs_cycle(FactorState& st, const FeatureMatrix& y, const FactorHyper& hyper,
                       const FactorConfig& cfg, int iter, const Eigen::MatrixXd* x = nullptr);

// MH step on log alpha against Ga(a,b) x prod_j N(beta_tilde_j; mu_P(alpha), tau_P^2)
double mh_update_alpha(double alpha, const Eigen::VectorXd& beta_tilde, int P,
                       double a_alpha, double b_alpha, double step_sd, RngStream& rng,
                       bool* accepted = nullptr);

FactorChainOutput fit_factor_mvpibp(const FeatureMatrix& y, int P, const FactorHyper& hyper,
                                    const FactorConfig& cfg,
                                    const Eigen::MatrixXd* x = nullptr,
                                    const Eigen::MatrixXd* psi = nullptr,
                                    const Eigen::VectorXd* gamma = nullptr);

// structured conditional for the scaled intercepts; zv enters as
// b = tau^-2 mu 1 + n Sigma^-1 zv
struct BetaConditional {
  Eigen::VectorXd mean;
  Eigen::VectorXd a_diag;     // precision diagonal tau^-2 + n d_j^2
  Eigen::MatrixXd g;          // V^-1 = diag(a) - g g^T
  Eigen::MatrixXd lw;         // chol of (I - g^T A^-1 g)^-1
  Eigen::VectorXd draw(RngStream& rng) const;
  Eigen::MatrixXd dense_cov() const;  // for the dense-solve equivalence test
};

BetaConditional beta_tilde_conditional(const Eigen::MatrixXd& lambda, double mu_p, double tau_p,
                                       int n, const Eigen::VectorXd& zv);

}  // namespace mvpibp::factor
