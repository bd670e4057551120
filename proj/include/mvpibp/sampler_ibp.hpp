#pragma once

#include <Eigen/Dense>
#include <cstdint>

#include "mvpibp/model.hpp"
#include "mvpibp/rng.hpp"

namespace mvpibp {

// shared MCMC run settings: `iterations` counts total sweeps including
// burn-in; (iterations - burnin)/thin draws are stored
struct McmcConfig {
  int iterations = 2500;
  int burnin = 500;
  int thin = 1;
  std::uint64_t seed = 1;

  int stored() const { return (iterations - burnin) / thin; }
  void validate() const;
};

struct IbpChain {
  Eigen::MatrixXd pi_draws;     // B x P
  Eigen::VectorXd alpha_draws;  // B
  McmcConfig config;
  int P = 0;
  double a_alpha = 1.0, b_alpha = 1.0;
  double acceptance_alpha = 0.0;
};

// Truncated beta-Bernoulli Gibbs: pi_j | rest ~ Beta(alpha/P + n_j, 1 + n - n_j)
// including the padded all-zero columns; alpha by random-walk MH on log alpha
// against Ga(alpha; a, b) * prod_j Beta(pi_j; alpha/P, 1).
IbpChain fit_ibp(const FeatureMatrix& y, int P, double a_alpha, double b_alpha,
                 const McmcConfig& mcmc, bool fix_alpha = false, double alpha0 = 1.0);

// one MH step on log alpha; exposed for the exact-conjugacy kernel test
double ibp_alpha_mh_step(double alpha, double sum_log_pi, int P, double a_alpha, double b_alpha,
                         double step_sd, RngStream& rng, bool* accepted = nullptr);

}  // namespace mvpibp
