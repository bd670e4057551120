#include "mvpibp/sampler_ibp.hpp"

#include <cmath>
#include <stdexcept>

namespace mvpibp {

void McmcConfig::validate() const {
  if (burnin < 0 || iterations <= burnin)
    throw std::invalid_argument("mcmc config: need iterations > burnin >= 0");
  if (thin < 1) throw std::invalid_argument("mcmc config: thin >= 1");
}

double ibp_alpha_mh_step(double alpha, double sum_log_pi, int P, double a_alpha, double b_alpha,
                         double step_sd, RngStream& rng, bool* accepted) {
  auto log_target = [&](double a) {
    // Ga(a_alpha, b_alpha) prior x prod_j Beta(pi_j; a/P, 1), plus the
    // log-scale proposal Jacobian folded in by the caller
    return (a_alpha - 1.0) * std::log(a) - b_alpha * a + P * std::log(a / P) +
           (a / P) * sum_log_pi;
  };
  const double prop = alpha * std::exp(step_sd * rng.normal());
  const double log_ratio = log_target(prop) - log_target(alpha) + std::log(prop) - std::log(alpha);
  const bool acc = std::log(rng.uniform()) < log_ratio;
  if (accepted) *accepted = acc;
  return acc ? prop : alpha;
}

IbpChain fit_ibp(const FeatureMatrix& y, int P, double a_alpha, double b_alpha,
                 const McmcConfig& mcmc, bool fix_alpha, double alpha0) {
  mcmc.validate();
  y.validate();
  if (P < static_cast<int>(y.p())) throw std::invalid_argument("fit_ibp: P below observed p");
  const FeatureMatrix yp = y.padded(P);
  const int n = static_cast<int>(yp.n());
  const Eigen::VectorXi nj = yp.column_counts();

  IbpChain chain;
  chain.config = mcmc;
  chain.P = P;
  chain.a_alpha = a_alpha;
  chain.b_alpha = b_alpha;
  const int B = mcmc.stored();
  chain.pi_draws.resize(B, P);
  chain.alpha_draws.resize(B);

  RngStream rng = RngStream::keyed(mcmc.seed, {0x696270ULL});
  double alpha = fix_alpha ? alpha0 : std::max(1e-3, a_alpha / std::max(b_alpha, 1e-12));
  double step_sd = 0.2;
  int acc_count = 0, acc_window = 0, total_acc = 0, total_steps = 0;

  Eigen::VectorXd pis(P);
  int stored = 0;
  for (int t = 0; t < mcmc.iterations; ++t) {
    double sum_log_pi = 0.0;
    for (int j = 0; j < P; ++j) {
      pis[j] = rng.beta(alpha / P + nj[j], 1.0 + n - nj[j]);
      sum_log_pi += std::log(pis[j]);
    }
    if (!fix_alpha) {
      bool acc = false;
      alpha = ibp_alpha_mh_step(alpha, sum_log_pi, P, a_alpha, b_alpha, step_sd, rng, &acc);
      ++total_steps;
      total_acc += acc;
      acc_count += acc;
      ++acc_window;
      if (t < mcmc.burnin && acc_window == 50) {
        const double rate = acc_count / 50.0;
        if (rate > 0.5) step_sd *= 1.1;
        if (rate < 0.3) step_sd /= 1.1;
        acc_count = 0;
        acc_window = 0;
      }
    }
    if (t >= mcmc.burnin && (t - mcmc.burnin) % mcmc.thin == 0 && stored < B) {
      chain.pi_draws.row(stored) = pis;
      chain.alpha_draws[stored] = alpha;
      ++stored;
    }
  }
  chain.acceptance_alpha = total_steps ? static_cast<double>(total_acc) / total_steps : 0.0;
  return chain;
}

}  // namespace mvpibp
