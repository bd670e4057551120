#include "mvpibp/sampler_factor.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

#include "mvpibp/parallel.hpp"
#include "mvpibp/sampler_twostage.hpp"

namespace mvpibp::factor {

namespace {

constexpr std::uint64_t kTag = 0x666163ULL;

void stick_break(const Eigen::VectorXd& nu, Eigen::VectorXd& omega) {
  const int K = static_cast<int>(nu.size());
  double carry = 1.0;
  for (int l = 0; l < K; ++l) {
    omega[l] = nu[l] * carry;
    carry *= 1.0 - nu[l];
  }
}

double log_normal_density(double x, double mean, double var) {
  const double d = x - mean;
  return -0.5 * std::log(2.0 * numkit::kPi * var) - 0.5 * d * d / var;
}

// log N_P(lambda_col; 0, theta_inf I)
double log_spike(double ss, int P, double theta_inf) {
  return -0.5 * P * std::log(2.0 * numkit::kPi * theta_inf) - 0.5 * ss / theta_inf;
}

// log t_{2a}(lambda_col; 0, (b/a) I_P), the theta-marginalized slab
double log_slab(double ss, int P, double a, double b) {
  return std::lgamma(a + 0.5 * P) - std::lgamma(a) - 0.5 * P * std::log(2.0 * numkit::kPi * b) -
         (a + 0.5 * P) * std::log1p(ss / (2.0 * b));
}

void check_finite(const FactorState& st, int iter) {
  if (!st.z.allFinite() || !st.eta.allFinite() || !st.lambda.allFinite() ||
      !st.beta.allFinite() || !std::isfinite(st.alpha))
    throw std::runtime_error("factor sampler diverged (non-finite state) at iteration " +
                             std::to_string(iter));
}

}  // namespace

Eigen::VectorXd FactorState::dscale() const {
  return (lambda.rowwise().squaredNorm().array() + 1.0).sqrt().matrix();
}

Eigen::VectorXd FactorState::beta_tilde() const { return beta.cwiseQuotient(dscale()); }

int FactorState::kstar() const {
  int c = 0;
  for (int k = 0; k < K(); ++k)
    if (s[k] > k + 1) ++c;
  return c;
}

Eigen::MatrixXd FactorState::correlation() const {
  const Eigen::VectorXd dinv = dscale().cwiseInverse();
  Eigen::MatrixXd lt = dinv.asDiagonal() * lambda;
  Eigen::MatrixXd sig = lt * lt.transpose();
  sig += Eigen::MatrixXd(dinv.cwiseProduct(dinv).asDiagonal());
  return sig;
}

Eigen::VectorXd BetaConditional::draw(RngStream& rng) const {
  const Eigen::Index P = mean.size();
  const Eigen::Index k = g.cols();
  Eigen::VectorXd e1(P), e2(k);
  for (Eigen::Index i = 0; i < P; ++i) e1[i] = rng.normal();
  for (Eigen::Index i = 0; i < k; ++i) e2[i] = rng.normal();
  const Eigen::VectorXd ainv = a_diag.cwiseInverse();
  return mean + ainv.cwiseSqrt().cwiseProduct(e1) + ainv.asDiagonal() * (g * (lw * e2));
}

Eigen::MatrixXd BetaConditional::dense_cov() const {
  const Eigen::Index P = mean.size();
  Eigen::MatrixXd vinv = Eigen::MatrixXd(a_diag.asDiagonal()) - g * g.transpose();
  return vinv.llt().solve(Eigen::MatrixXd::Identity(P, P));
}

BetaConditional beta_tilde_conditional(const Eigen::MatrixXd& lambda, double mu_p, double tau_p,
                                       int n, const Eigen::VectorXd& zv) {
  const Eigen::Index P = lambda.rows();
  const Eigen::Index k = lambda.cols();
  const double prec = 1.0 / (tau_p * tau_p);
  const Eigen::VectorXd d = (lambda.rowwise().squaredNorm().array() + 1.0).sqrt().matrix();

  // Sigma^-1 v = D (I - Lambda J^-1 Lambda^T) D v, J = I + Lambda^T Lambda
  Eigen::MatrixXd J = Eigen::MatrixXd::Identity(k, k) + lambda.transpose() * lambda;
  Eigen::LLT<Eigen::MatrixXd> jllt(J);
  auto sigma_inv = [&](const Eigen::VectorXd& v) {
    Eigen::VectorXd w = d.cwiseProduct(v);
    Eigen::VectorXd u = w - lambda * jllt.solve(lambda.transpose() * w);
    return Eigen::VectorXd(d.cwiseProduct(u));
  };

  BetaConditional bc;
  bc.a_diag = (prec + static_cast<double>(n) * d.array().square()).matrix();
  // V^-1 = diag(a) - G G^T with G = sqrt(n) D Lambda L_J^-T
  Eigen::MatrixXd dl = d.asDiagonal() * lambda;
  bc.g = std::sqrt(static_cast<double>(n)) *
         jllt.matrixU().solve<Eigen::OnTheRight>(dl);
  // W = (I - G^T A^-1 G)^-1
  Eigen::MatrixXd inner = Eigen::MatrixXd::Identity(k, k) -
                          bc.g.transpose() * bc.a_diag.cwiseInverse().asDiagonal() * bc.g;
  Eigen::LLT<Eigen::MatrixXd> wllt(inner);
  if (wllt.info() != Eigen::Success)
    throw std::runtime_error("beta conditional: inner system not positive definite");
  Eigen::MatrixXd w = wllt.solve(Eigen::MatrixXd::Identity(k, k));
  bc.lw = Eigen::LLT<Eigen::MatrixXd>(w).matrixL();

  const Eigen::VectorXd b =
      Eigen::VectorXd::Constant(P, prec * mu_p) + static_cast<double>(n) * sigma_inv(zv);
  const Eigen::VectorXd ainv_b = b.cwiseQuotient(bc.a_diag);
  bc.mean = ainv_b + bc.a_diag.cwiseInverse().asDiagonal() *
                         (bc.g * (w * (bc.g.transpose() * ainv_b)));
  return bc;
}

double mh_update_alpha(double alpha, const Eigen::VectorXd& beta_tilde, int P, double a_alpha,
                       double b_alpha, double step_sd, RngStream& rng, bool* accepted) {
  return twostage::alpha_mh_step(alpha, beta_tilde.sum(), beta_tilde.squaredNorm(), P,
                                 std::sqrt(2.0 * std::log(static_cast<double>(P))), a_alpha,
                                 b_alpha, step_sd, rng, accepted);
}

FactorState init_state(const FeatureMatrix& y, int P, const FactorHyper& hyper, int K,
                       std::uint64_t seed, const Eigen::MatrixXd* x) {
  hyper.cusp.validate();
  const int n = static_cast<int>(y.n());
  FactorState st;
  RngStream rng = RngStream::keyed(seed, {kTag, 0xffffULL});
  st.alpha = std::max(hyper.a_alpha / std::max(hyper.b_alpha, 1e-12), 1e-2);
  const IbpCalibration cal = calibrate(st.alpha, P);
  st.lambda = Eigen::MatrixXd::Zero(P, K);
  for (int j = 0; j < P; ++j)
    for (int k = 0; k < K; ++k)
      st.lambda(j, k) = rng.normal(0.0, std::sqrt(hyper.cusp.theta_inf));
  st.eta = Eigen::MatrixXd::Zero(n, K);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < K; ++k) st.eta(i, k) = rng.normal();
  st.beta.resize(P);
  const Eigen::VectorXd d = st.dscale();
  for (int j = 0; j < P; ++j) st.beta[j] = d[j] * rng.normal(cal.mu_p, cal.tau_p);
  st.z = Eigen::MatrixXd::Zero(n, P);
  st.nu.resize(K);
  for (int k = 0; k < K - 1; ++k) st.nu[k] = rng.beta(1.0, hyper.cusp.kappa);
  st.nu[K - 1] = 1.0;
  st.omega.resize(K);
  stick_break(st.nu, st.omega);
  st.s.resize(K);
  for (int k = 0; k < K; ++k) st.s[k] = K;  // start in the spike
  st.theta = Eigen::VectorXd::Constant(K, hyper.cusp.theta_inf);
  if (x) st.bcoef = Eigen::MatrixXd::Zero(P, x->cols());
  return st;
}

FactorState sample_prior_state(int n, int P, const FactorHyper& hyper, int K, RngStream& rng) {
  hyper.cusp.validate();
  FactorState st;
  st.alpha = rng.gamma(hyper.a_alpha, hyper.b_alpha);
  st.nu.resize(K);
  for (int k = 0; k < K - 1; ++k) st.nu[k] = rng.beta(1.0, hyper.cusp.kappa);
  st.nu[K - 1] = 1.0;
  st.omega.resize(K);
  stick_break(st.nu, st.omega);
  st.s.resize(K);
  st.theta.resize(K);
  for (int k = 0; k < K; ++k) {
    double u = rng.uniform();
    int lab = K;
    double acc = 0.0;
    for (int l = 0; l < K; ++l) {
      acc += st.omega[l];
      if (u <= acc) {
        lab = l + 1;
        break;
      }
    }
    st.s[k] = lab;
    st.theta[k] = lab <= k + 1 ? hyper.cusp.theta_inf
                               : rng.inv_gamma(hyper.cusp.a_theta, hyper.cusp.b_theta);
  }
  st.lambda.resize(P, K);
  for (int j = 0; j < P; ++j)
    for (int k = 0; k < K; ++k) st.lambda(j, k) = rng.normal(0.0, std::sqrt(st.theta[k]));
  const IbpCalibration cal = calibrate(st.alpha, P);
  const Eigen::VectorXd d = st.dscale();
  st.beta.resize(P);
  for (int j = 0; j < P; ++j) st.beta[j] = d[j] * rng.normal(cal.mu_p, cal.tau_p);
  st.eta.resize(n, K);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < K; ++k) st.eta(i, k) = rng.normal();
  st.z.resize(n, P);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < P; ++j)
      st.z(i, j) = st.beta[j] + st.lambda.row(j).dot(st.eta.row(i)) + rng.normal();
  return st;
}

void regenerate_data(FactorState& st, FeatureMatrix& y, RngStream& rng,
                     const Eigen::MatrixXd* x) {
  const int n = static_cast<int>(st.z.rows());
  const int P = static_cast<int>(st.z.cols());
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < P; ++j) {
      double m = st.beta[j] + st.lambda.row(j).dot(st.eta.row(i));
      if (x) m += x->row(i).dot(st.bcoef.row(j));
      st.z(i, j) = m + rng.normal();
      y.y(i, j) = st.z(i, j) > 0.0 ? 1 : 0;
    }
  }
}

CycleStats gibbs_cycle(FactorState& st, const FeatureMatrix& y, const FactorHyper& hyper,
                       const FactorConfig& cfg, int iter, const Eigen::MatrixXd* x) {
  CycleStats stats;
  const int n = static_cast<int>(y.n());
  const int P = static_cast<int>(y.p());
  const int K = st.K();
  const auto it64 = static_cast<std::uint64_t>(iter);
  const double tau_p = std::sqrt(2.0 * std::log(static_cast<double>(P)));
  const CuspHyper& cusp = hyper.cusp;

  // 1. truncated-normal data augmentation, parallel over rows
  parallel_for(
      static_cast<std::size_t>(n),
      [&](std::size_t i) {
        RngStream rng = RngStream::keyed(cfg.mcmc.seed, {kTag, it64, 1, i});
        const auto ii = static_cast<Eigen::Index>(i);
        for (int j = 0; j < P; ++j) {
          double m = st.beta[j] + st.lambda.row(j).dot(st.eta.row(ii));
          if (x) m += x->row(ii).dot(st.bcoef.row(j));
          st.z(ii, j) = numkit::sample_truncated_normal(
              m, 1.0, y.y(ii, j) ? numkit::HalfLine::nonnegative : numkit::HalfLine::negative,
              rng);
        }
      },
      cfg.threads);

  // residual of z net of the covariate part
  Eigen::MatrixXd zres = st.z;
  if (x) zres.noalias() -= (*x) * st.bcoef.transpose();

  // 2a. blocked update: beta-tilde | z, Lambda with eta collapsed, then a
  // fresh eta | z, beta, Lambda; keeps the collapsed conditional valid
  {
    RngStream rng = RngStream::keyed(cfg.mcmc.seed, {kTag, it64, 4});
    const Eigen::VectorXd zbar = zres.colwise().mean();
    const Eigen::VectorXd d = st.dscale();
    const double mu_p = calibrated_mu(st.alpha, P);
    const Eigen::VectorXd zv = cfg.scale_in_cycle ? zbar : zbar.cwiseQuotient(d).eval();
    const BetaConditional bc = beta_tilde_conditional(st.lambda, mu_p, tau_p, n, zv);
    const Eigen::VectorXd bt = bc.draw(rng);
    st.beta = cfg.scale_in_cycle ? bt : d.cwiseProduct(bt).eval();
  }

  // 2b. factors
  {
    RngStream rng = RngStream::keyed(cfg.mcmc.seed, {kTag, it64, 2});
    Eigen::MatrixXd J = Eigen::MatrixXd::Identity(K, K) + st.lambda.transpose() * st.lambda;
    Eigen::LLT<Eigen::MatrixXd> jllt(J);
    Eigen::MatrixXd resid = zres;
    resid.rowwise() -= st.beta.transpose();
    Eigen::MatrixXd mean = jllt.solve(st.lambda.transpose() * resid.transpose()).transpose();
    Eigen::MatrixXd e(n, K);
    for (int i = 0; i < n; ++i)
      for (int k = 0; k < K; ++k) e(i, k) = rng.normal();
    // row-wise eta_i = mean_i + L_J^-T e_i
    st.eta = mean + jllt.matrixU().solve(e.transpose()).transpose();
  }

  // 3. loadings rows, Gaussian proposal with the optional Metropolis
  // correction for the prior factor N(beta_j; d_j mu, d_j^2 tau^2)
  {
    RngStream rng = RngStream::keyed(cfg.mcmc.seed, {kTag, it64, 3});
    Eigen::MatrixXd prec = st.eta.transpose() * st.eta;
    prec += Eigen::MatrixXd(st.theta.cwiseInverse().asDiagonal());
    Eigen::LLT<Eigen::MatrixXd> pllt(prec);
    Eigen::MatrixXd resid = zres;
    resid.rowwise() -= st.beta.transpose();
    // means: V_lambda eta^T (z_j - beta_j 1)
    Eigen::MatrixXd mean = pllt.solve(st.eta.transpose() * resid).transpose();  // P x K
    const double mu_p = calibrated_mu(st.alpha, P);
    Eigen::VectorXd e(K);
    for (int j = 0; j < P; ++j) {
      for (int k = 0; k < K; ++k) e[k] = rng.normal();
      const Eigen::VectorXd prop =
          mean.row(j).transpose() + pllt.matrixU().solve(e);
      if (!cfg.exact_prior_correction) {
        st.lambda.row(j) = prop.transpose();
        continue;
      }
      ++stats.lambda_proposed;
      const double d_old = std::sqrt(1.0 + st.lambda.row(j).squaredNorm());
      const double d_new = std::sqrt(1.0 + prop.squaredNorm());
      const double lr =
          log_normal_density(st.beta[j], d_new * mu_p, d_new * d_new * tau_p * tau_p) -
          log_normal_density(st.beta[j], d_old * mu_p, d_old * d_old * tau_p * tau_p);
      if (std::log(rng.uniform()) < lr) {
        st.lambda.row(j) = prop.transpose();
        ++stats.lambda_accepted;
      }
    }
  }

  // 5. MH update of alpha on the scaled intercepts
  {
    RngStream rng = RngStream::keyed(cfg.mcmc.seed, {kTag, it64, 5});
    st.alpha = mh_update_alpha(st.alpha, st.beta_tilde(), P, hyper.a_alpha, hyper.b_alpha,
                               st.alpha_step_sd, rng, &stats.alpha_accepted);
  }

  // 6. CUSP indicators
  {
    RngStream rng = RngStream::keyed(cfg.mcmc.seed, {kTag, it64, 6});
    std::vector<double> logw(K);
    for (int k = 0; k < K; ++k) {
      const double ss = st.lambda.col(k).squaredNorm();
      const double lsp = log_spike(ss, P, cusp.theta_inf);
      const double lsl = log_slab(ss, P, cusp.a_theta, cusp.b_theta);
      double best = -std::numeric_limits<double>::infinity();
      for (int l = 0; l < K; ++l) {
        logw[l] = std::log(std::max(st.omega[l], 1e-320)) + (l <= k ? lsp : lsl);
        best = std::max(best, logw[l]);
      }
      double z = 0.0;
      for (int l = 0; l < K; ++l) z += std::exp(logw[l] - best);
      double u = rng.uniform() * z;
      int lab = K;
      double acc = 0.0;
      for (int l = 0; l < K; ++l) {
        acc += std::exp(logw[l] - best);
        if (u <= acc) {
          lab = l + 1;
          break;
        }
      }
      st.s[k] = lab;
    }
  }

  // 7. stick fractions and weights
  {
    RngStream rng = RngStream::keyed(cfg.mcmc.seed, {kTag, it64, 7});
    for (int l = 0; l < K - 1; ++l) {
      int eq = 0, gt = 0;
      for (int k = 0; k < K; ++k) {
        if (st.s[k] == l + 1) ++eq;
        if (st.s[k] > l + 1) ++gt;
      }
      st.nu[l] = rng.beta(1.0 + eq, cusp.kappa + gt);
    }
    st.nu[K - 1] = 1.0;
    stick_break(st.nu, st.omega);
  }

  // 8. column scales
  {
    RngStream rng = RngStream::keyed(cfg.mcmc.seed, {kTag, it64, 8});
    for (int k = 0; k < K; ++k) {
      if (st.s[k] <= k + 1) {
        st.theta[k] = cusp.theta_inf;
      } else {
        st.theta[k] =
            rng.inv_gamma(cusp.a_theta + 0.5 * P, cusp.b_theta + 0.5 * st.lambda.col(k).squaredNorm());
      }
    }
  }

  check_finite(st, iter);
  return stats;
}

FactorChainOutput fit_factor_mvpibp(const FeatureMatrix& y, int P, const FactorHyper& hyper,
                                    const FactorConfig& cfg, const Eigen::MatrixXd* x,
                                    const Eigen::MatrixXd* psi, const Eigen::VectorXd* gamma) {
  cfg.mcmc.validate();
  y.validate();
  if (P < static_cast<int>(y.p()))
    throw std::invalid_argument("fit_factor_mvpibp: P below observed p");
  if (hyper.k_max < 1) throw std::invalid_argument("fit_factor_mvpibp: k_max >= 1");
  const FeatureMatrix yp = y.padded(P);
  const int n = static_cast<int>(yp.n());
  const int q = x ? static_cast<int>(x->cols()) : 0;
  if (x && (x->rows() != n)) throw std::invalid_argument("fit_factor_mvpibp: X row count != n");
  if (x && (!psi || !gamma))
    throw std::invalid_argument("fit_factor_mvpibp: covariates need (gamma, Psi)");

  FactorState st = init_state(yp, P, hyper, hyper.k_max, cfg.mcmc.seed, x);

  // precomputed covariate-update pieces
  Eigen::MatrixXd vb, lb, psi_inv_gamma;
  if (x) {
    Eigen::MatrixXd psi_inv = psi->llt().solve(Eigen::MatrixXd::Identity(q, q));
    Eigen::MatrixXd prec = psi_inv + x->transpose() * (*x);
    vb = prec.llt().solve(Eigen::MatrixXd::Identity(q, q));
    lb = Eigen::LLT<Eigen::MatrixXd>(vb).matrixL();
    psi_inv_gamma = psi_inv * (*gamma);
  }

  const int B = cfg.mcmc.stored();
  FactorChainOutput out;
  out.P = P;
  out.config = cfg.mcmc;
  out.beta_tilde_draws.resize(B, P);
  out.pi_draws.resize(B, P);
  out.alpha_draws.resize(B);
  out.kstar_draws.resize(B);
  out.sigma_sum = Eigen::MatrixXd::Zero(P, P);
  out.sigma_sumsq = Eigen::MatrixXd::Zero(P, P);
  if (x) out.b_sum = Eigen::MatrixXd::Zero(P, q);

  int alpha_acc = 0, lam_prop = 0, lam_acc = 0;
  int acc_win = 0, acc_in_win = 0;
  int stored = 0;
  for (int t = 0; t < cfg.mcmc.iterations; ++t) {
    const CycleStats cs = gibbs_cycle(st, yp, hyper, cfg, t, x);
    alpha_acc += cs.alpha_accepted;
    lam_prop += cs.lambda_proposed;
    lam_acc += cs.lambda_accepted;
    acc_in_win += cs.alpha_accepted;
    ++acc_win;
    if (t < cfg.mcmc.burnin && acc_win == 50) {
      const double rate = acc_in_win / 50.0;
      if (rate > 0.5) st.alpha_step_sd *= 1.15;
      if (rate < 0.3) st.alpha_step_sd /= 1.15;
      acc_in_win = 0;
      acc_win = 0;
    }

    // covariate slope update (conjugate normal rows)
    if (x) {
      RngStream rng = RngStream::keyed(cfg.mcmc.seed, {kTag, static_cast<std::uint64_t>(t), 9});
      Eigen::MatrixXd resid = st.z - st.eta * st.lambda.transpose();
      resid.rowwise() -= st.beta.transpose();
      Eigen::VectorXd e(q);
      for (int j = 0; j < P; ++j) {
        const Eigen::VectorXd rhs = psi_inv_gamma + x->transpose() * resid.col(j);
        for (int l = 0; l < q; ++l) e[l] = rng.normal();
        st.bcoef.row(j) = (vb * rhs + lb * e).transpose();
      }
    }

    // adaptive truncation on the diminishing schedule
    if (cfg.adapt && t >= cfg.adapt_start) {
      RngStream rng = RngStream::keyed(cfg.mcmc.seed, {kTag, static_cast<std::uint64_t>(t), 10});
      if (rng.uniform() < std::exp(-cfg.adapt_c0 - cfg.adapt_c1 * t)) {
        const int K = st.K();
        std::vector<int> active;
        for (int k = 0; k < K; ++k)
          if (st.s[k] > k + 1) active.push_back(k);
        const int Knew = std::min(std::max(static_cast<int>(active.size()) + 1, 1), hyper.k_max);
        if (Knew != K) {
          Eigen::MatrixXd lam(P, Knew), eta(n, Knew);
          Eigen::VectorXd theta(Knew);
          const int keep = std::min(static_cast<int>(active.size()), Knew);
          for (int c = 0; c < keep; ++c) {
            lam.col(c) = st.lambda.col(active[c]);
            eta.col(c) = st.eta.col(active[c]);
            theta[c] = st.theta[active[c]];
          }
          for (int c = keep; c < Knew; ++c) {
            for (int j = 0; j < P; ++j)
              lam(j, c) = rng.normal(0.0, std::sqrt(hyper.cusp.theta_inf));
            for (int i = 0; i < n; ++i) eta(i, c) = rng.normal();
            theta[c] = hyper.cusp.theta_inf;
          }
          st.lambda = lam;
          st.eta = eta;
          st.theta = theta;
          st.nu.resize(Knew);
          st.omega.resize(Knew);
          st.s.resize(Knew);
          for (int k = 0; k < Knew - 1; ++k) st.nu[k] = rng.beta(1.0, hyper.cusp.kappa);
          st.nu[Knew - 1] = 1.0;
          stick_break(st.nu, st.omega);
          // indicator + scale passes so the state invariants hold at the
          // new truncation
          std::vector<double> logw(Knew);
          for (int k = 0; k < Knew; ++k) {
            const double ss = st.lambda.col(k).squaredNorm();
            const double lsp = log_spike(ss, P, hyper.cusp.theta_inf);
            const double lsl = log_slab(ss, P, hyper.cusp.a_theta, hyper.cusp.b_theta);
            double best = -std::numeric_limits<double>::infinity();
            for (int l = 0; l < Knew; ++l) {
              logw[l] = std::log(std::max(st.omega[l], 1e-320)) + (l <= k ? lsp : lsl);
              best = std::max(best, logw[l]);
            }
            double z = 0.0;
            for (int l = 0; l < Knew; ++l) z += std::exp(logw[l] - best);
            double u = rng.uniform() * z;
            double acc = 0.0;
            int lab = Knew;
            for (int l = 0; l < Knew; ++l) {
              acc += std::exp(logw[l] - best);
              if (u <= acc) {
                lab = l + 1;
                break;
              }
            }
            st.s[k] = lab;
          }
          for (int k = 0; k < Knew; ++k) {
            st.theta[k] = st.s[k] <= k + 1
                              ? hyper.cusp.theta_inf
                              : rng.inv_gamma(hyper.cusp.a_theta + 0.5 * P,
                                              hyper.cusp.b_theta +
                                                  0.5 * st.lambda.col(k).squaredNorm());
          }
        }
      }
    }

    if (t >= cfg.mcmc.burnin && (t - cfg.mcmc.burnin) % cfg.mcmc.thin == 0 && stored < B) {
      const Eigen::VectorXd bt = st.beta_tilde();
      out.beta_tilde_draws.row(stored) = bt;
      for (int j = 0; j < P; ++j)
        out.pi_draws(stored, j) = numkit::std_normal_cdf(bt[j]);
      out.alpha_draws[stored] = st.alpha;
      out.kstar_draws[stored] = st.kstar();
      const Eigen::MatrixXd sig = st.correlation();
      out.sigma_sum += sig;
      out.sigma_sumsq += sig.cwiseProduct(sig);
      if (x) out.b_sum += st.bcoef;
      ++stored;
    }
  }
  out.stored = stored;
  out.acceptance_alpha = static_cast<double>(alpha_acc) / cfg.mcmc.iterations;
  out.acceptance_lambda = lam_prop ? static_cast<double>(lam_acc) / lam_prop : 1.0;
  return out;
}

}  // namespace mvpibp::factor
