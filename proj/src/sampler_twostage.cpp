#include "mvpibp/sampler_twostage.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <tuple>
#include <unordered_map>

#include "mvpibp/kernels.hpp"
#include "mvpibp/parallel.hpp"

namespace mvpibp::twostage {

namespace {

constexpr double kLogTiny = -690.0;  // log of the cell-probability clamp

double clamped_log(double p) { return p > 1e-300 ? std::log(p) : kLogTiny; }

// 3-point probabilists' Gauss-Hermite rule
constexpr double kGh3Node[3] = {-1.7320508075688772, 0.0, 1.7320508075688772};
constexpr double kGh3LogW[3] = {-1.791759469228055, -0.405465108108164, -1.791759469228055};

struct CellLogProbs {
  double l11, l10, l01, l00;
};

CellLogProbs cell_log_probs(double a, double b, double rho) {
  const double pa = numkit::std_normal_cdf(a);
  const double pb = numkit::std_normal_cdf(b);
  const double p11 = numkit::bivariate_normal_cdf(a, b, rho);
  return {clamped_log(p11), clamped_log(pa - p11), clamped_log(pb - p11),
          clamped_log(1.0 - pa - pb + p11)};
}

// composite log-likelihood of one pair at correlation rho
double pair_loglik(const PairCounts& c, double a, double b, double rho, bool gh,
                   double sa, double sb) {
  if (!gh) {
    const CellLogProbs lp = cell_log_probs(a, b, rho);
    return c.n11 * lp.l11 + c.n10 * lp.l10 + c.n01 * lp.l01 + c.n00 * lp.l00;
  }
  // integrate both betas over the Gaussian pseudo-posteriors
  double terms[9];
  int t = 0;
  double best = -std::numeric_limits<double>::infinity();
  for (int g = 0; g < 3; ++g) {
    for (int h = 0; h < 3; ++h) {
      const CellLogProbs lp = cell_log_probs(a + sa * kGh3Node[g], b + sb * kGh3Node[h], rho);
      terms[t] = kGh3LogW[g] + kGh3LogW[h] + c.n11 * lp.l11 + c.n10 * lp.l10 + c.n01 * lp.l01 +
                 c.n00 * lp.l00;
      best = std::max(best, terms[t]);
      ++t;
    }
  }
  double s = 0.0;
  for (int i = 0; i < 9; ++i) s += std::exp(terms[i] - best);
  return best + std::log(s);
}

}  // namespace

LaplaceMarginal laplace_beta_counts(int n, int n1, double mu, double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("laplace_beta: tau must be > 0");
  if (n1 < 0 || n1 > n) throw std::invalid_argument("laplace_beta: bad counts");
  const double prec = 1.0 / (tau * tau);
  if (n == 0) return {mu, tau * tau};

  auto logpost = [&](double b) {
    return n1 * numkit::log_std_normal_cdf(b) + (n - n1) * numkit::log_std_normal_cdf(-b) -
           0.5 * prec * (b - mu) * (b - mu);
  };
  double beta = numkit::std_normal_quantile((n1 + 0.5) / (n + 1.0));
  double f = logpost(beta);
  double curv = -prec;
  for (int it = 0; it < 100; ++it) {
    const double mpos = numkit::mills_ratio(beta);
    const double mneg = numkit::mills_ratio(-beta);
    const double grad = n1 * mpos - (n - n1) * mneg - prec * (beta - mu);
    curv = n1 * (-beta * mpos - mpos * mpos) + (n - n1) * (beta * mneg - mneg * mneg) - prec;
    if (std::fabs(grad) < 1e-8) return {beta, -1.0 / curv};
    double step = -grad / curv;
    // damped Newton: halve until the log-posterior does not decrease
    for (int h = 0; h < 50; ++h) {
      const double cand = beta + step;
      const double fc = logpost(cand);
      if (fc >= f - 1e-12) {
        beta = cand;
        f = fc;
        break;
      }
      step *= 0.5;
    }
  }
  throw std::runtime_error("laplace_beta: Newton failed to converge in 100 iterations");
}

LaplaceMarginal laplace_beta(
    const Eigen::Ref<const Eigen::Matrix<std::uint8_t, Eigen::Dynamic, 1>>& y_col, double mu,
    double tau) {
  int n1 = 0;
  for (Eigen::Index i = 0; i < y_col.size(); ++i) n1 += y_col[i];
  return laplace_beta_counts(static_cast<int>(y_col.size()), n1, mu, tau);
}

LaplaceMarginalVec laplace_probit(const Eigen::MatrixXd& w,
                                  const Eigen::Matrix<std::uint8_t, Eigen::Dynamic, 1>& y,
                                  const Eigen::VectorXd& prior_mean,
                                  const Eigen::MatrixXd& prior_cov) {
  const Eigen::Index n = w.rows();
  const Eigen::Index m = w.cols();
  if (y.size() != n || prior_mean.size() != m || prior_cov.rows() != m)
    throw std::invalid_argument("laplace_probit: dimension mismatch");
  const Eigen::MatrixXd s0inv = prior_cov.llt().solve(Eigen::MatrixXd::Identity(m, m));

  Eigen::VectorXd b = prior_mean;
  auto logpost = [&](const Eigen::VectorXd& bb) {
    double ll = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double t = w.row(i).dot(bb);
      ll += y[i] ? numkit::log_std_normal_cdf(t) : numkit::log_std_normal_cdf(-t);
    }
    const Eigen::VectorXd d = bb - prior_mean;
    return ll - 0.5 * d.dot(s0inv * d);
  };
  double f = logpost(b);
  Eigen::MatrixXd neg_hess(m, m);
  for (int it = 0; it < 100; ++it) {
    Eigen::VectorXd grad = -s0inv * (b - prior_mean);
    neg_hess = s0inv;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double t = w.row(i).dot(b);
      double u, c;
      if (y[i]) {
        const double mr = numkit::mills_ratio(t);
        u = mr;
        c = t * mr + mr * mr;
      } else {
        const double mr = numkit::mills_ratio(-t);
        u = -mr;
        c = -t * mr + mr * mr;
      }
      grad += u * w.row(i).transpose();
      neg_hess += c * w.row(i).transpose() * w.row(i);
    }
    if (grad.lpNorm<Eigen::Infinity>() < 1e-8) {
      LaplaceMarginalVec out;
      out.mode = b;
      out.q = neg_hess.llt().solve(Eigen::MatrixXd::Identity(m, m));
      return out;
    }
    Eigen::VectorXd step = neg_hess.llt().solve(grad);
    for (int h = 0; h < 50; ++h) {
      const Eigen::VectorXd cand = b + step;
      const double fc = logpost(cand);
      if (fc >= f - 1e-12) {
        b = cand;
        f = fc;
        break;
      }
      step *= 0.5;
    }
  }
  throw std::runtime_error("laplace_probit: Newton failed to converge in 100 iterations");
}

PairPosterior pair_sigma_posterior(const PairCounts& counts, const LaplaceMarginal& lm1,
                                   const LaplaceMarginal& lm2, double omega,
                                   const PairOptions& opts) {
  if (!(omega > 0.0)) throw std::invalid_argument("pair_sigma_posterior: omega must be > 0");
  const double sa = std::sqrt(lm1.q);
  const double sb = std::sqrt(lm2.q);
  double half = opts.halfwidth_sds * omega;
  int nodes = opts.nodes;
  PairPosterior out;
  for (int attempt = 0;; ++attempt) {
    const auto rule = numkit::gauss_legendre(nodes, -half, half);
    std::vector<double> logw(nodes);
    double best = -std::numeric_limits<double>::infinity();
    for (int t = 0; t < nodes; ++t) {
      const double zeta = rule.nodes[t];
      const double rho = std::tanh(zeta);
      const double ll =
          pair_loglik(counts, lm1.beta_hat, lm2.beta_hat, rho, opts.gh_integration, sa, sb);
      logw[t] = ll - 0.5 * zeta * zeta / (omega * omega) + std::log(rule.weights[t]);
      best = std::max(best, logw[t]);
    }
    double z = 0.0, m1 = 0.0, m2 = 0.0, t1 = 0.0, t2 = 0.0, wmax = 0.0;
    for (int t = 0; t < nodes; ++t) {
      const double u = std::exp(logw[t] - best);
      const double zeta = rule.nodes[t];
      const double th = std::tanh(zeta);
      z += u;
      m1 += u * zeta;
      m2 += u * zeta * zeta;
      t1 += u * th;
      t2 += u * th * th;
      wmax = std::max(wmax, u);
    }
    const double boundary = (std::exp(logw[0] - best) + std::exp(logw[nodes - 1] - best)) / z;
    out.zeta_hat = m1 / z;
    out.zeta_var = std::max(m2 / z - out.zeta_hat * out.zeta_hat, 1e-300);
    out.sigma_hat = t1 / z;
    out.s2 = std::max(t2 / z - out.sigma_hat * out.sigma_hat, 1e-300);
    out.grid_widenings = attempt;
    if (attempt >= opts.max_widenings) return out;
    if (boundary > 1e-6) {
      half *= 2.0;  // likelihood mass pressing against the grid edge
    } else if (wmax / z > 0.999) {
      nodes *= 2;  // posterior sharper than the node spacing
    } else {
      return out;
    }
  }
}

double alpha_mh_step(double alpha, double sum_beta, double sum_beta_sq, int P, double tau_p,
                     double a_alpha, double b_alpha, double step_sd, RngStream& rng,
                     bool* accepted) {
  const double inv2t = 0.5 / (tau_p * tau_p);
  auto log_target = [&](double a) {
    const double mu = calibrated_mu(a, P);
    return (a_alpha - 1.0) * std::log(a) - b_alpha * a -
           inv2t * (sum_beta_sq - 2.0 * mu * sum_beta + P * mu * mu);
  };
  const double prop = alpha * std::exp(step_sd * rng.normal());
  const double log_ratio = log_target(prop) - log_target(alpha) + std::log(prop) - std::log(alpha);
  const bool acc = std::log(rng.uniform()) < log_ratio;
  if (accepted) *accepted = acc;
  return acc ? prop : alpha;
}

double omega2_conjugate_draw(int n_pairs, double sum_zeta_sq, double a_omega, double b_omega,
                             RngStream& rng) {
  return rng.inv_gamma(n_pairs + a_omega, 0.5 * sum_zeta_sq + b_omega);
}

NiwPosterior niw_update(const Eigen::MatrixXd& slopes, const NiwPrior& prior) {
  const int P = static_cast<int>(slopes.rows());
  const int q = static_cast<int>(slopes.cols());
  if (prior.gamma0.size() != q || prior.xi.rows() != q)
    throw std::invalid_argument("niw_update: prior dimension mismatch");
  NiwPosterior post;
  const Eigen::VectorXd bbar = slopes.colwise().mean();
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(q, q);
  for (int j = 0; j < P; ++j) {
    const Eigen::VectorXd d = slopes.row(j).transpose() - bbar;
    s += d * d.transpose();
  }
  post.iota_n = prior.iota + P;
  post.d_n = prior.d + P;
  post.gamma_n = (prior.iota * prior.gamma0 + P * bbar) / post.iota_n;
  const Eigen::VectorXd dev = bbar - prior.gamma0;
  post.xi_n = prior.xi + s + (prior.iota * P / post.iota_n) * dev * dev.transpose();
  return post;
}

std::pair<Eigen::VectorXd, Eigen::MatrixXd> niw_draw(const NiwPosterior& post, RngStream& rng) {
  const int q = static_cast<int>(post.gamma_n.size());
  // Psi ~ IW(d_n, xi_n): invert a Bartlett-sampled Wishart(d_n, xi_n^-1)
  const Eigen::MatrixXd xi_inv =
      post.xi_n.llt().solve(Eigen::MatrixXd::Identity(q, q));
  const Eigen::MatrixXd lv = Eigen::LLT<Eigen::MatrixXd>(xi_inv).matrixL();
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(q, q);
  for (int i = 0; i < q; ++i) {
    a(i, i) = std::sqrt(rng.chi_squared(post.d_n - i));
    for (int k = 0; k < i; ++k) a(i, k) = rng.normal();
  }
  const Eigen::MatrixXd lw = lv * a;
  const Eigen::MatrixXd wish = lw * lw.transpose();
  Eigen::MatrixXd psi = wish.llt().solve(Eigen::MatrixXd::Identity(q, q));
  const Eigen::MatrixXd lpsi = Eigen::LLT<Eigen::MatrixXd>(psi / post.iota_n).matrixL();
  Eigen::VectorXd e(q);
  for (int l = 0; l < q; ++l) e[l] = rng.normal();
  return {post.gamma_n + lpsi * e, std::move(psi)};
}

int TwoStageOutput::pair_index(int j, int k, int P) {
  // row-major upper triangle, j < k
  return j * P - j * (j + 1) / 2 + (k - j - 1);
}

Eigen::MatrixXd TwoStageOutput::sigma_posterior_mean() const {
  Eigen::MatrixXd s = Eigen::MatrixXd::Identity(P, P);
  if (stored == 0) return s;
  for (int j = 0; j < P; ++j)
    for (int k = j + 1; k < P; ++k) {
      const double m = sigma_sum[pair_index(j, k, P)] / stored;
      s(j, k) = m;
      s(k, j) = m;
    }
  return s;
}

namespace {

struct PackedColumns {
  std::vector<std::vector<std::uint64_t>> bits;
  Eigen::VectorXi counts;
  int n = 0;
  int blocks = 0;

  explicit PackedColumns(const FeatureMatrix& y) {
    n = static_cast<int>(y.n());
    const int P = static_cast<int>(y.p());
    blocks = (n + 63) / 64;
    bits.assign(P, std::vector<std::uint64_t>(blocks, 0));
    for (int j = 0; j < P; ++j)
      for (int i = 0; i < n; ++i)
        if (y.y(i, j)) bits[j][i >> 6] |= (1ULL << (i & 63));
    counts = y.column_counts();
  }

  PairCounts pair_counts(int j, int k) const {
    int c11 = 0;
    for (int b = 0; b < blocks; ++b)
      c11 += __builtin_popcountll(bits[j][b] & bits[k][b]);
    PairCounts c;
    c.n11 = c11;
    c.n10 = counts[j] - c11;
    c.n01 = counts[k] - c11;
    c.n00 = n - counts[j] - counts[k] + c11;
    return c;
  }
};

struct RunContext {
  const TwoStagePriors& priors;
  const TwoStageConfig& cfg;
  int P;
  int n;
  double tau_p;
};

void init_output(TwoStageOutput& out, int P, int B, bool store_pairs) {
  out.P = P;
  out.n_pairs = P * (P - 1) / 2;
  out.beta_draws.resize(B, P);
  out.pi_draws.resize(B, P);
  out.sigma_sum = Eigen::VectorXd::Zero(out.n_pairs);
  out.sigma_sumsq = Eigen::VectorXd::Zero(out.n_pairs);
  if (store_pairs) out.sigma_draws = Eigen::MatrixXd::Zero(B, out.n_pairs);
}

}  // namespace

TwoStageOutput run_hierarchical(const FeatureMatrix& y, int P, const TwoStagePriors& priors,
                                const TwoStageConfig& cfg) {
  y.validate();
  if (P < static_cast<int>(y.p()))
    throw std::invalid_argument("run_hierarchical: P below observed p");
  const FeatureMatrix yp = y.padded(P);
  const PackedColumns cols(yp);
  const int n = cols.n;
  const int T = cfg.iterations;
  const int discard = cfg.effective_discard();
  if (T <= discard) throw std::invalid_argument("run_hierarchical: iterations <= discard");
  const int B = T - discard;

  const double tau_p = std::sqrt(2.0 * std::log(static_cast<double>(P)));
  TwoStageOutput out;
  init_output(out, P, B, cfg.store_pairs);
  out.alpha_draws.resize(priors.flat ? 0 : B);
  out.omega2_draws.resize(B);

  double alpha = std::max(priors.a_alpha / std::max(priors.b_alpha, 1e-12), 1e-2);
  double omega2 = priors.b_omega / priors.a_omega;
  double step_sd = 0.25;
  int acc_win = 0, acc_cnt = 0, acc_tot = 0, step_tot = 0;

  // distinct column counts index the Laplace fits; the pair posterior is a
  // function of (level_j, level_k, n11) only, so one table entry serves every
  // pair with the same cell counts
  std::vector<int> levels;
  {
    std::vector<char> seen(n + 1, 0);
    for (int j = 0; j < P; ++j) seen[cols.counts[j]] = 1;
    for (int c = 0; c <= n; ++c)
      if (seen[c]) levels.push_back(c);
  }
  std::vector<int> level_of(n + 1, -1);
  for (std::size_t l = 0; l < levels.size(); ++l) level_of[levels[l]] = static_cast<int>(l);
  const int L = static_cast<int>(levels.size());

  struct KeyInfo {
    int lmin, lmax, n11;
  };
  std::vector<KeyInfo> keys;
  std::vector<int> pair_slot(out.n_pairs);
  {
    std::unordered_map<long long, int> slot_of;
    slot_of.reserve(4096);
    int idx = 0;
    for (int j = 0; j < P; ++j) {
      for (int k = j + 1; k < P; ++k, ++idx) {
        const PairCounts pc = cols.pair_counts(j, k);
        const int lmin = std::min(level_of[cols.counts[j]], level_of[cols.counts[k]]);
        const int lmax = std::max(level_of[cols.counts[j]], level_of[cols.counts[k]]);
        const long long key = ((static_cast<long long>(lmin) * L + lmax) << 20) + pc.n11;
        auto [it, fresh] = slot_of.emplace(key, static_cast<int>(keys.size()));
        if (fresh) keys.push_back({lmin, lmax, pc.n11});
        pair_slot[idx] = it->second;
      }
    }
  }

  Eigen::VectorXd betas(P);
  std::vector<double> zeta_sq(out.n_pairs);
  std::vector<LaplaceMarginal> lms(L);
  std::vector<PairPosterior> table(keys.size());

  for (int t = 0; t < T; ++t) {
    // 1. Laplace marginals given alpha (flat ablation keeps a fixed prior)
    const double mu = priors.flat ? priors.flat_mu : calibrated_mu(alpha, P);
    const double tau = priors.flat ? priors.flat_tau : tau_p;
    for (int l = 0; l < L; ++l) lms[l] = laplace_beta_counts(n, levels[l], mu, tau);

    // 2. draw beta_j
    {
      RngStream r = RngStream::keyed(cfg.seed, {0x747332ULL, static_cast<std::uint64_t>(t), 2});
      for (int j = 0; j < P; ++j) {
        const LaplaceMarginal& lm = lms[level_of[cols.counts[j]]];
        betas[j] = r.normal(lm.beta_hat, std::sqrt(lm.q));
      }
    }

    // 3. MH update of alpha
    if (!priors.flat) {
      RngStream r = RngStream::keyed(cfg.seed, {0x747332ULL, static_cast<std::uint64_t>(t), 3});
      bool acc = false;
      alpha = alpha_mh_step(alpha, betas.sum(), betas.squaredNorm(), P, tau_p, priors.a_alpha,
                            priors.b_alpha, step_sd, r, &acc);
      ++step_tot;
      acc_tot += acc;
      acc_cnt += acc;
      ++acc_win;
      if (t < discard && acc_win == 25) {
        const double rate = acc_cnt / 25.0;
        if (rate > 0.5) step_sd *= 1.15;
        if (rate < 0.3) step_sd /= 1.15;
        acc_cnt = 0;
        acc_win = 0;
      }
    }

    // 4. pair posteriors given omega at the plug-in Laplace means
    const double omega = std::sqrt(omega2);
    parallel_for(
        keys.size(),
        [&](std::size_t s) {
          const KeyInfo& ki = keys[s];
          PairCounts pc;
          pc.n11 = ki.n11;
          pc.n10 = levels[ki.lmin] - ki.n11;
          pc.n01 = levels[ki.lmax] - ki.n11;
          pc.n00 = n - levels[ki.lmin] - levels[ki.lmax] + ki.n11;
          table[s] = pair_sigma_posterior(pc, lms[ki.lmin], lms[ki.lmax], omega, cfg.pair);
        },
        cfg.threads);

    // 5. per-pair zeta draws with per-pair sub-streams (slot writes only,
    // so parallel and serial execution are bit-identical)
    const int stored_idx = t - discard;
    const bool record = t >= discard;
    parallel_for(
        static_cast<std::size_t>(out.n_pairs),
        [&](std::size_t idx) {
          const PairPosterior& pp = table[pair_slot[idx]];
          RngStream r = RngStream::keyed(
              cfg.seed, {0x747332ULL, static_cast<std::uint64_t>(t), 5, idx});
          const double zeta = r.normal(pp.zeta_hat, std::sqrt(pp.zeta_var));
          const double sigma = std::tanh(zeta);
          zeta_sq[idx] = zeta * zeta;
          if (record) {
            out.sigma_sum[idx] += sigma;
            out.sigma_sumsq[idx] += sigma * sigma;
            if (out.sigma_draws) (*out.sigma_draws)(stored_idx, idx) = sigma;
          }
        },
        cfg.threads);
    double sum_zeta_sq = 0.0;
    for (int i = 0; i < out.n_pairs; ++i) sum_zeta_sq += zeta_sq[i];

    // 6. conjugate inverse-gamma update of omega^2
    {
      RngStream r = RngStream::keyed(cfg.seed, {0x747332ULL, static_cast<std::uint64_t>(t), 6});
      omega2 = omega2_conjugate_draw(out.n_pairs, sum_zeta_sq, priors.a_omega, priors.b_omega, r);
    }

    if (record) {
      out.beta_draws.row(stored_idx) = betas;
      for (int j = 0; j < P; ++j)
        out.pi_draws(stored_idx, j) = numkit::std_normal_cdf(betas[j]);
      if (!priors.flat) out.alpha_draws[stored_idx] = alpha;
      out.omega2_draws[stored_idx] = omega2;
      ++out.stored;
    }
  }
  out.acceptance_alpha = step_tot ? static_cast<double>(acc_tot) / step_tot : 0.0;
  return out;
}

TwoStageOutput run_common_rho(const FeatureMatrix& y, int P, const TwoStagePriors& priors,
                              const TwoStageConfig& cfg) {
  y.validate();
  if (P < static_cast<int>(y.p()))
    throw std::invalid_argument("run_common_rho: P below observed p");
  const FeatureMatrix yp = y.padded(P);
  const PackedColumns cols(yp);
  const int n = cols.n;
  const int T = cfg.iterations;
  const int discard = cfg.effective_discard();
  const int B = T - discard;
  const double tau_p = std::sqrt(2.0 * std::log(static_cast<double>(P)));

  TwoStageOutput out;
  init_output(out, P, B, cfg.store_pairs);
  out.alpha_draws.resize(B);
  out.rho_draws.resize(B);

  double alpha = std::max(priors.a_alpha / std::max(priors.b_alpha, 1e-12), 1e-2);
  double zeta = 0.0;  // fisher-z of the common rho
  double step_sd = 0.25, zeta_step = 0.1;
  int acc_win = 0, acc_cnt = 0, acc_tot = 0, step_tot = 0;
  int racc_win = 0, racc_cnt = 0, racc_tot = 0, rstep_tot = 0;

  std::vector<int> levels;
  {
    std::vector<char> seen(n + 1, 0);
    for (int j = 0; j < P; ++j) seen[cols.counts[j]] = 1;
    for (int c = 0; c <= n; ++c)
      if (seen[c]) levels.push_back(c);
  }
  std::vector<int> level_of(n + 1, -1);
  for (std::size_t l = 0; l < levels.size(); ++l) level_of[levels[l]] = static_cast<int>(l);
  const int L = static_cast<int>(levels.size());
  std::vector<LaplaceMarginal> lms(L);
  Eigen::VectorXd betas(P);

  std::vector<PairCounts> pc_all(out.n_pairs);
  {
    int idx = 0;
    for (int j = 0; j < P; ++j)
      for (int k = j + 1; k < P; ++k, ++idx) pc_all[idx] = cols.pair_counts(j, k);
  }

  // composite log-likelihood over all pairs at a common correlation, given
  // the current beta draws
  auto composite_ll = [&](double rho) {
    const int nw = std::max(1, std::min(worker_count(), cfg.threads > 0 ? cfg.threads : 64));
    std::vector<double> partial(nw, 0.0);
    parallel_for(
        static_cast<std::size_t>(nw),
        [&](std::size_t w) {
          double acc = 0.0;
          for (int j = static_cast<int>(w); j < P; j += nw) {
            int idx = TwoStageOutput::pair_index(j, j + 1, P) - 1;
            for (int k = j + 1; k < P; ++k) {
              const PairCounts& pc = pc_all[++idx];
              const CellLogProbs lp = cell_log_probs(betas[j], betas[k], rho);
              acc += pc.n11 * lp.l11 + pc.n10 * lp.l10 + pc.n01 * lp.l01 + pc.n00 * lp.l00;
            }
          }
          partial[w] = acc;
        },
        nw);
    double s = 0.0;
    for (double v : partial) s += v;
    return s;
  };

  for (int t = 0; t < T; ++t) {
    const double mu = calibrated_mu(alpha, P);
    for (int l = 0; l < L; ++l) lms[l] = laplace_beta_counts(n, levels[l], mu, tau_p);
    {
      RngStream r = RngStream::keyed(cfg.seed, {0x747363ULL, static_cast<std::uint64_t>(t), 2});
      for (int j = 0; j < P; ++j) {
        const LaplaceMarginal& lm = lms[level_of[cols.counts[j]]];
        betas[j] = r.normal(lm.beta_hat, std::sqrt(lm.q));
      }
    }
    {
      RngStream r = RngStream::keyed(cfg.seed, {0x747363ULL, static_cast<std::uint64_t>(t), 3});
      bool acc = false;
      alpha = alpha_mh_step(alpha, betas.sum(), betas.squaredNorm(), P, tau_p, priors.a_alpha,
                            priors.b_alpha, step_sd, r, &acc);
      ++step_tot;
      acc_tot += acc;
      acc_cnt += acc;
      ++acc_win;
      if (t < discard && acc_win == 25) {
        if (acc_cnt / 25.0 > 0.5) step_sd *= 1.15;
        if (acc_cnt / 25.0 < 0.3) step_sd /= 1.15;
        acc_cnt = 0;
        acc_win = 0;
      }
    }
    {
      // MH on the Fisher-z of rho; target N(0, w0^2) x pairwise composite
      // likelihood given the beta draws
      RngStream r = RngStream::keyed(cfg.seed, {0x747363ULL, static_cast<std::uint64_t>(t), 4});
      const double cur_ll = composite_ll(std::tanh(zeta));
      const double prop = zeta + zeta_step * r.normal();
      const double prop_ll = composite_ll(std::tanh(prop));
      const double log_ratio = prop_ll - cur_ll -
                               0.5 * (prop * prop - zeta * zeta) / (priors.w0 * priors.w0);
      const bool acc = std::log(r.uniform()) < log_ratio;
      if (acc) zeta = prop;
      ++rstep_tot;
      racc_tot += acc;
      racc_cnt += acc;
      ++racc_win;
      if (t < discard && racc_win == 25) {
        if (racc_cnt / 25.0 > 0.5) zeta_step *= 1.15;
        if (racc_cnt / 25.0 < 0.3) zeta_step /= 1.15;
        racc_cnt = 0;
        racc_win = 0;
      }
    }
    if (t >= discard) {
      const int b = t - discard;
      const double rho = std::tanh(zeta);
      out.beta_draws.row(b) = betas;
      for (int j = 0; j < P; ++j) out.pi_draws(b, j) = numkit::std_normal_cdf(betas[j]);
      out.alpha_draws[b] = alpha;
      out.rho_draws[b] = rho;
      out.sigma_sum.array() += rho;
      out.sigma_sumsq.array() += rho * rho;
      if (out.sigma_draws) out.sigma_draws->row(b).setConstant(rho);
      ++out.stored;
    }
  }
  out.acceptance_alpha = step_tot ? static_cast<double>(acc_tot) / step_tot : 0.0;
  out.acceptance_rho = rstep_tot ? static_cast<double>(racc_tot) / rstep_tot : 0.0;
  return out;
}

TwoStageOutput run_covariate(const FeatureMatrix& y, const Eigen::MatrixXd& x, int P,
                             const NiwPrior& niw, const TwoStagePriors& priors,
                             const TwoStageConfig& cfg) {
  y.validate();
  if (x.rows() != y.n()) throw std::invalid_argument("run_covariate: X row count != n");
  if (P < static_cast<int>(y.p()))
    throw std::invalid_argument("run_covariate: P below observed p");
  const FeatureMatrix yp = y.padded(P);
  const int n = static_cast<int>(yp.n());
  const int q = static_cast<int>(x.cols());
  const int m = q + 1;
  if (niw.gamma0.size() != q || niw.xi.rows() != q)
    throw std::invalid_argument("run_covariate: NIW dimensions do not match q");
  if (!(niw.d > q - 1)) throw std::invalid_argument("run_covariate: need d > q - 1");

  const int T = cfg.iterations;
  const int discard = cfg.effective_discard();
  const int B = T - discard;
  const double tau_p = std::sqrt(2.0 * std::log(static_cast<double>(P)));

  // design with the intercept folded in as a leading column of ones
  Eigen::MatrixXd w(n, m);
  w.col(0).setOnes();
  w.rightCols(q) = x;

  TwoStageOutput out;
  init_output(out, P, B, cfg.store_pairs);
  out.alpha_draws.resize(B);
  out.omega2_draws.resize(B);
  out.gamma_draws.resize(B, q);
  out.psi_draws.resize(B, q * q);
  out.b_mean_sum = Eigen::MatrixXd::Zero(P, q);

  double alpha = std::max(priors.a_alpha / std::max(priors.b_alpha, 1e-12), 1e-2);
  double omega2 = priors.b_omega / priors.a_omega;
  Eigen::VectorXd gamma = niw.gamma0;
  Eigen::MatrixXd psi = niw.xi / std::max(niw.d - q - 1.0, 1.0);
  double step_sd = 0.25;
  int acc_win = 0, acc_cnt = 0, acc_tot = 0, step_tot = 0;

  // group identical covariate rows for the pair stage
  std::vector<int> group_of(n);
  std::vector<Eigen::VectorXd> group_x;
  {
    std::map<std::vector<double>, int> seen;
    for (int i = 0; i < n; ++i) {
      std::vector<double> key(x.row(i).data(), x.row(i).data() + q);
      auto [it, fresh] = seen.emplace(key, static_cast<int>(group_x.size()));
      if (fresh) group_x.push_back(x.row(i).transpose());
      group_of[i] = it->second;
    }
  }
  const int G = static_cast<int>(group_x.size());
  // per-group packed rows
  const int blocks = (n + 63) / 64;
  std::vector<std::vector<std::uint64_t>> gmask(G, std::vector<std::uint64_t>(blocks, 0));
  std::vector<int> gsize(G, 0);
  for (int i = 0; i < n; ++i) {
    gmask[group_of[i]][i >> 6] |= 1ULL << (i & 63);
    ++gsize[group_of[i]];
  }
  PackedColumns cols(yp);

  std::vector<LaplaceMarginalVec> lms(P);
  Eigen::MatrixXd bdraw(P, m);
  std::vector<double> zeta_sq(out.n_pairs);

  for (int t = 0; t < T; ++t) {
    // 1. Laplace marginals for b_j given (gamma, Psi) and alpha
    const double mu = calibrated_mu(alpha, P);
    Eigen::VectorXd m0(m);
    m0[0] = mu;
    m0.tail(q) = gamma;
    Eigen::MatrixXd s0 = Eigen::MatrixXd::Zero(m, m);
    s0(0, 0) = tau_p * tau_p;
    s0.bottomRightCorner(q, q) = psi;
    parallel_for(
        static_cast<std::size_t>(P),
        [&](std::size_t j) {
          lms[j] = laplace_probit(w, yp.y.col(static_cast<Eigen::Index>(j)), m0, s0);
        },
        cfg.threads);

    // draw b_j ~ N(mode, Q)
    {
      RngStream r = RngStream::keyed(cfg.seed, {0x747376ULL, static_cast<std::uint64_t>(t), 2});
      Eigen::VectorXd e(m);
      for (int j = 0; j < P; ++j) {
        Eigen::LLT<Eigen::MatrixXd> llt(lms[j].q);
        for (int l = 0; l < m; ++l) e[l] = r.normal();
        bdraw.row(j) = (lms[j].mode + llt.matrixL() * e).transpose();
      }
    }

    // 2. conjugate NIW update of (gamma, Psi) from the q-dim slope draws
    {
      RngStream r = RngStream::keyed(cfg.seed, {0x747376ULL, static_cast<std::uint64_t>(t), 7});
      const NiwPosterior post = niw_update(bdraw.rightCols(q), niw);
      std::tie(gamma, psi) = niw_draw(post, r);
    }

    // 3. MH update of alpha from the intercept components
    {
      RngStream r = RngStream::keyed(cfg.seed, {0x747376ULL, static_cast<std::uint64_t>(t), 3});
      const Eigen::VectorXd icpt = bdraw.col(0);
      bool acc = false;
      alpha = alpha_mh_step(alpha, icpt.sum(), icpt.squaredNorm(), P, tau_p, priors.a_alpha,
                            priors.b_alpha, step_sd, r, &acc);
      ++step_tot;
      acc_tot += acc;
      acc_cnt += acc;
      ++acc_win;
      if (t < discard && acc_win == 25) {
        if (acc_cnt / 25.0 > 0.5) step_sd *= 1.15;
        if (acc_cnt / 25.0 < 0.3) step_sd /= 1.15;
        acc_cnt = 0;
        acc_win = 0;
      }
    }

    // 4-5. pair stage at the plug-in modes, cells grouped by covariate row
    {
      const double omega = std::sqrt(omega2);
      // plug-in linear predictors per (group, species)
      Eigen::MatrixXd tgj(G, P);
      for (int g = 0; g < G; ++g) {
        Eigen::VectorXd wg(m);
        wg[0] = 1.0;
        wg.tail(q) = group_x[g];
        for (int j = 0; j < P; ++j) tgj(g, j) = wg.dot(lms[j].mode);
      }
      const int nodes = cfg.pair.nodes;
      const auto rule = numkit::gauss_legendre(nodes, -cfg.pair.halfwidth_sds * omega,
                                               cfg.pair.halfwidth_sds * omega);
      const bool record = t >= discard;
      const int bidx = t - discard;
      std::vector<double> local_sumzsq(out.n_pairs, 0.0);
      parallel_for(
          static_cast<std::size_t>(P),
          [&](std::size_t jj) {
            const int j = static_cast<int>(jj);
            RngStream r = RngStream::keyed(
                cfg.seed, {0x747376ULL, static_cast<std::uint64_t>(t), 5, jj});
            std::vector<double> logw(nodes);
            for (int k = j + 1; k < P; ++k) {
              // per-group cell counts
              double best = -std::numeric_limits<double>::infinity();
              for (int s = 0; s < nodes; ++s) {
                const double zeta = rule.nodes[s];
                const double rho = std::tanh(zeta);
                double ll = 0.0;
                for (int g = 0; g < G; ++g) {
                  int c11 = 0, cg = gsize[g];
                  int cj = 0, ck = 0;
                  for (int bl = 0; bl < blocks; ++bl) {
                    const std::uint64_t mrow = gmask[g][bl];
                    c11 += __builtin_popcountll(cols.bits[j][bl] & cols.bits[k][bl] & mrow);
                    cj += __builtin_popcountll(cols.bits[j][bl] & mrow);
                    ck += __builtin_popcountll(cols.bits[k][bl] & mrow);
                  }
                  const CellLogProbs lp = cell_log_probs(tgj(g, j), tgj(g, k), rho);
                  ll += c11 * lp.l11 + (cj - c11) * lp.l10 + (ck - c11) * lp.l01 +
                        (cg - cj - ck + c11) * lp.l00;
                }
                logw[s] = ll - 0.5 * zeta * zeta / (omega * omega) + std::log(rule.weights[s]);
                best = std::max(best, logw[s]);
              }
              double z = 0.0, m1 = 0.0, m2 = 0.0;
              for (int s = 0; s < nodes; ++s) {
                const double u = std::exp(logw[s] - best);
                z += u;
                m1 += u * rule.nodes[s];
                m2 += u * rule.nodes[s] * rule.nodes[s];
              }
              const double zh = m1 / z;
              const double zv = std::max(m2 / z - zh * zh, 1e-300);
              const double zeta_draw = r.normal(zh, std::sqrt(zv));
              const double sigma = std::tanh(zeta_draw);
              const int idx = TwoStageOutput::pair_index(j, k, P);
              local_sumzsq[idx] = zeta_draw * zeta_draw;
              if (record) {
                out.sigma_sum[idx] += sigma;
                out.sigma_sumsq[idx] += sigma * sigma;
                if (out.sigma_draws) (*out.sigma_draws)(bidx, idx) = sigma;
              }
            }
          },
          cfg.threads);
      double sum_zeta_sq = 0.0;
      for (double v : local_sumzsq) sum_zeta_sq += v;
      RngStream r = RngStream::keyed(cfg.seed, {0x747376ULL, static_cast<std::uint64_t>(t), 6});
      omega2 = omega2_conjugate_draw(out.n_pairs, sum_zeta_sq, priors.a_omega, priors.b_omega, r);
    }

    if (t >= discard) {
      const int b = t - discard;
      out.beta_draws.row(b) = bdraw.col(0);
      for (int j = 0; j < P; ++j)
        out.pi_draws(b, j) = numkit::std_normal_cdf(bdraw(j, 0));
      out.alpha_draws[b] = alpha;
      out.omega2_draws[b] = omega2;
      out.gamma_draws.row(b) = gamma;
      for (int r0 = 0; r0 < q; ++r0)
        for (int c0 = 0; c0 < q; ++c0) out.psi_draws(b, r0 * q + c0) = psi(r0, c0);
      out.b_mean_sum += bdraw.rightCols(q);
      ++out.stored;
    }
  }
  out.acceptance_alpha = step_tot ? static_cast<double>(acc_tot) / step_tot : 0.0;
  return out;
}

}  // namespace mvpibp::twostage
