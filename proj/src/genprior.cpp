#include "mvpibp/genprior.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <unordered_set>

#include "mvpibp/parallel.hpp"

namespace mvpibp::genprior {

namespace {

Eigen::VectorXd draw_betas(const IbpCalibration& cal, RngStream& rng) {
  Eigen::VectorXd b(cal.p);
  for (int j = 0; j < cal.p; ++j) b[j] = rng.normal(cal.mu_p, cal.tau_p);
  return b;
}

// correlated noise row eps ~ N_P(0, Sigma) without P x P factors
struct NoiseSampler {
  const FixedCorrelation& corr;
  int p;

  void draw(Eigen::VectorXd& eps, RngStream& rng) const {
    if (std::holds_alternative<FixedIdentity>(corr)) {
      for (int j = 0; j < p; ++j) eps[j] = rng.normal();
    } else if (const auto* eq = std::get_if<FixedEquicorrelation>(&corr)) {
      const double rho = eq->rho;
      if (!equicorrelation_pd(rho, p))
        throw std::invalid_argument("simulate: equicorrelation matrix not positive definite");
      for (int j = 0; j < p; ++j) eps[j] = rng.normal();
      const double ebar = eps.mean();
      const double a = std::sqrt(1.0 - rho);
      const double b = std::sqrt(1.0 + (p - 1) * rho);
      for (int j = 0; j < p; ++j) eps[j] = a * (eps[j] - ebar) + b * ebar;
    } else {
      const auto& lam = std::get<FixedLowRank>(corr).loadings;
      if (lam.rows() != p) throw std::invalid_argument("simulate: loadings row count != P");
      const int k = static_cast<int>(lam.cols());
      Eigen::VectorXd g(k);
      for (int l = 0; l < k; ++l) g[l] = rng.normal();
      for (int j = 0; j < p; ++j) eps[j] = rng.normal();
      eps += lam * g;
      for (int j = 0; j < p; ++j) eps[j] /= std::sqrt(1.0 + lam.row(j).squaredNorm());
    }
  }
};

// k distinct indices in [0, n) by Floyd's algorithm
void sample_rows(int n, int k, RngStream& rng, std::unordered_set<int>& out) {
  out.clear();
  for (int j = n - k; j < n; ++j) {
    const int t = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(j) + 1));
    if (!out.insert(t).second) out.insert(j);
  }
}

}  // namespace

FeatureMatrix simulate_ibp_sequential(double alpha, int n, RngStream& rng) {
  if (!(alpha > 0.0) || n < 1)
    throw std::invalid_argument("simulate_ibp_sequential: need alpha > 0 and n >= 1");
  std::vector<std::vector<int>> dish_rows;  // rows holding each dish
  for (int i = 1; i <= n; ++i) {
    for (auto& rows : dish_rows)
      if (rng.uniform() * i < static_cast<double>(rows.size())) rows.push_back(i - 1);
    const int fresh = rng.poisson(alpha / i);
    for (int d = 0; d < fresh; ++d) dish_rows.push_back({i - 1});
  }
  Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> m(n, dish_rows.size());
  m.setZero();
  for (std::size_t j = 0; j < dish_rows.size(); ++j)
    for (int i : dish_rows[j]) m(i, static_cast<Eigen::Index>(j)) = 1;
  return FeatureMatrix::from_matrix(std::move(m));
}

std::pair<FeatureMatrix, Eigen::VectorXd> simulate_ibp_finite(double alpha, int P, int n,
                                                              RngStream& rng) {
  if (!(alpha > 0.0) || P < 1 || n < 1)
    throw std::invalid_argument("simulate_ibp_finite: bad arguments");
  Eigen::VectorXd pis(P);
  const double a = alpha / P;
  for (int j = 0; j < P; ++j) pis[j] = std::pow(rng.uniform(), 1.0 / a);
  Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> m(n, P);
  m.setZero();
  std::unordered_set<int> rows;
  for (int j = 0; j < P; ++j) {
    const int k = rng.binomial(n, pis[j]);
    if (k == 0) continue;
    sample_rows(n, k, rng, rows);
    for (int i : rows) m(i, j) = 1;
  }
  return {FeatureMatrix::from_matrix(std::move(m)), std::move(pis)};
}

PriorDraw simulate_mvpibp(const IbpCalibration& cal, const FixedCorrelation& corr, int n,
                          RngStream& rng, bool keep_latent) {
  if (n < 1) throw std::invalid_argument("simulate_mvpibp: n must be >= 1");
  PriorDraw out;
  out.betas = draw_betas(cal, rng);
  out.pis = out.betas.unaryExpr([](double b) { return numkit::std_normal_cdf(b); });
  const int P = cal.p;
  Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> m(n, P);
  m.setZero();

  if (std::holds_alternative<FixedIdentity>(corr) && !keep_latent) {
    // cells are independent given beta: column binomial + uniform row subset
    std::unordered_set<int> rows;
    for (int j = 0; j < P; ++j) {
      const int k = rng.binomial(n, out.pis[j]);
      if (k == 0) continue;
      sample_rows(n, k, rng, rows);
      for (int i : rows) m(i, j) = 1;
    }
  } else {
    NoiseSampler noise{corr, P};
    Eigen::VectorXd eps(P);
    if (keep_latent) out.latent = Eigen::MatrixXd(n, P);
    for (int i = 0; i < n; ++i) {
      noise.draw(eps, rng);
      for (int j = 0; j < P; ++j) {
        const double z = out.betas[j] + eps[j];
        m(i, j) = z > 0.0 ? 1 : 0;
        if (keep_latent) (*out.latent)(i, j) = z;
      }
    }
  }
  out.matrix = FeatureMatrix::from_matrix(std::move(m));
  return out;
}

PriorDraw simulate_covariate_mvpibp(const IbpCalibration& cal, const FixedCorrelation& corr,
                                    const Eigen::MatrixXd& x, const Eigen::VectorXd& gamma,
                                    const Eigen::MatrixXd& psi, RngStream& rng,
                                    bool keep_latent) {
  const int n = static_cast<int>(x.rows());
  const int q = static_cast<int>(x.cols());
  if (n < 1) throw std::invalid_argument("simulate_covariate_mvpibp: X has no rows");
  if (gamma.size() != q || psi.rows() != q || psi.cols() != q)
    throw std::invalid_argument("simulate_covariate_mvpibp: (gamma, Psi) dimension mismatch");
  PriorDraw out;
  out.betas = draw_betas(cal, rng);
  out.pis = out.betas.unaryExpr([](double b) { return numkit::std_normal_cdf(b); });
  const int P = cal.p;

  Eigen::LLT<Eigen::MatrixXd> llt(psi);
  if (llt.info() != Eigen::Success)
    throw std::invalid_argument("simulate_covariate_mvpibp: Psi not positive definite");
  const Eigen::MatrixXd L = llt.matrixL();
  Eigen::MatrixXd bcoef(P, q);  // species slopes
  Eigen::VectorXd e(q);
  for (int j = 0; j < P; ++j) {
    for (int l = 0; l < q; ++l) e[l] = rng.normal();
    bcoef.row(j) = (gamma + L * e).transpose();
  }

  Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> m(n, P);
  m.setZero();
  if (keep_latent) out.latent = Eigen::MatrixXd(n, P);
  NoiseSampler noise{corr, P};
  Eigen::VectorXd eps(P);
  for (int i = 0; i < n; ++i) {
    noise.draw(eps, rng);
    const Eigen::VectorXd shift = bcoef * x.row(i).transpose();
    for (int j = 0; j < P; ++j) {
      const double z = out.betas[j] + shift[j] + eps[j];
      m(i, j) = z > 0.0 ? 1 : 0;
      if (keep_latent) (*out.latent)(i, j) = z;
    }
  }
  out.matrix = FeatureMatrix::from_matrix(std::move(m));
  return out;
}

Eigen::VectorXi simulate_marginal_counts(const IbpCalibration& cal, const FixedCorrelation& corr,
                                         int replicates, std::uint64_t seed, int threads) {
  Eigen::VectorXi counts(replicates);
  parallel_for(
      static_cast<std::size_t>(replicates),
      [&](std::size_t r) {
        RngStream rng = RngStream::keyed(seed, {0x6d61726769ULL, r});
        NoiseSampler noise{corr, cal.p};
        Eigen::VectorXd eps(cal.p);
        int c = 0;
        if (std::holds_alternative<FixedIdentity>(corr)) {
          for (int j = 0; j < cal.p; ++j) {
            const double beta = rng.normal(cal.mu_p, cal.tau_p);
            if (rng.uniform() < numkit::std_normal_cdf(beta)) ++c;
          }
        } else {
          const Eigen::VectorXd betas = draw_betas(cal, rng);
          noise.draw(eps, rng);
          for (int j = 0; j < cal.p; ++j)
            if (betas[j] + eps[j] > 0.0) ++c;
        }
        counts[static_cast<Eigen::Index>(r)] = c;
      },
      threads);
  return counts;
}

Eigen::VectorXi simulate_covariate_marginal_counts(const IbpCalibration& cal,
                                                   const FixedCorrelation& corr,
                                                   const Eigen::VectorXd& x_row,
                                                   const Eigen::VectorXd& gamma,
                                                   const Eigen::MatrixXd& psi, int replicates,
                                                   std::uint64_t seed, int threads) {
  const int q = static_cast<int>(x_row.size());
  Eigen::LLT<Eigen::MatrixXd> llt(psi);
  if (llt.info() != Eigen::Success)
    throw std::invalid_argument("simulate_covariate_marginal_counts: Psi not PD");
  const Eigen::MatrixXd L = llt.matrixL();
  Eigen::VectorXi counts(replicates);
  parallel_for(
      static_cast<std::size_t>(replicates),
      [&](std::size_t r) {
        RngStream rng = RngStream::keyed(seed, {0x636f766dULL, r});
        NoiseSampler noise{corr, cal.p};
        Eigen::VectorXd eps(cal.p), e(q);
        noise.draw(eps, rng);
        int c = 0;
        for (int j = 0; j < cal.p; ++j) {
          const double beta = rng.normal(cal.mu_p, cal.tau_p);
          for (int l = 0; l < q; ++l) e[l] = rng.normal();
          const double shift = x_row.dot(gamma + L * e);
          if (beta + shift + eps[j] > 0.0) ++c;
        }
        counts[static_cast<Eigen::Index>(r)] = c;
      },
      threads);
  return counts;
}

Eigen::VectorXi simulate_common_counts(const IbpCalibration& cal, double eps, int replicates,
                                       std::uint64_t seed) {
  if (!(eps > 0.0 && eps < 1.0)) throw std::invalid_argument("common counts: eps in (0,1)");
  const double thr = numkit::std_normal_quantile(eps);
  Eigen::VectorXi counts(replicates);
  parallel_for(static_cast<std::size_t>(replicates), [&](std::size_t r) {
    RngStream rng = RngStream::keyed(seed, {0x636f6d6dULL, r});
    int c = 0;
    for (int j = 0; j < cal.p; ++j)
      if (rng.normal(cal.mu_p, cal.tau_p) > thr) ++c;
    counts[static_cast<Eigen::Index>(r)] = c;
  });
  return counts;
}

Eigen::VectorXi simulate_covariate_common_counts(const IbpCalibration& cal, double eps,
                                                 const Eigen::VectorXd& x_row,
                                                 const Eigen::VectorXd& gamma,
                                                 const Eigen::MatrixXd& psi, int replicates,
                                                 std::uint64_t seed) {
  if (!(eps > 0.0 && eps < 1.0)) throw std::invalid_argument("common counts: eps in (0,1)");
  const double thr = numkit::std_normal_quantile(eps);
  const int q = static_cast<int>(x_row.size());
  Eigen::LLT<Eigen::MatrixXd> llt(psi);
  if (llt.info() != Eigen::Success)
    throw std::invalid_argument("simulate_covariate_common_counts: Psi not PD");
  const Eigen::MatrixXd L = llt.matrixL();
  Eigen::VectorXi counts(replicates);
  parallel_for(static_cast<std::size_t>(replicates), [&](std::size_t r) {
    RngStream rng = RngStream::keyed(seed, {0x63636f76ULL, r});
    Eigen::VectorXd e(q);
    int c = 0;
    for (int j = 0; j < cal.p; ++j) {
      const double beta = rng.normal(cal.mu_p, cal.tau_p);
      for (int l = 0; l < q; ++l) e[l] = rng.normal();
      if (beta + x_row.dot(gamma + L * e) > thr) ++c;
    }
    counts[static_cast<Eigen::Index>(r)] = c;
  });
  return counts;
}

Eigen::VectorXi simulate_pstar_replicates(const IbpCalibration& cal, int n, int replicates,
                                          std::uint64_t seed, int threads) {
  Eigen::VectorXi out(replicates);
  parallel_for(
      static_cast<std::size_t>(replicates),
      [&](std::size_t r) {
        RngStream rng = RngStream::keyed(seed, {0x70737472ULL, r});
        int pstar = 0;
        for (int j = 0; j < cal.p; ++j) {
          const double pi = numkit::std_normal_cdf(rng.normal(cal.mu_p, cal.tau_p));
          if (rng.binomial(n, pi) > 0) ++pstar;
        }
        out[static_cast<Eigen::Index>(r)] = pstar;
      },
      threads);
  return out;
}

Eigen::VectorXi features_per_sample(const FeatureMatrix& y) { return y.row_counts(); }

int richness(const FeatureMatrix& y) { return y.richness(); }

int common_count(const Eigen::VectorXd& pis, double eps) {
  if (!(eps > 0.0 && eps < 1.0)) throw std::invalid_argument("common_count: eps in (0,1)");
  int c = 0;
  for (Eigen::Index j = 0; j < pis.size(); ++j)
    if (pis[j] > eps) ++c;
  return c;
}

double harmonic_number(long n) {
  if (n < 1) throw std::invalid_argument("harmonic_number: n >= 1");
  double h = 0.0;
  // sum small-to-large for accuracy
  for (long i = n; i >= 1; --i) h += 1.0 / static_cast<double>(i);
  return h;
}

double oracle_expected_common(double alpha, double eps) {
  if (!(eps > 0.0 && eps < 1.0)) throw std::invalid_argument("oracle: eps in (0,1)");
  return alpha * std::exp(-numkit::std_normal_quantile(eps) - 0.5);
}

double oracle_expected_common_ibp(double alpha, double eps) {
  if (!(eps > 0.0 && eps < 1.0)) throw std::invalid_argument("oracle: eps in (0,1)");
  return -alpha * std::log(eps);
}

std::pair<double, double> oracle_pstar_bounds(double alpha, long n) {
  const double h = harmonic_number(n);
  return {alpha * (h - 0.073), alpha * (h - 0.02)};
}

std::pair<double, double> oracle_variance_bounds(double alpha, const std::vector<double>& rhos) {
  if (rhos.empty()) throw std::invalid_argument("oracle_variance_bounds: empty correlation set");
  double lo = std::numeric_limits<double>::infinity();
  double hi = 0.0;
  for (double r : rhos) {
    if (!(std::fabs(r) < 1.0)) throw std::invalid_argument("oracle_variance_bounds: |rho| < 1");
    const double v = std::fabs(std::exp(r) - 1.0);
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  return {alpha + 0.5 * alpha * alpha * lo, alpha + 0.5 * alpha * alpha * hi};
}

double oracle_covariate_mean(double alpha, const Eigen::VectorXd& x, const Eigen::VectorXd& gamma,
                             const Eigen::MatrixXd& psi) {
  const double g = std::exp(x.dot(gamma) + 0.5 * (x.dot(psi * x) - 1.0));
  return alpha * g;
}

double oracle_covariate_common(double alpha, double eps, const Eigen::VectorXd& x,
                               const Eigen::VectorXd& gamma, const Eigen::MatrixXd& psi) {
  if (!(eps > 0.0 && eps < 1.0)) throw std::invalid_argument("oracle: eps in (0,1)");
  return alpha * std::exp(-numkit::std_normal_quantile(eps) + 0.5 * (x.dot(psi * x) - 1.0) +
                          x.dot(gamma));
}

double exact_cell_prob(const IbpCalibration& cal) {
  return numkit::owen_probit_integral(cal.mu_p, cal.tau_p);
}

double exact_common_expectation(const IbpCalibration& cal, double eps) {
  const double thr = numkit::std_normal_quantile(eps);
  return cal.p * (1.0 - numkit::std_normal_cdf((thr - cal.mu_p) / cal.tau_p));
}

double exact_pstar_expectation(const IbpCalibration& cal, int n) {
  const auto rule = numkit::gauss_legendre(200, -10.0, 10.0);
  double acc = 0.0;
  for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
    const double u = rule.nodes[i];
    const double pi = numkit::std_normal_cdf(cal.mu_p + cal.tau_p * u);
    const double keep = -std::expm1(n * std::log1p(-pi));
    acc += rule.weights[i] * keep * numkit::std_normal_pdf(u);
  }
  return cal.p * acc;
}

double exact_covariate_mean(const IbpCalibration& cal, const Eigen::VectorXd& x,
                            const Eigen::VectorXd& gamma, const Eigen::MatrixXd& psi) {
  const double s = std::sqrt(1.0 + cal.tau_p * cal.tau_p + x.dot(psi * x));
  return cal.p * numkit::std_normal_cdf((cal.mu_p + x.dot(gamma)) / s);
}

double exact_covariate_common(const IbpCalibration& cal, double eps, const Eigen::VectorXd& x,
                              const Eigen::VectorXd& gamma, const Eigen::MatrixXd& psi) {
  const double thr = numkit::std_normal_quantile(eps);
  const double s = std::sqrt(cal.tau_p * cal.tau_p + x.dot(psi * x));
  return cal.p * (1.0 - numkit::std_normal_cdf((thr - cal.mu_p - x.dot(gamma)) / s));
}

}  // namespace mvpibp::genprior
