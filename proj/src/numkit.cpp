#include "mvpibp/numkit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "mvpibp/kernels.hpp"
#include "mvpibp/rng.hpp"

namespace mvpibp::numkit {

double std_normal_pdf(double x) { return std::exp(-0.5 * x * x) / kSqrt2Pi; }

double std_normal_cdf(double x) { return 0.5 * std::erfc(-x * M_SQRT1_2); }

double std_normal_quantile(double p) {
  // ALGORITHM AS241, APPL. STATIST. (1988) VOL. 37, NO. 3 (PPND16),
  // accurate to about 1 part in 1e16.
  if (!(p > 0.0 && p < 1.0)) throw std::domain_error("std_normal_quantile: p must be in (0,1)");
  const double q = p - 0.5;
  if (std::fabs(q) <= 0.425) {
    const double r = 0.180625 - q * q;
    return q *
           (((((((2.5090809287301226727e+3 * r + 3.3430575583588128105e+4) * r +
                 6.7265770927008700853e+4) * r + 4.5921953931549871457e+4) * r +
               1.3731693765509461125e+4) * r + 1.9715909503065514427e+3) * r +
             1.3314166789178437745e+2) * r + 3.3871328727963666080e+0) /
           (((((((5.2264952788528545610e+3 * r + 2.8729085735721942674e+4) * r +
                 3.9307895800092710610e+4) * r + 2.1213794301586595867e+4) * r +
               5.3941960214247511077e+3) * r + 6.8718700749205790830e+2) * r +
             4.2313330701600911252e+1) * r + 1.0);
  }
  double r = q < 0.0 ? p : 1.0 - p;
  r = std::sqrt(-std::log(r));
  double val;
  if (r <= 5.0) {
    r -= 1.6;
    val = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
                2.41780725177450611770e-1) * r + 1.27045825245236838258e+0) * r +
              3.64784832476320460504e+0) * r + 5.76949722146069140550e+0) * r +
            4.63033784615654529590e+0) * r + 1.42343711074968357734e+0) /
          (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
                1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r +
              6.89767334985100004550e-1) * r + 1.67638483018380384940e+0) * r +
            2.05319162663775882187e+0) * r + 1.0);
  } else {
    r -= 5.0;
    val = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
                1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r +
              2.96560571828504891230e-1) * r + 1.78482653991729133580e+0) * r +
            5.46378491116411436990e+0) * r + 6.65790464350110377720e+0) /
          (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
                1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r +
              1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r +
            5.99832206555887937690e-1) * r + 1.0);
  }
  return q < 0.0 ? -val : val;
}

double log_std_normal_cdf(double x) {
  if (x > -37.0) return std::log(std_normal_cdf(x));
  // Phi(x) ~ phi(x)/(-x) * (1 - 1/x^2 + 3/x^4 - 15/x^6)
  const double x2 = x * x;
  const double corr = 1.0 - 1.0 / x2 + 3.0 / (x2 * x2) - 15.0 / (x2 * x2 * x2);
  return -0.5 * x2 - std::log(-x * kSqrt2Pi) + std::log(corr);
}

double mills_ratio(double x) {
  if (x > -20.0) {
    const double c = std_normal_cdf(x);
    return std_normal_pdf(x) / c;
  }
  const double x2 = x * x;
  const double corr =
      1.0 - 1.0 / x2 + 3.0 / (x2 * x2) - 15.0 / (x2 * x2 * x2) + 105.0 / (x2 * x2 * x2 * x2);
  return -x / corr;
}

namespace {

// order-32 rule on [0,1], built once
struct Unit32 {
  double node[32];
  double weight[32];
  Unit32() {
    QuadratureRule r = gauss_legendre(32, 0.0, 1.0);
    std::copy(r.nodes.begin(), r.nodes.end(), node);
    std::copy(r.weights.begin(), r.weights.end(), weight);
  }
};

const Unit32& unit32() {
  static const Unit32 u;
  return u;
}

}  // namespace

double bivariate_normal_cdf(double a, double b, double rho) {
  if (!(std::fabs(rho) < 1.0))
    throw std::domain_error("bivariate_normal_cdf: |rho| must be < 1");
  const double pa = std_normal_cdf(a);
  const double pb = std_normal_cdf(b);
  if (rho == 0.0) return pa * pb;
  const double theta = std::asin(rho);
  const Unit32& u = unit32();
  double args[32];
  double wts[32];
  const double c = a * a + b * b;
  for (int i = 0; i < 32; ++i) {
    const double t = theta * u.node[i];
    const double st = std::sin(t);
    const double ct2 = 1.0 - st * st;
    args[i] = -(c - 2.0 * a * b * st) / (2.0 * ct2);
    wts[i] = theta * u.weight[i];
  }
  const double integral = kernels::weighted_exp_sum(args, wts, 32);
  double v = pa * pb + integral / (2.0 * kPi);
  return std::min(1.0, std::max(0.0, v));
}

double owen_probit_integral(double mu, double tau) {
  if (!(tau >= 0.0)) throw std::domain_error("owen_probit_integral: tau must be >= 0");
  return std_normal_cdf(mu / std::sqrt(1.0 + tau * tau));
}

QuadratureRule gauss_legendre(int order, double lo, double hi) {
  if (order < 1) throw std::invalid_argument("gauss_legendre: order must be >= 1");
  if (!(lo < hi)) throw std::invalid_argument("gauss_legendre: need lo < hi");
  QuadratureRule rule;
  rule.lo = lo;
  rule.hi = hi;
  rule.nodes.resize(order);
  rule.weights.resize(order);
  const int m = (order + 1) / 2;
  const double xm = 0.5 * (hi + lo);
  const double xl = 0.5 * (hi - lo);
  for (int i = 0; i < m; ++i) {
    // Chebyshev initial guess, then Newton on the Legendre recurrence
    double z = std::cos(kPi * (i + 0.75) / (order + 0.5));
    double pp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p1 = 1.0, p2 = 0.0;
      for (int j = 0; j < order; ++j) {
        const double p3 = p2;
        p2 = p1;
        p1 = ((2.0 * j + 1.0) * z * p2 - j * p3) / (j + 1.0);
      }
      pp = order * (z * p1 - p2) / (z * z - 1.0);
      const double z1 = z;
      z = z1 - p1 / pp;
      if (std::fabs(z - z1) < 1e-15) {
        // one more recurrence pass so pp matches the converged node
        p1 = 1.0;
        p2 = 0.0;
        for (int j = 0; j < order; ++j) {
          const double p3 = p2;
          p2 = p1;
          p1 = ((2.0 * j + 1.0) * z * p2 - j * p3) / (j + 1.0);
        }
        pp = order * (z * p1 - p2) / (z * z - 1.0);
        break;
      }
    }
    rule.nodes[i] = xm - xl * z;
    rule.nodes[order - 1 - i] = xm + xl * z;
    const double w = 2.0 * xl / ((1.0 - z * z) * pp * pp);
    rule.weights[i] = w;
    rule.weights[order - 1 - i] = w;
  }
  return rule;
}

double sample_truncated_std_normal_lower(double lower, RngStream& rng) {
  if (lower <= 4.0) {
    // complementary inverse CDF keeps right-tail resolution
    const double tail = 0.5 * std::erfc(lower * M_SQRT1_2);  // P(X >= lower)
    const double w = tail * (1.0 - rng.uniform());
    if (w <= 0.0) return lower;  // underflow guard, tail >= 6e-9 here
    return -std_normal_quantile(w);
  }
  // Robert (1995) shifted exponential proposal
  const double lam = 0.5 * (lower + std::sqrt(lower * lower + 4.0));
  for (;;) {
    const double x = lower + rng.exponential(lam);
    const double d = x - lam;
    if (std::log(rng.uniform()) <= -0.5 * d * d) return x;
  }
}

double sample_truncated_normal(double mean, double sd, HalfLine side, RngStream& rng) {
  if (!(sd > 0.0)) throw std::invalid_argument("sample_truncated_normal: sd must be > 0");
  if (side == HalfLine::nonnegative) {
    const double lower = -mean / sd;
    return mean + sd * sample_truncated_std_normal_lower(lower, rng);
  }
  // X ~ N(mean, sd) | X < 0  <=>  -X ~ N(-mean, sd) | -X > 0
  const double lower = mean / sd;
  double v = -(-mean + sd * sample_truncated_std_normal_lower(lower, rng));
  if (v >= 0.0) v = std::nextafter(0.0, -1.0);
  return v;
}

LowRankCorrelation::LowRankCorrelation(Eigen::MatrixXd loadings)
    : loadings_(std::move(loadings)) {
  const Eigen::Index p = loadings_.rows();
  const Eigen::Index k = loadings_.cols();
  d_ = (loadings_.rowwise().squaredNorm().array() + 1.0).sqrt().matrix();
  Eigen::MatrixXd inner = Eigen::MatrixXd::Identity(k, k) + loadings_.transpose() * loadings_;
  inner_llt_.compute(inner);
  if (inner_llt_.info() != Eigen::Success)
    throw std::runtime_error("LowRankCorrelation: inner system not positive definite");
  (void)p;
}

Eigen::VectorXd LowRankCorrelation::solve(const Eigen::VectorXd& v) const {
  if (v.size() != dim()) throw std::invalid_argument("smw_solve: dimension mismatch");
  // Sigma^-1 = D (I - Lambda (I + Lambda^T Lambda)^-1 Lambda^T) D
  Eigen::VectorXd w = d_.cwiseProduct(v);
  Eigen::VectorXd t = loadings_.transpose() * w;
  Eigen::VectorXd y = inner_llt_.solve(t);
  Eigen::VectorXd u = w - loadings_ * y;
  return d_.cwiseProduct(u);
}

Eigen::MatrixXd LowRankCorrelation::dense() const {
  Eigen::MatrixXd omega =
      loadings_ * loadings_.transpose() + Eigen::MatrixXd::Identity(dim(), dim());
  Eigen::VectorXd dinv = d_.cwiseInverse();
  return dinv.asDiagonal() * omega * dinv.asDiagonal();
}

Eigen::VectorXd smw_solve(const LowRankCorrelation& lr, const Eigen::VectorXd& v) {
  return lr.solve(v);
}

double inc_beta(double a, double b, double x) {
  if (x < 0.0 || x > 1.0) throw std::domain_error("inc_beta: x must be in [0,1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double lbeta = std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
  const double front = std::exp(a * std::log(x) + b * std::log1p(-x) - lbeta);
  const bool swap = x >= (a + 1.0) / (a + b + 2.0);
  if (swap) return 1.0 - inc_beta(b, a, 1.0 - x);
  // Lentz continued fraction
  const double tiny = 1e-300;
  double c = 1.0;
  double d = 1.0 - (a + b) * x / (a + 1.0);
  if (std::fabs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 300; ++m) {
    const double m2 = 2.0 * m;
    double num = m * (b - m) * x / ((a + m2 - 1.0) * (a + m2));
    d = 1.0 + num * d;
    if (std::fabs(d) < tiny) d = tiny;
    c = 1.0 + num / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    h *= d * c;
    num = -(a + m) * (a + b + m) * x / ((a + m2) * (a + m2 + 1.0));
    d = 1.0 + num * d;
    if (std::fabs(d) < tiny) d = tiny;
    c = 1.0 + num / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::fabs(delta - 1.0) < 1e-15) break;
  }
  return front * h / a;
}

double student_t_cdf(double x, double df) {
  if (!(df > 0.0)) throw std::domain_error("student_t_cdf: df must be > 0");
  if (x == 0.0) return 0.5;
  const double z = df / (df + x * x);
  const double tail = 0.5 * inc_beta(0.5 * df, 0.5, z);
  return x > 0.0 ? 1.0 - tail : tail;
}

double fisher_z(double rho) {
  if (!(std::fabs(rho) < 1.0)) throw std::domain_error("fisher_z: |rho| must be < 1");
  return 0.5 * std::log((1.0 + rho) / (1.0 - rho));
}

double fisher_z_inv(double zeta) { return std::tanh(zeta); }

}  // namespace mvpibp::numkit
