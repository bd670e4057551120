#pragma once

#include <Eigen/Dense>
#include <vector>

namespace mvpibp {
class RngStream;
}

namespace mvpibp::numkit {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kSqrt2Pi = 2.50662827463100050242;

double std_normal_pdf(double x);

// absolute error <= 1e-14, saturates to 0/1 in the extreme tails
double std_normal_cdf(double x);

// AS241; domain error outside (0,1)
double std_normal_quantile(double p);

// log Phi(x), stable for x down to -1e7 via the tail expansion
double log_std_normal_cdf(double x);

// phi(x)/Phi(x); stays finite for very negative x
double mills_ratio(double x);

// Phi2((a,b); rho) via the Drezner split
//   Phi(a)Phi(b) + (1/2pi) \int_0^{asin rho} exp(-(a^2+b^2-2ab sin t)/(2cos^2 t)) dt
// with a fixed 32-node Gauss-Legendre rule on the theta integral.
// Domain error for |rho| >= 1.
double bivariate_normal_cdf(double a, double b, double rho);

// closed form of \int Phi(tau x + mu) phi(x) dx = Phi(mu / sqrt(1+tau^2))
double owen_probit_integral(double mu, double tau);

struct QuadratureRule {
  std::vector<double> nodes;    // strictly increasing, inside (lo, hi)
  std::vector<double> weights;  // positive, sum to hi - lo
  double lo = 0.0;
  double hi = 0.0;
};

// exact for polynomials up to degree 2*order - 1
QuadratureRule gauss_legendre(int order, double lo, double hi);

enum class HalfLine { nonnegative, negative };

// Normal(mean, sd) restricted to the requested half-line. Inverse CDF in the
// body, Robert's exponential rejection once the standardized bound exceeds 4,
// so rare-feature regimes (mean ~ -6 sd truncated to [0,inf)) stay O(1).
double sample_truncated_normal(double mean, double sd, HalfLine side, RngStream& rng);

// standard normal conditioned on being >= lower
double sample_truncated_std_normal_lower(double lower, RngStream& rng);

// Correlation matrix Sigma = D^-1 (Lambda Lambda^T + I) D^-1,
// D = diag(sqrt(1 + lambda_j^T lambda_j)); unit diagonal by construction.
class LowRankCorrelation {
 public:
  explicit LowRankCorrelation(Eigen::MatrixXd loadings);

  const Eigen::MatrixXd& loadings() const { return loadings_; }
  const Eigen::VectorXd& dscale() const { return d_; }
  Eigen::Index dim() const { return loadings_.rows(); }
  Eigen::Index rank() const { return loadings_.cols(); }

  // Sigma^-1 v without materializing the p x p inverse: O(pk^2 + k^3)
  Eigen::VectorXd solve(const Eigen::VectorXd& v) const;

  Eigen::MatrixXd dense() const;

 private:
  Eigen::MatrixXd loadings_;
  Eigen::VectorXd d_;
  Eigen::LLT<Eigen::MatrixXd> inner_llt_;  // I_k + Lambda^T Lambda
};

Eigen::VectorXd smw_solve(const LowRankCorrelation& lr, const Eigen::VectorXd& v);

// regularized incomplete beta I_x(a, b) by continued fraction
double inc_beta(double a, double b, double x);

// Student-t CDF (used for tobit-scenario marginals)
double student_t_cdf(double x, double df);

double fisher_z(double rho);
double fisher_z_inv(double zeta);

}  // namespace mvpibp::numkit
