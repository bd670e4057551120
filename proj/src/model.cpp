#include "mvpibp/model.hpp"

#include <cmath>
#include <stdexcept>

namespace mvpibp {

void FeatureMatrix::validate() const {
  if (n() < 1 || p() < 1) throw std::invalid_argument("FeatureMatrix: need n >= 1 and p >= 1");
  if (static_cast<Eigen::Index>(sample_ids.size()) != n())
    throw std::invalid_argument("FeatureMatrix: sample label count != n");
  if (static_cast<Eigen::Index>(feature_ids.size()) != p())
    throw std::invalid_argument("FeatureMatrix: feature label count != p");
  for (Eigen::Index i = 0; i < n(); ++i)
    for (Eigen::Index j = 0; j < p(); ++j)
      if (y(i, j) > 1)
        throw std::invalid_argument("FeatureMatrix: entries must be 0 or 1");
}

Eigen::VectorXi FeatureMatrix::column_counts() const {
  return y.cast<int>().colwise().sum();
}

Eigen::VectorXi FeatureMatrix::row_counts() const {
  return y.cast<int>().rowwise().sum();
}

int FeatureMatrix::richness() const {
  int r = 0;
  for (Eigen::Index j = 0; j < p(); ++j)
    if (y.col(j).maxCoeff() > 0) ++r;
  return r;
}

FeatureMatrix FeatureMatrix::padded(Eigen::Index target_p) const {
  if (target_p < p()) throw std::invalid_argument("padded: target below current width");
  if (target_p == p()) return *this;
  FeatureMatrix out;
  out.y.setZero(n(), target_p);
  out.y.leftCols(p()) = y;
  out.sample_ids = sample_ids;
  out.feature_ids = feature_ids;
  for (Eigen::Index j = p(); j < target_p; ++j)
    out.feature_ids.push_back("pad_" + std::to_string(j));
  return out;
}

FeatureMatrix FeatureMatrix::from_matrix(
    Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> m) {
  FeatureMatrix fm;
  fm.y = std::move(m);
  fm.sample_ids.reserve(fm.n());
  fm.feature_ids.reserve(fm.p());
  for (Eigen::Index i = 0; i < fm.n(); ++i) fm.sample_ids.push_back("s" + std::to_string(i));
  for (Eigen::Index j = 0; j < fm.p(); ++j) fm.feature_ids.push_back("f" + std::to_string(j));
  return fm;
}

IbpCalibration calibrate(double alpha, int p) {
  if (!(alpha > 0.0)) throw std::invalid_argument("calibrate: alpha must be > 0");
  if (p < 2) throw std::invalid_argument("calibrate: p must be >= 2 (tau undefined at p < 2)");
  IbpCalibration cal;
  cal.alpha = alpha;
  cal.p = p;
  cal.tau_p = std::sqrt(2.0 * std::log(static_cast<double>(p)));
  cal.mu_p = std::sqrt(1.0 + cal.tau_p * cal.tau_p) *
             numkit::std_normal_quantile(alpha / (alpha + p));
  return cal;
}

double calibrated_mu(double alpha, int p) {
  const double tau2 = 2.0 * std::log(static_cast<double>(p));
  return std::sqrt(1.0 + tau2) * numkit::std_normal_quantile(alpha / (alpha + p));
}

double marginal_prob(double beta) { return numkit::std_normal_cdf(beta); }

void CuspHyper::validate() const {
  if (!(a_theta > 0.0 && b_theta > 0.0 && theta_inf > 0.0 && kappa > 0.0))
    throw std::invalid_argument("CuspHyper: all hyperparameters must be > 0");
  if (!(theta_inf < b_theta / a_theta))
    throw std::invalid_argument("CuspHyper: spike scale must sit below the slab mean");
}

bool equicorrelation_pd(double rho, int p) {
  if (p < 2) throw std::invalid_argument("equicorrelation_pd: p must be >= 2");
  // eigenvalues are 1 + (p-1) rho (once) and 1 - rho (p-1 times)
  return rho < 1.0 && 1.0 + (p - 1) * rho > 0.0;
}

void CovariateDesign::validate() const {
  if (x.size() == 0) throw std::invalid_argument("CovariateDesign: empty X");
  if (!x.allFinite()) throw std::invalid_argument("CovariateDesign: X must be finite");
  if (const auto* niw = std::get_if<NiwPrior>(&prior)) {
    const Eigen::Index q = x.cols();
    if (niw->gamma0.size() != q || niw->xi.rows() != q || niw->xi.cols() != q)
      throw std::invalid_argument("CovariateDesign: NIW dimensions do not match q");
    if (!(niw->d > q - 1)) throw std::invalid_argument("CovariateDesign: need d > q - 1");
    Eigen::LLT<Eigen::MatrixXd> llt(niw->xi);
    if (llt.info() != Eigen::Success)
      throw std::invalid_argument("CovariateDesign: Xi must be positive definite");
  }
}

}  // namespace mvpibp
