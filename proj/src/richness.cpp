#include "mvpibp/richness.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "mvpibp/kernels.hpp"

namespace mvpibp::richness {

double expected_richness(const Eigen::VectorXd& pis, int n) {
  if (n < 0) throw std::invalid_argument("expected_richness: n must be >= 0");
  for (Eigen::Index j = 0; j < pis.size(); ++j)
    if (!(pis[j] >= 0.0 && pis[j] <= 1.0))
      throw std::invalid_argument("expected_richness: pi outside [0,1]");
  if (n == 0) return 0.0;
  return kernels::occupancy_sum(pis.data(), static_cast<std::size_t>(pis.size()),
                                static_cast<double>(n));
}

double quantile(Eigen::VectorXd draws, double q) {
  if (draws.size() == 0) throw std::invalid_argument("quantile: empty draws");
  std::sort(draws.data(), draws.data() + draws.size());
  const double pos = q * static_cast<double>(draws.size() - 1);
  const auto lo = static_cast<Eigen::Index>(std::floor(pos));
  const auto hi = static_cast<Eigen::Index>(std::ceil(pos));
  const double frac = pos - static_cast<double>(lo);
  return (1.0 - frac) * draws[lo] + frac * draws[hi];
}

RichnessForecast predict_delta(const Eigen::MatrixXd& pi_draws, int n0, int m,
                               double observed_pstar_n0) {
  if (n0 < 1 || m < 1) throw std::invalid_argument("predict_delta: need n0 >= 1 and m >= 1");
  const Eigen::Index B = pi_draws.rows();
  RichnessForecast fc;
  fc.n0 = n0;
  fc.m = m;
  fc.observed_pstar_n0 = observed_pstar_n0;
  fc.delta_draws.resize(B);
  fc.model_pstar_n0_draws.resize(B);
  for (Eigen::Index b = 0; b < B; ++b) {
    const Eigen::VectorXd pis = pi_draws.row(b);
    fc.delta_draws[b] = expected_richness(pis, n0 + m) - observed_pstar_n0;
    fc.model_pstar_n0_draws[b] = expected_richness(pis, n0);
  }
  fc.delta_q025 = quantile(fc.delta_draws, 0.025);
  fc.delta_median = quantile(fc.delta_draws, 0.5);
  fc.delta_q975 = quantile(fc.delta_draws, 0.975);
  return fc;
}

AccumulationCurve accumulation_curve(const Eigen::MatrixXd& pi_draws,
                                     const std::vector<int>& n_grid) {
  if (n_grid.empty()) throw std::invalid_argument("accumulation_curve: empty grid");
  for (std::size_t i = 1; i < n_grid.size(); ++i)
    if (n_grid[i] <= n_grid[i - 1])
      throw std::invalid_argument("accumulation_curve: grid must be increasing");
  const Eigen::Index B = pi_draws.rows();
  AccumulationCurve curve;
  curve.n_grid = n_grid;
  const auto G = static_cast<Eigen::Index>(n_grid.size());
  curve.mean.resize(G);
  curve.q025.resize(G);
  curve.q975.resize(G);
  Eigen::VectorXd vals(B);
  for (Eigen::Index g = 0; g < G; ++g) {
    for (Eigen::Index b = 0; b < B; ++b)
      vals[b] = expected_richness(pi_draws.row(b), n_grid[static_cast<std::size_t>(g)]);
    curve.mean[g] = vals.mean();
    curve.q025[g] = quantile(vals, 0.025);
    curve.q975[g] = quantile(vals, 0.975);
  }
  return curve;
}

}  // namespace mvpibp::richness
