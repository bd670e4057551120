#pragma once

#include <Eigen/Dense>
#include <vector>

namespace mvpibp::richness {

// E[p*_n] = sum_j (1 - (1 - pi_j)^n)
double expected_richness(const Eigen::VectorXd& pis, int n);

struct RichnessForecast {
  int n0 = 0;
  int m = 0;
  double observed_pstar_n0 = 0.0;
  Eigen::VectorXd delta_draws;      // per posterior draw
  double delta_q025 = 0.0, delta_median = 0.0, delta_q975 = 0.0;
  // model-based E[p*_{n0}] per draw, emitted for prior-data conflict checks
  Eigen::VectorXd model_pstar_n0_draws;
};

// per-draw Delta^(b) = expected_richness(pi^(b), n0 + m) - observed p*_{n0}
RichnessForecast predict_delta(const Eigen::MatrixXd& pi_draws, int n0, int m,
                               double observed_pstar_n0);

struct AccumulationCurve {
  std::vector<int> n_grid;
  Eigen::VectorXd mean;
  Eigen::VectorXd q025;
  Eigen::VectorXd q975;
};

AccumulationCurve accumulation_curve(const Eigen::MatrixXd& pi_draws,
                                     const std::vector<int>& n_grid);

// empirical quantile (sorted-copy, linear interpolation)
double quantile(Eigen::VectorXd draws, double q);

}  // namespace mvpibp::richness
