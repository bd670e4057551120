#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "mvpibp/model.hpp"
#include "mvpibp/rng.hpp"

namespace mvpibp::harness {

enum class ScenarioKind { factor, tobit, common };

ScenarioKind scenario_kind_from_string(const std::string& s);
std::string to_string(ScenarioKind k);

struct Scenario {
  ScenarioKind kind = ScenarioKind::factor;
  double alpha = 2.0;
  int n = 80;
  int P = 300;
  std::uint64_t seed = 0;
  Eigen::VectorXd beta_true;  // on the scaled (marginal) scale
  Eigen::VectorXd pi_true;
  // correlation truth: common rho, or explicit loadings
  std::variant<double, Eigen::MatrixXd> corr_truth;
  double delta10_true = 0.0;   // expected_richness(pi*, 50) - observed p*_40
  int pstar40_observed = 0;
  int pstar_observed = 0;

  Eigen::MatrixXd sigma_true() const;
};

std::pair<FeatureMatrix, Scenario> generate_scenario(ScenarioKind kind, double alpha, int n,
                                                     int P, std::uint64_t seed);

// ---- metrics -------------------------------------------------------------

// sum_j E[(pi_j - pi*_j)^2 | y] / P
double mse_pi(const Eigen::MatrixXd& pi_draws, const Eigen::VectorXd& pi_true);
// sum_jq E[(Sigma_jq - Sigma*_jq)^2 | y] / P^2, from streaming draw moments
double mse_sigma(const Eigen::MatrixXd& sigma_sum, const Eigen::MatrixXd& sigma_sumsq,
                 int n_draws, const Eigen::MatrixXd& sigma_true);
// streaming pair-indexed variant (off-diagonals j < k; diagonal exact at 1)
double mse_sigma_pairs(const Eigen::VectorXd& sigma_sum, const Eigen::VectorXd& sigma_sumsq,
                       int n_draws, const Eigen::MatrixXd& sigma_true);
double mse_delta(const Eigen::VectorXd& delta_draws, double delta_true);

// Frobenius error over the stated normalizer (P for vectors, P^2 for
// matrices, absolute difference for scalars)
double frob_error(const Eigen::VectorXd& estimate, const Eigen::VectorXd& truth,
                  double normalizer);
double frob_error(const Eigen::MatrixXd& estimate, const Eigen::MatrixXd& truth,
                  double normalizer);
double frob_error(double estimate, double truth);

// ---- experiment driver ---------------------------------------------------

struct ExperimentSpec {
  std::string name = "experiment";
  std::vector<ScenarioKind> scenarios{ScenarioKind::factor, ScenarioKind::tobit,
                                      ScenarioKind::common};
  std::vector<double> alphas;  // one dataset per alpha (the "replicates")
  int n = 80;
  std::vector<int> trunc_levels{300};  // fit-time truncation(s)
  std::vector<std::string> methods{"ibp", "factor", "twostage-hier", "flat-ablation"};
  int iterations = 2500;  // Gibbs sweeps including burn-in
  int burnin = 500;
  int two_stage_iterations = 200;
  int two_stage_discard = 50;
  std::uint64_t seed = 1;
  std::string out_dir = "runs/exp";
  int threads = 0;

  void validate() const;
};

struct MetricRow {
  std::string scenario;
  double alpha = 0.0;
  std::string method;
  int replicate = 0;
  int trunc = 0;
  std::string metric;
  double value = 0.0;
  std::uint64_t seed = 0;
};

struct ExperimentResult {
  std::vector<MetricRow> rows;
  std::vector<std::string> failures;
  std::string metrics_path;
  std::string manifest_path;
};

// Runs every (scenario, alpha, trunc, method) cell, isolating per-cell
// failures, and writes metrics.csv + manifest.json + runtime sidecar under
// spec.out_dir.
ExperimentResult run_experiment(const ExperimentSpec& spec);

// gamma prior centered on the empirical mean feature count: shape = mean, rate = 1
std::pair<double, double> alpha_prior_from_data(const FeatureMatrix& y);

}  // namespace mvpibp::harness
