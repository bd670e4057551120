#include "mvpibp/harness.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "mvpibp/genprior.hpp"
#include "mvpibp/parallel.hpp"
#include "mvpibp/richness.hpp"
#include "mvpibp/sampler_factor.hpp"
#include "mvpibp/sampler_ibp.hpp"
#include "mvpibp/sampler_twostage.hpp"

#include "json.hpp"

namespace mvpibp::harness {

namespace {

// factor-scenario ground truth: 4 loading columns with decaying scales
constexpr int kTrueRank = 4;
constexpr double kTrueScale[kTrueRank] = {1.0, 0.6, 0.35, 0.2};

Eigen::MatrixXd draw_true_loadings(int P, RngStream& rng) {
  Eigen::MatrixXd lam(P, kTrueRank);
  for (int j = 0; j < P; ++j)
    for (int k = 0; k < kTrueRank; ++k)
      lam(j, k) = rng.normal(0.0, std::sqrt(kTrueScale[k]));
  return lam;
}

int observed_pstar_first_rows(const FeatureMatrix& y, int rows) {
  int r = 0;
  for (Eigen::Index j = 0; j < y.p(); ++j) {
    bool seen = false;
    for (int i = 0; i < rows && !seen; ++i) seen = y.y(i, j) != 0;
    r += seen;
  }
  return r;
}

}  // namespace

ScenarioKind scenario_kind_from_string(const std::string& s) {
  if (s == "factor") return ScenarioKind::factor;
  if (s == "tobit") return ScenarioKind::tobit;
  if (s == "common") return ScenarioKind::common;
  throw std::invalid_argument("unknown scenario kind: " + s);
}

std::string to_string(ScenarioKind k) {
  switch (k) {
    case ScenarioKind::factor: return "factor";
    case ScenarioKind::tobit: return "tobit";
    case ScenarioKind::common: return "common";
  }
  return "?";
}

Eigen::MatrixXd Scenario::sigma_true() const {
  if (const auto* rho = std::get_if<double>(&corr_truth)) {
    Eigen::MatrixXd s = Eigen::MatrixXd::Constant(P, P, *rho);
    s.diagonal().setOnes();
    return s;
  }
  return numkit::LowRankCorrelation(std::get<Eigen::MatrixXd>(corr_truth)).dense();
}

std::pair<FeatureMatrix, Scenario> generate_scenario(ScenarioKind kind, double alpha, int n,
                                                     int P, std::uint64_t seed) {
  Scenario sc;
  sc.kind = kind;
  sc.alpha = alpha;
  sc.n = n;
  sc.P = P;
  sc.seed = seed;
  const IbpCalibration cal = calibrate(alpha, P);
  RngStream rng = RngStream::keyed(seed, {0x7363656eULL});

  FeatureMatrix y;
  switch (kind) {
    case ScenarioKind::factor: {
      const Eigen::MatrixXd lam = draw_true_loadings(P, rng);
      auto draw = genprior::simulate_mvpibp(cal, FixedLowRank{lam}, n, rng);
      y = std::move(draw.matrix);
      sc.beta_true = draw.betas;
      sc.pi_true = draw.pis;
      sc.corr_truth = lam;
      break;
    }
    case ScenarioKind::tobit: {
      const Eigen::MatrixXd lam = draw_true_loadings(P, rng);
      const numkit::LowRankCorrelation corr(lam);
      sc.beta_true.resize(P);
      for (int j = 0; j < P; ++j) sc.beta_true[j] = rng.normal(cal.mu_p, cal.tau_p);
      Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> m(n, P);
      const Eigen::VectorXd dinv = corr.dscale().cwiseInverse();
      Eigen::VectorXd eps(P), g(kTrueRank);
      for (int i = 0; i < n; ++i) {
        for (int k = 0; k < kTrueRank; ++k) g[k] = rng.normal();
        for (int j = 0; j < P; ++j) eps[j] = rng.normal();
        eps = dinv.asDiagonal() * (lam * g + eps);
        const double w = rng.chi_squared(10.0);
        const double scale = std::sqrt(10.0 / w);
        for (int j = 0; j < P; ++j)
          m(i, j) = sc.beta_true[j] + scale * eps[j] > 0.0 ? 1 : 0;
      }
      y = FeatureMatrix::from_matrix(std::move(m));
      sc.pi_true.resize(P);
      for (int j = 0; j < P; ++j) sc.pi_true[j] = numkit::student_t_cdf(sc.beta_true[j], 10.0);
      sc.corr_truth = lam;
      break;
    }
    case ScenarioKind::common: {
      const double rho = rng.uniform(0.0, 0.8);
      auto draw = genprior::simulate_mvpibp(cal, FixedEquicorrelation{rho}, n, rng);
      y = std::move(draw.matrix);
      sc.beta_true = draw.betas;
      sc.pi_true = draw.pis;
      sc.corr_truth = rho;
      break;
    }
  }
  sc.pstar_observed = y.richness();
  sc.pstar40_observed = observed_pstar_first_rows(y, std::min(40, n));
  sc.delta10_true =
      richness::expected_richness(sc.pi_true, 50) - static_cast<double>(sc.pstar40_observed);
  return {std::move(y), std::move(sc)};
}

double mse_pi(const Eigen::MatrixXd& pi_draws, const Eigen::VectorXd& pi_true) {
  if (pi_draws.cols() != pi_true.size()) throw std::invalid_argument("mse_pi: dim mismatch");
  const Eigen::Index B = pi_draws.rows();
  double acc = 0.0;
  for (Eigen::Index b = 0; b < B; ++b)
    acc += (pi_draws.row(b).transpose() - pi_true).squaredNorm();
  return acc / (static_cast<double>(B) * pi_true.size());
}

double mse_sigma(const Eigen::MatrixXd& sigma_sum, const Eigen::MatrixXd& sigma_sumsq,
                 int n_draws, const Eigen::MatrixXd& sigma_true) {
  if (sigma_sum.rows() != sigma_true.rows()) throw std::invalid_argument("mse_sigma: dims");
  const double B = n_draws;
  const Eigen::Index P = sigma_true.rows();
  double acc = 0.0;
  for (Eigen::Index j = 0; j < P; ++j)
    for (Eigen::Index k = 0; k < P; ++k)
      acc += sigma_sumsq(j, k) - 2.0 * sigma_true(j, k) * sigma_sum(j, k) +
             B * sigma_true(j, k) * sigma_true(j, k);
  return acc / (B * static_cast<double>(P) * static_cast<double>(P));
}

double mse_sigma_pairs(const Eigen::VectorXd& sigma_sum, const Eigen::VectorXd& sigma_sumsq,
                       int n_draws, const Eigen::MatrixXd& sigma_true) {
  const Eigen::Index P = sigma_true.rows();
  const double B = n_draws;
  double acc = 0.0;
  int idx = 0;
  for (Eigen::Index j = 0; j < P; ++j) {
    for (Eigen::Index k = j + 1; k < P; ++k, ++idx) {
      const double st = sigma_true(j, k);
      acc += 2.0 * (sigma_sumsq[idx] - 2.0 * st * sigma_sum[idx] + B * st * st);
    }
    const double dt = sigma_true(j, j) - 1.0;  // our draws have exact unit diagonal
    acc += B * dt * dt;
  }
  return acc / (B * static_cast<double>(P) * static_cast<double>(P));
}

double mse_delta(const Eigen::VectorXd& delta_draws, double delta_true) {
  if (delta_draws.size() == 0) throw std::invalid_argument("mse_delta: empty draws");
  return (delta_draws.array() - delta_true).square().mean();
}

double frob_error(const Eigen::VectorXd& estimate, const Eigen::VectorXd& truth,
                  double normalizer) {
  if (estimate.size() != truth.size()) throw std::invalid_argument("frob_error: dims");
  return (estimate - truth).norm() / normalizer;
}

double frob_error(const Eigen::MatrixXd& estimate, const Eigen::MatrixXd& truth,
                  double normalizer) {
  if (estimate.rows() != truth.rows() || estimate.cols() != truth.cols())
    throw std::invalid_argument("frob_error: dims");
  return (estimate - truth).norm() / normalizer;
}

double frob_error(double estimate, double truth) { return std::fabs(estimate - truth); }

std::pair<double, double> alpha_prior_from_data(const FeatureMatrix& y) {
  const double mean_ni = y.row_counts().cast<double>().mean();
  return {std::max(mean_ni, 0.5), 1.0};
}

void ExperimentSpec::validate() const {
  if (alphas.empty()) throw std::invalid_argument("experiment: no alpha values");
  if (scenarios.empty()) throw std::invalid_argument("experiment: no scenarios");
  if (methods.empty()) throw std::invalid_argument("experiment: no methods");
  if (trunc_levels.empty()) throw std::invalid_argument("experiment: no truncation levels");
  if (burnin < 0 || iterations <= burnin)
    throw std::invalid_argument("experiment: need iterations > burnin >= 0");
  if (two_stage_discard < 0 || two_stage_iterations <= two_stage_discard)
    throw std::invalid_argument("experiment: need two_stage_iterations > discard");
  for (int t : trunc_levels)
    if (t < 2) throw std::invalid_argument("experiment: truncation must be >= 2");
}

namespace {

struct CellResult {
  std::vector<MetricRow> rows;
  double runtime_s = 0.0;
  std::string failure;  // empty on success
};

void push_metrics(std::vector<MetricRow>& rows, const std::string& scenario, double alpha,
                  const std::string& method, int replicate, int trunc, std::uint64_t seed,
                  const Eigen::MatrixXd& pi_draws, const Eigen::MatrixXd& sigma_mean,
                  double mse_s, const Eigen::VectorXd& delta_draws, const Scenario& sc) {
  const Eigen::MatrixXd sigma_true = sc.sigma_true();
  const Eigen::VectorXd pi_mean = pi_draws.colwise().mean();
  const double mpi = mse_pi(pi_draws, sc.pi_true);
  const double mdl = mse_delta(delta_draws, sc.delta10_true);
  const double fpi = frob_error(pi_mean, sc.pi_true, static_cast<double>(sc.P));
  const double fsg = frob_error(sigma_mean, sigma_true,
                                static_cast<double>(sc.P) * static_cast<double>(sc.P));
  const double fdl = frob_error(delta_draws.mean(), sc.delta10_true);
  auto add = [&](const std::string& name, double v) {
    rows.push_back({scenario, alpha, method, replicate, trunc, name, v, seed});
  };
  add("mse_pi", mpi);
  add("mse_sigma", mse_s);
  add("mse_delta", mdl);
  add("frob_pi", fpi);
  add("frob_sigma", fsg);
  add("frob_delta", fdl);
}

}  // namespace

ExperimentResult run_experiment(const ExperimentSpec& spec) {
  spec.validate();
  namespace fs = std::filesystem;
  fs::create_directories(spec.out_dir);

  struct Cell {
    int scen_idx, rep_idx, trunc_idx;
  };
  std::vector<Cell> cells;
  for (int s = 0; s < static_cast<int>(spec.scenarios.size()); ++s)
    for (int r = 0; r < static_cast<int>(spec.alphas.size()); ++r)
      for (int t = 0; t < static_cast<int>(spec.trunc_levels.size()); ++t)
        cells.push_back({s, r, t});

  std::vector<CellResult> results(cells.size());
  const int outer_workers = std::min(worker_count(), spec.threads > 0 ? spec.threads : 2);
  const int inner_threads = outer_workers > 1 ? 1 : 0;

  parallel_for(
      cells.size(),
      [&](std::size_t c) {
        const Cell cell = cells[c];
        const ScenarioKind kind = spec.scenarios[cell.scen_idx];
        const double alpha = spec.alphas[cell.rep_idx];
        const int trunc = spec.trunc_levels[cell.trunc_idx];
        const std::uint64_t cell_seed =
            RngStream::keyed(spec.seed, {static_cast<std::uint64_t>(cell.scen_idx),
                                         static_cast<std::uint64_t>(cell.rep_idx),
                                         static_cast<std::uint64_t>(cell.trunc_idx)})
                .next_u64();
        CellResult& res = results[c];
        const auto t0 = std::chrono::steady_clock::now();
        try {
          auto [y, sc] = generate_scenario(kind, alpha, spec.n, trunc, cell_seed);
          const auto [a_alpha, b_alpha] = alpha_prior_from_data(y);
          const Eigen::MatrixXd sigma_true = sc.sigma_true();

          for (const std::string& method : spec.methods) {
            const std::uint64_t fit_seed =
                RngStream::keyed(cell_seed, {std::hash<std::string>{}(method)}).next_u64();
            if (method == "ibp") {
              McmcConfig mc{spec.iterations, spec.burnin, 1, fit_seed};
              const IbpChain chain = fit_ibp(y, trunc, a_alpha, b_alpha, mc);
              const auto fc =
                  richness::predict_delta(chain.pi_draws, 40, 10, sc.pstar40_observed);
              // the IBP carries no dependence: Sigma draws are the identity
              const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(trunc, trunc);
              const double ms = frob_error(eye, sigma_true, 1.0);
              push_metrics(res.rows, to_string(kind), alpha, method, cell.rep_idx, trunc,
                           cell_seed, chain.pi_draws, eye,
                           ms * ms / (static_cast<double>(trunc) * trunc), fc.delta_draws, sc);
            } else if (method == "factor") {
              factor::FactorHyper hyper;
              hyper.a_alpha = a_alpha;
              hyper.b_alpha = b_alpha;
              hyper.k_max = std::min(30, trunc);
              factor::FactorConfig fc;
              fc.mcmc = McmcConfig{spec.iterations, spec.burnin, 1, fit_seed};
              fc.threads = inner_threads;
              const auto out = factor::fit_factor_mvpibp(y, trunc, hyper, fc);
              const auto fore =
                  richness::predict_delta(out.pi_draws, 40, 10, sc.pstar40_observed);
              const double ms = mse_sigma(out.sigma_sum, out.sigma_sumsq, out.stored, sigma_true);
              push_metrics(res.rows, to_string(kind), alpha, method, cell.rep_idx, trunc,
                           cell_seed, out.pi_draws, out.sigma_posterior_mean(), ms,
                           fore.delta_draws, sc);
            } else if (method == "twostage-hier" || method == "flat-ablation" ||
                       method == "twostage-common") {
              twostage::TwoStagePriors priors;
              priors.a_alpha = a_alpha;
              priors.b_alpha = b_alpha;
              priors.flat = method == "flat-ablation";
              twostage::TwoStageConfig cfg;
              cfg.iterations = spec.two_stage_iterations;
              cfg.discard = spec.two_stage_discard;
              cfg.seed = fit_seed;
              cfg.threads = inner_threads;
              const auto out = method == "twostage-common"
                                   ? twostage::run_common_rho(y, trunc, priors, cfg)
                                   : twostage::run_hierarchical(y, trunc, priors, cfg);
              const auto fore =
                  richness::predict_delta(out.pi_draws, 40, 10, sc.pstar40_observed);
              const double ms =
                  mse_sigma_pairs(out.sigma_sum, out.sigma_sumsq, out.stored, sigma_true);
              push_metrics(res.rows, to_string(kind), alpha, method, cell.rep_idx, trunc,
                           cell_seed, out.pi_draws, out.sigma_posterior_mean(), ms,
                           fore.delta_draws, sc);
            } else {
              throw std::invalid_argument("unknown method: " + method);
            }
          }
        } catch (const std::exception& e) {
          res.failure = std::string("scenario=") + to_string(kind) +
                        " alpha=" + std::to_string(alpha) + " trunc=" + std::to_string(trunc) +
                        ": " + e.what();
        }
        res.runtime_s =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      },
      outer_workers);

  ExperimentResult out;
  out.metrics_path = spec.out_dir + "/metrics.csv";
  out.manifest_path = spec.out_dir + "/manifest.json";
  const std::string runtime_path = spec.out_dir + "/runtimes.csv";

  std::ofstream mf(out.metrics_path);
  mf << "scenario,alpha,method,replicate,trunc,metric,value,seed,runtime_s\n";
  mf.precision(17);
  for (std::size_t c = 0; c < cells.size(); ++c) {
    const CellResult& res = results[c];
    if (!res.failure.empty()) {
      out.failures.push_back(res.failure);
      continue;
    }
    for (const MetricRow& r : res.rows) {
      mf << r.scenario << ',' << r.alpha << ',' << r.method << ',' << r.replicate << ','
         << r.trunc << ',' << r.metric << ',' << r.value << ',' << r.seed << ','
         << res.runtime_s << '\n';
      out.rows.push_back(r);
    }
  }

  // wall-clock values live in the sidecar as well; the metrics file minus its
  // runtime_s column is byte-stable across reruns of the same spec+seed
  std::ofstream rf(runtime_path);
  rf << "scenario,alpha,trunc,runtime_s\n";
  for (std::size_t c = 0; c < cells.size(); ++c)
    rf << to_string(spec.scenarios[cells[c].scen_idx]) << ',' << spec.alphas[cells[c].rep_idx]
       << ',' << spec.trunc_levels[cells[c].trunc_idx] << ',' << results[c].runtime_s << '\n';

  nlohmann::json manifest;
  manifest["name"] = spec.name;
  manifest["seed"] = spec.seed;
  manifest["n"] = spec.n;
  manifest["alphas"] = spec.alphas;
  manifest["trunc_levels"] = spec.trunc_levels;
  manifest["methods"] = spec.methods;
  manifest["iterations"] = spec.iterations;
  manifest["burnin"] = spec.burnin;
  manifest["two_stage_iterations"] = spec.two_stage_iterations;
  manifest["two_stage_discard"] = spec.two_stage_discard;
  std::vector<std::string> scen_names;
  for (auto k : spec.scenarios) scen_names.push_back(to_string(k));
  manifest["scenarios"] = scen_names;
  manifest["metric_rows"] = out.rows.size();
  manifest["failures"] = out.failures;
  std::ofstream mj(out.manifest_path);
  mj << manifest.dump(2) << "\n";
  return out;
}

}  // namespace mvpibp::harness
