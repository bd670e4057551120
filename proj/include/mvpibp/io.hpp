#pragma once

#include <Eigen/Dense>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "mvpibp/model.hpp"

namespace mvpibp::io {

// configuration / validation problems -> CLI exit code 2
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// header row = feature ids, first column = sample ids, cells in {0,1};
// parse errors carry 1-based (row, column) coordinates
FeatureMatrix load_occurrence_csv(const std::string& path);
void save_occurrence_csv(const FeatureMatrix& y, const std::string& path);

// sample id column + q numeric covariate columns, rows aligned with the
// occurrence file
Eigen::MatrixXd load_covariates_csv(const std::string& path, std::vector<std::string>* ids = nullptr);
void save_covariates_csv(const Eigen::MatrixXd& x, const std::string& path);

// flat key=value configuration file; '#' starts a comment
std::map<std::string, std::string> load_key_value(const std::string& path);

struct RunConfig {
  std::string method = "factor";
  int iterations = 2500;
  int burnin = 500;
  int thin = 1;
  std::uint64_t seed = 1;
  int trunc = 0;  // 0 -> default 3 * observed richness
  double alpha = 0.0;  // 0 -> prior centered on the data per the harness rule
  std::string data_path;
  std::string covariates_path;
  std::string out_dir = "out";
  bool force = false;
  // extra knobs carried as strings (method-specific)
  std::map<std::string, std::string> extra;

  void validate() const;
  std::string canonical() const;   // stable serialization, hashed into archives
  std::uint64_t config_hash() const;
};

// draw tables in long form with a typed header line:
//   parameter,index,iteration,value
struct DrawTable {
  std::vector<std::string> parameter;
  std::vector<int> index;
  std::vector<int> iteration;
  std::vector<double> value;

  void add_matrix(const std::string& name, const Eigen::MatrixXd& draws);  // B x K
  void add_vector(const std::string& name, const Eigen::VectorXd& draws);
  void add_int_vector(const std::string& name, const Eigen::VectorXi& draws);
};

// archive layout: <dir>/manifest.json, <dir>/draws.csv (+ caller extras);
// refuses to overwrite an archive with a different config hash unless forced
void write_archive(const std::string& dir, const RunConfig& cfg, const DrawTable& draws,
                   const std::map<std::string, std::string>& summary_files = {});

std::uint64_t fnv1a64(const std::string& s);

}  // namespace mvpibp::io
