#include "mvpibp/io.hpp"

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace mvpibp::io {

namespace fs = std::filesystem;

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t");
  return s.substr(a, b - a + 1);
}

}  // namespace

FeatureMatrix load_occurrence_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open occurrence file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw ConfigError(path + ": empty file");
  const auto header = split_csv_line(line);
  if (header.size() < 2) throw ConfigError(path + ": header needs at least one feature column");

  FeatureMatrix fm;
  fm.feature_ids.assign(header.begin() + 1, header.end());
  {
    std::set<std::string> uniq(fm.feature_ids.begin(), fm.feature_ids.end());
    if (uniq.size() != fm.feature_ids.size())
      throw ConfigError(path + ": duplicate feature ids in header");
  }
  const std::size_t p = fm.feature_ids.size();
  std::vector<std::vector<std::uint8_t>> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != p + 1)
      throw ConfigError(path + ": row " + std::to_string(lineno) + " has " +
                        std::to_string(cells.size() - 1) + " cells, expected " +
                        std::to_string(p));
    fm.sample_ids.push_back(cells[0]);
    std::vector<std::uint8_t> row(p);
    for (std::size_t j = 0; j < p; ++j) {
      const std::string v = trim(cells[j + 1]);
      if (v == "0") {
        row[j] = 0;
      } else if (v == "1") {
        row[j] = 1;
      } else {
        throw ConfigError(path + ": non-binary cell '" + v + "' at (row " +
                          std::to_string(lineno) + ", col " + std::to_string(j + 2) + ")");
      }
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ConfigError(path + ": no data rows");
  fm.y.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(p));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < p; ++j) fm.y(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  fm.validate();
  return fm;
}

void save_occurrence_csv(const FeatureMatrix& y, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write occurrence file: " + path);
  out << "sample_id";
  for (const auto& f : y.feature_ids) out << ',' << f;
  out << '\n';
  for (Eigen::Index i = 0; i < y.n(); ++i) {
    out << y.sample_ids[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < y.p(); ++j) out << ',' << static_cast<int>(y.y(i, j));
    out << '\n';
  }
}

Eigen::MatrixXd load_covariates_csv(const std::string& path, std::vector<std::string>* ids) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open covariates file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw ConfigError(path + ": empty file");
  const auto header = split_csv_line(line);
  if (header.size() < 2) throw ConfigError(path + ": need at least one covariate column");
  const std::size_t q = header.size() - 1;
  std::vector<std::vector<double>> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != q + 1)
      throw ConfigError(path + ": row " + std::to_string(lineno) + " has wrong cell count");
    if (ids) ids->push_back(cells[0]);
    std::vector<double> row(q);
    for (std::size_t j = 0; j < q; ++j) {
      try {
        std::size_t pos = 0;
        row[j] = std::stod(cells[j + 1], &pos);
        if (pos != trim(cells[j + 1]).size() && pos != cells[j + 1].size())
          throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        throw ConfigError(path + ": non-numeric cell at (row " + std::to_string(lineno) +
                          ", col " + std::to_string(j + 2) + ")");
      }
    }
    rows.push_back(std::move(row));
  }
  Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(q));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < q; ++j) x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return x;
}

void save_covariates_csv(const Eigen::MatrixXd& x, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write covariates file: " + path);
  out << "sample_id";
  for (Eigen::Index j = 0; j < x.cols(); ++j) out << ",x" << j;
  out << '\n';
  out.precision(17);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    out << 's' << i;
    for (Eigen::Index j = 0; j < x.cols(); ++j) out << ',' << x(i, j);
    out << '\n';
  }
}

std::map<std::string, std::string> load_key_value(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + ": line " + std::to_string(lineno) + " is not key=value");
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

void RunConfig::validate() const {
  if (burnin < 0 || iterations <= burnin)
    throw ConfigError("config: need iterations > burnin >= 0");
  if (thin < 1) throw ConfigError("config: thin >= 1");
  if (trunc != 0 && trunc < 2) throw ConfigError("config: truncation must be >= 2");
}

std::string RunConfig::canonical() const {
  std::ostringstream os;
  os << "method=" << method << ";iterations=" << iterations << ";burnin=" << burnin
     << ";thin=" << thin << ";seed=" << seed << ";trunc=" << trunc << ";alpha=" << alpha
     << ";data=" << data_path << ";covariates=" << covariates_path;
  for (const auto& [k, v] : extra) os << ';' << k << '=' << v;
  return os.str();
}

std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::uint64_t RunConfig::config_hash() const { return fnv1a64(canonical()); }

void DrawTable::add_matrix(const std::string& name, const Eigen::MatrixXd& draws) {
  for (Eigen::Index b = 0; b < draws.rows(); ++b)
    for (Eigen::Index k = 0; k < draws.cols(); ++k) {
      parameter.push_back(name);
      index.push_back(static_cast<int>(k));
      iteration.push_back(static_cast<int>(b));
      value.push_back(draws(b, k));
    }
}

void DrawTable::add_vector(const std::string& name, const Eigen::VectorXd& draws) {
  for (Eigen::Index b = 0; b < draws.size(); ++b) {
    parameter.push_back(name);
    index.push_back(0);
    iteration.push_back(static_cast<int>(b));
    value.push_back(draws[b]);
  }
}

void DrawTable::add_int_vector(const std::string& name, const Eigen::VectorXi& draws) {
  for (Eigen::Index b = 0; b < draws.size(); ++b) {
    parameter.push_back(name);
    index.push_back(0);
    iteration.push_back(static_cast<int>(b));
    value.push_back(draws[b]);
  }
}

void write_archive(const std::string& dir, const RunConfig& cfg, const DrawTable& draws,
                   const std::map<std::string, std::string>& summary_files) {
  fs::create_directories(dir);
  const std::string manifest_path = dir + "/manifest.json";
  const std::uint64_t hash = cfg.config_hash();
  if (fs::exists(manifest_path) && !cfg.force) {
    std::ifstream in(manifest_path);
    nlohmann::json old = nlohmann::json::parse(in, nullptr, false);
    if (!old.is_discarded() && old.contains("config_hash") &&
        old["config_hash"].get<std::uint64_t>() != hash)
      throw ConfigError("archive at " + dir +
                        " was produced by a different config; pass --force to overwrite");
  }

  std::ofstream df(dir + "/draws.csv");
  df << "parameter,index,iteration,value\n";
  df.precision(17);
  for (std::size_t i = 0; i < draws.parameter.size(); ++i)
    df << draws.parameter[i] << ',' << draws.index[i] << ',' << draws.iteration[i] << ','
       << draws.value[i] << '\n';

  for (const auto& [name, content] : summary_files) {
    std::ofstream sf(dir + "/" + name);
    sf << content;
  }

  nlohmann::json manifest;
  manifest["config_hash"] = hash;
  manifest["config"] = cfg.canonical();
  manifest["seed"] = cfg.seed;
  manifest["method"] = cfg.method;
  manifest["draw_rows"] = draws.parameter.size();
  manifest["format_version"] = 1;
  std::ofstream mf(manifest_path);
  mf << manifest.dump(2) << "\n";
}

}  // namespace mvpibp::io
