#include "ovc/data.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "ovc/kernel.hpp"
#include "ovc/rng.hpp"

namespace ovc {

std::vector<bool> SpatialField::hotspots(double tau) const {
  std::vector<bool> out(size());
  for (int i = 0; i < size(); ++i) out[i] = latent_r[i] > tau;
  return out;
}

SpatialField generate_spatial_prevalence(int grid_side, std::uint64_t seed) {
  if (grid_side < 20) throw DimensionError("generate_spatial_prevalence: grid must be >= 20x20");
  const int n = grid_side * grid_side;
  SpatialField field;
  field.locations.resize(n, 2);
  for (int i = 0; i < grid_side; ++i) {
    for (int j = 0; j < grid_side; ++j) {
      field.locations(i * grid_side + j, 0) = (i + 0.5) / grid_side;
      field.locations(i * grid_side + j, 1) = (j + 0.5) / grid_side;
    }
  }

  // latent field: Matern-5/2 sample with a mildly negative offset so that
  // prevalences center below one half
  const KernelHyperparams params(Eigen::VectorXd::Constant(2, 0.25), 1.5, -0.8, 1e-2);
  Eigen::MatrixXd K = matern52_ard(field.locations, field.locations, params);
  K.diagonal().array() += 1e-8;
  const Eigen::MatrixXd L = Eigen::LLT<Eigen::MatrixXd>(K).matrixL();
  Rng rng(seed ^ 0x6c62272e07bb0142ULL);
  Eigen::VectorXd z(n);
  for (int i = 0; i < n; ++i) z[i] = rng.normal();
  field.latent_f = (L * z).array() + params.mean_const();
  field.latent_r = field.latent_f.unaryExpr(
      [](double f) { return f >= 0.0 ? 1.0 / (1.0 + std::exp(-f)) : std::exp(f) / (1.0 + std::exp(f)); });

  field.trials.resize(n);
  field.counts.resize(n);
  const double lo = std::log(50.0), hi = std::log(5000.0);
  for (int i = 0; i < n; ++i) {
    field.trials[i] = static_cast<int>(std::round(std::exp(rng.uniform(lo, hi))));
    int hits = 0;
    for (int t = 0; t < field.trials[i]; ++t) {
      if (rng.uniform() < field.latent_r[i]) ++hits;
    }
    field.counts[i] = hits;
  }
  return field;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) {
    // trim whitespace
    const auto b = field.find_first_not_of(" \t\r");
    const auto e = field.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? "" : field.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

int column_index(const std::vector<std::string>& header, const std::string& name) {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return static_cast<int>(i);
  }
  throw ConfigError("ingest_csv: column '" + name + "' missing from header");
}

bool parse_finite(const std::string& s, double* out) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size() || !std::isfinite(v)) return false;
    *out = v;
    return true;
  } catch (const std::exception&) {
    return false;
  }
}

}  // namespace

IngestReport ingest_csv(const std::string& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw ConfigError("ingest_csv: cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("ingest_csv: empty file");
  const std::vector<std::string> header = split_csv_line(line);

  std::vector<int> feat_idx;
  for (const std::string& name : schema.feature_columns) {
    feat_idx.push_back(column_index(header, name));
  }
  const int target_idx = column_index(header, schema.target_column);
  const int trials_idx =
      schema.trials_column.empty() ? -1 : column_index(header, schema.trials_column);

  std::vector<Eigen::VectorXd> rows;
  std::vector<double> targets;
  std::vector<int> trials;
  int dropped = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::vector<std::string> cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw ConfigError("ingest_csv: row width differs from header");
    }
    Eigen::VectorXd x(feat_idx.size());
    bool ok = true;
    for (std::size_t j = 0; j < feat_idx.size(); ++j) {
      ok = ok && parse_finite(cells[feat_idx[j]], &x[j]);
    }
    double y = 0.0;
    ok = ok && parse_finite(cells[target_idx], &y);
    double tr = 0.0;
    if (trials_idx >= 0) ok = ok && parse_finite(cells[trials_idx], &tr) && tr >= 1.0;
    if (!ok) {
      ++dropped;
      continue;
    }
    rows.push_back(x);
    targets.push_back(y);
    if (trials_idx >= 0) trials.push_back(static_cast<int>(std::round(tr)));
  }

  IngestReport report;
  report.dropped_rows = dropped;
  report.data.feature_names = schema.feature_columns;
  report.data.target_name = schema.target_column;
  report.data.X.resize(rows.size(), static_cast<Eigen::Index>(feat_idx.size()));
  report.data.y.resize(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    report.data.X.row(i) = rows[i].transpose();
    report.data.y[i] = targets[i];
  }
  if (trials_idx >= 0) {
    Eigen::VectorXi tv(trials.size());
    for (std::size_t i = 0; i < trials.size(); ++i) tv[i] = trials[i];
    report.data.trials = tv;
  }
  return report;
}

void export_csv(const std::string& path, const Dataset& data) {
  std::ofstream out(path);
  if (!out) throw ConfigError("export_csv: cannot open '" + path + "'");
  for (std::size_t j = 0; j < data.feature_names.size(); ++j) {
    out << data.feature_names[j] << ',';
  }
  out << data.target_name;
  if (data.trials.has_value()) out << ",trials";
  out << '\n';
  char buf[40];
  for (Eigen::Index i = 0; i < data.X.rows(); ++i) {
    for (Eigen::Index j = 0; j < data.X.cols(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", data.X(i, j));
      out << buf << ',';
    }
    std::snprintf(buf, sizeof(buf), "%.17g", data.y[i]);
    out << buf;
    if (data.trials.has_value()) out << ',' << (*data.trials)[i];
    out << '\n';
  }
}

}  // namespace ovc
