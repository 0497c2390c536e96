#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "ovc/errors.hpp"

namespace ovc {

/// Synthetic spatial prevalence field: a latent GP sample on a grid pushed
/// through the logistic link, with log-uniform site populations and Binomial
/// observed counts.
struct SpatialField {
  Eigen::MatrixXd locations;  // G^2 x 2 in [0,1]^2
  Eigen::VectorXd latent_f;   // latent GP values
  Eigen::VectorXd latent_r;   // sigmoid(latent_f): true prevalence
  Eigen::VectorXi trials;     // site populations n(x)
  Eigen::VectorXd counts;     // Binomial draws y

  int size() const { return static_cast<int>(locations.rows()); }
  /// Hotspot labels at threshold tau (latent_r > tau).
  std::vector<bool> hotspots(double tau) const;
};

SpatialField generate_spatial_prevalence(int grid_side, std::uint64_t seed);

/// A typed tabular dataset: feature columns, a target, optionally a
/// trial-count column for Binomial responses. Row order preserved.
struct Dataset {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  std::optional<Eigen::VectorXi> trials;
  std::vector<std::string> feature_names;
  std::string target_name;
};

struct CsvSchema {
  std::vector<std::string> feature_columns;
  std::string target_column;
  std::string trials_column;  // empty: no trials
};

struct IngestReport {
  Dataset data;
  int dropped_rows = 0;
};

/// Reads a headered CSV into a Dataset; rows with non-finite values (or "inf"
/// / "nan" literals) are dropped and counted. Header must contain every
/// schema column.
IngestReport ingest_csv(const std::string& path, const CsvSchema& schema);

/// Writes a Dataset to CSV at 17 significant digits (round-trips through
/// ingest_csv bit-exactly).
void export_csv(const std::string& path, const Dataset& data);

}  // namespace ovc
