#pragma once

#include <Eigen/Dense>
#include <vector>

#include "ovc/errors.hpp"

namespace ovc {

/// Block-diagonal observation covariance. Blocks are homoskedastic (sigma^2 I),
/// diagonal, or dense symmetric PSD; block sizes sum to the data size.
class NoiseModel {
public:
  static NoiseModel homoskedastic(double variance, int size);
  static NoiseModel diagonal(const Eigen::VectorXd& variances);
  static NoiseModel dense(const Eigen::MatrixXd& cov);
  static NoiseModel empty() { return NoiseModel(); }
  static NoiseModel block_concat(const NoiseModel& a, const NoiseModel& b);

  int size() const { return size_; }
  Eigen::MatrixXd dense_cov() const;

  /// K += Sigma, block by block.
  void add_to(Eigen::MatrixXd& K) const;

  /// Sigma^{-1} B.
  Eigen::MatrixXd solve(const Eigen::MatrixXd& B) const;

  /// Sigma^{-1/2} B with the symmetric inverse root per block.
  Eigen::MatrixXd inv_sqrt_apply(const Eigen::MatrixXd& B) const;

  double log_det() const;

  bool is_homoskedastic() const;
  double homoskedastic_variance() const;

  /// Mean of the diagonal (a scalar summary used by diagnostics).
  double mean_variance() const;

private:
  enum class Kind { Homo, Diag, Dense };
  struct Block {
    Kind kind;
    int size;
    double variance = 0.0;       // Homo
    Eigen::VectorXd diag;        // Diag
    Eigen::MatrixXd cov;         // Dense
  };

  NoiseModel() = default;
  void push_block(Block b);

  std::vector<Block> blocks_;
  int size_ = 0;
};

}  // namespace ovc
