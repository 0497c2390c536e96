#include "ovc/noise.hpp"

#include <cmath>

#include "ovc/linalg.hpp"

namespace ovc {

NoiseModel NoiseModel::homoskedastic(double variance, int size) {
  if (!(variance > 0.0) || !std::isfinite(variance)) {
    throw DimensionError("NoiseModel: variance must be positive and finite");
  }
  if (size < 0) throw DimensionError("NoiseModel: negative block size");
  NoiseModel out;
  if (size > 0) out.push_block({Kind::Homo, size, variance, {}, {}});
  return out;
}

NoiseModel NoiseModel::diagonal(const Eigen::VectorXd& variances) {
  if ((variances.array() <= 0.0).any() || !variances.allFinite()) {
    throw DimensionError("NoiseModel: diagonal variances must be positive and finite");
  }
  NoiseModel out;
  if (variances.size() > 0) {
    out.push_block({Kind::Diag, static_cast<int>(variances.size()), 0.0, variances, {}});
  }
  return out;
}

NoiseModel NoiseModel::dense(const Eigen::MatrixXd& cov) {
  if (cov.rows() != cov.cols()) throw DimensionError("NoiseModel: dense block not square");
  const double scale = std::max(cov.cwiseAbs().maxCoeff(), 1.0);
  if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-8 * scale) {
    throw DimensionError("NoiseModel: dense block not symmetric");
  }
  NoiseModel out;
  if (cov.rows() > 0) {
    out.push_block({Kind::Dense, static_cast<int>(cov.rows()), 0.0, {}, symmetrize(cov)});
  }
  return out;
}

NoiseModel NoiseModel::block_concat(const NoiseModel& a, const NoiseModel& b) {
  NoiseModel out;
  for (const Block& blk : a.blocks_) out.push_block(blk);
  for (const Block& blk : b.blocks_) out.push_block(blk);
  return out;
}

void NoiseModel::push_block(Block b) {
  size_ += b.size;
  blocks_.push_back(std::move(b));
}

Eigen::MatrixXd NoiseModel::dense_cov() const {
  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(size_, size_);
  add_to(S);
  return S;
}

void NoiseModel::add_to(Eigen::MatrixXd& K) const {
  if (K.rows() != size_ || K.cols() != size_) {
    throw DimensionError("NoiseModel::add_to: matrix size mismatch");
  }
  int off = 0;
  for (const Block& b : blocks_) {
    switch (b.kind) {
      case Kind::Homo:
        K.diagonal().segment(off, b.size).array() += b.variance;
        break;
      case Kind::Diag:
        K.diagonal().segment(off, b.size) += b.diag;
        break;
      case Kind::Dense:
        K.block(off, off, b.size, b.size) += b.cov;
        break;
    }
    off += b.size;
  }
}

Eigen::MatrixXd NoiseModel::solve(const Eigen::MatrixXd& B) const {
  if (B.rows() != size_) throw DimensionError("NoiseModel::solve: row count mismatch");
  Eigen::MatrixXd out(B.rows(), B.cols());
  int off = 0;
  for (const Block& b : blocks_) {
    switch (b.kind) {
      case Kind::Homo:
        out.middleRows(off, b.size) = B.middleRows(off, b.size) / b.variance;
        break;
      case Kind::Diag:
        out.middleRows(off, b.size) =
            b.diag.cwiseInverse().asDiagonal() * B.middleRows(off, b.size);
        break;
      case Kind::Dense: {
        const CholeskyFactor chol = cholesky_with_jitter(b.cov);
        out.middleRows(off, b.size) = chol.solve(B.middleRows(off, b.size));
        break;
      }
    }
    off += b.size;
  }
  return out;
}

Eigen::MatrixXd NoiseModel::inv_sqrt_apply(const Eigen::MatrixXd& B) const {
  if (B.rows() != size_) throw DimensionError("NoiseModel::inv_sqrt_apply: row count mismatch");
  Eigen::MatrixXd out(B.rows(), B.cols());
  int off = 0;
  for (const Block& b : blocks_) {
    switch (b.kind) {
      case Kind::Homo:
        out.middleRows(off, b.size) = B.middleRows(off, b.size) / std::sqrt(b.variance);
        break;
      case Kind::Diag:
        out.middleRows(off, b.size) =
            b.diag.cwiseSqrt().cwiseInverse().asDiagonal() * B.middleRows(off, b.size);
        break;
      case Kind::Dense:
        out.middleRows(off, b.size) = psd_inv_sqrt(b.cov) * B.middleRows(off, b.size);
        break;
    }
    off += b.size;
  }
  return out;
}

double NoiseModel::log_det() const {
  double acc = 0.0;
  for (const Block& b : blocks_) {
    switch (b.kind) {
      case Kind::Homo:
        acc += b.size * std::log(b.variance);
        break;
      case Kind::Diag:
        acc += b.diag.array().log().sum();
        break;
      case Kind::Dense:
        acc += cholesky_with_jitter(b.cov).log_det();
        break;
    }
  }
  return acc;
}

bool NoiseModel::is_homoskedastic() const {
  if (blocks_.empty()) return true;
  if (blocks_.size() == 1 && blocks_[0].kind == Kind::Homo) return true;
  double v = -1.0;
  for (const Block& b : blocks_) {
    if (b.kind != Kind::Homo) return false;
    if (v < 0.0) v = b.variance;
    if (b.variance != v) return false;
  }
  return true;
}

double NoiseModel::homoskedastic_variance() const {
  if (!is_homoskedastic() || blocks_.empty()) {
    throw NumericalError("NoiseModel: not homoskedastic");
  }
  return blocks_[0].variance;
}

double NoiseModel::mean_variance() const {
  if (size_ == 0) return 0.0;
  double acc = 0.0;
  for (const Block& b : blocks_) {
    switch (b.kind) {
      case Kind::Homo:
        acc += b.variance * b.size;
        break;
      case Kind::Diag:
        acc += b.diag.sum();
        break;
      case Kind::Dense:
        acc += b.cov.diagonal().sum();
        break;
    }
  }
  return acc / size_;
}

}  // namespace ovc
