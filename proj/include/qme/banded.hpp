#pragma once

#include <vector>

#include <Eigen/SparseCore>

#include "qme/common.hpp"

namespace qme {

/// Square banded matrix stored by diagonals: band(upper + i - j, j) = M(i, j).
class BandedMatrix {
 public:
  BandedMatrix(Index n, int lower, int upper)
      : n_(n), lower_(lower), upper_(upper), band_(Matrix::Zero(lower + upper + 1, n)) {}

  /// Constant diagonals listed from the lowest subdiagonal to the highest
  /// superdiagonal, e.g. {1, -2, 1} for the second-difference matrix.
  static BandedMatrix toeplitz(Index n, const std::vector<double>& diagonals);

  Index rows() const { return n_; }
  int lower() const { return lower_; }
  int upper() const { return upper_; }

  bool in_band(Index i, Index j) const { return j - i <= upper_ && i - j <= lower_; }
  double operator()(Index i, Index j) const { return in_band(i, j) ? band_(upper_ + i - j, j) : 0.0; }
  double& at(Index i, Index j);

  /// Smallest band holding the nonzeros of a square sparse matrix.
  static BandedMatrix from_sparse(const Eigen::SparseMatrix<double>& S);

  Matrix dense() const;
  Eigen::SparseMatrix<double> sparse() const;
  /// M x.
  Matrix apply(const Matrix& x) const;
  BandedMatrix transpose() const;
  Matrix block(Index r0, Index c0, Index rows, Index cols) const;

 private:
  Index n_;
  int lower_;
  int upper_;
  Matrix band_;
};

}  // namespace qme
