#include "qme/banded.hpp"

#include <algorithm>

namespace qme {

BandedMatrix BandedMatrix::toeplitz(Index n, const std::vector<double>& diagonals) {
  require_dims(diagonals.size() % 2 == 1, "toeplitz: odd number of diagonals");
  const int half = static_cast<int>(diagonals.size() / 2);
  BandedMatrix M(n, half, half);
  for (int d = -half; d <= half; ++d) {
    const double v = diagonals[static_cast<std::size_t>(d + half)];
    for (Index i = 0; i < n; ++i) {
      const Index j = i + d;
      if (j >= 0 && j < n) M.at(i, j) = v;
    }
  }
  return M;
}

double& BandedMatrix::at(Index i, Index j) {
  if (!in_band(i, j) || i < 0 || j < 0 || i >= n_ || j >= n_) {
    throw Error(ErrorCode::DimensionMismatch, "banded entry outside the band");
  }
  return band_(upper_ + i - j, j);
}

Matrix BandedMatrix::block(Index r0, Index c0, Index rows, Index cols) const {
  Matrix B = Matrix::Zero(rows, cols);
  for (Index j = 0; j < cols; ++j) {
    const Index gj = c0 + j;
    const Index lo = std::max<Index>(r0, gj - upper_);
    const Index hi = std::min<Index>(r0 + rows - 1, gj + lower_);
    for (Index gi = lo; gi <= hi; ++gi) B(gi - r0, j) = band_(upper_ + gi - gj, gj);
  }
  return B;
}

BandedMatrix BandedMatrix::from_sparse(const Eigen::SparseMatrix<double>& S) {
  require_dims(S.rows() == S.cols(), "from_sparse: square");
  int lower = 0, upper = 0;
  for (Index j = 0; j < S.outerSize(); ++j)
    for (Eigen::SparseMatrix<double>::InnerIterator it(S, j); it; ++it) {
      if (it.value() == 0.0) continue;
      lower = std::max(lower, static_cast<int>(it.row() - it.col()));
      upper = std::max(upper, static_cast<int>(it.col() - it.row()));
    }
  BandedMatrix M(S.rows(), lower, upper);
  for (Index j = 0; j < S.outerSize(); ++j)
    for (Eigen::SparseMatrix<double>::InnerIterator it(S, j); it; ++it)
      if (it.value() != 0.0) M.at(it.row(), it.col()) += it.value();
  return M;
}

Eigen::SparseMatrix<double> BandedMatrix::sparse() const {
  std::vector<Eigen::Triplet<double>> t;
  for (Index j = 0; j < n_; ++j)
    for (Index i = std::max<Index>(0, j - upper_); i <= std::min<Index>(n_ - 1, j + lower_); ++i)
      if ((*this)(i, j) != 0.0) t.emplace_back(i, j, (*this)(i, j));
  Eigen::SparseMatrix<double> S(n_, n_);
  S.setFromTriplets(t.begin(), t.end());
  return S;
}

Matrix BandedMatrix::apply(const Matrix& x) const {
  require_dims(x.rows() == n_, "BandedMatrix::apply: rows");
  Matrix y = Matrix::Zero(n_, x.cols());
  for (Index j = 0; j < n_; ++j)
    for (Index i = std::max<Index>(0, j - upper_); i <= std::min<Index>(n_ - 1, j + lower_); ++i)
      y.row(i) += band_(upper_ + i - j, j) * x.row(j);
  return y;
}

BandedMatrix BandedMatrix::transpose() const {
  BandedMatrix T(n_, upper_, lower_);
  for (Index j = 0; j < n_; ++j)
    for (Index i = std::max<Index>(0, j - upper_); i <= std::min<Index>(n_ - 1, j + lower_); ++i)
      T.at(j, i) = (*this)(i, j);
  return T;
}

Matrix BandedMatrix::dense() const { return block(0, 0, n_, n_); }

}  // namespace qme
