#pragma once

// Small helpers shared by the Krylov solvers and the HODLR code.

#include <functional>

#include "qme/common.hpp"

namespace qme::linalg {

/// Orthonormal basis of the Householder QR of M (thin, min(rows, cols) columns).
template <typename T>
MatrixX<T> thin_q(const MatrixX<T>& M);

/// Orthonormalizes `block` against the orthonormal columns of `basis` with two
/// passes of classical Gram-Schmidt, then against itself. Columns whose norm
/// after projection falls below drop_tol times their original norm are
/// dropped. Returns only the new orthonormal columns.
Matrix orthonormal_complement(const Matrix& basis, const Matrix& block, double drop_tol = 1e-10);

/// Orthonormal basis for the range of M, dropping dependent columns.
inline Matrix orth(const Matrix& M, double drop_tol = 1e-10) {
  return orthonormal_complement(Matrix(M.rows(), 0), M, drop_tol);
}

/// Largest singular value of a linear operator estimated by Lanczos on
/// op^T op with a deterministic start vector.
double norm2_estimate(Index n, const std::function<Vector(const Vector&)>& apply,
                      const std::function<Vector(const Vector&)>& apply_transpose, int iters = 30);

/// Same for a symmetric operator (Lanczos directly on op).
double norm2_estimate_symmetric(Index n, const std::function<Vector(const Vector&)>& apply,
                                int iters = 30);

}  // namespace qme::linalg
