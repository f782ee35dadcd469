#pragma once

// Factored low-rank matrices and the right-hand-side assembly of the
// correction equations.

#include <functional>

#include "qme/common.hpp"

namespace qme {

/// Applies a linear map to a block of column vectors.
using Applier = std::function<Matrix(const Matrix&)>;

/// U * D * U^T with a small symmetric (possibly indefinite) core D.
struct SymLowRank {
  Matrix U;
  Matrix D;

  SymLowRank() = default;
  SymLowRank(Matrix u, Matrix d);
  static SymLowRank zero(Index n) { return {Matrix(n, 0), Matrix(0, 0)}; }

  Index rows() const { return U.rows(); }
  Index rank() const { return U.cols(); }
  Matrix dense() const;
};

/// U * V^T.
template <typename T>
struct LowRank {
  MatrixX<T> U;
  MatrixX<T> V;

  LowRank() = default;
  LowRank(MatrixX<T> u, MatrixX<T> v);
  static LowRank zero(Index rows, Index cols) { return {MatrixX<T>(rows, 0), MatrixX<T>(cols, 0)}; }

  Index rows() const { return U.rows(); }
  Index cols() const { return V.rows(); }
  Index rank() const { return U.cols(); }
  MatrixX<T> dense() const { return U * V.transpose(); }
  /// (U V^T) x
  MatrixX<T> apply(const MatrixX<T>& x) const { return U * (V.transpose() * x); }
  /// (U V^T)^T x
  MatrixX<T> apply_transpose(const MatrixX<T>& x) const { return V * (U.transpose() * x); }
  LowRank transposed() const { return {V, U}; }
};

using GenLowRank = LowRank<double>;

/// Thin QR of the factor followed by an eigendecomposition of R D R^T;
/// eigenvalues with |lambda| <= tau * max|lambda| are dropped. The returned
/// U has orthonormal columns and D is diagonal.
SymLowRank compress_sym(const SymLowRank& f, double tau);

/// Two-sided analog: thin QRs of U and V and an SVD of the core, dropping
/// singular values <= tau * sigma_max. Singular values are absorbed into U.
template <typename T>
LowRank<T> compress(const LowRank<T>& f, double tau);

inline GenLowRank compress_gen(const GenLowRank& f, double tau) { return compress(f, tau); }

/// Q_hat = dQ + dA^T X0 + X0 dA - X0 dF X0 in factored form, compressed.
SymLowRank assemble_care_rhs(const GenLowRank& dA, const SymLowRank& dQ, const SymLowRank& dF,
                             const Applier& X0, double tau);

/// Operators entering the generalized constant term. A and F are the
/// modified coefficients, E0 the reference mass matrix.
struct GcareRhsOperators {
  Applier X0;   // x -> X0 x (X0 symmetric)
  Applier At;   // x -> A^T x
  Applier F;    // x -> F x
  Applier E0t;  // x -> E0^T x
};

/// Constant term of the generalized correction equation,
///   dQ + dA^T X0 E0 + E0^T X0 dA + A^T X0 dE + dE^T X0 A - E0^T X0 dF X0 E0
///      - (dE^T W E0 + E0^T W dE + dE^T W dE),     W = X0 F X0,
/// assembled term by term and compressed. With dE of rank zero it reduces
/// to the standard-form assembly applied to E0^T X0.
SymLowRank assemble_gcare_rhs(const GenLowRank& dA, const GenLowRank& dE, const SymLowRank& dQ,
                              const SymLowRank& dF, const GcareRhsOperators& ops, double tau);

/// A^{-1} (dA X0^2 + dB X0 + dC) as U V^T with
/// U = [A^{-1}U_A, A^{-1}U_B, A^{-1}U_C], V = [(X0^T)^2 V_A, X0^T V_B, V_C].
/// X0t applies X0^T, Asolve applies A^{-1}.
GenLowRank assemble_uqme_rhs(const GenLowRank& dA, const GenLowRank& dB, const GenLowRank& dC,
                             const Applier& X0t, const Applier& Asolve, double tau);

}  // namespace qme
