#pragma once

// Low-rank solution of the UQME correction equation
//   dX^2 + (X0 + A^{-1} B) dX + dX X0 + U V^T = 0,
// where U V^T = A^{-1}(dA X0^2 + dB X0 + dC), by projection onto extended
// Krylov spaces with poles +1 and -1 and SDA on the projected equation.

#include <functional>
#include <vector>

#include "qme/hodlr.hpp"
#include "qme/lowrank.hpp"

namespace qme::uqme {

/// Ahat = X0 + A^{-1} B and X0^T with their +-1 shifted solves. All four
/// shifted factorizations and the LU of A are computed at construction.
class UqmeOperator {
 public:
  UqmeOperator(HodlrMatrix A, HodlrMatrix B, HodlrMatrix X0, double tau = 1e-14);

  Index rows() const { return A_.rows(); }
  Matrix apply_hat(const Matrix& x) const;
  Matrix apply_x0(const Matrix& x) const { return X0_.apply(x); }
  Matrix apply_x0t(const Matrix& x) const { return X0_.apply_transpose(x); }
  /// (Ahat + sign I)^{-1} x, sign = +1 or -1.
  Matrix solve_hat(int sign, const Matrix& x) const;
  /// (X0^T + sign I)^{-1} x.
  Matrix solve_x0t(int sign, const Matrix& x) const;
  /// A^{-1} x.
  Matrix solve_a(const Matrix& x) const { return ALu_.solve(x); }

 private:
  HodlrMatrix A_;
  HodlrMatrix B_;
  HodlrMatrix X0_;
  HodlrLu<double> ALu_;
  HodlrLu<double> hat_plus_;   // A X0 + B + A
  HodlrLu<double> hat_minus_;  // A X0 + B - A
  HodlrLu<double> x0t_plus_;
  HodlrLu<double> x0t_minus_;
};

/// Orthonormal bases Ub, Vb together with the images Ahat Ub and X0^T Vb and
/// the newest block of each sign, which seeds the next extension.
struct ExtendedKrylovPair {
  Matrix Ub, AhatUb;
  Matrix Vb, X0tVb;
  Matrix u_plus, u_minus;
  Matrix v_plus, v_minus;
  int steps = 0;
};

/// First step: Ub = orth[(Ahat+I)^{-1}U, (Ahat-I)^{-1}U] and
/// Vb = orth[V, (X0^T+I)^{-1}V, (X0^T-I)^{-1}V].
ExtendedKrylovPair initial_basis(const UqmeOperator& op, const GenLowRank& rhs);

/// Appends (Ahat+I)^{-1}u_plus, (Ahat-I)^{-1}u_minus and the X0^T analogues,
/// orthonormalized with deflation. Returns the number of columns added.
Index extend_basis(ExtendedKrylovPair& pair, const UqmeOperator& op);

/// Y F Y + A Y + Y D = Q with A = Ub^T Ahat Ub, D = Vb^T X0 Vb, F = Vb^T Ub,
/// Q = -(Ub^T U)(V^T Vb).
struct NareCoefficients {
  Matrix A, D, F, Q;
};
NareCoefficients project_nare(const ExtendedKrylovPair& pair, const GenLowRank& rhs);

/// ||dX^2 + Ahat dX + dX X0 + U V^T||_2 for dX = P Q^T, from thin QR factors.
double uqme_correction_residual(const GenLowRank& dX, const UqmeOperator& op,
                                const GenLowRank& rhs);

struct IterationRecord {
  int iteration = 0;
  Index basis_u = 0;
  Index basis_v = 0;
  int sda_iterations = 0;
  bool sda_failed = false;
  double residual = 0.0;
};
using IterationSink = std::function<void(const IterationRecord&)>;

struct Options {
  double tol = 1e-8;
  bool relative = true;  // relative to ||U V^T||_2
  int max_iterations = 40;
  double tau_sigma = 1e-12;
  IterationSink sink;
};

struct Report {
  int iterations = 0;
  Index basis_u = 0;
  Index basis_v = 0;
  double rhs_norm = 0.0;
  double residual = 0.0;  // absolute 2-norm
  std::vector<double> residual_history;
  std::vector<int> sda_iterations;
  int sda_retries = 0;
  bool converged = false;
};

struct Result {
  GenLowRank dX;
  Report report;
};

class NotConverged : public Error {
 public:
  NotConverged(const std::string& what, Result best)
      : Error(ErrorCode::MaxIterations, what), best_(std::move(best)) {}
  const Result& best() const { return best_; }

 private:
  Result best_;
};

/// Extended Krylov projection for the correction equation. When SDA fails on
/// a projected equation the bases are enlarged and the projection retried.
/// Throws NotConverged or SingularShiftedOperator.
Result ek_uqme_correction(const UqmeOperator& op, const GenLowRank& rhs, const Options& opts = {});

struct UqmeDeltas {
  GenLowRank dA;
  GenLowRank dB;
  GenLowRank dC;
};

/// Assembles U V^T from the perturbations (A, B are the modified
/// coefficients) and runs ek_uqme_correction.
Result uqme_correction(const UqmeOperator& op, const UqmeDeltas& deltas, const Options& opts = {});

}  // namespace qme::uqme
