#pragma once

// Low-rank solution of the CARE correction equation
//   A_c^T dX + dX A_c - dX B B^T dX + U D U^T = 0,   A_c = A - B B^T X0,
// by a block rational Krylov subspace method (RKSM) on A_c^T with adaptive
// shifts, plus the generalized (mass matrix) variant.

#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "qme/hodlr.hpp"
#include "qme/lowrank.hpp"

namespace qme::care {

/// The correction operator A_c together with shifted solves.
class CorrectionOperator {
 public:
  virtual ~CorrectionOperator() = default;
  virtual Index rows() const = 0;
  /// A_c x
  virtual Matrix apply(const Matrix& x) const = 0;
  /// A_c^T x
  virtual Matrix apply_transpose(const Matrix& x) const = 0;
  /// (A_c - xi I)^{-T} r
  virtual Matrix shifted_solve(double xi, const Matrix& r) const = 0;
  virtual CMatrix shifted_solve(Complex xi, const CMatrix& r) const = 0;
  /// Estimate of ||A_c||_2.
  virtual double norm_estimate() const;
};

/// A_c = A - B B^T X0 with A in HODLR form. Shifted solves factor (A - xi I)^T
/// in HODLR arithmetic and add the rank-m correction by Sherman-Morrison-Woodbury.
class HodlrOperator final : public CorrectionOperator {
 public:
  HodlrOperator(HodlrMatrix A, Matrix B, const Applier& X0, double tau_lu = 1e-14);
  Index rows() const override { return At_.rows(); }
  Matrix apply(const Matrix& x) const override;
  Matrix apply_transpose(const Matrix& x) const override;
  Matrix shifted_solve(double xi, const Matrix& r) const override;
  CMatrix shifted_solve(Complex xi, const CMatrix& r) const override;

 private:
  HodlrMatrix At_;
  Matrix B_;
  Matrix X0B_;
  double tau_lu_;
};

/// Dense counterpart, used for small problems and as a test oracle.
class DenseOperator final : public CorrectionOperator {
 public:
  DenseOperator(Matrix A, Matrix B, Matrix X0);
  Index rows() const override { return A_.rows(); }
  Matrix apply(const Matrix& x) const override;
  Matrix apply_transpose(const Matrix& x) const override;
  Matrix shifted_solve(double xi, const Matrix& r) const override;
  CMatrix shifted_solve(Complex xi, const CMatrix& r) const override;

 private:
  Matrix A_;
  Matrix B_;
  Matrix X0B_;
};

/// Generalized correction equation with mass matrix E, handled through the
/// equivalent standard CARE with A_c = A E^{-1} - B B^T X0. Shifted solves use
/// ((A - xi E)^T - E^T X0 B B^T) y = E^T r.
class GeneralizedOperator final : public CorrectionOperator {
 public:
  GeneralizedOperator(HodlrMatrix A, HodlrMatrix E, Matrix B, const Applier& X0,
                      double tau_lu = 1e-14);
  Index rows() const override { return A_.rows(); }
  Matrix apply(const Matrix& x) const override;
  Matrix apply_transpose(const Matrix& x) const override;
  Matrix shifted_solve(double xi, const Matrix& r) const override;
  CMatrix shifted_solve(Complex xi, const CMatrix& r) const override;
  /// E^{-T} x: maps the generalized constant-term factor to the standard one.
  Matrix solve_mass_transpose(const Matrix& x) const { return EtLu_.solve(x); }

 private:
  HodlrMatrix A_;
  HodlrMatrix E_;
  Matrix B_;
  Matrix X0B_;
  HodlrLu<double> EtLu_;
  HodlrLu<double> ELu_;
  double tau_lu_;
};

/// (M - P Q^T)^{-1} r given solves with M; throws SingularCapacitance.
template <typename T>
MatrixX<T> smw_solve(const std::function<MatrixX<T>(const MatrixX<T>&)>& solve_M,
                     const MatrixX<T>& P, const MatrixX<T>& Q, const MatrixX<T>& r);

/// Adaptive pole selection. Candidate points lie on the boundary of the
/// mirrored spectral region estimate: on the real interval [s_min, s_max]
/// (refined between known points) when the Ritz values are real, otherwise
/// on the convex hull of the mirrored Ritz values and the interval ends.
/// The chosen pole maximizes prod|x - s_j| / prod|x - lambda_i|.
class ShiftSelector {
 public:
  static constexpr int kPointsPerSegment = 20;

  ShiftSelector(double s_min, double s_max);
  /// Next pole given the current Ritz values (left half plane).
  Complex next(const Eigen::VectorXcd& ritz) const;
  /// Records a pole that generated `columns` new basis vectors.
  void record(Complex pole, Index columns);
  const std::vector<Complex>& poles() const { return poles_; }
  double s_min() const { return s_min_; }
  double s_max() const { return s_max_; }

 private:
  double s_min_;
  double s_max_;
  std::vector<Complex> poles_;
  std::vector<Index> columns_;
};

struct IterationRecord {
  int iteration = 0;
  Index basis_size = 0;
  Complex shift{0.0, 0.0};
  double residual = 0.0;
};
using IterationSink = std::function<void(const IterationRecord&)>;

struct Options {
  double tol = 1e-8;         // residual tolerance
  bool relative = true;      // relative to ||U D U^T||_2
  // With relative, the target becomes tol * max(||U D U^T||_2, scale). A
  // caller that needs the residual small relative to the full solution passes
  // its norm here; ||dX|| can exceed the rhs norm by orders of magnitude.
  double scale = 0.0;
  int max_iterations = 100;  // number of shifted solves
  // Give up after this many steps without a new best residual (0 disables).
  // The residual cannot drop below roughly eps * ||dX B||^2, which exceeds the
  // target on badly scaled problems.
  int stagnation_window = 12;
  // When positive, a best residual within accept_factor * target that has not
  // improved for 3 steps also ends the run (reported as stagnated).
  double accept_factor = 0.0;
  double tau_sigma = 1e-12;  // compression of the returned factor
  IterationSink sink;
};

struct Report {
  int iterations = 0;
  Index basis_size = 0;
  double rhs_norm = 0.0;
  double residual = 0.0;  // absolute 2-norm
  double target = 0.0;    // absolute residual target
  std::vector<double> residual_history;
  std::vector<Complex> shifts;
  bool converged = false;
  bool stagnated = false;
};

struct Result {
  SymLowRank dX;
  Report report;
};

/// Thrown when the iteration budget is exhausted; carries the best iterate.
class NotConverged : public Error {
 public:
  NotConverged(const std::string& what, Result best)
      : Error(ErrorCode::MaxIterations, what), best_(std::move(best)) {}
  const Result& best() const { return best_; }

 private:
  Result best_;
};

/// Galerkin solution of the projected CARE on span(V):
///   T Y + Y T^T - Y (V^T B)(V^T B)^T Y + (V^T U) D (V^T U)^T = 0,  T = V^T A_c^T V,
/// computed densely with Newton refinement. AtV holds A_c^T V.
Matrix projected_care_solve(const Matrix& V, const Matrix& AtV, const Matrix& B,
                            const SymLowRank& rhs);

/// ||R||_2 of the residual of V Y V^T, assembled from the component of
/// A_c^T V orthogonal to V and the projected residual, without n x n products.
/// Requires span(U) within span(V).
double residual_norm(const Matrix& V, const Matrix& AtV, const Matrix& B, const SymLowRank& rhs,
                     const Matrix& Y);

/// Block RKSM for the correction CARE. A zero right-hand side returns
/// immediately. Throws NotConverged, CompressedCareFailure, SingularShift
/// or SingularCapacitance.
Result rksm(const CorrectionOperator& op, const Matrix& B, const SymLowRank& rhs,
            const Options& opts = {});

/// Generalized correction: assembles the constant term from the reference
/// data (E0, X0) and the perturbations, then runs RKSM on the equivalent
/// standard CARE. A, E are the modified coefficients.
struct GcareDeltas {
  GenLowRank dA;
  GenLowRank dE;
  SymLowRank dQ;
  SymLowRank dF;
};
Result gcare_correction(const HodlrMatrix& A, const HodlrMatrix& E, const Applier& E0t,
                        const Matrix& B, const Applier& X0, const GcareDeltas& deltas,
                        const Options& opts, double tau_sigma = 1e-12);

}  // namespace qme::care
