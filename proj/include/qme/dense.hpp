#pragma once

// Dense kernels: small CAREs, Lyapunov and Sylvester equations, the
// structured doubling algorithm for projected NAREs, cyclic reduction and an
// eigenvector-based oracle for UQMEs. Everything here is O(n^3) and meant
// for recursion leaves, projected subproblems and test oracles.

#include <vector>

#include "qme/common.hpp"

namespace qme::dense {

/// Spectral 2-norm of a dense matrix (largest singular value).
double norm2(const Matrix& M);
double norm2(const CMatrix& M);

/// 1-norm (max column sum).
double norm1(const Matrix& M);

/// A^T X + X A - X B B^T X + Q.
Matrix care_residual(const Matrix& A, const Matrix& B, const Matrix& Q, const Matrix& X);

struct DenseCareOptions {
  /// Newton refinement is skipped once the relative residual drops below this.
  double refine_below = 1e-13;
  int max_newton_steps = 2;
  /// Relative distance of Hamiltonian eigenvalues to the imaginary axis
  /// below which the problem is rejected.
  double axis_tolerance = 1e-12;
};

/// Stabilizing solution of A^T X + X A - X B B^T X + Q = 0 via the ordered
/// real Schur form of the Hamiltonian [A -BB^T; -Q -A^T], followed by at
/// most two Newton defect-correction steps.
Matrix solve_care(const Matrix& A, const Matrix& B, const Matrix& Q,
                  const DenseCareOptions& opts = {});

/// Same with a general square F in place of B B^T.
Matrix solve_care_f(const Matrix& A, const Matrix& F, const Matrix& Q,
                    const DenseCareOptions& opts = {});

/// Newton steps on the Riccati operator starting from X. Each step solves a
/// Lyapunov equation for the defect; a step is kept only if it lowers the
/// residual. Throws LyapunovSingular if A - B B^T X is not stable.
Matrix newton_defect_correction(const Matrix& A, const Matrix& B, const Matrix& Q,
                                const Matrix& X, int max_steps = 2);

/// Solution of A^T X + X A + R = 0. Requires A stable (LyapunovSingular otherwise).
Matrix solve_lyapunov(const Matrix& A, const Matrix& R);

/// Stabilizing solution of the generalized CARE
/// A^T X E + E^T X A - E^T X B B^T X E + Q = 0, by reduction to a standard CARE.
Matrix solve_gcare(const Matrix& A, const Matrix& E, const Matrix& B, const Matrix& Q,
                   const DenseCareOptions& opts = {});

/// Eigenvalues of a real matrix.
Eigen::VectorXcd eigenvalues(const Matrix& M);
double max_real_eigenvalue(const Matrix& M);
double spectral_radius(const Matrix& M);

struct SdaResult {
  Matrix Y;
  int iterations = 0;
  /// min(||E_k||_1, ||F_k||_1) before each doubling step.
  std::vector<double> contraction;
};

/// Structured doubling for Y F Y + A Y + Y D = Q, returning the solution
/// associated with the inside-unit-disc part of the spectrum.
/// Stops when min(||E||_1, ||F||_1) < tol; throws SdaNotConverged after
/// max_iterations doubling steps and SingularPivot on a failed inversion.
SdaResult sda_nare(const Matrix& A, const Matrix& D, const Matrix& F, const Matrix& Q,
                   double tol = 1e-13, int max_iterations = 30);

struct CrResult {
  Matrix X;
  int iterations = 0;
};

/// Cyclic reduction for the minimal solution of A X^2 + B X + C = 0.
/// Converged once min(||A_t||_1, ||C_t||_1) < tol * ||B||_1.
CrResult cyclic_reduction(const Matrix& A, const Matrix& B, const Matrix& C,
                          double tol = 1e-13, int max_iterations = 50);

/// Minimal solution built from the n smallest-modulus eigenpairs of the
/// companion linearization of lambda^2 A + lambda B + C.
Matrix uqme_minimal_oracle(const Matrix& A, const Matrix& B, const Matrix& C,
                           double split_tol = 1e-10);

/// Eigenvalues of lambda^2 A + lambda B + C (infinite ones reported as inf).
Eigen::VectorXcd quadratic_eigenvalues(const Matrix& A, const Matrix& B, const Matrix& C);

struct SpectralSplit {
  Index inside = 0;
  Index on_circle = 0;
  Index outside = 0;
};

/// Classifies the 2n eigenvalues of lambda^2 A + lambda B + C against the
/// unit circle with a relative band of width tol.
SpectralSplit spectral_split_check(const Matrix& A, const Matrix& B, const Matrix& C,
                                   double tol = 1e-8);

/// A X + X B = C via Kronecker linearization; oracle-scale only.
Matrix solve_sylvester(const Matrix& A, const Matrix& B, const Matrix& C);

}  // namespace qme::dense
