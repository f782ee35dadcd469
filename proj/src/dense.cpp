#include "qme/dense.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <lapacke.h>

namespace qme::dense {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();

lapack_logical select_left_half(const double* re, const double* /*im*/) { return *re < 0.0; }

struct RealSchur {
  Matrix T;
  Matrix Z;
  Vector wr;
  Vector wi;
  lapack_int sdim = 0;
};

RealSchur real_schur(const Matrix& M, bool order_stable) {
  const auto n = static_cast<lapack_int>(M.rows());
  RealSchur s;
  s.T = M;
  s.Z.resize(n, n);
  s.wr.resize(n);
  s.wi.resize(n);
  if (n == 0) return s;
  const lapack_int info =
      LAPACKE_dgees(LAPACK_COL_MAJOR, 'V', order_stable ? 'S' : 'N',
                    order_stable ? select_left_half : nullptr, n, s.T.data(), n, &s.sdim,
                    s.wr.data(), s.wi.data(), s.Z.data(), n);
  if (info != 0) {
    throw Error(ErrorCode::NoStabilizingSolution,
                "real Schur decomposition failed (dgees info " + std::to_string(info) + ")");
  }
  return s;
}

double rcond_of(const Eigen::PartialPivLU<Matrix>& lu) { return lu.rcond(); }

Matrix riccati_residual_f(const Matrix& A, const Matrix& F, const Matrix& Q, const Matrix& X) {
  Matrix R = A.transpose() * X;
  R += R.transpose().eval();
  R.noalias() -= X * F * X;
  R += Q;
  return R;
}

double residual_scale(const Matrix& A, const Matrix& F, const Matrix& Q, const Matrix& X) {
  const double nx = X.norm();
  return Q.norm() + 2.0 * A.norm() * nx + F.norm() * nx * nx;
}

Matrix newton_f(const Matrix& A, const Matrix& F, const Matrix& Q, Matrix X, int max_steps,
                double skip_below) {
  Matrix R = riccati_residual_f(A, F, Q, X);
  double res = R.norm();
  for (int step = 0; step < max_steps; ++step) {
    const double scale = residual_scale(A, F, Q, X);
    if (res <= skip_below * std::max(scale, std::numeric_limits<double>::min())) break;
    const Matrix closed = A - F * X;
    Matrix delta = solve_lyapunov(closed, R);
    delta = 0.5 * (delta + delta.transpose()).eval();
    Matrix candidate = X + delta;
    Matrix cand_res = riccati_residual_f(A, F, Q, candidate);
    const double r = cand_res.norm();
    if (!(r < res)) break;
    X = std::move(candidate);
    R = std::move(cand_res);
    res = r;
  }
  return X;
}

}  // namespace

double norm2(const Matrix& M) {
  if (M.size() == 0) return 0.0;
  Matrix work = M;
  const auto m = static_cast<lapack_int>(M.rows());
  const auto n = static_cast<lapack_int>(M.cols());
  Vector s(std::min(m, n));
  const lapack_int info = LAPACKE_dgesdd(LAPACK_COL_MAJOR, 'N', m, n, work.data(), m, s.data(),
                                         nullptr, 1, nullptr, 1);
  if (info != 0) return Eigen::JacobiSVD<Matrix>(M).singularValues()(0);
  return s(0);
}

double norm2(const CMatrix& M) {
  if (M.size() == 0) return 0.0;
  CMatrix work = M;
  const auto m = static_cast<lapack_int>(M.rows());
  const auto n = static_cast<lapack_int>(M.cols());
  Vector s(std::min(m, n));
  const lapack_int info =
      LAPACKE_zgesdd(LAPACK_COL_MAJOR, 'N', m, n, reinterpret_cast<lapack_complex_double*>(work.data()),
                     m, s.data(), nullptr, 1, nullptr, 1);
  if (info != 0) return Eigen::JacobiSVD<CMatrix>(M).singularValues()(0);
  return s(0);
}

double norm1(const Matrix& M) {
  if (M.size() == 0) return 0.0;
  return M.cwiseAbs().colwise().sum().maxCoeff();
}

Matrix care_residual(const Matrix& A, const Matrix& B, const Matrix& Q, const Matrix& X) {
  Matrix R = A.transpose() * X;
  R += R.transpose().eval();
  const Matrix XB = X * B;
  R.noalias() -= XB * XB.transpose();
  R += Q;
  return R;
}

Matrix solve_lyapunov(const Matrix& A, const Matrix& R) {
  const Index n = A.rows();
  require_dims(A.cols() == n && R.rows() == n && R.cols() == n, "solve_lyapunov: sizes");
  if (n == 0) return Matrix(0, 0);
  RealSchur s = real_schur(A, false);
  if (s.wr.maxCoeff() >= 0.0) {
    throw Error(ErrorCode::LyapunovSingular, "closed-loop matrix is not stable");
  }
  Matrix C = -(s.Z.transpose() * R * s.Z);
  double scale = 1.0;
  const auto ni = static_cast<lapack_int>(n);
  const lapack_int info = LAPACKE_dtrsyl(LAPACK_COL_MAJOR, 'T', 'N', 1, ni, ni, s.T.data(), ni,
                                         s.T.data(), ni, C.data(), ni, &scale);
  if (info < 0) throw Error(ErrorCode::LyapunovSingular, "dtrsyl failed");
  if (info == 1) throw Error(ErrorCode::LyapunovSingular, "nearly singular Lyapunov operator");
  C /= scale;
  return s.Z * C * s.Z.transpose();
}

Matrix solve_care_f(const Matrix& A, const Matrix& F, const Matrix& Q, const DenseCareOptions& opts) {
  const Index n = A.rows();
  require_dims(A.cols() == n && F.rows() == n && F.cols() == n && Q.rows() == n && Q.cols() == n,
               "solve_care: coefficient sizes");
  if (n == 0) return Matrix(0, 0);
  if (!A.allFinite() || !F.allFinite() || !Q.allFinite()) {
    throw Error(ErrorCode::InvalidInput, "non-finite CARE coefficients");
  }

  Matrix H(2 * n, 2 * n);
  H << A, -F, -Q, -A.transpose();
  RealSchur s = real_schur(H, true);

  const double spread = std::max(1.0, s.wr.cwiseAbs().maxCoeff() + s.wi.cwiseAbs().maxCoeff());
  const double gap = s.wr.cwiseAbs().minCoeff();
  if (s.sdim != n || gap <= opts.axis_tolerance * spread) {
    throw Error(ErrorCode::NoStabilizingSolution,
                "Hamiltonian has eigenvalues on or near the imaginary axis");
  }

  const Matrix Z11 = s.Z.topLeftCorner(n, n);
  const Matrix Z21 = s.Z.bottomLeftCorner(n, n);
  Eigen::PartialPivLU<Matrix> lu(Z11.transpose());
  if (!(rcond_of(lu) > kEps)) {
    throw Error(ErrorCode::NoStabilizingSolution, "stable invariant subspace is not a graph");
  }
  Matrix X = lu.solve(Z21.transpose()).transpose();
  X = 0.5 * (X + X.transpose()).eval();

  try {
    X = newton_f(A, F, Q, std::move(X), opts.max_newton_steps, opts.refine_below);
  } catch (const Error& e) {
    // A closed loop that is unstable in floating point leaves the Schur
    // solution as the best available answer.
    if (e.code() != ErrorCode::LyapunovSingular) throw;
  }
  return X;
}

Matrix solve_care(const Matrix& A, const Matrix& B, const Matrix& Q, const DenseCareOptions& opts) {
  require_dims(B.rows() == A.rows(), "solve_care: B rows");
  return solve_care_f(A, B * B.transpose(), Q, opts);
}

Matrix newton_defect_correction(const Matrix& A, const Matrix& B, const Matrix& Q, const Matrix& X,
                                int max_steps) {
  const Index n = A.rows();
  require_dims(B.rows() == n && Q.rows() == n && X.rows() == n && X.cols() == n,
               "newton_defect_correction: sizes");
  const Matrix F = B * B.transpose();
  if (max_real_eigenvalue(A - F * X) >= 0.0) {
    throw Error(ErrorCode::LyapunovSingular, "closed-loop matrix is not stable");
  }
  return newton_f(A, F, Q, X, max_steps, 0.0);
}

Matrix solve_gcare(const Matrix& A, const Matrix& E, const Matrix& B, const Matrix& Q,
                   const DenseCareOptions& opts) {
  const Index n = A.rows();
  require_dims(E.rows() == n && E.cols() == n, "solve_gcare: E size");
  if (n == 0) return Matrix(0, 0);
  Eigen::PartialPivLU<Matrix> luEt(E.transpose());
  if (!(rcond_of(luEt) > kEps)) throw Error(ErrorCode::SingularMassMatrix, "E is singular");
  // A E^{-1} and E^{-T} Q E^{-1}
  const Matrix Abar = luEt.solve(A.transpose()).transpose();
  const Matrix tmp = luEt.solve(Q);
  Matrix Qbar = luEt.solve(tmp.transpose()).transpose();
  Qbar = 0.5 * (Qbar + Qbar.transpose()).eval();
  return solve_care(Abar, B, Qbar, opts);
}

Eigen::VectorXcd eigenvalues(const Matrix& M) {
  const auto n = static_cast<lapack_int>(M.rows());
  Eigen::VectorXcd ev(n);
  if (n == 0) return ev;
  Matrix work = M;
  Vector wr(n), wi(n);
  const lapack_int info = LAPACKE_dgeev(LAPACK_COL_MAJOR, 'N', 'N', n, work.data(), n, wr.data(),
                                        wi.data(), nullptr, 1, nullptr, 1);
  if (info != 0) throw Error(ErrorCode::InvalidInput, "dgeev failed");
  for (lapack_int i = 0; i < n; ++i) ev(i) = Complex(wr(i), wi(i));
  return ev;
}

double max_real_eigenvalue(const Matrix& M) {
  if (M.size() == 0) return -std::numeric_limits<double>::infinity();
  return eigenvalues(M).real().maxCoeff();
}

double spectral_radius(const Matrix& M) {
  if (M.size() == 0) return 0.0;
  return eigenvalues(M).cwiseAbs().maxCoeff();
}

SdaResult sda_nare(const Matrix& A, const Matrix& D, const Matrix& F, const Matrix& Q, double tol,
                   int max_iterations) {
  const Index p = A.rows();
  const Index q = D.rows();
  require_dims(A.cols() == p && D.cols() == q && F.rows() == q && F.cols() == p && Q.rows() == p &&
                   Q.cols() == q,
               "sda_nare: coefficient sizes");
  SdaResult out;
  if (p == 0 || q == 0 || Q.isZero(0.0)) {
    out.Y = Matrix::Zero(p, q);
    return out;
  }

  // [I F; 0 -A]^{-1} [D 0; Q I]
  Eigen::PartialPivLU<Matrix> luA(A);
  if (!(rcond_of(luA) > kEps)) throw Error(ErrorCode::SingularPivot, "SDA: projected A is singular");
  const Matrix AinvQ = luA.solve(Q);
  const Matrix FAinv = Eigen::PartialPivLU<Matrix>(A.transpose()).solve(F.transpose()).transpose();
  Matrix E = D + F * AinvQ;
  Matrix G = -FAinv;
  Matrix P = AinvQ;
  Matrix Fk = -luA.inverse();

  const Matrix Iq = Matrix::Identity(q, q);
  const Matrix Ip = Matrix::Identity(p, p);
  for (int k = 0;; ++k) {
    const double c = std::min(norm1(E), norm1(Fk));
    out.contraction.push_back(c);
    if (!std::isfinite(c)) throw Error(ErrorCode::SingularPivot, "SDA: iteration diverged");
    if (c < tol) {
      out.Y = std::move(P);
      out.iterations = k;
      return out;
    }
    if (k >= max_iterations) break;
    // factor the transposes: E1 = E (I - GP)^{-1} = ((I - GP)^{-T} E^T)^T
    Eigen::PartialPivLU<Matrix> luG((Iq - G * P).transpose());
    Eigen::PartialPivLU<Matrix> luP((Ip - P * G).transpose());
    if (!(rcond_of(luG) > kEps) || !(rcond_of(luP) > kEps)) {
      throw Error(ErrorCode::SingularPivot, "SDA: I - GP or I - PG is singular");
    }
    const Matrix E1 = luG.solve(E.transpose()).transpose();
    const Matrix F1 = luP.solve(Fk.transpose()).transpose();
    G += E1 * G * Fk;
    P += F1 * P * E;
    E = E1 * E;
    Fk = F1 * Fk;
  }
  throw Error(ErrorCode::SdaNotConverged,
              "SDA did not converge in " + std::to_string(max_iterations) + " iterations");
}

CrResult cyclic_reduction(const Matrix& A, const Matrix& B, const Matrix& C, double tol,
                          int max_iterations) {
  const Index n = A.rows();
  require_dims(A.cols() == n && B.rows() == n && B.cols() == n && C.rows() == n && C.cols() == n,
               "cyclic_reduction: coefficient sizes");
  CrResult out;
  if (n == 0) {
    out.X = Matrix(0, 0);
    return out;
  }
  Matrix At = A, Bt = B, Bhat = B, Ct = C;
  const double threshold = tol * norm1(B);
  for (int t = 0;; ++t) {
    if (std::min(norm1(At), norm1(Ct)) < threshold || (At.isZero(0.0) || Ct.isZero(0.0))) {
      Eigen::PartialPivLU<Matrix> lu(Bhat);
      if (!(rcond_of(lu) > kEps)) throw Error(ErrorCode::SingularPivot, "CR: final B-hat singular");
      out.X = -lu.solve(C);
      out.iterations = t;
      return out;
    }
    if (t >= max_iterations) break;
    Eigen::PartialPivLU<Matrix> lu(Bt);
    if (!(rcond_of(lu) > kEps)) throw Error(ErrorCode::SingularPivot, "CR: B^(t) is singular");
    const Matrix BiA = lu.solve(At);
    const Matrix BiC = lu.solve(Ct);
    const Matrix ABiC = At * BiC;
    Matrix Anext = -(At * BiA);
    Bt -= ABiC + Ct * BiA;
    Bhat -= ABiC;
    Matrix Cnext = -(Ct * BiC);
    At = std::move(Anext);
    Ct = std::move(Cnext);
    if (!At.allFinite() || !Ct.allFinite()) break;
  }
  throw Error(ErrorCode::CrNotConverged, "cyclic reduction did not converge");
}

namespace {

struct PencilEig {
  Eigen::VectorXcd alpha;
  Vector beta_abs;
  Eigen::VectorXcd lambda;  // inf where beta vanishes
  CMatrix vectors;          // right eigenvectors (if requested)
  std::vector<bool> degenerate;
};

PencilEig quadratic_pencil(const Matrix& A, const Matrix& B, const Matrix& C, bool vectors) {
  const Index n = A.rows();
  require_dims(A.cols() == n && B.rows() == n && B.cols() == n && C.rows() == n && C.cols() == n,
               "quadratic pencil: coefficient sizes");
  const Index N = 2 * n;
  CMatrix M = CMatrix::Zero(N, N);
  CMatrix L = CMatrix::Zero(N, N);
  M.topRightCorner(n, n).setIdentity();
  M.bottomLeftCorner(n, n) = -C.cast<Complex>();
  M.bottomRightCorner(n, n) = -B.cast<Complex>();
  L.topLeftCorner(n, n).setIdentity();
  L.bottomRightCorner(n, n) = A.cast<Complex>();

  PencilEig out;
  out.alpha.resize(N);
  Eigen::VectorXcd beta(N);
  if (vectors) out.vectors.resize(N, N);
  auto* m = reinterpret_cast<lapack_complex_double*>(M.data());
  auto* l = reinterpret_cast<lapack_complex_double*>(L.data());
  const auto Ni = static_cast<lapack_int>(N);
  lapack_complex_double dummy;
  const lapack_int info = LAPACKE_zggev(
      LAPACK_COL_MAJOR, 'N', vectors ? 'V' : 'N', Ni, m, Ni, l, Ni,
      reinterpret_cast<lapack_complex_double*>(out.alpha.data()),
      reinterpret_cast<lapack_complex_double*>(beta.data()), &dummy, 1,
      vectors ? reinterpret_cast<lapack_complex_double*>(out.vectors.data()) : &dummy,
      vectors ? Ni : 1);
  if (info != 0) throw Error(ErrorCode::InvalidInput, "zggev failed");

  out.beta_abs = beta.cwiseAbs();
  out.lambda.resize(N);
  out.degenerate.assign(N, false);
  const double inf = std::numeric_limits<double>::infinity();
  const double scale = std::max({1.0, A.cwiseAbs().maxCoeff(), B.cwiseAbs().maxCoeff(),
                                 C.cwiseAbs().maxCoeff()});
  for (Index i = 0; i < N; ++i) {
    const double a = std::abs(out.alpha(i));
    const double b = out.beta_abs(i);
    if (a <= kEps * scale * N && b <= kEps * scale * N) out.degenerate[i] = true;
    if (b == 0.0 || a > b / std::numeric_limits<double>::min()) {
      out.lambda(i) = Complex(inf, 0.0);
    } else {
      out.lambda(i) = out.alpha(i) / beta(i);
    }
  }
  return out;
}

}  // namespace

Eigen::VectorXcd quadratic_eigenvalues(const Matrix& A, const Matrix& B, const Matrix& C) {
  return quadratic_pencil(A, B, C, false).lambda;
}

Matrix uqme_minimal_oracle(const Matrix& A, const Matrix& B, const Matrix& C, double split_tol) {
  const Index n = A.rows();
  if (n == 0) return Matrix(0, 0);
  PencilEig pe = quadratic_pencil(A, B, C, true);
  const Index N = 2 * n;
  std::vector<Index> order(N);
  std::iota(order.begin(), order.end(), 0);
  auto modulus = [&](Index i) {
    if (pe.degenerate[i]) return std::numeric_limits<double>::quiet_NaN();
    return std::abs(pe.lambda(i));
  };
  for (Index i = 0; i < N; ++i) {
    if (pe.degenerate[i]) throw Error(ErrorCode::SplitViolation, "singular matrix polynomial");
  }
  std::stable_sort(order.begin(), order.end(),
                   [&](Index a, Index b) { return modulus(a) < modulus(b); });
  const double inner = modulus(order[n - 1]);
  const double outer = modulus(order[n]);
  if (!(outer - inner > split_tol * std::max(1.0, inner))) {
    throw Error(ErrorCode::SplitViolation, "no gap between |lambda_n| and |lambda_{n+1}|");
  }
  CMatrix V(n, n);
  Eigen::VectorXcd lam(n);
  for (Index j = 0; j < n; ++j) {
    const Index k = order[j];
    lam(j) = pe.lambda(k);
    V.col(j) = pe.vectors.col(k).head(n);
  }
  Eigen::PartialPivLU<CMatrix> lu(V.transpose());
  if (!(lu.rcond() > 1e3 * kEps)) {
    throw Error(ErrorCode::SingularEigenbasis, "eigenvector matrix is singular");
  }
  // X V = V diag(lam)  =>  V^T X^T = (V diag(lam))^T
  const CMatrix VL = V * lam.asDiagonal();
  const CMatrix X = lu.solve(VL.transpose()).transpose();
  return X.real();
}

SpectralSplit spectral_split_check(const Matrix& A, const Matrix& B, const Matrix& C, double tol) {
  SpectralSplit split;
  if (A.rows() == 0) return split;
  PencilEig pe = quadratic_pencil(A, B, C, false);
  for (Index i = 0; i < pe.lambda.size(); ++i) {
    if (pe.degenerate[i]) {
      ++split.on_circle;
      continue;
    }
    const double r = std::abs(pe.lambda(i));
    if (!std::isfinite(r)) {
      ++split.outside;
    } else if (std::abs(r - 1.0) <= tol) {
      ++split.on_circle;
    } else if (r < 1.0) {
      ++split.inside;
    } else {
      ++split.outside;
    }
  }
  return split;
}

Matrix solve_sylvester(const Matrix& A, const Matrix& B, const Matrix& C) {
  const Index m = A.rows();
  const Index n = B.rows();
  require_dims(A.cols() == m && B.cols() == n && C.rows() == m && C.cols() == n,
               "solve_sylvester: sizes");
  if (m == 0 || n == 0) return Matrix::Zero(m, n);
  // (I_n kron A + B^T kron I_m) vec(X) = vec(C)
  Matrix K = Matrix::Zero(m * n, m * n);
  for (Index j = 0; j < n; ++j) {
    K.block(j * m, j * m, m, m) += A;
    for (Index i = 0; i < n; ++i) {
      const double b = B(j, i);  // (B^T)(i, j)
      if (b != 0.0) K.block(i * m, j * m, m, m).diagonal().array() += b;
    }
  }
  Eigen::PartialPivLU<Matrix> lu(K);
  if (!(lu.rcond() > kEps)) {
    throw Error(ErrorCode::SingularOperator, "spectra of A and -B overlap");
  }
  const Vector x = lu.solve(Eigen::Map<const Vector>(C.data(), m * n));
  return Eigen::Map<const Matrix>(x.data(), m, n);
}

}  // namespace qme::dense
