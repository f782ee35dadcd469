#include "qme/lowrank.hpp"

#include <algorithm>
#include <limits>
#include <vector>

#include "qme/linalg.hpp"

namespace qme {

namespace {

Matrix swap_core(Index k) {
  Matrix D = Matrix::Zero(2 * k, 2 * k);
  D.topRightCorner(k, k).setIdentity();
  D.bottomLeftCorner(k, k).setIdentity();
  return D;
}

double effective_tau(double tau) { return std::max(tau, std::numeric_limits<double>::epsilon()); }

// Stacks symmetric factors (U_i, D_i) into one factor with block-diagonal core.
SymLowRank stack(Index n, const std::vector<std::pair<Matrix, Matrix>>& parts) {
  Index r = 0;
  for (const auto& [u, d] : parts) {
    require_dims(u.rows() == n && d.rows() == u.cols() && d.cols() == u.cols(),
                 "symmetric factor blocks");
    r += u.cols();
  }
  Matrix U(n, r);
  Matrix D = Matrix::Zero(r, r);
  Index off = 0;
  for (const auto& [u, d] : parts) {
    U.middleCols(off, u.cols()) = u;
    D.block(off, off, d.rows(), d.cols()) = d;
    off += u.cols();
  }
  return {std::move(U), std::move(D)};
}

}  // namespace

SymLowRank::SymLowRank(Matrix u, Matrix d) : U(std::move(u)), D(std::move(d)) {
  require_dims(D.rows() == U.cols() && D.cols() == U.cols(), "SymLowRank: core size");
}

Matrix SymLowRank::dense() const {
  Matrix M = U * D * U.transpose();
  // exact symmetry regardless of rounding in the products
  return 0.5 * (M + M.transpose());
}

template <typename T>
LowRank<T>::LowRank(MatrixX<T> u, MatrixX<T> v) : U(std::move(u)), V(std::move(v)) {
  require_dims(U.cols() == V.cols(), "LowRank: factor column counts");
}

template struct LowRank<double>;
template struct LowRank<Complex>;

SymLowRank compress_sym(const SymLowRank& f, double tau) {
  const Index n = f.rows();
  if (f.rank() == 0) return SymLowRank::zero(n);
  const Index k = std::min(n, f.rank());
  Eigen::HouseholderQR<Matrix> qr(f.U);
  const Matrix R = qr.matrixQR().topRows(k).template triangularView<Eigen::Upper>();
  Matrix core = R * f.D * R.transpose();
  core = 0.5 * (core + core.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Matrix> es(core);
  const Vector& lam = es.eigenvalues();
  const double lmax = lam.cwiseAbs().maxCoeff();
  if (lmax == 0.0 || !std::isfinite(lmax)) return SymLowRank::zero(n);
  const double cut = effective_tau(tau) * lmax;
  std::vector<Index> keep;
  for (Index i = 0; i < lam.size(); ++i)
    if (std::abs(lam(i)) > cut) keep.push_back(i);
  std::sort(keep.begin(), keep.end(),
            [&](Index a, Index b) { return std::abs(lam(a)) > std::abs(lam(b)); });
  const Matrix Qk = qr.householderQ() * Matrix::Identity(n, k);
  Matrix W(k, static_cast<Index>(keep.size()));
  Vector d(static_cast<Index>(keep.size()));
  for (std::size_t j = 0; j < keep.size(); ++j) {
    W.col(static_cast<Index>(j)) = es.eigenvectors().col(keep[j]);
    d(static_cast<Index>(j)) = lam(keep[j]);
  }
  return {Qk * W, d.asDiagonal().toDenseMatrix()};
}

template <typename T>
LowRank<T> compress(const LowRank<T>& f, double tau) {
  const Index m = f.rows();
  const Index n = f.cols();
  if (f.rank() == 0) return LowRank<T>::zero(m, n);
  const Index ku = std::min(m, f.rank());
  const Index kv = std::min(n, f.rank());
  Eigen::HouseholderQR<MatrixX<T>> qu(f.U);
  Eigen::HouseholderQR<MatrixX<T>> qv(f.V);
  const MatrixX<T> Ru = qu.matrixQR().topRows(ku).template triangularView<Eigen::Upper>();
  const MatrixX<T> Rv = qv.matrixQR().topRows(kv).template triangularView<Eigen::Upper>();
  const MatrixX<T> core = Ru * Rv.transpose();
  Eigen::JacobiSVD<MatrixX<T>> svd(core, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& s = svd.singularValues();
  if (s.size() == 0 || s(0) == 0.0 || !std::isfinite(s(0))) return LowRank<T>::zero(m, n);
  const double cut = effective_tau(tau) * s(0);
  Index r = 0;
  while (r < s.size() && s(r) > cut) ++r;
  const MatrixX<T> Qu = qu.householderQ() * MatrixX<T>::Identity(m, ku);
  const MatrixX<T> Qv = qv.householderQ() * MatrixX<T>::Identity(n, kv);
  // U V^T = Qu Uc S Vc^H Qv^T = (Qu Uc S) (Qv conj(Vc))^T
  MatrixX<T> U = Qu * svd.matrixU().leftCols(r) * s.head(r).template cast<T>().asDiagonal();
  MatrixX<T> V = Qv * svd.matrixV().leftCols(r).conjugate();
  return {std::move(U), std::move(V)};
}

template LowRank<double> compress(const LowRank<double>&, double);
template LowRank<Complex> compress(const LowRank<Complex>&, double);

SymLowRank assemble_care_rhs(const GenLowRank& dA, const SymLowRank& dQ, const SymLowRank& dF,
                             const Applier& X0, double tau) {
  const Index n = dQ.rows();
  require_dims(dA.rows() == n && dA.cols() == n && dF.rows() == n, "assemble_care_rhs: rows");
  std::vector<std::pair<Matrix, Matrix>> parts;
  parts.emplace_back(dQ.U, dQ.D);
  if (dA.rank() > 0) {
    Matrix UA(n, 2 * dA.rank());
    UA << dA.V, X0(dA.U);
    parts.emplace_back(std::move(UA), swap_core(dA.rank()));
  }
  if (dF.rank() > 0) parts.emplace_back(X0(dF.U), -dF.D);
  return compress_sym(stack(n, parts), tau);
}

SymLowRank assemble_gcare_rhs(const GenLowRank& dA, const GenLowRank& dE, const SymLowRank& dQ,
                              const SymLowRank& dF, const GcareRhsOperators& ops, double tau) {
  const Index n = dQ.rows();
  require_dims(dA.rows() == n && dA.cols() == n && dE.rows() == n && dE.cols() == n &&
                   dF.rows() == n,
               "assemble_gcare_rhs: rows");
  std::vector<std::pair<Matrix, Matrix>> parts;
  parts.emplace_back(dQ.U, dQ.D);
  if (dA.rank() > 0) {
    // dA^T (X0 E0) + (X0 E0)^T dA
    Matrix UA(n, 2 * dA.rank());
    UA << dA.V, ops.E0t(ops.X0(dA.U));
    parts.emplace_back(std::move(UA), swap_core(dA.rank()));
  }
  if (dF.rank() > 0) parts.emplace_back(ops.E0t(ops.X0(dF.U)), -dF.D);
  if (dE.rank() > 0) {
    const Index k = dE.rank();
    // A^T X0 dE + dE^T X0 A
    Matrix UE(n, 2 * k);
    UE << ops.At(ops.X0(dE.U)), dE.V;
    parts.emplace_back(std::move(UE), swap_core(k));
    // -(dE^T W E0 + E0^T W dE + dE^T W dE)
    const Matrix WU = ops.X0(ops.F(ops.X0(dE.U)));
    Matrix UW(n, 2 * k);
    UW << dE.V, ops.E0t(WU);
    Matrix DW = -swap_core(k);
    Matrix UtWU = dE.U.transpose() * WU;
    DW.topLeftCorner(k, k) = -0.5 * (UtWU + UtWU.transpose());
    parts.emplace_back(std::move(UW), std::move(DW));
  }
  return compress_sym(stack(n, parts), tau);
}

GenLowRank assemble_uqme_rhs(const GenLowRank& dA, const GenLowRank& dB, const GenLowRank& dC,
                             const Applier& X0t, const Applier& Asolve, double tau) {
  const Index n = dC.rows();
  require_dims(dA.rows() == n && dB.rows() == n && dA.cols() == n && dB.cols() == n &&
                   dC.cols() == n,
               "assemble_uqme_rhs: rows");
  const Index r = dA.rank() + dB.rank() + dC.rank();
  if (r == 0) return GenLowRank::zero(n, n);
  Matrix Uc(n, r), V(n, r);
  Uc << dA.U, dB.U, dC.U;
  Matrix VA = dA.rank() > 0 ? X0t(X0t(dA.V)) : Matrix(n, 0);
  Matrix VB = dB.rank() > 0 ? X0t(dB.V) : Matrix(n, 0);
  V << VA, VB, dC.V;
  Matrix U = Asolve(Uc);
  if (!U.allFinite()) throw Error(ErrorCode::SingularCoefficient, "solve with A failed");
  return compress(GenLowRank(std::move(U), std::move(V)), tau);
}

}  // namespace qme
