#include "qme/linalg.hpp"

#include <random>

namespace qme::linalg {

template <typename T>
MatrixX<T> thin_q(const MatrixX<T>& M) {
  const Index k = std::min(M.rows(), M.cols());
  if (k == 0) return MatrixX<T>(M.rows(), 0);
  Eigen::HouseholderQR<MatrixX<T>> qr(M);
  return qr.householderQ() * MatrixX<T>::Identity(M.rows(), k);
}

template Matrix thin_q(const Matrix&);
template CMatrix thin_q(const CMatrix&);

Matrix orthonormal_complement(const Matrix& basis, const Matrix& block, double drop_tol) {
  const Index n = block.rows();
  require_dims(basis.rows() == n || basis.cols() == 0, "orthonormal_complement: rows");
  Matrix out(n, block.cols());
  Index kept = 0;
  for (Index j = 0; j < block.cols(); ++j) {
    Vector v = block.col(j);
    const double original = v.norm();
    if (original == 0.0 || !std::isfinite(original)) continue;
    for (int pass = 0; pass < 2; ++pass) {
      if (basis.cols() > 0) v -= basis * (basis.transpose() * v);
      if (kept > 0) v -= out.leftCols(kept) * (out.leftCols(kept).transpose() * v);
    }
    const double nv = v.norm();
    if (nv <= drop_tol * original) continue;
    out.col(kept++) = v / nv;
  }
  return out.leftCols(kept);
}

namespace {

Vector start_vector(Index n) {
  std::mt19937_64 rng(0x5eed);
  Vector v(n);
  for (Index i = 0; i < n; ++i) v(i) = 1.0 + 0.5 * (static_cast<double>(rng() >> 11) * 0x1.0p-53);
  return v.normalized();
}

// Largest |eigenvalue| of a symmetric operator by Lanczos with full
// reorthogonalization.
double lanczos_extreme(Index n, const std::function<Vector(const Vector&)>& op, int iters) {
  if (n == 0) return 0.0;
  const int k_max = static_cast<int>(std::min<Index>(iters, n));
  Matrix Qb(n, k_max);
  Vector alpha(k_max), beta(k_max);
  Qb.col(0) = start_vector(n);
  int k = 0;
  for (; k < k_max; ++k) {
    Vector w = op(Qb.col(k));
    alpha(k) = Qb.col(k).dot(w);
    for (int pass = 0; pass < 2; ++pass) w -= Qb.leftCols(k + 1) * (Qb.leftCols(k + 1).transpose() * w);
    beta(k) = w.norm();
    if (k + 1 == k_max || beta(k) <= 1e-14 * std::abs(alpha(k))) {
      ++k;
      break;
    }
    Qb.col(k + 1) = w / beta(k);
  }
  if (k == 0) return 0.0;
  Matrix T = Matrix::Zero(k, k);
  for (int i = 0; i < k; ++i) {
    T(i, i) = alpha(i);
    if (i + 1 < k) T(i, i + 1) = T(i + 1, i) = beta(i);
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(T, Eigen::EigenvaluesOnly);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

}  // namespace

double norm2_estimate(Index n, const std::function<Vector(const Vector&)>& apply,
                      const std::function<Vector(const Vector&)>& apply_transpose, int iters) {
  const double lam = lanczos_extreme(
      n, [&](const Vector& x) { return apply_transpose(apply(x)); }, iters);
  return std::sqrt(std::max(lam, 0.0));
}

double norm2_estimate_symmetric(Index n, const std::function<Vector(const Vector&)>& apply,
                                int iters) {
  return lanczos_extreme(n, apply, iters);
}

}  // namespace qme::linalg
