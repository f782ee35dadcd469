#include "qme/care.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>

#include "qme/dense.hpp"
#include "qme/linalg.hpp"

namespace qme::care {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();

std::string sci(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", x);
  return buf;
}

template <typename T>
MatrixX<T> hodlr_solve_or_throw(const Hodlr<T>& M, const MatrixX<T>& r, double tau) {
  try {
    return HodlrLu<T>(M, tau).solve(r);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::SingularPivot) {
      throw Error(ErrorCode::SingularShift, "shifted operator is singular");
    }
    throw;
  }
}

template <typename T>
MatrixX<T> dense_solve_or_throw(const MatrixX<T>& M, const MatrixX<T>& r) {
  Eigen::PartialPivLU<MatrixX<T>> lu(M);
  if (!(lu.rcond() > kEps)) throw Error(ErrorCode::SingularShift, "shifted operator is singular");
  return lu.solve(r);
}

double sym_norm(const SymLowRank& f) {
  if (f.rank() == 0) return 0.0;
  Eigen::HouseholderQR<Matrix> qr(f.U);
  const Index k = std::min(f.rows(), f.rank());
  const Matrix R = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
  Matrix core = R * f.D * R.transpose();
  core = 0.5 * (core + core.transpose()).eval();
  return Eigen::SelfAdjointEigenSolver<Matrix>(core, Eigen::EigenvaluesOnly)
      .eigenvalues()
      .cwiseAbs()
      .maxCoeff();
}

// Closed-loop Ritz values, folded into the closed left half plane.
Eigen::VectorXcd closed_loop_ritz(const Matrix& T, const Matrix& Bt, const Matrix& Y) {
  const Matrix closed = T.transpose() - Bt * (Bt.transpose() * Y);
  Eigen::VectorXcd ev = dense::eigenvalues(closed);
  for (Index i = 0; i < ev.size(); ++i) ev(i) = Complex(-std::abs(ev(i).real()), ev(i).imag());
  return ev;
}

double cross(Complex o, Complex a, Complex b) {
  return (a.real() - o.real()) * (b.imag() - o.imag()) - (a.imag() - o.imag()) * (b.real() - o.real());
}

// Convex hull (counter-clockwise) by the monotone chain algorithm.
std::vector<Complex> convex_hull(std::vector<Complex> pts) {
  std::sort(pts.begin(), pts.end(), [](Complex a, Complex b) {
    return a.real() < b.real() || (a.real() == b.real() && a.imag() < b.imag());
  });
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  if (pts.size() < 3) return pts;
  std::vector<Complex> hull(2 * pts.size());
  std::size_t k = 0;
  for (const Complex& p : pts) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0) --k;
    hull[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, t = k + 1; i > 0; --i) {
    while (k >= t && cross(hull[k - 2], hull[k - 1], pts[i - 1]) <= 0) --k;
    hull[k++] = pts[i - 1];
  }
  hull.resize(k - 1);
  return hull;
}

}  // namespace

double CorrectionOperator::norm_estimate() const {
  return linalg::norm2_estimate(
      rows(), [&](const Vector& x) -> Vector { return apply(x); },
      [&](const Vector& x) -> Vector { return apply_transpose(x); }, 20);
}

template <typename T>
MatrixX<T> smw_solve(const std::function<MatrixX<T>(const MatrixX<T>&)>& solve_M,
                     const MatrixX<T>& P, const MatrixX<T>& Q, const MatrixX<T>& r) {
  const Index m = P.cols();
  if (m == 0) return solve_M(r);
  MatrixX<T> rhs(r.rows(), r.cols() + m);
  rhs << r, P;
  const MatrixX<T> sol = solve_M(rhs);
  const MatrixX<T> y = sol.leftCols(r.cols());
  const MatrixX<T> Z = sol.rightCols(m);
  const MatrixX<T> cap = MatrixX<T>::Identity(m, m) - Q.transpose() * Z;
  Eigen::PartialPivLU<MatrixX<T>> lu(cap);
  if (!(lu.rcond() > kEps)) {
    throw Error(ErrorCode::SingularCapacitance, "Sherman-Morrison-Woodbury capacitance is singular");
  }
  return y + Z * lu.solve(Q.transpose() * y);
}

template Matrix smw_solve(const std::function<Matrix(const Matrix&)>&, const Matrix&, const Matrix&,
                          const Matrix&);
template CMatrix smw_solve(const std::function<CMatrix(const CMatrix&)>&, const CMatrix&,
                           const CMatrix&, const CMatrix&);

// ---------------------------------------------------------------------------

HodlrOperator::HodlrOperator(HodlrMatrix A, Matrix B, const Applier& X0, double tau_lu)
    : At_(A.transpose()), B_(std::move(B)), X0B_(X0(B_)), tau_lu_(tau_lu) {
  require_dims(B_.rows() == At_.rows(), "HodlrOperator: B rows");
}

Matrix HodlrOperator::apply(const Matrix& x) const {
  return At_.apply_transpose(x) - B_ * (X0B_.transpose() * x);
}

Matrix HodlrOperator::apply_transpose(const Matrix& x) const {
  return At_.apply(x) - X0B_ * (B_.transpose() * x);
}

Matrix HodlrOperator::shifted_solve(double xi, const Matrix& r) const {
  const HodlrMatrix M = At_.shifted(-xi);
  return smw_solve<double>([&](const Matrix& b) { return hodlr_solve_or_throw(M, b, tau_lu_); }, X0B_,
                           B_, r);
}

CMatrix HodlrOperator::shifted_solve(Complex xi, const CMatrix& r) const {
  const ComplexHodlr M = At_.cast<Complex>().shifted(-xi);
  return smw_solve<Complex>(
      [&](const CMatrix& b) { return hodlr_solve_or_throw(M, b, tau_lu_); },
      X0B_.cast<Complex>(), B_.cast<Complex>(), r);
}

DenseOperator::DenseOperator(Matrix A, Matrix B, Matrix X0)
    : A_(std::move(A)), B_(std::move(B)), X0B_(X0 * B_) {
  require_dims(A_.rows() == A_.cols() && B_.rows() == A_.rows() && X0.rows() == A_.rows(),
               "DenseOperator: sizes");
}

Matrix DenseOperator::apply(const Matrix& x) const { return A_ * x - B_ * (X0B_.transpose() * x); }

Matrix DenseOperator::apply_transpose(const Matrix& x) const {
  return A_.transpose() * x - X0B_ * (B_.transpose() * x);
}

Matrix DenseOperator::shifted_solve(double xi, const Matrix& r) const {
  Matrix M = A_.transpose();
  M.diagonal().array() -= xi;
  return smw_solve<double>([&](const Matrix& b) { return dense_solve_or_throw(M, b); }, X0B_, B_, r);
}

CMatrix DenseOperator::shifted_solve(Complex xi, const CMatrix& r) const {
  CMatrix M = A_.transpose().cast<Complex>();
  M.diagonal().array() -= xi;
  return smw_solve<Complex>([&](const CMatrix& b) { return dense_solve_or_throw(M, b); },
                            X0B_.cast<Complex>(), B_.cast<Complex>(), r);
}

namespace {

HodlrLu<double> factor_mass(const HodlrMatrix& M) {
  try {
    return HodlrLu<double>(M);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::SingularPivot) {
      throw Error(ErrorCode::SingularMassMatrix, "mass matrix is singular");
    }
    throw;
  }
}

}  // namespace

GeneralizedOperator::GeneralizedOperator(HodlrMatrix A, HodlrMatrix E, Matrix B, const Applier& X0,
                                         double tau_lu)
    : A_(std::move(A)),
      E_(std::move(E)),
      B_(std::move(B)),
      X0B_(X0(B_)),
      EtLu_(factor_mass(E_.transpose())),
      ELu_(factor_mass(E_)),
      tau_lu_(tau_lu) {
  require_dims(E_.rows() == A_.rows() && B_.rows() == A_.rows(), "GeneralizedOperator: sizes");
}

Matrix GeneralizedOperator::apply(const Matrix& x) const {
  return A_.apply(ELu_.solve(x)) - B_ * (X0B_.transpose() * x);
}

Matrix GeneralizedOperator::apply_transpose(const Matrix& x) const {
  return EtLu_.solve(A_.apply_transpose(x)) - X0B_ * (B_.transpose() * x);
}

Matrix GeneralizedOperator::shifted_solve(double xi, const Matrix& r) const {
  const HodlrMatrix M = add(A_, E_.scaled(-xi), tau_lu_).transpose();
  const Matrix P = E_.apply_transpose(X0B_);
  return smw_solve<double>([&](const Matrix& b) { return hodlr_solve_or_throw(M, b, tau_lu_); }, P,
                           B_, E_.apply_transpose(r));
}

CMatrix GeneralizedOperator::shifted_solve(Complex xi, const CMatrix& r) const {
  const ComplexHodlr Ec = E_.cast<Complex>();
  const ComplexHodlr M = add(A_.cast<Complex>(), Ec.scaled(-xi), tau_lu_).transpose();
  const CMatrix P = E_.apply_transpose(X0B_).cast<Complex>();
  return smw_solve<Complex>(
      [&](const CMatrix& b) { return hodlr_solve_or_throw(M, b, tau_lu_); }, P,
      B_.cast<Complex>(), Ec.apply_transpose(r));
}

// ---------------------------------------------------------------------------

ShiftSelector::ShiftSelector(double s_min, double s_max) : s_min_(s_min), s_max_(s_max) {
  if (!(s_min_ > 0.0)) s_min_ = std::max(kEps * std::abs(s_max_), std::numeric_limits<double>::min());
  if (!(s_max_ >= s_min_)) s_max_ = s_min_;
}

void ShiftSelector::record(Complex pole, Index columns) {
  poles_.push_back(pole);
  columns_.push_back(columns);
}

Complex ShiftSelector::next(const Eigen::VectorXcd& ritz) const {
  const auto objective = [&](Complex x) {
    double v = 0.0;
    for (std::size_t j = 0; j < poles_.size(); ++j)
      v += static_cast<double>(columns_[j]) * std::log(std::abs(x - poles_[j]));
    for (Index i = 0; i < ritz.size(); ++i) v -= std::log(std::abs(x - ritz(i)));
    return v;
  };

  bool real_spectrum = true;
  for (Index i = 0; i < ritz.size(); ++i)
    if (std::abs(ritz(i).imag()) > 1e-10 * std::abs(ritz(i))) real_spectrum = false;

  std::vector<Complex> candidates;
  if (real_spectrum) {
    std::vector<double> knots{s_min_, s_max_};
    for (const Complex& p : poles_)
      if (p.real() > s_min_ && p.real() < s_max_) knots.push_back(p.real());
    std::sort(knots.begin(), knots.end());
    knots.erase(std::unique(knots.begin(), knots.end()), knots.end());
    if (knots.size() == 1) candidates.emplace_back(knots[0], 0.0);
    for (std::size_t k = 0; k + 1 < knots.size(); ++k)
      for (int i = 0; i < kPointsPerSegment; ++i) {
        const double t = static_cast<double>(i) / (kPointsPerSegment - 1);
        candidates.emplace_back(knots[k] + t * (knots[k + 1] - knots[k]), 0.0);
      }
  } else {
    std::vector<Complex> pts{Complex(s_min_, 0.0), Complex(s_max_, 0.0)};
    for (Index i = 0; i < ritz.size(); ++i) pts.emplace_back(-ritz(i).real(), ritz(i).imag());
    const std::vector<Complex> hull = convex_hull(pts);
    if (hull.size() == 1) candidates.push_back(hull[0]);
    for (std::size_t k = 0; k < hull.size() && hull.size() > 1; ++k) {
      const Complex a = hull[k];
      const Complex b = hull[(k + 1) % hull.size()];
      for (int i = 0; i < kPointsPerSegment; ++i) {
        const double t = static_cast<double>(i) / kPointsPerSegment;
        candidates.push_back(a + t * (b - a));
      }
    }
  }

  Complex best = candidates.empty() ? Complex(s_min_, 0.0) : candidates.front();
  double best_value = -std::numeric_limits<double>::infinity();
  for (const Complex& c : candidates) {
    const double v = objective(c);
    if (std::isfinite(v) && v > best_value) {
      best_value = v;
      best = c;
    }
  }
  if (std::abs(best.imag()) <= 1e-10 * std::abs(best)) best = Complex(best.real(), 0.0);
  // complex poles are used with positive imaginary part; the conjugate follows
  if (best.imag() < 0.0) best = std::conj(best);
  return best;
}

// ---------------------------------------------------------------------------

Matrix projected_care_solve(const Matrix& V, const Matrix& AtV, const Matrix& B,
                            const SymLowRank& rhs) {
  const Matrix T = V.transpose() * AtV;
  const Matrix Bt = V.transpose() * B;
  const Matrix Ut = V.transpose() * rhs.U;
  Matrix Qt = Ut * rhs.D * Ut.transpose();
  Qt = 0.5 * (Qt + Qt.transpose()).eval();
  if (Qt.isZero(0.0)) return Matrix::Zero(V.cols(), V.cols());
  try {
    return dense::solve_care(T.transpose(), Bt, Qt);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::NoStabilizingSolution) {
      throw Error(ErrorCode::CompressedCareFailure,
                  "projected CARE has no stabilizing solution (basis size " +
                      std::to_string(V.cols()) + ")");
    }
    throw;
  }
}

double residual_norm(const Matrix& V, const Matrix& AtV, const Matrix& B, const SymLowRank& rhs,
                     const Matrix& Y) {
  const Index k = V.cols();
  const Matrix T = V.transpose() * AtV;
  const Matrix Bt = V.transpose() * B;
  const Matrix Ut = V.transpose() * rhs.U;
  Matrix G = T * Y + Y * T.transpose() - Y * Bt * Bt.transpose() * Y + Ut * rhs.D * Ut.transpose();
  G = 0.5 * (G + G.transpose()).eval();
  Matrix Wp = AtV - V * T;
  Wp -= V * (V.transpose() * Wp);
  Eigen::HouseholderQR<Matrix> qr(Wp);
  const Index kw = std::min(Wp.rows(), k);
  const Matrix Rw = qr.matrixQR().topRows(kw).triangularView<Eigen::Upper>();
  const Matrix RY = Rw * Y;
  Matrix M = Matrix::Zero(k + kw, k + kw);
  M.topLeftCorner(k, k) = G;
  M.bottomLeftCorner(kw, k) = RY;
  M.topRightCorner(k, kw) = RY.transpose();
  return Eigen::SelfAdjointEigenSolver<Matrix>(M, Eigen::EigenvaluesOnly)
      .eigenvalues()
      .cwiseAbs()
      .maxCoeff();
}

Result rksm(const CorrectionOperator& op, const Matrix& B, const SymLowRank& rhs,
            const Options& opts) {
  const Index n = op.rows();
  require_dims(B.rows() == n && rhs.rows() == n, "rksm: sizes");
  Result out;
  out.report.rhs_norm = sym_norm(rhs);
  if (rhs.rank() == 0 || out.report.rhs_norm == 0.0) {
    out.dX = SymLowRank::zero(n);
    out.report.converged = true;
    return out;
  }
  const double target = opts.relative ? opts.tol * std::max(out.report.rhs_norm, opts.scale) : opts.tol;
  out.report.target = target;

  Matrix V = linalg::orth(rhs.U);
  Matrix AtV = op.apply_transpose(V);
  Matrix last = V;
  Matrix Y;
  double res = std::numeric_limits<double>::infinity();
  Eigen::VectorXcd ritz;
  std::string projection_failure;

  // Small subspaces may not admit a stabilizing projected solution when the
  // constant term is indefinite; the basis is then enlarged and the
  // projection retried.
  const auto galerkin = [&] {
    const Matrix T = V.transpose() * AtV;
    const Matrix Bt = V.transpose() * B;
    try {
      Y = projected_care_solve(V, AtV, B, rhs);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::CompressedCareFailure) throw;
      projection_failure = "projected CARE has no stabilizing solution up to basis size " +
                           std::to_string(V.cols());
      Y.resize(0, 0);
      res = std::numeric_limits<double>::infinity();
      ritz = closed_loop_ritz(T, Bt, Matrix::Zero(T.rows(), T.cols()));
      return;
    }
    res = residual_norm(V, AtV, B, rhs, Y);
    ritz = closed_loop_ritz(T, Bt, Y);
  };

  galerkin();
  out.report.residual_history.push_back(res);
  if (opts.sink) opts.sink({0, V.cols(), Complex(0.0, 0.0), res});

  Matrix best_Y = Y;
  Index best_k = Y.size() > 0 ? V.cols() : 0;
  double best_res = res;

  double s_min = std::numeric_limits<double>::infinity();
  for (Index i = 0; i < ritz.size(); ++i) s_min = std::min(s_min, std::abs(ritz(i).real()));
  const double s_max = std::max(op.norm_estimate(), ritz.cwiseAbs().maxCoeff());
  ShiftSelector selector(s_min, s_max);

  int it = 0;
  int last_best = 0;
  bool converged = res <= target;
  while (!converged && it < opts.max_iterations && V.cols() < n) {
    const bool acceptable = opts.accept_factor > 0.0 && best_res <= opts.accept_factor * target;
    if ((opts.stagnation_window > 0 && it - last_best >= opts.stagnation_window) ||
        (acceptable && it - last_best >= 3)) {
      out.report.stagnated = true;
      break;
    }
    ++it;
    Complex xi;
    if (it == 1) {
      xi = selector.s_min();
    } else if (it == 2) {
      xi = selector.s_max();
    } else {
      xi = selector.next(ritz);
    }

    Matrix w;
    if (xi.imag() == 0.0) {
      w = op.shifted_solve(xi.real(), last);
      selector.record(xi, last.cols());
      out.report.shifts.push_back(xi);
    } else {
      const CMatrix wc = op.shifted_solve(xi, CMatrix(last.cast<Complex>()));
      w.resize(n, 2 * wc.cols());
      w << wc.real(), wc.imag();
      selector.record(xi, last.cols());
      selector.record(std::conj(xi), last.cols());
      out.report.shifts.push_back(xi);
      out.report.shifts.push_back(std::conj(xi));
    }
    if (!w.allFinite()) throw Error(ErrorCode::SingularShift, "shifted solve produced non-finite values");

    const Matrix fresh = linalg::orthonormal_complement(V, w);
    if (fresh.cols() == 0) break;
    const Index keep = std::min(fresh.cols(), last.cols());
    last = fresh.rightCols(keep);
    const Matrix AtF = op.apply_transpose(fresh);
    V.conservativeResize(Eigen::NoChange, V.cols() + fresh.cols());
    V.rightCols(fresh.cols()) = fresh;
    AtV.conservativeResize(Eigen::NoChange, AtV.cols() + fresh.cols());
    AtV.rightCols(fresh.cols()) = AtF;

    galerkin();
    out.report.residual_history.push_back(res);
    if (opts.sink) opts.sink({it, V.cols(), xi, res});
    if (res < best_res) {
      best_res = res;
      best_Y = Y;
      best_k = V.cols();
      last_best = it;
    }
    converged = res <= target;
  }

  out.report.iterations = it;
  out.report.basis_size = V.cols();
  out.report.residual = best_res;
  out.report.converged = converged;
  if (best_k == 0) throw Error(ErrorCode::CompressedCareFailure, projection_failure);
  out.dX = compress_sym(SymLowRank(V.leftCols(best_k), best_Y), opts.tau_sigma);
  if (converged) return out;
  throw NotConverged(std::string(out.report.stagnated ? "RKSM stagnated" : "RKSM stopped") + " after " +
                         std::to_string(it) + " iterations, best residual " + sci(best_res) +
                         " against target " + sci(target),
                     std::move(out));
}

Result gcare_correction(const HodlrMatrix& A, const HodlrMatrix& E, const Applier& E0t,
                        const Matrix& B, const Applier& X0, const GcareDeltas& deltas,
                        const Options& opts, double tau_sigma) {
  const Index n = A.rows();
  require_dims(E.rows() == n && B.rows() == n, "gcare_correction: sizes");
  GcareRhsOperators ops{X0, [&](const Matrix& x) -> Matrix { return A.apply_transpose(x); },
                        [&](const Matrix& x) -> Matrix { return B * (B.transpose() * x); }, E0t};
  const SymLowRank qhat = assemble_gcare_rhs(deltas.dA, deltas.dE, deltas.dQ, deltas.dF, ops, tau_sigma);
  if (qhat.rank() == 0) {
    Result out;
    out.dX = SymLowRank::zero(n);
    out.report.converged = true;
    return out;
  }
  const GeneralizedOperator op(A, E, B, X0);
  const SymLowRank rhs(op.solve_mass_transpose(qhat.U), qhat.D);
  return rksm(op, B, rhs, opts);
}

}  // namespace qme::care
