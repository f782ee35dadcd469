#include "qme/uqme.hpp"

#include <algorithm>
#include <limits>
#include <string>

#include "qme/dense.hpp"
#include "qme/linalg.hpp"

namespace qme::uqme {

namespace {

HodlrLu<double> factor_or_throw(const HodlrMatrix& M, double tau, ErrorCode code, const char* what) {
  try {
    return HodlrLu<double>(M, tau);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::SingularPivot) throw Error(code, what);
    throw;
  }
}

void append(Matrix& M, const Matrix& cols) {
  if (cols.cols() == 0) return;
  const Index k = M.cols();
  M.conservativeResize(cols.rows(), k + cols.cols());
  M.rightCols(cols.cols()) = cols;
}

Matrix hcat(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), a.cols() + b.cols());
  out << a, b;
  return out;
}

Matrix r_factor(const Matrix& M) {
  Eigen::HouseholderQR<Matrix> qr(M);
  const Index k = std::min(M.rows(), M.cols());
  return qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
}

double lowrank_norm(const Matrix& U, const Matrix& V) {
  if (U.cols() == 0) return 0.0;
  return dense::norm2(Matrix(r_factor(U) * r_factor(V).transpose()));
}

// ||P Q^T P Q^T + AP Q^T + P X0tQ^T + U V^T||_2 with AP = Ahat P, X0tQ = X0^T Q.
double factored_residual(const Matrix& P, const Matrix& AP, const Matrix& Q, const Matrix& X0tQ,
                         const Matrix& U, const Matrix& V) {
  const Index k = P.cols();
  const Index r = U.cols();
  Matrix L(P.rows(), 2 * k + r), R(Q.rows(), 2 * k + r);
  L << P, AP, U;
  R << Q, X0tQ, V;
  Matrix K = Matrix::Zero(2 * k + r, 2 * k + r);
  K.topLeftCorner(k, k) = Q.transpose() * P;
  K.block(k, 0, k, k).setIdentity();
  K.block(0, k, k, k).setIdentity();
  K.bottomRightCorner(r, r).setIdentity();
  return dense::norm2(Matrix(r_factor(L) * K * r_factor(R).transpose()));
}

}  // namespace

UqmeOperator::UqmeOperator(HodlrMatrix A, HodlrMatrix B, HodlrMatrix X0, double tau)
    : A_(std::move(A)), B_(std::move(B)), X0_(std::move(X0)) {
  require_dims(B_.rows() == A_.rows() && X0_.rows() == A_.rows(), "UqmeOperator: sizes");
  ALu_ = factor_or_throw(A_, tau, ErrorCode::SingularCoefficient, "leading coefficient is singular");
  const HodlrMatrix S = add(matmul(A_, X0_, tau), B_, tau);
  hat_plus_ = factor_or_throw(add(S, A_, tau), tau, ErrorCode::SingularShiftedOperator,
                              "X0 + A^{-1}B + I is singular");
  hat_minus_ = factor_or_throw(add(S, A_.scaled(-1.0), tau), tau, ErrorCode::SingularShiftedOperator,
                               "X0 + A^{-1}B - I is singular");
  const HodlrMatrix X0t = X0_.transpose();
  x0t_plus_ = factor_or_throw(X0t.shifted(1.0), tau, ErrorCode::SingularShiftedOperator,
                              "X0^T + I is singular");
  x0t_minus_ = factor_or_throw(X0t.shifted(-1.0), tau, ErrorCode::SingularShiftedOperator,
                               "X0^T - I is singular");
}

Matrix UqmeOperator::apply_hat(const Matrix& x) const {
  return X0_.apply(x) + ALu_.solve(B_.apply(x));
}

Matrix UqmeOperator::solve_hat(int sign, const Matrix& x) const {
  // (Ahat +- I)^{-1} x = (A X0 + B +- A)^{-1} A x
  const Matrix ax = A_.apply(x);
  return sign > 0 ? hat_plus_.solve(ax) : hat_minus_.solve(ax);
}

Matrix UqmeOperator::solve_x0t(int sign, const Matrix& x) const {
  return sign > 0 ? x0t_plus_.solve(x) : x0t_minus_.solve(x);
}

ExtendedKrylovPair initial_basis(const UqmeOperator& op, const GenLowRank& rhs) {
  require_dims(rhs.rows() == op.rows() && rhs.cols() == op.rows(), "initial_basis: sizes");
  ExtendedKrylovPair p;
  p.u_plus = linalg::orth(op.solve_hat(+1, rhs.U));
  p.u_minus = linalg::orthonormal_complement(p.u_plus, op.solve_hat(-1, rhs.U));
  p.Ub = hcat(p.u_plus, p.u_minus);
  p.AhatUb = op.apply_hat(p.Ub);

  p.Vb = linalg::orth(rhs.V);
  p.v_plus = linalg::orthonormal_complement(p.Vb, op.solve_x0t(+1, rhs.V));
  append(p.Vb, p.v_plus);
  p.v_minus = linalg::orthonormal_complement(p.Vb, op.solve_x0t(-1, rhs.V));
  append(p.Vb, p.v_minus);
  p.X0tVb = op.apply_x0t(p.Vb);
  p.steps = 1;
  return p;
}

Index extend_basis(ExtendedKrylovPair& p, const UqmeOperator& op) {
  const Index before = p.Ub.cols() + p.Vb.cols();

  Matrix up = linalg::orthonormal_complement(p.Ub, op.solve_hat(+1, p.u_plus));
  Matrix um = linalg::orthonormal_complement(hcat(p.Ub, up), op.solve_hat(-1, p.u_minus));
  const Matrix fresh_u = hcat(up, um);
  append(p.Ub, fresh_u);
  append(p.AhatUb, op.apply_hat(fresh_u));
  p.u_plus = std::move(up);
  p.u_minus = std::move(um);

  Matrix vp = linalg::orthonormal_complement(p.Vb, op.solve_x0t(+1, p.v_plus));
  Matrix vm = linalg::orthonormal_complement(hcat(p.Vb, vp), op.solve_x0t(-1, p.v_minus));
  const Matrix fresh_v = hcat(vp, vm);
  append(p.Vb, fresh_v);
  append(p.X0tVb, op.apply_x0t(fresh_v));
  p.v_plus = std::move(vp);
  p.v_minus = std::move(vm);

  ++p.steps;
  return p.Ub.cols() + p.Vb.cols() - before;
}

NareCoefficients project_nare(const ExtendedKrylovPair& p, const GenLowRank& rhs) {
  require_dims(rhs.rows() == p.Ub.rows() && rhs.cols() == p.Vb.rows(), "project_nare: sizes");
  NareCoefficients c;
  c.A = p.Ub.transpose() * p.AhatUb;
  c.D = p.X0tVb.transpose() * p.Vb;
  c.F = p.Vb.transpose() * p.Ub;
  c.Q = -(p.Ub.transpose() * rhs.U) * (rhs.V.transpose() * p.Vb);
  return c;
}

double uqme_correction_residual(const GenLowRank& dX, const UqmeOperator& op, const GenLowRank& rhs) {
  require_dims(dX.rows() == op.rows() && rhs.rows() == op.rows(), "uqme_correction_residual: sizes");
  return factored_residual(dX.U, op.apply_hat(dX.U), dX.V, op.apply_x0t(dX.V), rhs.U, rhs.V);
}

Result ek_uqme_correction(const UqmeOperator& op, const GenLowRank& rhs, const Options& opts) {
  const Index n = op.rows();
  Result out;
  out.report.rhs_norm = lowrank_norm(rhs.U, rhs.V);
  if (rhs.rank() == 0 || out.report.rhs_norm == 0.0) {
    out.dX = GenLowRank::zero(n, n);
    out.report.converged = true;
    return out;
  }
  const double target = opts.relative ? opts.tol * out.report.rhs_norm : opts.tol;

  ExtendedKrylovPair pair = initial_basis(op, rhs);
  GenLowRank best;
  double best_res = std::numeric_limits<double>::infinity();
  bool converged = false;
  bool breakdown = false;
  int it = 0;
  while (it < opts.max_iterations) {
    ++it;
    const NareCoefficients c = project_nare(pair, rhs);
    IterationRecord rec{it, pair.Ub.cols(), pair.Vb.cols(), 0, false, 0.0};
    double res = std::numeric_limits<double>::infinity();
    try {
      const dense::SdaResult sda = dense::sda_nare(c.A, c.D, c.F, c.Q);
      rec.sda_iterations = sda.iterations;
      const Matrix P = pair.Ub * sda.Y;
      res = factored_residual(P, pair.AhatUb * sda.Y, pair.Vb, pair.X0tVb, rhs.U, rhs.V);
      if (res < best_res) {
        best_res = res;
        best = GenLowRank(P, pair.Vb);
      }
    } catch (const Error& e) {
      if (e.code() != ErrorCode::SdaNotConverged && e.code() != ErrorCode::SingularPivot) throw;
      rec.sda_failed = true;
      ++out.report.sda_retries;
    }
    rec.residual = res;
    out.report.residual_history.push_back(res);
    out.report.sda_iterations.push_back(rec.sda_iterations);
    if (opts.sink) opts.sink(rec);
    if (res <= target) {
      converged = true;
      break;
    }
    if (it == opts.max_iterations) break;
    if (extend_basis(pair, op) == 0) {
      breakdown = true;
      break;
    }
  }

  out.report.iterations = it;
  out.report.basis_u = pair.Ub.cols();
  out.report.basis_v = pair.Vb.cols();
  out.report.residual = best_res;
  out.report.converged = converged;
  out.dX = best.rank() > 0 ? compress(best, opts.tau_sigma) : GenLowRank::zero(n, n);
  if (converged) return out;
  const std::string why = breakdown ? "extended Krylov bases stopped growing" : "iteration budget exhausted";
  throw NotConverged(why + " after " + std::to_string(it) + " iterations, relative residual " +
                         std::to_string(best_res / out.report.rhs_norm),
                     std::move(out));
}

Result uqme_correction(const UqmeOperator& op, const UqmeDeltas& d, const Options& opts) {
  const GenLowRank rhs = assemble_uqme_rhs(
      d.dA, d.dB, d.dC, [&](const Matrix& x) -> Matrix { return op.apply_x0t(x); },
      [&](const Matrix& x) -> Matrix { return op.solve_a(x); }, opts.tau_sigma);
  return ek_uqme_correction(op, rhs, opts);
}

}  // namespace qme::uqme
