#include "qme/bench.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <unsupported/Eigen/SparseExtra>

#include "qme/dense.hpp"
#include "qme/linalg.hpp"

namespace qme::bench {

namespace {

using VecOp = std::function<Vector(const Vector&)>;

Applier hodlr_applier(const HodlrMatrix& X) {
  return [&X](const Matrix& v) -> Matrix { return X.apply(v); };
}
Applier hodlr_transpose_applier(const HodlrMatrix& X) {
  return [&X](const Matrix& v) -> Matrix { return X.apply_transpose(v); };
}
Applier dense_applier(const Matrix& X) {
  return [&X](const Matrix& v) -> Matrix { return X * v; };
}
Applier dense_transpose_applier(const Matrix& X) {
  return [&X](const Matrix& v) -> Matrix { return X.transpose() * v; };
}

VecOp vec(const Applier& f) {
  return [f](const Vector& v) -> Vector { return f(v); };
}

}  // namespace

CareResidual care_residual(const problems::CareProblem& p, const Applier& X, int iters) {
  const Index n = p.rows();
  require_dims(p.B.rows() == n && p.Q.rows() == n, "care_residual: sizes");
  const BandedMatrix At = p.A.transpose();
  std::optional<BandedMatrix> E, Et;
  if (p.E) {
    E = *p.E;
    Et = p.E->transpose();
  }
  const VecOp residual = [&](const Vector& v) -> Vector {
    const Matrix Ev = E ? E->apply(v) : Matrix(v);
    const Matrix XEv = X(Ev);
    const Matrix XAv = X(p.A.apply(v));
    const Matrix XFXEv = X(p.B * (p.B.transpose() * XEv));
    Matrix r = At.apply(XEv) + p.Q.apply(v);
    r += Et ? Et->apply(XAv - XFXEv) : Matrix(XAv - XFXEv);
    return r;
  };
  CareResidual out;
  const double rnorm = linalg::norm2_estimate_symmetric(n, residual, iters);
  const double xnorm = linalg::norm2_estimate_symmetric(n, vec(X), iters);
  if (xnorm == 0.0) {
    out.value = rnorm;
    out.absolute = true;
  } else {
    out.value = rnorm / xnorm;
  }
  return out;
}

CareResidual care_residual(const problems::CareProblem& p, const HodlrMatrix& X, int iters) {
  require_dims(X.rows() == p.rows(), "care_residual: X size");
  return care_residual(p, hodlr_applier(X), iters);
}

CareResidual care_residual(const problems::CareProblem& p, const Matrix& X, int iters) {
  require_dims(X.rows() == p.rows() && X.cols() == p.rows(), "care_residual: X size");
  return care_residual(p, dense_applier(X), iters);
}

double uqme_residual(const problems::UqmeProblem& p, const Applier& X, const Applier& Xt, int iters) {
  const Index n = p.rows();
  require_dims(p.B.rows() == n && p.C.rows() == n, "uqme_residual: sizes");
  const BandedMatrix At = p.A.transpose(), Bt = p.B.transpose(), Ct = p.C.transpose();
  const VecOp apply = [&](const Vector& v) -> Vector {
    const Matrix Xv = X(v);
    return p.A.apply(X(Xv)) + p.B.apply(Xv) + p.C.apply(v);
  };
  const VecOp apply_t = [&](const Vector& v) -> Vector {
    return Xt(Xt(At.apply(v)) + Bt.apply(v)) + Ct.apply(v);
  };
  return linalg::norm2_estimate(n, apply, apply_t, iters);
}

double uqme_residual(const problems::UqmeProblem& p, const HodlrMatrix& X, int iters) {
  require_dims(X.rows() == p.rows(), "uqme_residual: X size");
  return uqme_residual(p, hodlr_applier(X), hodlr_transpose_applier(X), iters);
}

double uqme_residual(const problems::UqmeProblem& p, const Matrix& X, int iters) {
  require_dims(X.rows() == p.rows() && X.cols() == p.rows(), "uqme_residual: X size");
  return uqme_residual(p, dense_applier(X), dense_transpose_applier(X), iters);
}

// ---------------------------------------------------------------------------

Equation equation_of(const ProblemSpec& spec) {
  if (spec.family == "care-ex1" || spec.family == "care-ex2" || spec.family == "gcare-ex3") return Equation::Care;
  if (spec.family == "dqbd-random" || spec.family == "mass-spring") return Equation::Uqme;
  if (spec.family == "file") return spec.file_equation;
  throw Error(ErrorCode::InvalidInput, "unknown problem family '" + spec.family + "'");
}

namespace {

BandedMatrix read_banded(const std::string& path, Index n) {
  const Eigen::SparseMatrix<double> S = read_market(path);
  if (S.rows() != S.cols() || (n > 0 && S.rows() != n))
    throw Error(ErrorCode::DimensionMismatch, path + ": expected a square matrix of order " + std::to_string(n));
  return BandedMatrix::from_sparse(S);
}

}  // namespace

problems::CareProblem make_care(const ProblemSpec& spec) {
  if (spec.family == "care-ex1") return problems::care_ex1(spec.n, spec.seed);
  if (spec.family == "care-ex2") return problems::care_ex2(spec.n);
  if (spec.family == "gcare-ex3") return problems::gcare_ex3(spec.n);
  if (spec.family != "file" || spec.file_equation != Equation::Care)
    throw Error(ErrorCode::InvalidInput, "'" + spec.family + "' is not a CARE family");
  if (spec.files.size() != 3 && spec.files.size() != 4)
    throw Error(ErrorCode::InvalidInput, "CARE input needs A, B, Q and optionally E");
  problems::CareProblem p;
  p.family = "file";
  p.A = read_banded(spec.files[0], 0);
  const Index n = p.A.rows();
  p.B = Matrix(read_market(spec.files[1]));
  if (p.B.rows() != n) throw Error(ErrorCode::DimensionMismatch, spec.files[1] + ": row count differs from A");
  p.Q = read_banded(spec.files[2], n);
  if (spec.files.size() == 4) p.E = read_banded(spec.files[3], n);
  return p;
}

problems::UqmeProblem make_uqme(const ProblemSpec& spec) {
  if (spec.family == "dqbd-random") return problems::dqbd(spec.n, spec.seed);
  if (spec.family == "mass-spring") return problems::mass_spring(spec.n);
  if (spec.family != "file" || spec.file_equation != Equation::Uqme)
    throw Error(ErrorCode::InvalidInput, "'" + spec.family + "' is not a UQME family");
  if (spec.files.size() != 3) throw Error(ErrorCode::InvalidInput, "UQME input needs A, B, C");
  problems::UqmeProblem p;
  p.family = "file";
  p.A = read_banded(spec.files[0], 0);
  p.B = read_banded(spec.files[1], p.A.rows());
  p.C = read_banded(spec.files[2], p.A.rows());
  return p;
}

std::string csv_header() { return "n,method,time_s,res,hodlr_rank,iterations"; }

std::string csv_row(const BenchRow& row) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%ld,%s,%.6f,%.6e,%ld,%d", static_cast<long>(row.n), row.method.c_str(),
                row.time_s, row.res, static_cast<long>(row.hodlr_rank), row.iterations);
  return buf;
}

Method parse_method(const std::string& name) {
  if (name == "dac") return Method::Dac;
  if (name == "dense") return Method::Dense;
  if (name == "update") return Method::Update;
  throw Error(ErrorCode::InvalidInput, "unknown method '" + name + "'");
}

std::string method_name(Method m) {
  switch (m) {
    case Method::Dac:
      return "dac";
    case Method::Dense:
      return "dense";
    case Method::Update:
      return "update";
  }
  return "?";
}

double residual_budget(const ProblemSpec& spec) {
  return 10.0 * (equation_of(spec) == Equation::Care ? spec.config.tau_care : spec.config.tau_uqme);
}

// ---------------------------------------------------------------------------

namespace {

int total_iterations(const dac::SolveReport& r) {
  int it = 0;
  for (const dac::NodeRecord& node : r.nodes) it += node.iterations;
  return it;
}

HodlrMatrix hodlr(const BandedMatrix& M, const dac::DacConfig& cfg) {
  return HodlrMatrix::from_banded(M, cfg.n_min);
}

// Nonnegative unit vectors: keep DQBD-type coefficients nonnegative.
std::pair<Matrix, Matrix> update_factors(Index n, std::uint64_t seed, bool nonnegative) {
  problems::PortableRng rng(seed ^ 0x9e3779b97f4a7c15ULL);
  Matrix u(n, 1), v(n, 1);
  for (Index i = 0; i < n; ++i) u(i, 0) = nonnegative ? rng.uniform() : rng.normal();
  for (Index i = 0; i < n; ++i) v(i, 0) = nonnegative ? rng.uniform() : rng.normal();
  return {u.normalized(), v.normalized()};
}

BenchOutcome run_care(const ProblemSpec& spec, Method method) {
  const problems::CareProblem p = make_care(spec);
  const dac::DacConfig& cfg = spec.config;
  const Index n = p.rows();
  BenchOutcome out;
  out.row.n = n;
  out.row.method = method_name(method);
  if (method == Method::Dense) {
    Stopwatch sw;
    const Matrix X = p.E ? dense::solve_gcare(p.A.dense(), p.E->dense(), p.B, p.Q.dense())
                         : dense::solve_care(p.A.dense(), p.B, p.Q.dense());
    out.row.time_s = sw.seconds();
    out.X = HodlrMatrix::from_dense(X, cfg.n_min, cfg.tau_sigma);
    const CareResidual res = care_residual(p, X);
    out.row.res = res.value;
    out.row.res_absolute = res.absolute;
    out.row.hodlr_rank = out.X.hodlr_rank();
    return out;
  } else if (method == Method::Dac) {
    const dac::DacResult r = p.E ? dac::dac_gcare(hodlr(p.A, cfg), hodlr(*p.E, cfg), hodlr(p.Q, cfg), p.B, cfg)
                                 : dac::dac_care(hodlr(p.A, cfg), p.B, hodlr(p.Q, cfg), cfg);
    out.row.time_s = r.report.seconds;
    out.row.iterations = total_iterations(r.report);
    out.report = r.report;
    out.X = r.X;
  } else {
    if (p.E) throw Error(ErrorCode::InvalidInput, "update mode supports the standard CARE only");
    // reference: A - dA with dA = 0.1 ||A||_max-scaled rank-one term
    const auto [u, v] = update_factors(n, spec.seed, false);
    const double scale = 0.1 * p.A.dense().cwiseAbs().maxCoeff();
    const GenLowRank dA(scale * u, v);
    const HodlrMatrix Ah = hodlr(p.A, cfg);
    const HodlrMatrix A0h = Ah.add_lowrank(GenLowRank(-dA.U, dA.V), cfg.tau_sigma);
    const dac::DacResult ref = dac::dac_care(A0h, p.B, hodlr(p.Q, cfg), cfg);
    const dac::DacResult r =
        dac::update_care_solution(ref.X, Ah, p.B, dA, SymLowRank::zero(n), SymLowRank::zero(n), cfg);
    out.row.time_s = r.report.seconds;
    out.row.iterations = total_iterations(r.report);
    out.report = r.report;
    out.X = r.X;
  }
  out.row.hodlr_rank = out.X.hodlr_rank();
  const CareResidual res = care_residual(p, out.X);
  out.row.res = res.value;
  out.row.res_absolute = res.absolute;
  return out;
}

BenchOutcome run_uqme(const ProblemSpec& spec, Method method) {
  const problems::UqmeProblem p = make_uqme(spec);
  const dac::DacConfig& cfg = spec.config;
  const Index n = p.rows();
  BenchOutcome out;
  out.row.n = n;
  out.row.method = method_name(method);
  if (method == Method::Dense) {
    Stopwatch sw;
    const dense::CrResult cr = dense::cyclic_reduction(p.A.dense(), p.B.dense(), p.C.dense());
    out.row.time_s = sw.seconds();
    out.row.iterations = cr.iterations;
    out.X = HodlrMatrix::from_dense(cr.X, cfg.n_min, cfg.tau_sigma);
    out.row.hodlr_rank = out.X.hodlr_rank();
    out.row.res = uqme_residual(p, cr.X);
    return out;
  } else if (method == Method::Dac) {
    const dac::DacResult r = dac::dac_uqme(hodlr(p.A, cfg), hodlr(p.B, cfg), hodlr(p.C, cfg), cfg);
    out.row.time_s = r.report.seconds;
    out.row.iterations = total_iterations(r.report);
    out.report = r.report;
    out.X = r.X;
  } else {
    // reference: C - dC with a small nonnegative rank-one dC, so that the
    // reference process is strictly substochastic
    const auto [u, v] = update_factors(n, spec.seed, true);
    const double scale = 0.01 * p.C.dense().cwiseAbs().maxCoeff();
    const GenLowRank dC(scale * u, v);
    const HodlrMatrix Ah = hodlr(p.A, cfg), Bh = hodlr(p.B, cfg), Ch = hodlr(p.C, cfg);
    const HodlrMatrix C0h = Ch.add_lowrank(GenLowRank(-dC.U, dC.V), cfg.tau_sigma);
    const dac::DacResult ref = dac::dac_uqme(Ah, Bh, C0h, cfg);
    const dac::DacResult r =
        dac::update_uqme_solution(ref.X, Ah, Bh, GenLowRank::zero(n, n), GenLowRank::zero(n, n), dC, cfg);
    out.row.time_s = r.report.seconds;
    out.row.iterations = total_iterations(r.report);
    out.report = r.report;
    out.X = r.X;
  }
  out.row.hodlr_rank = out.X.hodlr_rank();
  out.row.res = uqme_residual(p, out.X);
  return out;
}

}  // namespace

BenchOutcome run_bench(const ProblemSpec& spec, Method method) {
  return equation_of(spec) == Equation::Care ? run_care(spec, method) : run_uqme(spec, method);
}

Matrix oracle_solution(const ProblemSpec& spec, const std::string& oracle) {
  if (equation_of(spec) == Equation::Care) {
    if (!oracle.empty() && oracle != "schur")
      throw Error(ErrorCode::InvalidInput, "unknown CARE oracle '" + oracle + "'");
    const problems::CareProblem p = make_care(spec);
    if (p.E) return dense::solve_gcare(p.A.dense(), p.E->dense(), p.B, p.Q.dense());
    return dense::solve_care(p.A.dense(), p.B, p.Q.dense());
  }
  const problems::UqmeProblem p = make_uqme(spec);
  if (oracle.empty() || oracle == "cr") return dense::cyclic_reduction(p.A.dense(), p.B.dense(), p.C.dense()).X;
  if (oracle == "eig") return dense::uqme_minimal_oracle(p.A.dense(), p.B.dense(), p.C.dense());
  throw Error(ErrorCode::InvalidInput, "unknown UQME oracle '" + oracle + "'");
}

// ---------------------------------------------------------------------------

Eigen::SparseMatrix<double> read_market(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::InvalidInput, "cannot open " + path);
  std::string banner;
  std::getline(in, banner);
  std::istringstream words(banner);
  std::string tag, object, format, field, symmetry;
  words >> tag >> object >> format >> field >> symmetry;
  if (tag != "%%MatrixMarket" || object != "matrix" || format != "coordinate")
    throw Error(ErrorCode::InvalidInput, path + ": only coordinate Matrix Market files are supported");
  if (field != "real" && field != "integer")
    throw Error(ErrorCode::InvalidInput, path + ": field '" + field + "' is not supported");
  Eigen::SparseMatrix<double> S;
  if (!Eigen::loadMarket(S, path)) throw Error(ErrorCode::InvalidInput, "cannot read " + path);
  if (symmetry == "symmetric" || symmetry == "skew-symmetric") {
    // only one triangle is stored
    Eigen::SparseMatrix<double> lower = S.triangularView<Eigen::StrictlyLower>();
    Eigen::SparseMatrix<double> mirror = lower.transpose();
    if (symmetry == "skew-symmetric") mirror *= -1.0;
    S = Eigen::SparseMatrix<double>(S + mirror);
  } else if (symmetry != "general") {
    throw Error(ErrorCode::InvalidInput, path + ": symmetry '" + symmetry + "' is not supported");
  }
  return S;
}

void write_market(const std::string& path, const Eigen::SparseMatrix<double>& M) {
  if (!Eigen::saveMarket(M, path)) throw Error(ErrorCode::InvalidInput, "cannot write " + path);
}

}  // namespace qme::bench
