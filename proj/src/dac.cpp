#include "qme/dac.hpp"

#include <future>
#include <utility>

#include "qme/care.hpp"
#include "qme/dense.hpp"
#include "qme/uqme.hpp"

namespace qme::dac {

namespace {

struct NodeOut {
  HodlrMatrix X;
  std::vector<NodeRecord> nodes;
};

Applier applier(const HodlrMatrix& M) {
  return [M](const Matrix& x) -> Matrix { return M.apply(x); };
}

// F = B B^T split as blkdiag(B1 B1^T, B2 B2^T) + U D U^T with the swap core.
SymLowRank split_gram(const Matrix& B, Index n1) {
  const Index n = B.rows();
  const Index m = B.cols();
  Matrix U = Matrix::Zero(n, 2 * m);
  U.topLeftCorner(n1, m) = B.topRows(n1);
  U.bottomRightCorner(n - n1, m) = B.bottomRows(n - n1);
  Matrix D = Matrix::Zero(2 * m, 2 * m);
  D.topRightCorner(m, m).setIdentity();
  D.bottomLeftCorner(m, m).setIdentity();
  return {std::move(U), std::move(D)};
}

template <typename F1, typename F2>
std::pair<NodeOut, NodeOut> solve_children(const DacConfig& cfg, F1&& first, F2&& second) {
  if (cfg.parallel_children) {
    auto fut = std::async(std::launch::async, std::forward<F1>(first));
    NodeOut r2 = second();
    NodeOut r1 = fut.get();
    return {std::move(r1), std::move(r2)};
  }
  NodeOut r1 = first();
  NodeOut r2 = second();
  return {std::move(r1), std::move(r2)};
}

Error annotate(const Error& e, const std::string& path) { return e.with_path(path); }

// Runs `inner` for an inner node; on failure either rethrows with the node
// path or, with dense_fallback, solves the node densely via `dense`.
template <typename Inner, typename Dense>
NodeOut guarded(const DacConfig& cfg, NodeRecord rec, Inner&& inner, Dense&& dense) {
  Stopwatch sw;
  try {
    NodeOut out = inner(rec);
    rec.seconds = sw.seconds();
    out.nodes.insert(out.nodes.begin(), rec);
    return out;
  } catch (const Error& e) {
    if (!cfg.dense_fallback) throw annotate(e, rec.path);
    try {
      NodeOut out{HodlrMatrix::from_dense(dense(), cfg.n_min, cfg.tau_sigma), {}};
      rec.fallback = true;
      rec.seconds = sw.seconds();
      out.nodes.push_back(rec);
      return out;
    } catch (const Error& e2) {
      throw annotate(e2, rec.path);
    }
  }
}

std::string child_path(const std::string& path, int k) { return path + "." + std::to_string(k); }

NodeRecord make_record(const std::string& path, int depth, Index size) {
  NodeRecord r;
  r.path = path;
  r.depth = depth;
  r.size = size;
  return r;
}

// Residual budget of a node relative to the correction target.
constexpr double kResidualBudget = 10.0;

// The node residual is measured against ||X||, so the correction target is
// scaled by the reference solution norm as well.
care::Options care_options(const DacConfig& cfg, const HodlrMatrix& X0) {
  care::Options o;
  o.tol = cfg.tau_care;
  o.scale = norm2_est(X0);
  o.accept_factor = kResidualBudget;
  o.max_iterations = cfg.t_max;
  o.tau_sigma = cfg.tau_sigma;
  return o;
}

uqme::Options uqme_options(const DacConfig& cfg) {
  uqme::Options o;
  o.tol = cfg.tau_uqme;
  o.max_iterations = cfg.t_max;
  o.tau_sigma = cfg.tau_sigma;
  return o;
}

// A correction that stalls above its target but inside the budget is kept.
template <typename Solve>
care::Result within_budget(Solve&& solve) {
  try {
    return solve();
  } catch (const care::NotConverged& e) {
    const care::Report& rep = e.best().report;
    if (rep.residual <= kResidualBudget * rep.target) return e.best();
    throw;
  }
}

void record_care(NodeRecord& rec, const care::Result& r) {
  rec.converged = r.report.converged;
  rec.correction_rank = r.dX.rank();
  rec.iterations = r.report.iterations;
  rec.residual = r.report.rhs_norm > 0.0 ? r.report.residual / r.report.rhs_norm : 0.0;
}

// ---------------------------------------------------------------------------

NodeOut care_node(const HodlrMatrix& A, const Matrix& B, const HodlrMatrix& Q, const DacConfig& cfg,
                  const std::string& path, int depth) {
  NodeRecord rec = make_record(path, depth, A.rows());
  if (A.is_leaf()) {
    Stopwatch sw;
    try {
      const Matrix X = dense::solve_care(A.leaf(), B, Q.dense());
      rec.leaf = true;
      rec.seconds = sw.seconds();
      return {HodlrMatrix::from_dense(X, cfg.n_min), {rec}};
    } catch (const Error& e) {
      throw annotate(e, path);
    }
  }
  return guarded(
      cfg, rec,
      [&](NodeRecord& r) {
        const HodlrSplit sA = split(A);
        const HodlrSymSplit sQ = split_symmetric(Q);
        const Index n1 = sA.a11.rows();
        const Matrix B1 = B.topRows(n1);
        const Matrix B2 = B.bottomRows(A.rows() - n1);
        auto [c1, c2] = solve_children(
            cfg, [&] { return care_node(sA.a11, B1, sQ.a11, cfg, child_path(path, 1), depth + 1); },
            [&] { return care_node(sA.a22, B2, sQ.a22, cfg, child_path(path, 2), depth + 1); });
        const HodlrMatrix X0 = HodlrMatrix::block_diagonal(c1.X, c2.X);
        const Applier X0app = applier(X0);
        const SymLowRank qhat =
            assemble_care_rhs(sA.correction, sQ.correction, split_gram(B, n1), X0app, cfg.tau_sigma);
        NodeOut out;
        if (qhat.rank() == 0) {
          out.X = X0;
        } else {
          const care::Result cr = within_budget(
              [&] { return care::rksm(care::HodlrOperator(A, B, X0app), B, qhat, care_options(cfg, X0)); });
          record_care(r, cr);
          out.X = embed_and_update(c1.X, c2.X, cr.dX, cfg.tau_sigma);
        }
        out.nodes = std::move(c1.nodes);
        out.nodes.insert(out.nodes.end(), c2.nodes.begin(), c2.nodes.end());
        return out;
      },
      [&] { return dense::solve_care(A.dense(), B, Q.dense()); });
}

NodeOut gcare_node(const HodlrMatrix& A, const HodlrMatrix& E, const HodlrMatrix& Q, const Matrix& B,
                   const DacConfig& cfg, const std::string& path, int depth) {
  NodeRecord rec = make_record(path, depth, A.rows());
  if (A.is_leaf()) {
    Stopwatch sw;
    try {
      const Matrix X = dense::solve_gcare(A.leaf(), E.dense(), B, Q.dense());
      rec.leaf = true;
      rec.seconds = sw.seconds();
      return {HodlrMatrix::from_dense(X, cfg.n_min), {rec}};
    } catch (const Error& e) {
      throw annotate(e, path);
    }
  }
  return guarded(
      cfg, rec,
      [&](NodeRecord& r) {
        const HodlrSplit sA = split(A);
        const HodlrSplit sE = split(E);
        const HodlrSymSplit sQ = split_symmetric(Q);
        const Index n1 = sA.a11.rows();
        const Index n2 = A.rows() - n1;
        const Matrix B1 = B.topRows(n1);
        const Matrix B2 = B.bottomRows(n2);
        auto [c1, c2] = solve_children(
            cfg,
            [&] { return gcare_node(sA.a11, sE.a11, sQ.a11, B1, cfg, child_path(path, 1), depth + 1); },
            [&] { return gcare_node(sA.a22, sE.a22, sQ.a22, B2, cfg, child_path(path, 2), depth + 1); });
        const HodlrMatrix X0 = HodlrMatrix::block_diagonal(c1.X, c2.X);
        const HodlrMatrix E11 = sE.a11, E22 = sE.a22;
        const Applier E0t = [E11, E22, n1, n2](const Matrix& x) -> Matrix {
          Matrix y(x.rows(), x.cols());
          y.topRows(n1) = E11.apply_transpose(x.topRows(n1));
          y.bottomRows(n2) = E22.apply_transpose(x.bottomRows(n2));
          return y;
        };
        const care::GcareDeltas deltas{sA.correction, sE.correction, sQ.correction, split_gram(B, n1)};
        const care::Result cr = within_budget([&] {
          return care::gcare_correction(A, E, E0t, B, applier(X0), deltas, care_options(cfg, X0), cfg.tau_sigma);
        });
        record_care(r, cr);
        NodeOut out;
        out.X = cr.dX.rank() == 0 ? X0 : embed_and_update(c1.X, c2.X, cr.dX, cfg.tau_sigma);
        out.nodes = std::move(c1.nodes);
        out.nodes.insert(out.nodes.end(), c2.nodes.begin(), c2.nodes.end());
        return out;
      },
      [&] { return dense::solve_gcare(A.dense(), E.dense(), B, Q.dense()); });
}

NodeOut uqme_node(const HodlrMatrix& A, const HodlrMatrix& B, const HodlrMatrix& C, const DacConfig& cfg,
                  const std::string& path, int depth) {
  NodeRecord rec = make_record(path, depth, A.rows());
  if (A.is_leaf()) {
    Stopwatch sw;
    try {
      const dense::CrResult cr = dense::cyclic_reduction(A.leaf(), B.dense(), C.dense());
      rec.leaf = true;
      rec.iterations = cr.iterations;
      rec.seconds = sw.seconds();
      return {HodlrMatrix::from_dense(cr.X, cfg.n_min), {rec}};
    } catch (const Error& e) {
      if (e.code() == ErrorCode::CrNotConverged || e.code() == ErrorCode::SingularPivot) {
        throw Error(ErrorCode::SplitViolation,
                    std::string("cyclic reduction failed on a diagonal block (") + e.what() + ")", path);
      }
      throw annotate(e, path);
    }
  }
  return guarded(
      cfg, rec,
      [&](NodeRecord& r) {
        const HodlrSplit sA = split(A);
        const HodlrSplit sB = split(B);
        const HodlrSplit sC = split(C);
        auto [c1, c2] = solve_children(
            cfg, [&] { return uqme_node(sA.a11, sB.a11, sC.a11, cfg, child_path(path, 1), depth + 1); },
            [&] { return uqme_node(sA.a22, sB.a22, sC.a22, cfg, child_path(path, 2), depth + 1); });
        const HodlrMatrix X0 = HodlrMatrix::block_diagonal(c1.X, c2.X);
        NodeOut out;
        if (sA.correction.rank() + sB.correction.rank() + sC.correction.rank() == 0) {
          out.X = X0;
        } else {
          const uqme::UqmeOperator op(A, B, X0);
          const uqme::Result ur =
              uqme::uqme_correction(op, {sA.correction, sB.correction, sC.correction}, uqme_options(cfg));
          r.correction_rank = ur.dX.rank();
          r.iterations = ur.report.iterations;
          r.residual = ur.report.rhs_norm > 0.0 ? ur.report.residual / ur.report.rhs_norm : 0.0;
          out.X = ur.dX.rank() == 0 ? X0 : embed_and_update(c1.X, c2.X, ur.dX, cfg.tau_sigma);
        }
        out.nodes = std::move(c1.nodes);
        out.nodes.insert(out.nodes.end(), c2.nodes.begin(), c2.nodes.end());
        return out;
      },
      [&] { return dense::cyclic_reduction(A.dense(), B.dense(), C.dense()).X; });
}

DacResult finish(NodeOut out, const Stopwatch& sw) {
  DacResult r;
  r.X = std::move(out.X);
  r.report.nodes = std::move(out.nodes);
  r.report.seconds = sw.seconds();
  r.report.hodlr_rank = r.X.hodlr_rank();
  for (const NodeRecord& n : r.report.nodes)
    if (!n.leaf) r.report.depth = std::max(r.report.depth, n.depth + 1);
  return r;
}

void check_config(const DacConfig& cfg) {
  if (cfg.n_min < 2 || !(cfg.tau_sigma >= 0.0) || !(cfg.tau_care > 0.0) || !(cfg.tau_uqme > 0.0) ||
      cfg.t_max < 1) {
    throw Error(ErrorCode::InvalidInput, "invalid divide-and-conquer configuration");
  }
}

}  // namespace

DacResult dac_care(const HodlrMatrix& A, const Matrix& B, const HodlrMatrix& Q, const DacConfig& cfg) {
  check_config(cfg);
  require_dims(B.rows() == A.rows() && Q.rows() == A.rows(), "dac_care: sizes");
  Stopwatch sw;
  return finish(care_node(A, B, Q, cfg, "root", 0), sw);
}

DacResult dac_gcare(const HodlrMatrix& A, const HodlrMatrix& E, const HodlrMatrix& Q, const Matrix& B,
                    const DacConfig& cfg) {
  check_config(cfg);
  require_dims(B.rows() == A.rows() && Q.rows() == A.rows() && E.rows() == A.rows(), "dac_gcare: sizes");
  Stopwatch sw;
  return finish(gcare_node(A, E, Q, B, cfg, "root", 0), sw);
}

DacResult dac_uqme(const HodlrMatrix& A, const HodlrMatrix& B, const HodlrMatrix& C, const DacConfig& cfg) {
  check_config(cfg);
  require_dims(B.rows() == A.rows() && C.rows() == A.rows(), "dac_uqme: sizes");
  Stopwatch sw;
  return finish(uqme_node(A, B, C, cfg, "root", 0), sw);
}

DacResult update_care_solution(const HodlrMatrix& X0, const HodlrMatrix& A, const Matrix& B,
                               const GenLowRank& dA, const SymLowRank& dF, const SymLowRank& dQ,
                               const DacConfig& cfg) {
  check_config(cfg);
  Stopwatch sw;
  NodeRecord rec = make_record("update", 0, A.rows());
  const Applier X0app = applier(X0);
  const SymLowRank qhat = assemble_care_rhs(dA, dQ, dF, X0app, cfg.tau_sigma);
  NodeOut out{X0, {}};
  if (qhat.rank() > 0) {
    try {
      const care::Result cr = within_budget(
          [&] { return care::rksm(care::HodlrOperator(A, B, X0app), B, qhat, care_options(cfg, X0)); });
      record_care(rec, cr);
      out.X = X0.add_lowrank(GenLowRank(cr.dX.U * cr.dX.D, cr.dX.U), cfg.tau_sigma);
    } catch (const Error& e) {
      throw annotate(e, rec.path);
    }
  }
  rec.seconds = sw.seconds();
  out.nodes.push_back(rec);
  return finish(std::move(out), sw);
}

DacResult update_uqme_solution(const HodlrMatrix& X0, const HodlrMatrix& A, const HodlrMatrix& B,
                               const GenLowRank& dA, const GenLowRank& dB, const GenLowRank& dC,
                               const DacConfig& cfg) {
  check_config(cfg);
  Stopwatch sw;
  NodeRecord rec = make_record("update", 0, A.rows());
  NodeOut out{X0, {}};
  if (dA.rank() + dB.rank() + dC.rank() > 0) {
    try {
      const uqme::UqmeOperator op(A, B, X0);
      const uqme::Result ur = uqme::uqme_correction(op, {dA, dB, dC}, uqme_options(cfg));
      rec.correction_rank = ur.dX.rank();
      rec.iterations = ur.report.iterations;
      rec.residual = ur.report.rhs_norm > 0.0 ? ur.report.residual / ur.report.rhs_norm : 0.0;
      if (ur.dX.rank() > 0) out.X = X0.add_lowrank(ur.dX, cfg.tau_sigma);
    } catch (const Error& e) {
      throw annotate(e, rec.path);
    }
  }
  rec.seconds = sw.seconds();
  out.nodes.push_back(rec);
  return finish(std::move(out), sw);
}

}  // namespace qme::dac
