#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "qme/dac.hpp"
#include "qme/dense.hpp"
#include "qme/problems.hpp"

using qme::BandedMatrix;
using qme::ErrorCode;
using qme::GenLowRank;
using qme::HodlrMatrix;
using qme::Index;
using qme::Matrix;
using qme::SymLowRank;
namespace dac = qme::dac;
namespace dense = qme::dense;
namespace problems = qme::problems;

namespace {

double rel(const Matrix& X, const Matrix& ref) { return dense::norm2(Matrix(X - ref)) / dense::norm2(ref); }

double care_res(const Matrix& A, const Matrix& B, const Matrix& Q, const Matrix& X) {
  const Matrix R = A.transpose() * X + X * A - X * B * B.transpose() * X + Q;
  return dense::norm2(R) / dense::norm2(X);
}

double gcare_res(const Matrix& A, const Matrix& E, const Matrix& B, const Matrix& Q, const Matrix& X) {
  const Matrix XE = X * E;
  const Matrix R = A.transpose() * XE + XE.transpose() * A - XE.transpose() * B * B.transpose() * XE + Q;
  return dense::norm2(R) / dense::norm2(X);
}

double uqme_res(const Matrix& A, const Matrix& B, const Matrix& C, const Matrix& X) {
  return dense::norm2(Matrix(A * X * X + B * X + C));
}

dac::DacConfig small_config(Index n_min) {
  dac::DacConfig cfg;
  cfg.n_min = n_min;
  return cfg;
}

struct CareDense {
  Matrix A, B, Q;
  HodlrMatrix Ah, Qh;
};

CareDense ex1(Index n, Index n_min, std::uint64_t seed = 1) {
  const problems::CareProblem p = problems::care_ex1(n, seed);
  return {p.A.dense(), p.B, p.Q.dense(), HodlrMatrix::from_banded(p.A, n_min),
          HodlrMatrix::from_banded(p.Q, n_min)};
}

}  // namespace

TEST(DacCare, LeafIsDenseSolution) {
  const CareDense c = ex1(64, 64);
  const dac::DacResult r = dac::dac_care(c.Ah, c.B, c.Qh, small_config(64));
  ASSERT_EQ(r.report.nodes.size(), 1u);
  EXPECT_TRUE(r.report.nodes[0].leaf);
  EXPECT_EQ(r.report.depth, 0);
  EXPECT_EQ((r.X.dense() - dense::solve_care(c.A, c.B, c.Q)).norm(), 0.0);
}

TEST(DacCare, MatchesDense) {
  const Index n = 384;
  const CareDense c = ex1(n, 64, 3);
  const dac::DacResult r = dac::dac_care(c.Ah, c.B, c.Qh, small_config(64));
  const Matrix X = r.X.dense();
  EXPECT_LE(rel(X, dense::solve_care(c.A, c.B, c.Q)), 1e-6);
  EXPECT_LE(care_res(c.A, c.B, c.Q, X), 1e-7);
  EXPECT_EQ(r.report.depth, 3);
  // preorder: root, then the whole first subtree
  ASSERT_GE(r.report.nodes.size(), 3u);
  EXPECT_EQ(r.report.nodes[0].path, "root");
  EXPECT_EQ(r.report.nodes[1].path, "root.1");
  EXPECT_EQ(r.report.nodes[2].path, "root.1.1");
  for (const dac::NodeRecord& node : r.report.nodes) {
    if (node.leaf) continue;
    EXPECT_GT(node.correction_rank, 0) << node.path;
  }
}

TEST(DacCare, BlockDiagonalSkipsCorrection) {
  // B lives on the first half only and A, Q are block diagonal, so nothing couples
  // the halves.
  const Index n = 128, h = 64;
  Matrix A = Matrix::Zero(n, n);
  A.topLeftCorner(h, h) = BandedMatrix::toeplitz(h, {1.0, -2.0, 1.0}).dense();
  A.bottomRightCorner(h, h) = BandedMatrix::toeplitz(h, {0.5, -3.0, 0.5}).dense();
  Matrix B = Matrix::Zero(n, 1);
  B.topRows(h).setOnes();
  const Matrix Q = Matrix::Identity(n, n);
  const dac::DacResult r = dac::dac_care(HodlrMatrix::from_dense(A, 64), B, HodlrMatrix::from_dense(Q, 64),
                                         small_config(64));
  ASSERT_EQ(r.report.nodes.size(), 3u);
  EXPECT_EQ(r.report.nodes[0].correction_rank, 0);
  EXPECT_EQ(r.report.nodes[0].iterations, 0);
  const Matrix X = r.X.dense();
  EXPECT_EQ(X.topRightCorner(h, h).norm(), 0.0);
  EXPECT_LE(rel(X, dense::solve_care(A, B, Q)), 1e-10);
}

TEST(DacCare, ParallelChildrenIsDeterministic) {
  const CareDense c = ex1(256, 64, 5);
  dac::DacConfig cfg = small_config(64);
  const Matrix X1 = dac::dac_care(c.Ah, c.B, c.Qh, cfg).X.dense();
  cfg.parallel_children = true;
  const Matrix X2 = dac::dac_care(c.Ah, c.B, c.Qh, cfg).X.dense();
  EXPECT_EQ((X1 - X2).norm(), 0.0);
}

TEST(DacCare, FailureCarriesPath) {
  const CareDense c = ex1(128, 32);
  dac::DacConfig cfg = small_config(32);
  cfg.t_max = 1;
  try {
    dac::dac_care(c.Ah, c.B, c.Qh, cfg);
    FAIL() << "expected failure";
  } catch (const qme::Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MaxIterations);
    EXPECT_EQ(e.path(), "root.1");
  }
}

TEST(DacCare, DenseFallback) {
  const CareDense c = ex1(128, 32);
  dac::DacConfig cfg = small_config(32);
  cfg.t_max = 1;
  cfg.dense_fallback = true;
  const dac::DacResult r = dac::dac_care(c.Ah, c.B, c.Qh, cfg);
  bool any = false;
  for (const dac::NodeRecord& node : r.report.nodes) any = any || node.fallback;
  EXPECT_TRUE(any);
  EXPECT_LE(care_res(c.A, c.B, c.Q, r.X.dense()), 1e-9);
}

TEST(DacCare, UnstabilizableLeafFailsFast) {
  // second half: A22 = I (unstable) with no input
  const Index n = 64, h = 32;
  Matrix A = Matrix::Identity(n, n);
  A.topLeftCorner(h, h) = -Matrix::Identity(h, h);
  Matrix B = Matrix::Zero(n, 1);
  B.topRows(h).setOnes();
  try {
    dac::dac_care(HodlrMatrix::from_dense(A, 32), B, HodlrMatrix::identity(n, 32), small_config(32));
    FAIL() << "expected failure";
  } catch (const qme::Error& e) {
    EXPECT_EQ(e.path(), "root.2");
    EXPECT_TRUE(qme::is_structural(e.code()));
  }
}

TEST(DacCare, RejectsBadConfig) {
  const CareDense c = ex1(16, 8);
  dac::DacConfig cfg;
  cfg.tau_care = 0.0;
  EXPECT_THROW(dac::dac_care(c.Ah, c.B, c.Qh, cfg), qme::Error);
}

TEST(DacGcare, IdentityMassMatchesCare) {
  const Index n = 128;
  const CareDense c = ex1(n, 32, 7);
  const dac::DacConfig cfg = small_config(32);
  const Matrix Xc = dac::dac_care(c.Ah, c.B, c.Qh, cfg).X.dense();
  const Matrix Xg = dac::dac_gcare(c.Ah, HodlrMatrix::identity(n, 32), c.Qh, c.B, cfg).X.dense();
  EXPECT_LE(rel(Xg, Xc), 1e-10);
}

TEST(DacGcare, FemExampleResidual) {
  const Index n = 256;
  const problems::CareProblem p = problems::gcare_ex3(n);
  const dac::DacConfig cfg = small_config(64);
  const dac::DacResult r = dac::dac_gcare(HodlrMatrix::from_banded(p.A, 64), HodlrMatrix::from_banded(*p.E, 64),
                                          HodlrMatrix::from_banded(p.Q, 64), p.B, cfg);
  const Matrix X = r.X.dense();
  EXPECT_LE(gcare_res(p.A.dense(), p.E->dense(), p.B, p.Q.dense(), X), 1e-7);
  EXPECT_LE(rel(X, dense::solve_gcare(p.A.dense(), p.E->dense(), p.B, p.Q.dense())), 1e-6);
}

TEST(DacUqme, LeafIsCyclicReduction) {
  const problems::UqmeProblem p = problems::mass_spring(32);
  const dac::DacResult r =
      dac::dac_uqme(HodlrMatrix::from_banded(p.A, 32), HodlrMatrix::from_banded(p.B, 32),
                    HodlrMatrix::from_banded(p.C, 32), small_config(32));
  ASSERT_EQ(r.report.nodes.size(), 1u);
  const Matrix Xcr = dense::cyclic_reduction(p.A.dense(), p.B.dense(), p.C.dense()).X;
  EXPECT_EQ((r.X.dense() - Xcr).norm(), 0.0);
}

TEST(DacUqme, DqbdMatchesCyclicReduction) {
  const Index n = 256;
  const problems::UqmeProblem p = problems::dqbd(n, 2);
  const dac::DacResult r =
      dac::dac_uqme(HodlrMatrix::from_banded(p.A, 128), HodlrMatrix::from_banded(p.B, 128),
                    HodlrMatrix::from_banded(p.C, 128), small_config(128));
  const Matrix X = r.X.dense();
  const Matrix Xcr = dense::cyclic_reduction(p.A.dense(), p.B.dense(), p.C.dense()).X;
  EXPECT_LE(rel(X, Xcr), 1e-6);
  EXPECT_LE(uqme_res(p.A.dense(), p.B.dense(), p.C.dense(), X), 1e-7);
  EXPECT_LE(dense::spectral_radius(X), 1.0 + 1e-6);
}

TEST(DacUqme, MassSpringLowRank) {
  const Index n = 256;
  const problems::UqmeProblem p = problems::mass_spring(n);
  const dac::DacResult r =
      dac::dac_uqme(HodlrMatrix::from_banded(p.A, 32), HodlrMatrix::from_banded(p.B, 32),
                    HodlrMatrix::from_banded(p.C, 32), small_config(32));
  EXPECT_LE(r.report.hodlr_rank, 10);
  const Matrix Xcr = dense::cyclic_reduction(p.A.dense(), p.B.dense(), p.C.dense()).X;
  EXPECT_LE(rel(r.X.dense(), Xcr), 1e-6);
}

TEST(DacUqme, FailingLeafReportsSplitViolation) {
  // A X^2 + B X + C with B singular-like at a leaf: x^2 + 0 x + 1 has roots +-i
  const Index n = 16;
  const HodlrMatrix I = HodlrMatrix::identity(n, 16);
  try {
    dac::dac_uqme(I, HodlrMatrix::zero(n, 16), I, small_config(16));
    FAIL() << "expected failure";
  } catch (const qme::Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::SplitViolation);
    EXPECT_EQ(e.path(), "root");
  }
}

TEST(Update, CareScalar) {
  const HodlrMatrix X0 = HodlrMatrix::from_dense(Matrix::Constant(1, 1, std::sqrt(2.0) - 1.0), 16);
  const HodlrMatrix A = HodlrMatrix::from_dense(Matrix::Constant(1, 1, -1.0), 16);
  const Matrix B = Matrix::Constant(1, 1, 1.0);
  const SymLowRank dQ(Matrix::Constant(1, 1, 1.0), Matrix::Constant(1, 1, 0.5));
  const dac::DacResult r =
      dac::update_care_solution(X0, A, B, GenLowRank::zero(1, 1), SymLowRank::zero(1), dQ);
  EXPECT_NEAR(r.X.dense()(0, 0), std::sqrt(2.5) - 1.0, 1e-10);
}

TEST(Update, UqmeScalar) {
  const HodlrMatrix X0 = HodlrMatrix::from_dense(Matrix::Constant(1, 1, 0.5), 16);
  const HodlrMatrix A = HodlrMatrix::from_dense(Matrix::Constant(1, 1, 1.0), 16);
  const HodlrMatrix B = HodlrMatrix::from_dense(Matrix::Constant(1, 1, -2.5), 16);
  const GenLowRank dC(Matrix::Constant(1, 1, 0.04), Matrix::Constant(1, 1, 1.0));
  const dac::DacResult r =
      dac::update_uqme_solution(X0, A, B, GenLowRank::zero(1, 1), GenLowRank::zero(1, 1), dC);
  EXPECT_NEAR(r.X.dense()(0, 0), (2.5 - std::sqrt(2.09)) / 2.0, 1e-10);
}

TEST(Update, CareRankOneDrift) {
  const Index n = 128;
  const CareDense c = ex1(n, 32, 9);
  const Matrix X0 = dense::solve_care(c.A, c.B, c.Q);
  std::mt19937_64 rng(4);
  const Matrix u = oracle::random_matrix(n, 1, rng).normalized();
  const Matrix v = oracle::random_matrix(n, 1, rng).normalized();
  const GenLowRank dA(0.1 * u, v);
  const Matrix A1 = c.A + dA.dense();
  const dac::DacResult r = dac::update_care_solution(HodlrMatrix::from_dense(X0, 32), HodlrMatrix::from_dense(A1, 32),
                                                     c.B, dA, SymLowRank::zero(n), SymLowRank::zero(n));
  EXPECT_LE(rel(r.X.dense(), dense::solve_care(A1, c.B, c.Q)), 1e-7);
}

TEST(Update, UqmeRankOneCoefficientChange) {
  const Index n = 128;
  const problems::UqmeProblem p = problems::dqbd(n, 6);
  const Matrix A = p.A.dense(), C = 0.9 * p.C.dense();
  const Matrix B0 = p.B.dense();
  const Matrix X0 = dense::uqme_minimal_oracle(A, B0, C);
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Matrix u(n, 1), v(n, 1);
  for (Index i = 0; i < n; ++i) {
    u(i, 0) = unif(rng);
    v(i, 0) = unif(rng);
  }
  const GenLowRank dB(0.01 * u.normalized(), v.normalized());
  const Matrix B1 = B0 + dB.dense();
  const dac::DacResult r = dac::update_uqme_solution(
      HodlrMatrix::from_dense(X0, 32), HodlrMatrix::from_dense(A, 32), HodlrMatrix::from_dense(B1, 32),
      GenLowRank::zero(n, n), dB, GenLowRank::zero(n, n));
  const Matrix X1 = dense::uqme_minimal_oracle(A, B1, C);
  EXPECT_LE(rel(r.X.dense(), X1), 1e-7);
}
