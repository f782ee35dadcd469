#include "qme/problems.hpp"

#include <cmath>
#include <numbers>

#include <Eigen/Eigenvalues>
#include <Eigen/SparseCore>

#include "qme/linalg.hpp"

namespace qme::problems {

using Sparse = Eigen::SparseMatrix<double>;

double PortableRng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = uniform();
  while (u1 == 0.0) u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double t = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(t);
  has_spare_ = true;
  return r * std::cos(t);
}

CareProblem care_ex1(Index n, std::uint64_t seed) {
  require_dims(n >= 3, "care_ex1: n >= 3");
  PortableRng rng(seed);
  CareProblem p;
  p.family = "care-ex1";
  p.A = BandedMatrix::toeplitz(n, {1.0, -2.0, 1.0});
  p.B.resize(n, 2);
  for (Index j = 0; j < 2; ++j)
    for (Index i = 0; i < n; ++i) p.B(i, j) = rng.normal();
  Vector diag(n), off(n - 1);
  for (Index i = 0; i < n; ++i) diag(i) = rng.normal();
  for (Index i = 0; i + 1 < n; ++i) off(i) = rng.normal();
  Eigen::SelfAdjointEigenSolver<Matrix> eig;
  eig.computeFromTridiagonal(diag, off, Eigen::EigenvaluesOnly);
  const double theta = eig.eigenvalues()(0);
  p.Q = BandedMatrix(n, 1, 1);
  for (Index i = 0; i < n; ++i) p.Q.at(i, i) = diag(i) + (0.1 - theta);
  for (Index i = 0; i + 1 < n; ++i) {
    p.Q.at(i + 1, i) = off(i);
    p.Q.at(i, i + 1) = off(i);
  }
  return p;
}

CareProblem care_ex2(Index n) {
  require_dims(n >= 4 && n % 2 == 0, "care_ex2: even n >= 4");
  const Index h = n / 2;
  std::vector<Eigen::Triplet<double>> t;
  for (Index i = 0; i < h; ++i) {
    double m = -0.5;
    if (i == 0 || i == h - 1) m -= 0.5;
    t.emplace_back(i, h + i, m);
    if (i + 1 < h) {
      t.emplace_back(i, h + i + 1, 0.25);
      t.emplace_back(i + 1, h + i, 0.25);
    }
    t.emplace_back(h + i, i, 1.0);
    t.emplace_back(h + i, h + i, -1.0);
  }
  Sparse A(n, n);
  A.setFromTriplets(t.begin(), t.end());

  Matrix B = Matrix::Zero(n, 2);
  B(h, 0) = 0.25;
  B(n - 1, 1) = -0.25;
  Matrix Z0 = Matrix::Zero(n, 2);
  Z0(h - 1, 0) = Z0(n - 1, 0) = -8.0;
  Z0(0, 1) = Z0(h, 1) = 8.0;
  const Sparse X0 = (Z0 * Z0.transpose()).sparseView();
  const Sparse F = (B * B.transpose()).sparseView();
  Sparse I(n, n);
  I.setIdentity();

  Sparse At = A - F * X0;
  Sparse Qt = I + Sparse(A.transpose()) * X0 + X0 * A - X0 * F * X0;

  const double s = linalg::norm2_estimate(
      n, [&](const Vector& x) -> Vector { return A * x; },
      [&](const Vector& x) -> Vector { return A.transpose() * x; }, 60);
  At /= s;
  Qt /= s;
  B /= std::sqrt(s);

  Eigen::PermutationMatrix<Eigen::Dynamic> P(n);
  for (Index i = 0; i < h; ++i) {
    P.indices()(i) = static_cast<int>(2 * i);
    P.indices()(h + i) = static_cast<int>(2 * i + 1);
  }
  CareProblem p;
  p.family = "care-ex2";
  p.A = BandedMatrix::from_sparse(Sparse(P * At * P.transpose()));
  p.Q = BandedMatrix::from_sparse(Sparse(P * Qt * P.transpose()));
  p.B = P * B;
  return p;
}

CareProblem gcare_ex3(Index n) {
  require_dims(n >= 3, "gcare_ex3: n >= 3");
  const double h = 1.0 / static_cast<double>(n + 1);
  CareProblem p;
  p.family = "gcare-ex3";
  p.E = BandedMatrix::toeplitz(n, {h / 6.0, 4.0 * h / 6.0, h / 6.0});
  p.A = BandedMatrix::toeplitz(n, {1.0 / h, -2.0 / h, 1.0 / h});
  p.B = Matrix::Constant(n, 1, h);
  p.Q = BandedMatrix::toeplitz(n, {1.0});
  return p;
}

UqmeProblem dqbd(Index n, std::uint64_t seed) {
  require_dims(n >= 2, "dqbd: n >= 2");
  PortableRng rng(seed);
  auto draw = [&] {
    BandedMatrix M(n, 1, 1);
    for (Index i = 0; i < n; ++i)
      for (Index j = std::max<Index>(0, i - 1); j <= std::min<Index>(n - 1, i + 1); ++j)
        M.at(i, j) = rng.uniform();
    return M;
  };
  UqmeProblem p;
  p.family = "dqbd-random";
  p.A = draw();
  p.B = draw();
  p.C = draw();
  for (Index i = 0; i < n; ++i) {
    double s = 0.0;
    for (Index j = std::max<Index>(0, i - 1); j <= std::min<Index>(n - 1, i + 1); ++j)
      s += p.A(i, j) + p.B(i, j) + p.C(i, j);
    for (Index j = std::max<Index>(0, i - 1); j <= std::min<Index>(n - 1, i + 1); ++j) {
      p.A.at(i, j) /= s;
      p.B.at(i, j) /= s;
      p.C.at(i, j) /= s;
    }
    p.B.at(i, i) -= 1.0;
  }
  return p;
}

UqmeProblem mass_spring(Index n) {
  require_dims(n >= 3, "mass_spring: n >= 3");
  UqmeProblem p;
  p.family = "mass-spring";
  p.A = BandedMatrix::toeplitz(n, {1.0});
  p.B = BandedMatrix::toeplitz(n, {-10.0, 30.0, -10.0});
  p.B.at(0, 0) = 20.0;
  p.B.at(n - 1, n - 1) = 20.0;
  p.C = BandedMatrix::toeplitz(n, {-5.0, 15.0, -5.0});
  return p;
}

}  // namespace qme::problems
