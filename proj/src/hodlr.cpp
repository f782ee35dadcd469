#include "qme/hodlr.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <limits>
#include <ostream>

#include "qme/linalg.hpp"

namespace qme {

namespace {

template <typename T>
using NodeOf = typename Hodlr<T>::Node;
template <typename T>
using Ptr = std::shared_ptr<const NodeOf<T>>;

template <typename T>
Ptr<T> make_leaf(MatrixX<T> M) {
  auto node = std::make_shared<NodeOf<T>>();
  node->n = M.rows();
  node->leaf = std::move(M);
  return node;
}

template <typename T>
Ptr<T> make_inner(Ptr<T> a11, Ptr<T> a22, LowRank<T> a12, LowRank<T> a21) {
  require_dims(a12.rows() == a11->n && a12.cols() == a22->n && a21.rows() == a22->n &&
                   a21.cols() == a11->n,
               "HODLR node: off-diagonal block sizes");
  auto node = std::make_shared<NodeOf<T>>();
  node->n = a11->n + a22->n;
  node->a11 = std::move(a11);
  node->a22 = std::move(a22);
  node->a12 = std::move(a12);
  node->a21 = std::move(a21);
  return node;
}

template <typename T>
LowRank<T> concat(const LowRank<T>& a, const LowRank<T>& b) {
  MatrixX<T> U(a.rows(), a.rank() + b.rank());
  MatrixX<T> V(a.cols(), a.rank() + b.rank());
  U << a.U, b.U;
  V << a.V, b.V;
  return {std::move(U), std::move(V)};
}

template <typename T>
LowRank<T> truncated_svd(const MatrixX<T>& M, double tau) {
  if (M.size() == 0) return LowRank<T>::zero(M.rows(), M.cols());
  Eigen::BDCSVD<MatrixX<T>> svd(M, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& s = svd.singularValues();
  if (s.size() == 0 || s(0) == 0.0) return LowRank<T>::zero(M.rows(), M.cols());
  const double cut = std::max(tau, std::numeric_limits<double>::epsilon()) * s(0);
  Index r = 0;
  while (r < s.size() && s(r) > cut) ++r;
  MatrixX<T> U = svd.matrixU().leftCols(r) * s.head(r).template cast<T>().asDiagonal();
  MatrixX<T> V = svd.matrixV().leftCols(r).conjugate();
  return {std::move(U), std::move(V)};
}

template <typename T>
Ptr<T> build_dense(const MatrixX<T>& M, Index n_min, double tau) {
  const Index n = M.rows();
  if (n <= n_min) return make_leaf<T>(M);
  const Index n1 = Hodlr<T>::split_point(n);
  const Index n2 = n - n1;
  return make_inner<T>(build_dense<T>(M.topLeftCorner(n1, n1), n_min, tau),
                       build_dense<T>(M.bottomRightCorner(n2, n2), n_min, tau),
                       truncated_svd<T>(M.topRightCorner(n1, n2), tau),
                       truncated_svd<T>(M.bottomLeftCorner(n2, n1), tau));
}

// Off-diagonal block of a banded matrix as (identity columns, row values).
template <typename T>
LowRank<T> banded_block(const BandedMatrix& M, Index r0, Index c0, Index rows, Index cols) {
  const Matrix block = M.block(r0, c0, rows, cols);
  std::vector<Index> nz;
  for (Index i = 0; i < rows; ++i)
    if (block.row(i).cwiseAbs().maxCoeff() > 0.0) nz.push_back(i);
  const auto r = static_cast<Index>(nz.size());
  MatrixX<T> U = MatrixX<T>::Zero(rows, r);
  MatrixX<T> V(cols, r);
  for (Index k = 0; k < r; ++k) {
    U(nz[static_cast<std::size_t>(k)], k) = T(1);
    V.col(k) = block.row(nz[static_cast<std::size_t>(k)]).transpose().template cast<T>();
  }
  return {std::move(U), std::move(V)};
}

template <typename T>
Ptr<T> build_banded(const BandedMatrix& M, Index offset, Index n, Index n_min) {
  if (n <= n_min) return make_leaf<T>(M.block(offset, offset, n, n).template cast<T>());
  const Index n1 = Hodlr<T>::split_point(n);
  const Index n2 = n - n1;
  return make_inner<T>(build_banded<T>(M, offset, n1, n_min),
                       build_banded<T>(M, offset + n1, n2, n_min),
                       banded_block<T>(M, offset, offset + n1, n1, n2),
                       banded_block<T>(M, offset + n1, offset, n2, n1));
}

template <typename T>
void to_dense(const NodeOf<T>& node, Eigen::Ref<MatrixX<T>> out) {
  if (node.is_leaf()) {
    out = node.leaf;
    return;
  }
  const Index n1 = node.a11->n;
  const Index n2 = node.a22->n;
  to_dense<T>(*node.a11, out.topLeftCorner(n1, n1));
  to_dense<T>(*node.a22, out.bottomRightCorner(n2, n2));
  out.topRightCorner(n1, n2) = node.a12.dense();
  out.bottomLeftCorner(n2, n1) = node.a21.dense();
}

template <typename T>
MatrixX<T> apply_node(const NodeOf<T>& node, const MatrixX<T>& x, bool transposed) {
  if (node.is_leaf()) {
    if (transposed) return node.leaf.transpose() * x;
    return node.leaf * x;
  }
  const Index n1 = node.a11->n;
  const Index n2 = node.a22->n;
  const MatrixX<T> x1 = x.topRows(n1);
  const MatrixX<T> x2 = x.bottomRows(n2);
  MatrixX<T> y(node.n, x.cols());
  if (!transposed) {
    y.topRows(n1) = apply_node<T>(*node.a11, x1, false) + node.a12.apply(x2);
    y.bottomRows(n2) = apply_node<T>(*node.a22, x2, false) + node.a21.apply(x1);
  } else {
    y.topRows(n1) = apply_node<T>(*node.a11, x1, true) + node.a21.apply_transpose(x2);
    y.bottomRows(n2) = apply_node<T>(*node.a22, x2, true) + node.a12.apply_transpose(x1);
  }
  return y;
}

template <typename T>
Ptr<T> transpose_node(const Ptr<T>& node) {
  if (node->is_leaf()) return make_leaf<T>(node->leaf.transpose());
  return make_inner<T>(transpose_node<T>(node->a11), transpose_node<T>(node->a22),
                       node->a21.transposed(), node->a12.transposed());
}

template <typename T>
Ptr<T> scale_node(const Ptr<T>& node, T alpha) {
  if (node->is_leaf()) return make_leaf<T>(alpha * node->leaf);
  return make_inner<T>(scale_node<T>(node->a11, alpha), scale_node<T>(node->a22, alpha),
                       LowRank<T>(alpha * node->a12.U, node->a12.V),
                       LowRank<T>(alpha * node->a21.U, node->a21.V));
}

template <typename T>
Ptr<T> shift_node(const Ptr<T>& node, T alpha) {
  if (node->is_leaf()) {
    MatrixX<T> M = node->leaf;
    M.diagonal().array() += alpha;
    return make_leaf<T>(std::move(M));
  }
  return make_inner<T>(shift_node<T>(node->a11, alpha), shift_node<T>(node->a22, alpha),
                       node->a12, node->a21);
}

template <typename T>
Ptr<T> add_lowrank_node(const Ptr<T>& node, const LowRank<T>& f, double tau) {
  if (f.rank() == 0) return node;
  if (node->is_leaf()) return make_leaf<T>(node->leaf + f.dense());
  const Index n1 = node->a11->n;
  const Index n2 = node->a22->n;
  const LowRank<T> f1(f.U.topRows(n1), f.V.topRows(n1));
  const LowRank<T> f2(f.U.bottomRows(n2), f.V.bottomRows(n2));
  const LowRank<T> f12(f.U.topRows(n1), f.V.bottomRows(n2));
  const LowRank<T> f21(f.U.bottomRows(n2), f.V.topRows(n1));
  return make_inner<T>(add_lowrank_node<T>(node->a11, f1, tau),
                       add_lowrank_node<T>(node->a22, f2, tau),
                       compress(concat(node->a12, f12), tau), compress(concat(node->a21, f21), tau));
}

// Splits a dense leaf one level so that it conforms with an inner node.
template <typename T>
Ptr<T> expand_leaf(const Ptr<T>& node) {
  const MatrixX<T>& M = node->leaf;
  const Index n1 = Hodlr<T>::split_point(node->n);
  const Index n2 = node->n - n1;
  return make_inner<T>(make_leaf<T>(M.topLeftCorner(n1, n1)),
                       make_leaf<T>(M.bottomRightCorner(n2, n2)),
                       truncated_svd<T>(M.topRightCorner(n1, n2), 0.0),
                       truncated_svd<T>(M.bottomLeftCorner(n2, n1), 0.0));
}

template <typename T>
Ptr<T> add_node(const Ptr<T>& a, const Ptr<T>& b, double tau) {
  if (a->is_leaf() && b->is_leaf()) return make_leaf<T>(a->leaf + b->leaf);
  if (a->is_leaf()) return add_node<T>(expand_leaf<T>(a), b, tau);
  if (b->is_leaf()) return add_node<T>(a, expand_leaf<T>(b), tau);
  return make_inner<T>(add_node<T>(a->a11, b->a11, tau), add_node<T>(a->a22, b->a22, tau),
                       compress(concat(a->a12, b->a12), tau), compress(concat(a->a21, b->a21), tau));
}

template <typename T>
Ptr<T> matmul_node(const Ptr<T>& a, const Ptr<T>& b, double tau) {
  if (a->is_leaf() && b->is_leaf()) return make_leaf<T>(a->leaf * b->leaf);
  if (a->is_leaf()) return matmul_node<T>(expand_leaf<T>(a), b, tau);
  if (b->is_leaf()) return matmul_node<T>(a, expand_leaf<T>(b), tau);
  const NodeOf<T>& A = *a;
  const NodeOf<T>& B = *b;
  // C11 = A11 B11 + A12 B21
  Ptr<T> c11 = matmul_node<T>(A.a11, B.a11, tau);
  c11 = add_lowrank_node<T>(
      c11, LowRank<T>(A.a12.U * (A.a12.V.transpose() * B.a21.U), B.a21.V), tau);
  // C22 = A22 B22 + A21 B12
  Ptr<T> c22 = matmul_node<T>(A.a22, B.a22, tau);
  c22 = add_lowrank_node<T>(
      c22, LowRank<T>(A.a21.U * (A.a21.V.transpose() * B.a12.U), B.a12.V), tau);
  // C12 = A11 B12 + A12 B22
  LowRank<T> c12 = concat(LowRank<T>(apply_node<T>(*A.a11, B.a12.U, false), B.a12.V),
                          LowRank<T>(A.a12.U, apply_node<T>(*B.a22, A.a12.V, true)));
  // C21 = A21 B11 + A22 B21
  LowRank<T> c21 = concat(LowRank<T>(A.a21.U, apply_node<T>(*B.a11, A.a21.V, true)),
                          LowRank<T>(apply_node<T>(*A.a22, B.a21.U, false), B.a21.V));
  return make_inner<T>(std::move(c11), std::move(c22), compress(c12, tau), compress(c21, tau));
}

template <typename S, typename T>
Ptr<S> cast_node(const Ptr<T>& node) {
  if (node->is_leaf()) return make_leaf<S>(node->leaf.template cast<S>());
  return make_inner<S>(cast_node<S, T>(node->a11), cast_node<S, T>(node->a22),
                       LowRank<S>(node->a12.U.template cast<S>(), node->a12.V.template cast<S>()),
                       LowRank<S>(node->a21.U.template cast<S>(), node->a21.V.template cast<S>()));
}

template <typename T>
Index rank_of(const NodeOf<T>& node) {
  if (node.is_leaf()) return 0;
  return std::max({node.a12.rank(), node.a21.rank(), rank_of<T>(*node.a11), rank_of<T>(*node.a22)});
}

template <typename T>
Index storage_of(const NodeOf<T>& node) {
  if (node.is_leaf()) return node.leaf.size();
  return node.a12.U.size() + node.a12.V.size() + node.a21.U.size() + node.a21.V.size() +
         storage_of<T>(*node.a11) + storage_of<T>(*node.a22);
}

template <typename T>
int depth_of(const NodeOf<T>& node) {
  if (node.is_leaf()) return 0;
  return 1 + std::max(depth_of<T>(*node.a11), depth_of<T>(*node.a22));
}

}  // namespace

template <typename T>
Hodlr<T> Hodlr<T>::zero(Index n, Index n_min) {
  return from_banded(BandedMatrix::toeplitz(n, {0.0}), n_min);
}

template <typename T>
Hodlr<T> Hodlr<T>::identity(Index n, Index n_min) {
  return from_banded(BandedMatrix::toeplitz(n, {1.0}), n_min);
}

template <typename T>
Hodlr<T> Hodlr<T>::from_dense(const MatrixX<T>& M, Index n_min, double tau) {
  require_dims(M.rows() == M.cols(), "HODLR: square input");
  require_dims(n_min >= 1, "HODLR: n_min >= 1");
  return {build_dense<T>(M, n_min, tau), n_min};
}

template <typename T>
Hodlr<T> Hodlr<T>::from_banded(const BandedMatrix& M, Index n_min) {
  require_dims(n_min >= 1, "HODLR: n_min >= 1");
  return {build_banded<T>(M, 0, M.rows(), n_min), n_min};
}

template <typename T>
Hodlr<T> Hodlr<T>::block_diagonal(const Hodlr& X11, const Hodlr& X22) {
  return from_blocks(X11, X22, LowRank<T>::zero(X11.rows(), X22.rows()),
                     LowRank<T>::zero(X22.rows(), X11.rows()));
}

template <typename T>
Hodlr<T> Hodlr<T>::from_blocks(const Hodlr& X11, const Hodlr& X22, LowRank<T> a12,
                               LowRank<T> a21) {
  require_dims(X11.rows() == split_point(X11.rows() + X22.rows()), "HODLR: unbalanced blocks");
  return {make_inner<T>(X11.root_, X22.root_, std::move(a12), std::move(a21)),
          std::max(X11.n_min_, X22.n_min_)};
}

template <typename T>
MatrixX<T> Hodlr<T>::dense() const {
  MatrixX<T> M(rows(), rows());
  if (root_) to_dense<T>(*root_, M);
  return M;
}

template <typename T>
MatrixX<T> Hodlr<T>::apply(const MatrixX<T>& x) const {
  require_dims(x.rows() == rows(), "HODLR apply: rows");
  return apply_node<T>(*root_, x, false);
}

template <typename T>
MatrixX<T> Hodlr<T>::apply_transpose(const MatrixX<T>& x) const {
  require_dims(x.rows() == rows(), "HODLR apply_transpose: rows");
  return apply_node<T>(*root_, x, true);
}

template <typename T>
Hodlr<T> Hodlr<T>::transpose() const {
  return {transpose_node<T>(root_), n_min_};
}

template <typename T>
Hodlr<T> Hodlr<T>::scaled(T alpha) const {
  return {scale_node<T>(root_, alpha), n_min_};
}

template <typename T>
Hodlr<T> Hodlr<T>::shifted(T alpha) const {
  return {shift_node<T>(root_, alpha), n_min_};
}

template <typename T>
Hodlr<T> Hodlr<T>::add_lowrank(const LowRank<T>& f, double tau) const {
  require_dims(f.rows() == rows() && f.cols() == rows(), "HODLR add_lowrank: sizes");
  return {add_lowrank_node<T>(root_, f, tau), n_min_};
}

template <typename T>
template <typename S>
Hodlr<S> Hodlr<T>::cast() const {
  return {cast_node<S, T>(root_), n_min_};
}

template <typename T>
Index Hodlr<T>::hodlr_rank() const {
  return root_ ? rank_of<T>(*root_) : 0;
}

template <typename T>
Index Hodlr<T>::storage() const {
  return root_ ? storage_of<T>(*root_) : 0;
}

template <typename T>
int Hodlr<T>::depth() const {
  return root_ ? depth_of<T>(*root_) : 0;
}

template <typename T>
Hodlr<T> add(const Hodlr<T>& A, const Hodlr<T>& B, double tau) {
  require_dims(A.rows() == B.rows(), "HODLR add: sizes");
  return {add_node<T>(A.root(), B.root(), tau), A.n_min()};
}

template <typename T>
Hodlr<T> matmul(const Hodlr<T>& A, const Hodlr<T>& B, double tau) {
  require_dims(A.rows() == B.rows(), "HODLR matmul: sizes");
  return {matmul_node<T>(A.root(), B.root(), tau), A.n_min()};
}

template class Hodlr<double>;
template class Hodlr<Complex>;
template Hodlr<Complex> Hodlr<double>::cast<Complex>() const;
template Hodlr<double> Hodlr<double>::cast<double>() const;
template Hodlr<double> add(const Hodlr<double>&, const Hodlr<double>&, double);
template Hodlr<Complex> add(const Hodlr<Complex>&, const Hodlr<Complex>&, double);
template Hodlr<double> matmul(const Hodlr<double>&, const Hodlr<double>&, double);
template Hodlr<Complex> matmul(const Hodlr<Complex>&, const Hodlr<Complex>&, double);

// ---------------------------------------------------------------------------
// Block LU

template <typename T>
struct HodlrLu<T>::Node {
  Index n = 0;
  Eigen::PartialPivLU<MatrixX<T>> lu;  // leaf
  NodePtr f11;
  NodePtr f22;
  MatrixX<T> u12, v12, u21, v21;
  bool is_leaf() const { return f11 == nullptr; }
};

namespace {

template <typename T>
using LuNode = typename HodlrLu<T>::Node;

// L^{-1} P b for the lower factor of the subtree.
template <typename T>
MatrixX<T> lu_forward(const LuNode<T>& f, const MatrixX<T>& b) {
  if (f.is_leaf()) {
    MatrixX<T> y = f.lu.permutationP() * b;
    f.lu.matrixLU().template triangularView<Eigen::UnitLower>().solveInPlace(y);
    return y;
  }
  const Index n1 = f.f11->n;
  const Index n2 = f.f22->n;
  MatrixX<T> y(f.n, b.cols());
  y.topRows(n1) = lu_forward<T>(*f.f11, b.topRows(n1));
  y.bottomRows(n2) =
      lu_forward<T>(*f.f22, b.bottomRows(n2) - f.u21 * (f.v21.transpose() * y.topRows(n1)));
  return y;
}

// U^{-1} y for the upper factor.
template <typename T>
MatrixX<T> lu_backward(const LuNode<T>& f, const MatrixX<T>& y) {
  if (f.is_leaf()) {
    MatrixX<T> x = y;
    f.lu.matrixLU().template triangularView<Eigen::Upper>().solveInPlace(x);
    return x;
  }
  const Index n1 = f.f11->n;
  const Index n2 = f.f22->n;
  MatrixX<T> x(f.n, y.cols());
  x.bottomRows(n2) = lu_backward<T>(*f.f22, y.bottomRows(n2));
  x.topRows(n1) =
      lu_backward<T>(*f.f11, y.topRows(n1) - f.u12 * (f.v12.transpose() * x.bottomRows(n2)));
  return x;
}

// U^{-T} c for the upper factor.
template <typename T>
MatrixX<T> lu_upper_transpose(const LuNode<T>& f, const MatrixX<T>& c) {
  if (f.is_leaf()) {
    MatrixX<T> z = c;
    f.lu.matrixLU().template triangularView<Eigen::Upper>().transpose().solveInPlace(z);
    return z;
  }
  const Index n1 = f.f11->n;
  const Index n2 = f.f22->n;
  MatrixX<T> z(f.n, c.cols());
  z.topRows(n1) = lu_upper_transpose<T>(*f.f11, c.topRows(n1));
  z.bottomRows(n2) = lu_upper_transpose<T>(
      *f.f22, c.bottomRows(n2) - f.v12 * (f.u12.transpose() * z.topRows(n1)));
  return z;
}

template <typename T>
std::shared_ptr<const LuNode<T>> lu_factor(const Ptr<T>& node, double tau) {
  auto f = std::make_shared<LuNode<T>>();
  f->n = node->n;
  if (node->is_leaf()) {
    f->lu.compute(node->leaf);
    const double rc = f->lu.rcond();
    if (!(rc > std::numeric_limits<double>::epsilon()) || !f->lu.matrixLU().allFinite()) {
      throw Error(ErrorCode::SingularPivot, "HODLR LU: singular diagonal block");
    }
    return f;
  }
  f->f11 = lu_factor<T>(node->a11, tau);
  f->u12 = lu_forward<T>(*f->f11, node->a12.U);
  f->v12 = node->a12.V;
  f->u21 = node->a21.U;
  f->v21 = lu_upper_transpose<T>(*f->f11, node->a21.V);
  const MatrixX<T> core = f->v21.transpose() * f->u12;
  const LowRank<T> update(-(f->u21 * core), f->v12);
  const Ptr<T> schur = add_lowrank_node<T>(node->a22, update, tau);
  f->f22 = lu_factor<T>(schur, tau);
  return f;
}

}  // namespace

template <typename T>
HodlrLu<T>::HodlrLu(const Hodlr<T>& A, double tau) : root_(lu_factor<T>(A.root(), tau)), n_(A.rows()) {}

template <typename T>
MatrixX<T> HodlrLu<T>::solve(const MatrixX<T>& b) const {
  require_dims(b.rows() == n_, "HODLR LU solve: rows");
  if (n_ == 0) return b;
  return lu_backward<T>(*root_, lu_forward<T>(*root_, b));
}

template class HodlrLu<double>;
template class HodlrLu<Complex>;

// ---------------------------------------------------------------------------
// Splittings

HodlrSplit split(const HodlrMatrix& A) {
  if (A.is_leaf()) throw Error(ErrorCode::LeafNotSplittable, "cannot split a leaf");
  const Index n1 = A.a11().rows();
  const Index n2 = A.a22().rows();
  const GenLowRank& b12 = A.a12();
  const GenLowRank& b21 = A.a21();
  const Index r12 = b12.rank();
  const Index r21 = b21.rank();
  Matrix U = Matrix::Zero(n1 + n2, r12 + r21);
  Matrix V = Matrix::Zero(n1 + n2, r12 + r21);
  U.topLeftCorner(n1, r12) = b12.U;
  U.bottomRightCorner(n2, r21) = b21.U;
  V.bottomLeftCorner(n2, r12) = b12.V;
  V.topRightCorner(n1, r21) = b21.V;
  return {A.a11(), A.a22(), GenLowRank(std::move(U), std::move(V))};
}

HodlrSymSplit split_symmetric(const HodlrMatrix& A) {
  if (A.is_leaf()) throw Error(ErrorCode::LeafNotSplittable, "cannot split a leaf");
  const Index n1 = A.a11().rows();
  const Index n2 = A.a22().rows();
  const GenLowRank& b12 = A.a12();
  const Index r = b12.rank();
  Matrix U = Matrix::Zero(n1 + n2, 2 * r);
  U.topLeftCorner(n1, r) = b12.U;
  U.bottomRightCorner(n2, r) = b12.V;
  Matrix D = Matrix::Zero(2 * r, 2 * r);
  D.topRightCorner(r, r).setIdentity();
  D.bottomLeftCorner(r, r).setIdentity();
  return {A.a11(), A.a22(), SymLowRank(std::move(U), std::move(D))};
}

HodlrMatrix embed_and_update(const HodlrMatrix& X11, const HodlrMatrix& X22, const SymLowRank& dX,
                             double tau) {
  require_dims(dX.rows() == X11.rows() + X22.rows(), "embed_and_update: sizes");
  return HodlrMatrix::block_diagonal(X11, X22).add_lowrank(GenLowRank(dX.U * dX.D, dX.U), tau);
}

HodlrMatrix embed_and_update(const HodlrMatrix& X11, const HodlrMatrix& X22, const GenLowRank& dX,
                             double tau) {
  require_dims(dX.rows() == X11.rows() + X22.rows() && dX.cols() == dX.rows(),
               "embed_and_update: sizes");
  return HodlrMatrix::block_diagonal(X11, X22).add_lowrank(dX, tau);
}

double norm2_est(const HodlrMatrix& A, int iters) {
  return linalg::norm2_estimate(
      A.rows(), [&](const Vector& x) -> Vector { return A.apply(x); },
      [&](const Vector& x) -> Vector { return A.apply_transpose(x); }, iters);
}

// ---------------------------------------------------------------------------
// Binary container

namespace {

constexpr char kMagic[8] = {'Q', 'M', 'E', 'H', 'O', 'D', 'L', 'R'};
constexpr std::uint32_t kVersion = 1;

template <typename U>
void put(std::ostream& os, U value) {
  unsigned char bytes[sizeof(U)];
  std::memcpy(bytes, &value, sizeof(U));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(U));
  os.write(reinterpret_cast<const char*>(bytes), sizeof(U));
}

template <typename U>
U get(std::istream& is) {
  unsigned char bytes[sizeof(U)];
  if (!is.read(reinterpret_cast<char*>(bytes), sizeof(U))) {
    throw Error(ErrorCode::InvalidInput, "truncated HODLR container");
  }
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(U));
  U value;
  std::memcpy(&value, bytes, sizeof(U));
  return value;
}

void put_scalar(std::ostream& os, double v) { put<double>(os, v); }
void put_scalar(std::ostream& os, Complex v) {
  put<double>(os, v.real());
  put<double>(os, v.imag());
}

template <typename T>
T get_scalar(std::istream& is) {
  if constexpr (std::is_same_v<T, double>) {
    return get<double>(is);
  } else {
    const double re = get<double>(is);
    const double im = get<double>(is);
    return {re, im};
  }
}

template <typename T>
void put_matrix(std::ostream& os, const MatrixX<T>& M) {
  for (Index j = 0; j < M.cols(); ++j)
    for (Index i = 0; i < M.rows(); ++i) put_scalar(os, M(i, j));
}

template <typename T>
MatrixX<T> get_matrix(std::istream& is, Index rows, Index cols) {
  MatrixX<T> M(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) M(i, j) = get_scalar<T>(is);
  return M;
}

template <typename T>
void save_node(std::ostream& os, const NodeOf<T>& node) {
  put<std::uint8_t>(os, node.is_leaf() ? 0 : 1);
  put<std::uint64_t>(os, static_cast<std::uint64_t>(node.n));
  if (node.is_leaf()) {
    put_matrix<T>(os, node.leaf);
    return;
  }
  for (const LowRank<T>* f : {&node.a12, &node.a21}) {
    put<std::uint64_t>(os, static_cast<std::uint64_t>(f->rank()));
    put_matrix<T>(os, f->U);
    put_matrix<T>(os, f->V);
  }
  save_node<T>(os, *node.a11);
  save_node<T>(os, *node.a22);
}

template <typename T>
Ptr<T> load_node(std::istream& is, Index expected, int depth) {
  if (depth > 64) throw Error(ErrorCode::InvalidInput, "HODLR container too deep");
  const auto tag = get<std::uint8_t>(is);
  const auto n = static_cast<Index>(get<std::uint64_t>(is));
  if (n != expected || tag > 1) throw Error(ErrorCode::InvalidInput, "corrupt HODLR container");
  if (tag == 0) return make_leaf<T>(get_matrix<T>(is, n, n));
  const Index n1 = Hodlr<T>::split_point(n);
  const Index n2 = n - n1;
  const auto r12 = static_cast<Index>(get<std::uint64_t>(is));
  if (r12 > n) throw Error(ErrorCode::InvalidInput, "corrupt HODLR rank");
  MatrixX<T> U12 = get_matrix<T>(is, n1, r12);
  MatrixX<T> V12 = get_matrix<T>(is, n2, r12);
  const auto r21 = static_cast<Index>(get<std::uint64_t>(is));
  if (r21 > n) throw Error(ErrorCode::InvalidInput, "corrupt HODLR rank");
  MatrixX<T> U21 = get_matrix<T>(is, n2, r21);
  MatrixX<T> V21 = get_matrix<T>(is, n1, r21);
  Ptr<T> a11 = load_node<T>(is, n1, depth + 1);
  Ptr<T> a22 = load_node<T>(is, n2, depth + 1);
  return make_inner<T>(std::move(a11), std::move(a22), LowRank<T>(std::move(U12), std::move(V12)),
                       LowRank<T>(std::move(U21), std::move(V21)));
}

}  // namespace

template <typename T>
void save(std::ostream& os, const Hodlr<T>& A) {
  os.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(os, kVersion);
  put<std::uint32_t>(os, std::is_same_v<T, double> ? 0u : 1u);
  put<std::uint64_t>(os, static_cast<std::uint64_t>(A.rows()));
  put<std::uint64_t>(os, static_cast<std::uint64_t>(A.n_min()));
  if (A.root()) save_node<T>(os, *A.root());
  if (!os) throw Error(ErrorCode::InvalidInput, "failed to write HODLR container");
}

template <typename T>
Hodlr<T> load(std::istream& is) {
  char magic[sizeof(kMagic)];
  if (!is.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw Error(ErrorCode::InvalidInput, "not a HODLR container");
  }
  if (get<std::uint32_t>(is) != kVersion) throw Error(ErrorCode::InvalidInput, "unsupported version");
  const auto kind = get<std::uint32_t>(is);
  if (kind != (std::is_same_v<T, double> ? 0u : 1u)) {
    throw Error(ErrorCode::InvalidInput, "HODLR container scalar type mismatch");
  }
  const auto n = static_cast<Index>(get<std::uint64_t>(is));
  const auto n_min = static_cast<Index>(get<std::uint64_t>(is));
  return {load_node<T>(is, n, 0), n_min};
}

template void save(std::ostream&, const Hodlr<double>&);
template void save(std::ostream&, const Hodlr<Complex>&);
template Hodlr<double> load(std::istream&);
template Hodlr<Complex> load(std::istream&);

}  // namespace qme
