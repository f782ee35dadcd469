#pragma once

// Hierarchically off-diagonal low-rank (HODLR) matrices.
//
// A node of size n is either a dense leaf (n <= n_min) or a 2x2 block matrix
// split at ceil(n/2) with HODLR diagonal blocks and factored off-diagonal
// blocks a12 = U V^T, a21 = U V^T. Nodes are immutable and shared, so copies
// are cheap and concurrent reads are safe.

#include <iosfwd>
#include <memory>

#include "qme/banded.hpp"
#include "qme/lowrank.hpp"

namespace qme {

template <typename T>
class Hodlr {
 public:
  struct Node {
    Index n = 0;
    MatrixX<T> leaf;  // used when a11 is null
    std::shared_ptr<const Node> a11;
    std::shared_ptr<const Node> a22;
    LowRank<T> a12;
    LowRank<T> a21;
    bool is_leaf() const { return a11 == nullptr; }
  };
  using NodePtr = std::shared_ptr<const Node>;

  Hodlr() = default;
  Hodlr(NodePtr root, Index n_min) : root_(std::move(root)), n_min_(n_min) {}

  static Index split_point(Index n) { return (n + 1) / 2; }

  static Hodlr zero(Index n, Index n_min);
  static Hodlr identity(Index n, Index n_min);
  /// Off-diagonal blocks truncated by SVD with relative threshold tau.
  static Hodlr from_dense(const MatrixX<T>& M, Index n_min, double tau = 0.0);
  /// Exact: off-diagonal factors use identity columns for the nonzero rows.
  static Hodlr from_banded(const BandedMatrix& M, Index n_min);
  /// blkdiag(X11, X22); the off-diagonal blocks are zero.
  static Hodlr block_diagonal(const Hodlr& X11, const Hodlr& X22);
  static Hodlr from_blocks(const Hodlr& X11, const Hodlr& X22, LowRank<T> a12, LowRank<T> a21);

  Index rows() const { return root_ ? root_->n : 0; }
  Index n_min() const { return n_min_; }
  bool is_leaf() const { return root_->is_leaf(); }
  const NodePtr& root() const { return root_; }

  Hodlr a11() const { return {root_->a11, n_min_}; }
  Hodlr a22() const { return {root_->a22, n_min_}; }
  const LowRank<T>& a12() const { return root_->a12; }
  const LowRank<T>& a21() const { return root_->a21; }
  const MatrixX<T>& leaf() const { return root_->leaf; }

  MatrixX<T> dense() const;
  /// A x for a block of vectors.
  MatrixX<T> apply(const MatrixX<T>& x) const;
  /// A^T x (plain transpose, no conjugation).
  MatrixX<T> apply_transpose(const MatrixX<T>& x) const;

  Hodlr transpose() const;
  Hodlr scaled(T alpha) const;
  /// A + alpha I.
  Hodlr shifted(T alpha) const;
  /// A + U V^T, with every touched off-diagonal block recompressed.
  Hodlr add_lowrank(const LowRank<T>& f, double tau) const;

  template <typename S>
  Hodlr<S> cast() const;

  /// Maximum off-diagonal rank over all levels.
  Index hodlr_rank() const;
  /// Number of stored scalars.
  Index storage() const;
  /// Depth of the tree (a leaf has depth 0).
  int depth() const;

 private:
  NodePtr root_;
  Index n_min_ = 0;
};

template <typename T>
Hodlr<T> add(const Hodlr<T>& A, const Hodlr<T>& B, double tau);
template <typename T>
Hodlr<T> matmul(const Hodlr<T>& A, const Hodlr<T>& B, double tau);

using HodlrMatrix = Hodlr<double>;
using ComplexHodlr = Hodlr<Complex>;

/// Block LU factorization on the HODLR tree. The diagonal blocks are
/// factored recursively and the Schur complement of each node is formed as
/// a low-rank update of a22, recompressed at tau.
template <typename T>
class HodlrLu {
 public:
  struct Node;
  using NodePtr = std::shared_ptr<const Node>;

  HodlrLu() = default;
  explicit HodlrLu(const Hodlr<T>& A, double tau = 1e-14);

  Index rows() const { return n_; }
  /// A^{-1} b.
  MatrixX<T> solve(const MatrixX<T>& b) const;

 private:
  NodePtr root_;
  Index n_ = 0;
};

/// Off-diagonal part of a node as one factor pair: A = blkdiag(a11, a22) + U V^T
/// with U = blkdiag(U12, U21) and V = [0 V21; V12 0].
struct HodlrSplit {
  HodlrMatrix a11;
  HodlrMatrix a22;
  GenLowRank correction;
};
HodlrSplit split(const HodlrMatrix& A);

/// Symmetric variant: a21 is taken as a12^T and the correction is
/// blkdiag(U12, V12) [0 I; I 0] blkdiag(U12, V12)^T.
struct HodlrSymSplit {
  HodlrMatrix a11;
  HodlrMatrix a22;
  SymLowRank correction;
};
HodlrSymSplit split_symmetric(const HodlrMatrix& A);

/// blkdiag(X11, X22) + dX.
HodlrMatrix embed_and_update(const HodlrMatrix& X11, const HodlrMatrix& X22, const SymLowRank& dX,
                             double tau);
HodlrMatrix embed_and_update(const HodlrMatrix& X11, const HodlrMatrix& X22, const GenLowRank& dX,
                             double tau);

/// Largest singular value estimated by Lanczos on A^T A.
double norm2_est(const HodlrMatrix& A, int iters = 30);

/// Binary container: "QMEHODLR", uint32 version, uint32 scalar kind
/// (0 real, 1 complex), uint64 n, uint64 n_min, then the tree in preorder.
/// Each node starts with a uint8 tag (0 leaf, 1 inner) and uint64 size.
/// Leaves store size*size scalars column-major; inner nodes store the a12
/// rank and factors, the a21 rank and factors, then a11 and a22. All
/// integers and doubles are little-endian; complex scalars are (re, im).
template <typename T>
void save(std::ostream& os, const Hodlr<T>& A);
template <typename T>
Hodlr<T> load(std::istream& is);

}  // namespace qme
