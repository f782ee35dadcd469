#pragma once

// Divide-and-conquer solvers for CARE, GCARE and UQME with HODLR
// coefficients, and low-rank solution updates.
//
// At an inner node the coefficients are split into their block-diagonal
// parts plus low-rank off-diagonal remainders. The two diagonal subproblems
// are solved recursively, their solutions are embedded block-diagonally and
// the remainder is absorbed by a low-rank correction equation.

#include <string>
#include <vector>

#include "qme/hodlr.hpp"
#include "qme/lowrank.hpp"

namespace qme::dac {

struct DacConfig {
  Index n_min = 256;
  double tau_sigma = 1e-12;   // recompression threshold
  double tau_care = 1e-8;     // relative tolerance of the CARE correction solver
  double tau_uqme = 1e-8;     // relative tolerance of the UQME correction solver
  int t_max = 100;            // iteration budget of the correction solvers
  bool parallel_children = false;
  bool dense_fallback = false;  // solve a failing node densely instead of failing
};

/// One record per recursion node, in preorder.
struct NodeRecord {
  std::string path;  // "root", "root.1", "root.1.2", ...
  int depth = 0;
  Index size = 0;
  bool leaf = false;
  Index correction_rank = 0;
  int iterations = 0;
  double residual = 0.0;  // relative residual of the correction solve
  double seconds = 0.0;
  bool converged = true;  // false: stalled correction accepted within the residual budget
  bool fallback = false;
};

struct SolveReport {
  std::vector<NodeRecord> nodes;
  double seconds = 0.0;
  Index hodlr_rank = 0;
  int depth = 0;  // number of inner levels
};

struct DacResult {
  HodlrMatrix X;
  SolveReport report;
};

/// A^T X + X A - X B B^T X + Q = 0 (Q symmetric HODLR).
DacResult dac_care(const HodlrMatrix& A, const Matrix& B, const HodlrMatrix& Q, const DacConfig& cfg = {});

/// A^T X E + E^T X A - E^T X B B^T X E + Q = 0.
DacResult dac_gcare(const HodlrMatrix& A, const HodlrMatrix& E, const HodlrMatrix& Q, const Matrix& B,
                    const DacConfig& cfg = {});

/// Minimal solution of A X^2 + B X + C = 0. Leaves use cyclic reduction;
/// a leaf whose iteration fails reports SplitViolation.
DacResult dac_uqme(const HodlrMatrix& A, const HodlrMatrix& B, const HodlrMatrix& C,
                   const DacConfig& cfg = {});

/// X0 solves the CARE with (A - dA, F - dF, Q - dQ); A and B are the modified
/// coefficients with F = B B^T. Returns X0 + dX.
DacResult update_care_solution(const HodlrMatrix& X0, const HodlrMatrix& A, const Matrix& B,
                               const GenLowRank& dA, const SymLowRank& dF, const SymLowRank& dQ,
                               const DacConfig& cfg = {});

/// X0 is the minimal solution for (A - dA, B - dB, C - dC); A and B are the
/// modified coefficients. Returns X0 + dX.
DacResult update_uqme_solution(const HodlrMatrix& X0, const HodlrMatrix& A, const HodlrMatrix& B,
                               const GenLowRank& dA, const GenLowRank& dB, const GenLowRank& dC,
                               const DacConfig& cfg = {});

}  // namespace qme::dac
