#pragma once

// Test problem generators. All coefficients are banded.

#include <cstdint>
#include <optional>
#include <random>
#include <string>

#include "qme/banded.hpp"

namespace qme::problems {

/// Portable generator: mt19937_64 words mapped to [0, 1) via the top 53
/// bits, normals by Box-Muller. The sequence depends only on the seed.
class PortableRng {
 public:
  explicit PortableRng(std::uint64_t seed) : engine_(seed) {}
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double normal();

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// A^T X E + E^T X A - E^T X B B^T X E + Q = 0 (E absent for a standard CARE).
struct CareProblem {
  std::string family;
  BandedMatrix A{0, 0, 0};
  std::optional<BandedMatrix> E;
  Matrix B;
  BandedMatrix Q{0, 0, 0};
  Index rows() const { return A.rows(); }
};

/// A X^2 + B X + C = 0, minimal solution wanted.
struct UqmeProblem {
  std::string family;
  BandedMatrix A{0, 0, 0};
  BandedMatrix B{0, 0, 0};
  BandedMatrix C{0, 0, 0};
  Index rows() const { return A.rows(); }
};

/// A = tridiag(1, -2, 1), B n x 2 standard normal, Q = Q0 + (0.1 - theta) I
/// with Q0 symmetric tridiagonal standard normal and theta = lambda_min(Q0).
/// Draw order: B column by column, then diag(Q0), then the off-diagonal.
CareProblem care_ex1(Index n, std::uint64_t seed);

/// Second-order system A = [0 M; I -I] (M = tridiag(1,-2,1)/4 - (e1 e1^T + eh eh^T)/2,
/// h = n/2), B = [e_{h+1}, -e_n]/4, Q = I, stabilized with X0 = Z0 Z0^T:
///   A~ = A - B B^T X0,  Q~ = Q + A^T X0 + X0 A - X0 B B^T X0,
/// scaled by s = ||A||_2 (A~/s, Q~/s, B/sqrt(s)) and reordered by the perfect
/// shuffle i -> 2i, h + i -> 2i + 1. The unknown is X - X0.
CareProblem care_ex2(Index n);

/// Stand-in for a tridiagonal GCARE from a 1D finite element model, h = 1/(n+1):
/// E = (h/6) tridiag(1, 4, 1), A = (1/h) tridiag(1, -2, 1), B = h * ones(n, 1), Q = I.
CareProblem gcare_ex3(Index n);

/// Random discrete-time quasi-birth-death process: A, B', C tridiagonal with
/// U[0,1] entries, rows of A + B' + C scaled to sum 1, B = B' - I. Draw order:
/// A, B', C, each row by row over columns i-1, i, i+1.
UqmeProblem dqbd(Index n, std::uint64_t seed);

/// Damped mass-spring system: A = I, B = tridiag(-10, 30, -10) with corner
/// diagonal entries 20, C = tridiag(-5, 15, -5).
UqmeProblem mass_spring(Index n);

}  // namespace qme::problems
