#pragma once

// Residual metrics, benchmark runs and Matrix Market input for the test
// problem families.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "qme/dac.hpp"
#include "qme/problems.hpp"

namespace qme::bench {

/// ||R||_2 / ||X||_2, or ||R||_2 itself when X = 0 (absolute = true).
struct CareResidual {
  double value = 0.0;
  bool absolute = false;
};

/// Residual of A^T X E + E^T X A - E^T X B B^T X E + Q (E = I when absent),
/// estimated by Lanczos on the symmetric residual operator. X is applied
/// through `X` only; it is assumed symmetric.
CareResidual care_residual(const problems::CareProblem& p, const Applier& X, int iters = 60);
CareResidual care_residual(const problems::CareProblem& p, const HodlrMatrix& X, int iters = 60);
CareResidual care_residual(const problems::CareProblem& p, const Matrix& X, int iters = 60);

/// ||A X^2 + B X + C||_2 estimated by Lanczos on R^T R.
double uqme_residual(const problems::UqmeProblem& p, const Applier& X, const Applier& Xt, int iters = 60);
double uqme_residual(const problems::UqmeProblem& p, const HodlrMatrix& X, int iters = 60);
double uqme_residual(const problems::UqmeProblem& p, const Matrix& X, int iters = 60);

enum class Equation { Care, Uqme };

/// Problem selection. `family` is one of care-ex1, care-ex2, gcare-ex3,
/// dqbd-random, mass-spring or file; for file the coefficients are read
/// from the Matrix Market paths in `files` (A, B, Q[, E] or A, B, C).
struct ProblemSpec {
  std::string family;
  Index n = 0;
  std::uint64_t seed = 1;
  dac::DacConfig config;
  Equation file_equation = Equation::Care;
  std::vector<std::string> files;
};

Equation equation_of(const ProblemSpec& spec);
problems::CareProblem make_care(const ProblemSpec& spec);
problems::UqmeProblem make_uqme(const ProblemSpec& spec);

struct BenchRow {
  Index n = 0;
  std::string method;
  double time_s = 0.0;
  double res = 0.0;
  Index hodlr_rank = 0;
  int iterations = 0;
  bool res_absolute = false;
};

std::string csv_header();  // n,method,time_s,res,hodlr_rank,iterations
std::string csv_row(const BenchRow& row);

enum class Method { Dac, Dense, Update };
Method parse_method(const std::string& name);
std::string method_name(Method m);

struct BenchOutcome {
  BenchRow row;
  dac::SolveReport report;  // per-node records (empty for dense runs)
  HodlrMatrix X;
};

/// Runs one solve and measures it. Update mode solves a reference problem
/// whose coefficients differ by a seeded rank-one term, then updates to the
/// requested problem; the time covers the update only. Solver errors propagate.
BenchOutcome run_bench(const ProblemSpec& spec, Method method);

/// Dense reference solution of the problem in `spec`: "schur" for CARE and
/// GCARE, "cr" (cyclic reduction) or "eig" (companion eigenvectors) for UQME.
/// An empty name picks the first of these for the equation type.
Matrix oracle_solution(const ProblemSpec& spec, const std::string& oracle = {});

/// Coefficient tolerance that the residual of `spec` is held to (10 x tau).
double residual_budget(const ProblemSpec& spec);

// Matrix Market input and output.
Eigen::SparseMatrix<double> read_market(const std::string& path);
void write_market(const std::string& path, const Eigen::SparseMatrix<double>& M);

}  // namespace qme::bench
