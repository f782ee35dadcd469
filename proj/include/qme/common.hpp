#pragma once

#include <chrono>
#include <complex>
#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Dense>

namespace qme {

using Index = Eigen::Index;
using Complex = std::complex<double>;

template <typename T>
using MatrixX = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <typename T>
using VectorX = Eigen::Matrix<T, Eigen::Dynamic, 1>;

using Matrix = MatrixX<double>;
using Vector = VectorX<double>;
using CMatrix = MatrixX<Complex>;

enum class ErrorCode {
  DimensionMismatch,
  NoStabilizingSolution,
  LyapunovSingular,
  SdaNotConverged,
  SingularPivot,
  CrNotConverged,
  SplitViolation,
  SingularEigenbasis,
  SingularOperator,
  LeafNotSplittable,
  MaxIterations,
  CompressedCareFailure,
  SingularShift,
  SingularCapacitance,
  SingularCoefficient,
  SingularShiftedOperator,
  Breakdown,
  SingularMassMatrix,
  InvalidInput,
};

std::string_view to_string(ErrorCode code);

/// True for error codes that signal a violated structural precondition
/// (as opposed to an iteration that ran out of budget).
bool is_structural(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what, std::string path = {});

  ErrorCode code() const noexcept { return code_; }
  /// Recursion path of the divide-and-conquer node that failed, if any.
  const std::string& path() const noexcept { return path_; }

  Error with_path(const std::string& path) const;

 private:
  ErrorCode code_;
  std::string path_;
};

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

inline void require_dims(bool ok, const char* what) {
  if (!ok) throw Error(ErrorCode::DimensionMismatch, what);
}

}  // namespace qme
