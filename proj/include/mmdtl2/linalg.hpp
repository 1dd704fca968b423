#pragma once

// Dense row-major matrices and the handful of kernels the solvers need.
//
// Storage is row-major so that the row-major vec operator used by the
// transform derivation is a plain copy of the buffer.

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <vector>

#include "mmdtl2/error.hpp"

namespace mmdtl2::linalg {

using Vector = std::vector<double>;

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);
  static Matrix diagonal(std::span<const double> d);
  /// Builds a matrix whose columns are the given vectors (all of equal length).
  static Matrix from_columns(const std::vector<Vector>& columns);

  [[nodiscard]] std::size_t rows() const noexcept { return rows_; }
  [[nodiscard]] std::size_t cols() const noexcept { return cols_; }
  [[nodiscard]] std::size_t size() const noexcept { return values_.size(); }
  [[nodiscard]] bool empty() const noexcept { return values_.empty(); }

  double& operator()(std::size_t r, std::size_t c) noexcept { return values_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return values_[r * cols_ + c]; }

  [[nodiscard]] std::span<double> row(std::size_t r) noexcept { return {values_.data() + r * cols_, cols_}; }
  [[nodiscard]] std::span<const double> row(std::size_t r) const noexcept {
    return {values_.data() + r * cols_, cols_};
  }
  [[nodiscard]] Vector col(std::size_t c) const;
  void set_col(std::size_t c, std::span<const double> v);

  [[nodiscard]] std::span<double> values() noexcept { return values_; }
  [[nodiscard]] std::span<const double> values() const noexcept { return values_; }

  [[nodiscard]] Matrix transpose() const;
  /// Columns [first, first + count).
  [[nodiscard]] Matrix col_range(std::size_t first, std::size_t count) const;
  [[nodiscard]] Matrix select_cols(std::span<const std::size_t> indices) const;

  Matrix& operator+=(const Matrix& other);
  Matrix& operator-=(const Matrix& other);
  Matrix& operator*=(double s);

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  Vector values_;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(double s, Matrix a);

/// A * B
Matrix matmul(const Matrix& a, const Matrix& b);
/// A^T * B without forming A^T.
Matrix matmul_tn(const Matrix& a, const Matrix& b);
/// A * B^T without forming B^T.
Matrix matmul_nt(const Matrix& a, const Matrix& b);
/// A * x
Vector matvec(const Matrix& a, std::span<const double> x);
/// A^T * x
Vector matvec_t(const Matrix& a, std::span<const double> x);

double dot(std::span<const double> a, std::span<const double> b);
double squared_norm(std::span<const double> a);

/// Largest absolute entry. Every tolerance in the library is stated in this norm.
double norm_inf(const Matrix& a);
double norm_inf(std::span<const double> a);
double max_abs_diff(const Matrix& a, const Matrix& b);
double max_abs_diff(std::span<const double> a, std::span<const double> b);
double trace(const Matrix& a);
bool all_finite(std::span<const double> a);

/// (A + A^T) / 2
Matrix symmetrized(const Matrix& a);
/// Relative asymmetry max|A - A^T| / (1 + max|A|).
double asymmetry(const Matrix& a);

/// Lower-triangular Cholesky factor, A = L L^T.
struct Cholesky {
  Matrix lower;
};

/// Thrown by cholesky() when a non-positive pivot is met.
class NotPositiveDefinite : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

Cholesky cholesky(const Matrix& a);
/// Solves A X = B given the Cholesky factor of A.
Matrix solve_factored(const Cholesky& factor, const Matrix& b);
/// General square solve with partial pivoting (A need not be symmetric).
Matrix lu_solve(const Matrix& a, const Matrix& b);

// -- Deterministic random numbers --------------------------------------------
//
// SplitMix64 (Steele, Lea, Flood 2014):
//   state += 0x9E3779B97F4A7C15
//   z = state; z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//              z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//   return z ^ (z >> 31)
// uniform01 takes the top 53 bits; normals use the Box-Muller cosine branch
// with u1 drawn from (0, 1]. Standard library distributions are avoided
// because their output is implementation-defined.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}

  std::uint64_t next() noexcept;
  /// Uniform in [0, 1).
  double uniform01() noexcept;
  double normal(double mean = 0.0, double sd = 1.0) noexcept;
  /// Uniform integer in [0, bound).
  std::uint64_t below(std::uint64_t bound) noexcept;

  using result_type = std::uint64_t;
  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return ~result_type{0}; }
  result_type operator()() noexcept { return next(); }

 private:
  std::uint64_t state_;
};

enum class Distribution { uniform01, standard_normal };

Matrix seeded_fill(std::size_t rows, std::size_t cols, Distribution dist, std::uint64_t seed);

/// Fisher-Yates shuffle driven by SplitMix64::below.
void seeded_shuffle(std::span<std::size_t> items, SplitMix64& rng);

// -- Allocation guard ----------------------------------------------------------

class AllocationGuardViolation : public Error {
 public:
  using Error::Error;
};

/// While alive, any Matrix constructed on this thread whose rows AND cols both
/// exceed `max_square_side` throws AllocationGuardViolation. Guards nest; the
/// innermost limit applies.
class AllocationGuard {
 public:
  explicit AllocationGuard(std::size_t max_square_side);
  ~AllocationGuard();
  AllocationGuard(const AllocationGuard&) = delete;
  AllocationGuard& operator=(const AllocationGuard&) = delete;

  /// Largest min(rows, cols) seen while this guard was active.
  [[nodiscard]] std::size_t peak_square_side() const noexcept;

 private:
  std::size_t previous_limit_;
  std::size_t previous_peak_;
};

}  // namespace mmdtl2::linalg
