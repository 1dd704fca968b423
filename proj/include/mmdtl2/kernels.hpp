#pragma once

#include <span>
#include <string>
#include <string_view>

#include "mmdtl2/linalg.hpp"

namespace mmdtl2 {

using linalg::Matrix;
using linalg::Vector;

enum class KernelKind { linear, rbf, poly };

std::string_view to_string(KernelKind kind);
KernelKind parse_kernel_kind(std::string_view name);

/// rbf:  exp(-gamma * |x - z|^2)
/// poly: (gamma * <x, z> + coef0)^degree
struct KernelSpec {
  KernelKind kind = KernelKind::linear;
  double gamma = 0.0;  // 0 selects 1 / (augmented dimension) at use
  double coef0 = 1.0;
  int degree = 3;

  static KernelSpec linear() { return {}; }
  static KernelSpec rbf(double gamma) { return {KernelKind::rbf, gamma, 1.0, 3}; }
  static KernelSpec poly(double gamma, double coef0, int degree) { return {KernelKind::poly, gamma, coef0, degree}; }

  /// Copy with gamma resolved against the augmented input dimension.
  [[nodiscard]] KernelSpec resolved(std::size_t augmented_dim) const;
  void validate() const;
  [[nodiscard]] bool is_linear() const noexcept { return kind == KernelKind::linear; }

  friend bool operator==(const KernelSpec&, const KernelSpec&) = default;
};

double kernel_eval(const KernelSpec& spec, std::span<const double> x, std::span<const double> z);

/// Gram matrix over the columns of `samples`. Upper triangle is evaluated and
/// mirrored, so the result is exactly symmetric.
Matrix gram(const KernelSpec& spec, const Matrix& samples);

/// K(i, j) = k(a_i, b_j) for the columns of a and b.
Matrix cross_gram(const KernelSpec& spec, const Matrix& a, const Matrix& b);

/// Vector of k(sample_m, x) over the columns of `samples`.
Vector kernel_column(const KernelSpec& spec, const Matrix& samples, std::span<const double> x);

// -- Regularized operators -----------------------------------------------------

struct SpdSolveResult {
  Matrix solution;
  double jitter = 0.0;  // diagonal shift that was finally used
  int retries = 0;
};

/// Cholesky solve. On factorization failure the diagonal is shifted by
/// 1e-10 * trace / n, growing tenfold, for at most three retries.
SpdSolveResult spd_solve(const Matrix& a, const Matrix& b);

enum class GCase { inverse_gram, woodbury, dense_A };
std::string_view to_string(GCase c);

struct GOperator {
  Matrix G;  // M x M, symmetrized
  GCase case_used = GCase::woodbury;
  double jitter = 0.0;
  int retries = 0;
  /// A^{-1} X_t, only filled on the dense path: (L_t + 1) x M.
  Matrix a_inverse_targets;
};

/// Selects the Woodbury case when every S_M entry is positive, else the dense
/// A = c_f I + X_t S_M X_t^T case when the explicit augmented targets are given,
/// else throws. `force_dense` takes the dense case whenever X_t is available.
GOperator compute_G(const Matrix& gram_targets, std::span<const double> s_m, double c_f,
                    const Matrix* explicit_targets = nullptr, bool force_dense = false);

/// (c_f K^{-1} + S_M)^{-1}; cross-check path for tests, requires K invertible.
GOperator compute_G_inverse_gram(const Matrix& gram_targets, std::span<const double> s_m, double c_f);

struct TOperator {
  Matrix T;  // M x M
  double jitter = 0.0;
  int retries = 0;
  /// max |(c_f I + K S_M) T - I|; zero in exact arithmetic.
  double residual = 0.0;
};

/// T = (1/c_f) I - (1/c_f^2) K (S_M^{-1} + K / c_f)^{-1}. Requires S_M > 0.
TOperator compute_T(const Matrix& gram_targets, std::span<const double> s_m, double c_f);

/// T = (c_f I + K S_M)^{-1} by pivoted LU. Agrees with compute_T whenever S_M is
/// invertible and also covers singular S_M (used with the dense G case).
TOperator compute_T_direct(const Matrix& gram_targets, std::span<const double> s_m, double c_f);

/// max |(c_f I + K S_M) T - I|
double t_operator_residual(const Matrix& gram_targets, std::span<const double> s_m, double c_f, const Matrix& t);

}  // namespace mmdtl2
