#include "mmdtl2/kernels.hpp"

#include <algorithm>
#include <cmath>

namespace mmdtl2 {

std::string_view to_string(KernelKind kind) {
  switch (kind) {
    case KernelKind::linear: return "linear";
    case KernelKind::rbf: return "rbf";
    case KernelKind::poly: return "poly";
  }
  return "?";
}

KernelKind parse_kernel_kind(std::string_view name) {
  if (name == "linear") return KernelKind::linear;
  if (name == "rbf") return KernelKind::rbf;
  if (name == "poly") return KernelKind::poly;
  throw InputError("unknown kernel '" + std::string(name) + "' (expected linear, rbf or poly)");
}

std::string_view to_string(GCase c) {
  switch (c) {
    case GCase::inverse_gram: return "inverse_gram";
    case GCase::woodbury: return "woodbury";
    case GCase::dense_A: return "dense_A";
  }
  return "?";
}

KernelSpec KernelSpec::resolved(std::size_t augmented_dim) const {
  KernelSpec out = *this;
  if (kind != KernelKind::linear && out.gamma == 0.0) out.gamma = 1.0 / static_cast<double>(augmented_dim);
  return out;
}

void KernelSpec::validate() const {
  if (kind == KernelKind::linear) return;
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw InputError("kernel: gamma must be >= 0 (0 selects 1 / dimension)");
  if (kind == KernelKind::poly) {
    if (degree < 1) throw InputError("kernel: poly degree must be a positive integer");
    if (!std::isfinite(coef0)) throw InputError("kernel: coef0 must be finite");
  }
}

double kernel_eval(const KernelSpec& spec, std::span<const double> x, std::span<const double> z) {
  if (x.size() != z.size()) {
    throw InputError("kernel_eval: length mismatch " + std::to_string(x.size()) + " vs " + std::to_string(z.size()));
  }
  switch (spec.kind) {
    case KernelKind::linear: return linalg::dot(x, z);
    case KernelKind::rbf: {
      double d2 = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) d2 += (x[i] - z[i]) * (x[i] - z[i]);
      return std::exp(-spec.gamma * d2);
    }
    case KernelKind::poly: return std::pow(spec.gamma * linalg::dot(x, z) + spec.coef0, spec.degree);
  }
  return 0.0;
}

Matrix gram(const KernelSpec& spec, const Matrix& samples) {
  const std::size_t n = samples.cols();
  if (spec.is_linear()) {
    Matrix g = linalg::matmul_tn(samples, samples);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) g(j, i) = g(i, j);
    return g;
  }
  const Matrix by_sample = samples.transpose();
  Matrix g(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      const double v = kernel_eval(spec, by_sample.row(i), by_sample.row(j));
      g(i, j) = v;
      g(j, i) = v;
    }
  }
  return g;
}

Matrix cross_gram(const KernelSpec& spec, const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) throw InputError("cross_gram: sample dimensions differ");
  if (spec.is_linear()) return linalg::matmul_tn(a, b);
  const Matrix at = a.transpose();
  const Matrix bt = b.transpose();
  Matrix g(a.cols(), b.cols());
  for (std::size_t i = 0; i < a.cols(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) g(i, j) = kernel_eval(spec, at.row(i), bt.row(j));
  return g;
}

Vector kernel_column(const KernelSpec& spec, const Matrix& samples, std::span<const double> x) {
  if (samples.rows() != x.size()) throw InputError("kernel_column: sample dimension mismatch");
  if (spec.is_linear()) return linalg::matvec_t(samples, x);
  Vector out(samples.cols());
  Vector column(samples.rows());
  for (std::size_t m = 0; m < samples.cols(); ++m) {
    for (std::size_t d = 0; d < samples.rows(); ++d) column[d] = samples(d, m);
    out[m] = kernel_eval(spec, column, x);
  }
  return out;
}

SpdSolveResult spd_solve(const Matrix& a, const Matrix& b) {
  if (a.rows() != a.cols()) throw InputError("spd_solve: matrix not square");
  if (!linalg::all_finite(a.values()) || !linalg::all_finite(b.values())) {
    throw NumericalError("spd_solve: non-finite input");
  }
  const std::size_t n = a.rows();
  if (n == 0) return {b, 0.0, 0};
  const double tr = linalg::trace(a);
  const double base = tr > 0.0 ? 1e-10 * tr / static_cast<double>(n) : 1e-10;
  constexpr int kMaxRetries = 3;

  double jitter = 0.0;
  for (int attempt = 0; attempt <= kMaxRetries; ++attempt) {
    Matrix shifted = a;
    for (std::size_t i = 0; i < n; ++i) shifted(i, i) += jitter;
    try {
      const auto factor = linalg::cholesky(shifted);
      return {linalg::solve_factored(factor, b), jitter, attempt};
    } catch (const linalg::NotPositiveDefinite&) {
      jitter = attempt == 0 ? base : jitter * 10.0;
    }
  }
  throw NumericalError("spd_solve: matrix not positive definite after jitter " + std::to_string(jitter / 10.0));
}

namespace {

void check_operator_inputs(const Matrix& k, std::span<const double> s_m, double c_f) {
  if (k.rows() != k.cols()) throw InputError("kernel matrix must be square");
  if (s_m.size() != k.rows()) throw InputError("S_M length does not match the kernel matrix");
  if (!(c_f > 0.0) || !std::isfinite(c_f)) throw InputError("c_f must be > 0");
}

bool all_positive(std::span<const double> s) {
  return std::all_of(s.begin(), s.end(), [](double v) { return v > 0.0; });
}

/// (S_M^{-1} + K / c_f)^{-1} K
SpdSolveResult woodbury_core(const Matrix& k, std::span<const double> s_m, double c_f) {
  const std::size_t m = k.rows();
  Matrix b(m, m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) b(i, j) = k(i, j) / c_f + (i == j ? 1.0 / s_m[i] : 0.0);
  return spd_solve(b, k);
}

}  // namespace

GOperator compute_G(const Matrix& k, std::span<const double> s_m, double c_f, const Matrix* explicit_targets,
                    bool force_dense) {
  check_operator_inputs(k, s_m, c_f);
  const std::size_t m = k.rows();
  GOperator out;

  if (all_positive(s_m) && !(force_dense && explicit_targets != nullptr)) {
    auto core = woodbury_core(k, s_m, c_f);
    const Matrix kz = linalg::matmul(k, core.solution);
    Matrix g(m, m);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < m; ++j) g(i, j) = k(i, j) / c_f - kz(i, j) / (c_f * c_f);
    out.G = linalg::symmetrized(g);
    out.case_used = GCase::woodbury;
    out.jitter = core.jitter;
    out.retries = core.retries;
    return out;
  }

  if (explicit_targets == nullptr) {
    throw InputError(
        "compute_G: S_M has zero entries and no explicit target matrix is available; kernel mode needs c_d > 0 "
        "and every target class present in the source data");
  }
  const Matrix& x = *explicit_targets;
  if (x.cols() != m) throw InputError("compute_G: explicit targets do not match the kernel matrix");
  const std::size_t d = x.rows();
  Matrix xs = x;
  for (std::size_t r = 0; r < d; ++r)
    for (std::size_t c = 0; c < m; ++c) xs(r, c) *= s_m[c];
  Matrix a = linalg::matmul_nt(xs, x);
  for (std::size_t i = 0; i < d; ++i) a(i, i) += c_f;
  auto solved = spd_solve(a, x);
  out.G = linalg::symmetrized(linalg::matmul_tn(x, solved.solution));
  out.case_used = GCase::dense_A;
  out.jitter = solved.jitter;
  out.retries = solved.retries;
  out.a_inverse_targets = std::move(solved.solution);
  return out;
}

GOperator compute_G_inverse_gram(const Matrix& k, std::span<const double> s_m, double c_f) {
  check_operator_inputs(k, s_m, c_f);
  const std::size_t m = k.rows();
  auto k_inv = spd_solve(k, Matrix::identity(m));
  Matrix inner = c_f * linalg::symmetrized(k_inv.solution);
  for (std::size_t i = 0; i < m; ++i) inner(i, i) += s_m[i];
  auto g = spd_solve(inner, Matrix::identity(m));
  GOperator out;
  out.G = linalg::symmetrized(g.solution);
  out.case_used = GCase::inverse_gram;
  out.jitter = std::max(k_inv.jitter, g.jitter);
  out.retries = k_inv.retries + g.retries;
  return out;
}

double t_operator_residual(const Matrix& k, std::span<const double> s_m, double c_f, const Matrix& t) {
  const std::size_t m = k.rows();
  Matrix op(m, m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) op(i, j) = k(i, j) * s_m[j] + (i == j ? c_f : 0.0);
  Matrix prod = linalg::matmul(op, t);
  for (std::size_t i = 0; i < m; ++i) prod(i, i) -= 1.0;
  return linalg::norm_inf(prod);
}

TOperator compute_T(const Matrix& k, std::span<const double> s_m, double c_f) {
  check_operator_inputs(k, s_m, c_f);
  if (!all_positive(s_m)) {
    throw InputError("compute_T: S_M is singular; use c_d > 0 with every target class present in the source data");
  }
  const std::size_t m = k.rows();
  auto core = woodbury_core(k, s_m, c_f);
  // K (S_M^{-1} + K/c_f)^{-1} = (core)^T because both factors are symmetric.
  TOperator out;
  out.T = Matrix(m, m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j)
      out.T(i, j) = (i == j ? 1.0 / c_f : 0.0) - core.solution(j, i) / (c_f * c_f);
  out.jitter = core.jitter;
  out.retries = core.retries;
  out.residual = t_operator_residual(k, s_m, c_f, out.T);
  return out;
}

TOperator compute_T_direct(const Matrix& k, std::span<const double> s_m, double c_f) {
  check_operator_inputs(k, s_m, c_f);
  const std::size_t m = k.rows();
  Matrix op(m, m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) op(i, j) = k(i, j) * s_m[j] + (i == j ? c_f : 0.0);
  TOperator out;
  out.T = linalg::lu_solve(op, Matrix::identity(m));
  out.residual = t_operator_residual(k, s_m, c_f, out.T);
  return out;
}

}  // namespace mmdtl2
