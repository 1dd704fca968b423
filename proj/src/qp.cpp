#include "mmdtl2/qp.hpp"

#include <algorithm>
#include <cmath>

namespace mmdtl2 {

namespace {

constexpr double kFlatCurvature = 1e-14;

double minimization_objective(const BoxQP& p, std::span<const double> a, std::span<const double> grad) {
  // With g = Q a - l:  1/2 a^T Q a - l^T a = 1/2 a^T g - 1/2 l^T a.
  double v = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) v += 0.5 * a[i] * grad[i] - 0.5 * p.l[i] * a[i];
  return v;
}

}  // namespace

BoxQP BoxQP::make(Matrix Q, Vector l, double upper) {
  if (Q.rows() != Q.cols() || Q.rows() != l.size()) throw InputError("BoxQP: Q must be square and match l");
  if (!(upper > 0.0) || !std::isfinite(upper)) throw InputError("BoxQP: upper bound must be > 0");
  if (!linalg::all_finite(Q.values()) || !linalg::all_finite(l)) throw NumericalError("BoxQP: non-finite entries");
  return {linalg::symmetrized(Q), std::move(l), upper};
}

QpResult solve_box_qp(const BoxQP& p, const QpOptions& options) {
  const std::size_t n = p.size();
  if (!linalg::all_finite(p.Q.values()) || !linalg::all_finite(p.l)) {
    throw NumericalError("solve_box_qp: non-finite entries");
  }
  QpResult out;
  out.a.assign(n, 0.0);
  Vector grad(n);
  for (std::size_t i = 0; i < n; ++i) grad[i] = -p.l[i];

  for (int sweep = 1; sweep <= options.max_sweeps; ++sweep) {
    out.sweeps = sweep;
    double max_change = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double qii = p.Q(i, i);
      const double old = out.a[i];
      double updated = old;
      if (qii <= kFlatCurvature) {
        // Linear along this coordinate: move to the bound the slope points at.
        if (grad[i] > 0.0) updated = 0.0;
        else if (grad[i] < 0.0) updated = p.upper;
      } else {
        updated = std::clamp(old - grad[i] / qii, 0.0, p.upper);
      }
      const double delta = updated - old;
      if (delta == 0.0) continue;
      out.a[i] = updated;
      const auto qi = p.Q.row(i);
      for (std::size_t j = 0; j < n; ++j) grad[j] += delta * qi[j];
      max_change = std::max(max_change, std::abs(delta));
    }
    out.objective_trace.push_back(minimization_objective(p, out.a, grad));
    if (max_change < options.tol) {
      out.converged = true;
      break;
    }
  }
  return out;
}

double kkt_residual(const BoxQP& p, std::span<const double> a) {
  if (a.size() != p.size()) throw InputError("kkt_residual: length mismatch");
  const Vector qa = linalg::matvec(p.Q, a);
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] < 0.0 || a[i] > p.upper) throw InputError("kkt_residual: a is outside the box");
    const double g = qa[i] - p.l[i];
    double r = 0.0;
    if (a[i] == 0.0) r = std::max(0.0, -g);
    else if (a[i] == p.upper) r = std::max(0.0, g);
    else r = std::abs(g);
    worst = std::max(worst, r);
  }
  return worst;
}

double dual_objective(const BoxQP& p, std::span<const double> a) {
  if (a.size() != p.size()) throw InputError("dual_objective: length mismatch");
  const Vector qa = linalg::matvec(p.Q, a);
  return -(0.5 * linalg::dot(a, qa) - linalg::dot(p.l, a));
}

DualSolution make_dual_solution(Vector a, const OvrLabelMatrix& labels) {
  const std::size_t K = labels.class_count();
  const std::size_t M = labels.sample_count();
  if (a.size() != K * M) throw InputError("make_dual_solution: a has the wrong length");
  DualSolution out;
  out.Lambda = Matrix(M, K);
  out.Upsilon = Matrix(M, K);
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t m = 0; m < M; ++m) {
      out.Lambda(m, k) = a[k * M + m];
      out.Upsilon(m, k) = labels.at(k, m);
    }
  }
  out.a = std::move(a);
  return out;
}

}  // namespace mmdtl2
