#pragma once

#include <span>
#include <vector>

#include "mmdtl2/dataset.hpp"

namespace mmdtl2 {

/// minimize 1/2 a^T Q a - l^T a  subject to 0 <= a <= upper.
struct BoxQP {
  Matrix Q;
  Vector l;
  double upper = 1.0;

  /// Validates shapes and finiteness and symmetrizes Q.
  static BoxQP make(Matrix Q, Vector l, double upper);
  [[nodiscard]] std::size_t size() const noexcept { return l.size(); }
};

struct QpOptions {
  double tol = 1e-8;
  int max_sweeps = 10000;
};

struct QpResult {
  Vector a;
  bool converged = false;
  int sweeps = 0;
  /// Minimization objective after every sweep.
  std::vector<double> objective_trace;
};

/// Projected cyclic coordinate descent from a = 0, ascending index order.
QpResult solve_box_qp(const BoxQP& problem, const QpOptions& options = {});

/// Largest violation of the box KKT conditions at a feasible a.
double kkt_residual(const BoxQP& problem, std::span<const double> a);

/// -(1/2 a^T Q a - l^T a): the value of the maximization form.
double dual_objective(const BoxQP& problem, std::span<const double> a);

/// Dual variables with their M x K reshapes: Lambda(m, k) = a[k M + m],
/// Upsilon(m, k) = y_km.
struct DualSolution {
  Vector a;
  Matrix Lambda;
  Matrix Upsilon;
  bool converged = false;
  int sweeps = 0;
};

DualSolution make_dual_solution(Vector a, const OvrLabelMatrix& labels);

}  // namespace mmdtl2
