#pragma once

// Max-margin transform learning with class-anchoring L2 terms.
//
// The W-subproblem
//   min_W  1/2 c_f |W|_F^2 + c_T sum_km hinge_km(W) + 1/2 sum_nm s_nm |W x_m - x_n|^2
// is solved through its KM-variable box-constrained dual. The optimum is kept
// in factored form W x = R T k(x), with R = X_s S + Theta (Upsilon .* Lambda)^T
// (L_s x M) and T an M x M operator, so no matrix with a feature-dimension
// squared footprint is ever built.

#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "mmdtl2/dataset.hpp"
#include "mmdtl2/kernels.hpp"
#include "mmdtl2/qp.hpp"
#include "mmdtl2/svm.hpp"

namespace mmdtl2 {

enum class Mode { mmdtl2, mmdt };
std::string_view to_string(Mode mode);
Mode parse_mode(std::string_view name);

struct AdaptParams {
  Mode mode = Mode::mmdtl2;
  double c_f = 0.1;
  double c_t = 0.1;
  double c_s = 0.1;
  double c_d = 0.1;
  /// Hinge weight of the W-subproblem; follows c_t when unset.
  std::optional<double> c_T;
  KernelSpec kernel;
  int iterations = 5;
  double early_stop = 1e-4;
  QpOptions qp;
  SvmOptions svm;
  std::uint64_t seed = 0;
  /// Linear kernel only: build A = c_f I + X_t S_M X_t^T and W explicitly
  /// instead of going through the M x M operators.
  bool explicit_linear = false;

  static AdaptParams mmdtl2_defaults();
  static AdaptParams mmdt_defaults();

  /// mmdt mode pins c_f = 1 and c_d = 0; c_T is resolved.
  [[nodiscard]] AdaptParams effective() const;
  [[nodiscard]] double hinge_weight() const { return c_T.value_or(c_t); }
  void validate() const;
};

/// Counters for the numerical guards triggered during a solve.
struct NumericalEvents {
  int jitter_events = 0;        // SPD solves that needed a diagonal shift
  double max_jitter = 0.0;
  int instability_events = 0;   // T operator residual above kInstabilityThreshold
  double max_residual = 0.0;
  int qp_unconverged = 0;

  static constexpr double kInstabilityThreshold = 1e-6;

  void merge(const NumericalEvents& other);
  [[nodiscard]] int total() const noexcept { return jitter_events + instability_events + qp_unconverged; }
};

struct TransformModel {
  Matrix R;        // L_s x M
  Matrix T;        // M x M
  Matrix targets;  // L_t x M, not augmented
  KernelSpec kernel;  // gamma resolved
  std::optional<Matrix> W_explicit;  // L_s x (L_t + 1)

  [[nodiscard]] std::size_t source_dim() const noexcept { return R.rows(); }
  [[nodiscard]] std::size_t target_dim() const noexcept { return targets.rows(); }
  [[nodiscard]] std::size_t anchor_count() const noexcept { return targets.cols(); }
};

/// Q block (k, k') = y y' (theta_k^T theta_k') G and
/// l = 1 - Y b_tilde - Y vec(Theta^T X_s S G), all k-major.
BoxQP build_dual(const HyperplaneStack& h, const DomainDataset& source, const OvrLabelMatrix& y,
                 const WeightModel& weights, const Matrix& G, double c_T);

/// R = X_s S + Theta (Upsilon .* Lambda)^T
Matrix compute_R(const HyperplaneStack& h, const DomainDataset& source, const WeightModel& weights,
                 const DualSolution& dual);

/// -1/2 tr(P G P^T) + 1/2 sum_n s_n |x_n|^2 with P = X_s S: the part of the
/// Lagrangian that does not depend on a.
double dual_constant(const DomainDataset& source, const WeightModel& weights, const Matrix& G);

struct WStepResult {
  DualSolution dual;
  TransformModel transform;
  GOperator G;
  Matrix gram;  // K_t over the augmented targets
  BoxQP problem;
  double kkt = 0.0;
  double dual_value = 0.0;    // full Lagrangian value at a
  double primal_value = 0.0;  // W-subproblem objective at the retrieved W
  NumericalEvents events;
};

WStepResult solve_w_subproblem(const HyperplaneStack& h, const DomainDataset& source, const DomainDataset& targets,
                               const WeightModel& weights, const AdaptParams& params);

/// W-subproblem objective of an arbitrary transform against the given
/// hyperplanes and anchoring weights.
double w_subproblem_objective(const TransformModel& model, const HyperplaneStack& h, const DomainDataset& source,
                              const DomainDataset& targets, const WeightModel& weights, double c_f, double c_T);

/// L_s x (L_t + 1); linear kernel only.
Matrix materialize_W(const TransformModel& model);

Vector transform_sample(const TransformModel& model, std::span<const double> x);
/// Columns of x (L_t x n, not augmented) mapped to source space: L_s x n.
Matrix transform_columns(const TransformModel& model, const Matrix& x);

struct AdaptedModel {
  TransformModel transform;
  HyperplaneStack hyperplanes;
  int class_count = 0;
  Mode mode = Mode::mmdtl2;
  AdaptParams params;
};

struct IterationLog {
  int iteration = 0;
  double w_objective = 0.0;
  double dual_value = 0.0;
  /// Objective of the previous iterate's W under this iteration's hyperplanes.
  std::optional<double> previous_w_objective;
  double kkt = 0.0;
  int qp_sweeps = 0;
  bool qp_converged = false;
  GCase g_case = GCase::woodbury;
};

struct FitStats {
  std::vector<IterationLog> log;
  int init_svm_solves = 0;
  int w_solves = 0;
  int svm_solves = 0;
  NumericalEvents events;
  std::size_t peak_square_side = 0;
};

/// Alternates W-steps and hyperplane steps, starting from the source-only SVM.
AdaptedModel fit(const DomainDataset& source, const DomainDataset& target, const AdaptParams& params,
                 FitStats* stats = nullptr);

int predict(const AdaptedModel& model, std::span<const double> x);
std::vector<int> predict_all(const AdaptedModel& model, const Matrix& x);

}  // namespace mmdtl2
