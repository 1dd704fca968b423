#pragma once

#include <span>
#include <vector>

#include "mmdtl2/dataset.hpp"

namespace mmdtl2 {

/// K one-vs-rest hyperplanes in source space: column k of `theta` and bias[k].
struct HyperplaneStack {
  Matrix theta;  // L_s x K
  Vector bias;   // K

  [[nodiscard]] std::size_t dim() const noexcept { return theta.rows(); }
  [[nodiscard]] std::size_t class_count() const noexcept { return bias.size(); }
  /// b repeated M times per class, k-major.
  [[nodiscard]] Vector b_tilde(std::size_t m) const;
};

/// Samples with a per-sample hinge weight C_i (the box bound of its dual variable).
struct WeightedTrainSet {
  Matrix features;  // L x count, not augmented
  std::vector<int> labels;
  Vector C;
};

struct SvmOptions {
  double tol = 1e-6;
  int max_sweeps = 1000;
};

struct BinarySvmResult {
  Vector w_hat;   // L + 1, weights followed by bias
  Vector alpha;   // one per sample, 0 <= alpha_i <= C_i
  int sweeps = 0;
  bool converged = false;
};

/// min 1/2 |w_hat|^2 + sum_i C_i max(0, 1 - y_i w_hat^T x_hat_i), y in {-1, +1}.
/// `samples` is sample-major: row i is x_i (not augmented).
BinarySvmResult train_binary_svm(const Matrix& samples, std::span<const double> y, std::span<const double> C,
                                 const SvmOptions& options = {});

double binary_primal_objective(const Matrix& samples, std::span<const double> y, std::span<const double> C,
                               std::span<const double> w_hat);
double binary_dual_objective(const Matrix& samples, std::span<const double> y, std::span<const double> alpha);

struct SvmTrainReport {
  std::vector<BinarySvmResult> per_class;
};

/// One independent bias-regularized binary problem per class.
HyperplaneStack train_weighted_ovr(const WeightedTrainSet& train, int class_count, const SvmOptions& options = {},
                                   SvmTrainReport* report = nullptr);

HyperplaneStack init_source_svm(const DomainDataset& source, double c_s, const SvmOptions& options = {});

/// sum_{k,m} max(0, 1 - y_km (theta_k^T z_m + b_k)) over columns z_m.
double hinge_loss_target(const HyperplaneStack& h, const Matrix& transformed_targets, const OvrLabelMatrix& y);
double hinge_loss_source(const HyperplaneStack& h, const DomainDataset& source);

/// v_k = theta_k^T x + b_k
Vector decision_values(const HyperplaneStack& h, std::span<const double> x);

/// Index (1-based) of the largest value; ties go to the smallest class id.
int argmax_class(std::span<const double> values);

}  // namespace mmdtl2
