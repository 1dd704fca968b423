#include "mmdtl2/svm.hpp"

#include <algorithm>
#include <cmath>

namespace mmdtl2 {

Vector HyperplaneStack::b_tilde(std::size_t m) const {
  Vector out;
  out.reserve(bias.size() * m);
  for (double b : bias) out.insert(out.end(), m, b);
  return out;
}

BinarySvmResult train_binary_svm(const Matrix& samples, std::span<const double> y, std::span<const double> C,
                                 const SvmOptions& options) {
  const std::size_t n = samples.rows();
  const std::size_t d = samples.cols();
  if (y.size() != n || C.size() != n) throw InputError("train_binary_svm: label or weight count mismatch");
  for (double c : C)
    if (!(c > 0.0) || !std::isfinite(c)) throw InputError("train_binary_svm: per-sample C must be > 0");

  BinarySvmResult out;
  out.w_hat.assign(d + 1, 0.0);
  out.alpha.assign(n, 0.0);
  Vector qdiag(n);
  for (std::size_t i = 0; i < n; ++i) qdiag[i] = linalg::squared_norm(samples.row(i)) + 1.0;

  auto& w = out.w_hat;
  for (out.sweeps = 1; out.sweeps <= options.max_sweeps; ++out.sweeps) {
    double max_change = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto x = samples.row(i);
      double margin = w[d];
      for (std::size_t j = 0; j < d; ++j) margin += w[j] * x[j];
      const double grad = y[i] * margin - 1.0;
      const double old = out.alpha[i];
      const double updated = std::clamp(old - grad / qdiag[i], 0.0, C[i]);
      const double delta = updated - old;
      if (delta == 0.0) continue;
      out.alpha[i] = updated;
      const double step = delta * y[i];
      for (std::size_t j = 0; j < d; ++j) w[j] += step * x[j];
      w[d] += step;
      max_change = std::max(max_change, std::abs(delta));
    }
    if (max_change < options.tol) {
      out.converged = true;
      break;
    }
  }
  out.sweeps = std::min(out.sweeps, options.max_sweeps);
  return out;
}

double binary_primal_objective(const Matrix& samples, std::span<const double> y, std::span<const double> C,
                               std::span<const double> w_hat) {
  const std::size_t d = samples.cols();
  double obj = 0.5 * linalg::squared_norm(w_hat);
  for (std::size_t i = 0; i < samples.rows(); ++i) {
    double margin = w_hat[d] + linalg::dot(samples.row(i), w_hat.first(d));
    obj += C[i] * std::max(0.0, 1.0 - y[i] * margin);
  }
  return obj;
}

double binary_dual_objective(const Matrix& samples, std::span<const double> y, std::span<const double> alpha) {
  const std::size_t d = samples.cols();
  Vector w(d + 1, 0.0);
  double sum_alpha = 0.0;
  for (std::size_t i = 0; i < samples.rows(); ++i) {
    sum_alpha += alpha[i];
    const auto x = samples.row(i);
    for (std::size_t j = 0; j < d; ++j) w[j] += alpha[i] * y[i] * x[j];
    w[d] += alpha[i] * y[i];
  }
  return sum_alpha - 0.5 * linalg::squared_norm(w);
}

HyperplaneStack train_weighted_ovr(const WeightedTrainSet& train, int class_count, const SvmOptions& options,
                                   SvmTrainReport* report) {
  const std::size_t n = train.labels.size();
  if (train.features.cols() != n || train.C.size() != n) {
    throw InputError("train_weighted_ovr: features, labels and weights disagree in count");
  }
  if (class_count < 1) throw InputError("train_weighted_ovr: class count must be >= 1");
  const Matrix samples = train.features.transpose();
  const std::size_t d = train.features.rows();
  const auto K = static_cast<std::size_t>(class_count);

  HyperplaneStack h{Matrix(d, K), Vector(K, 0.0)};
  if (report) report->per_class.clear();
  Vector y(n);
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t i = 0; i < n; ++i) y[i] = train.labels[i] == static_cast<int>(k + 1) ? 1.0 : -1.0;
    auto result = train_binary_svm(samples, y, train.C, options);
    for (std::size_t j = 0; j < d; ++j) h.theta(j, k) = result.w_hat[j];
    h.bias[k] = result.w_hat[d];
    if (report) report->per_class.push_back(std::move(result));
  }
  return h;
}

HyperplaneStack init_source_svm(const DomainDataset& source, double c_s, const SvmOptions& options) {
  if (source.class_count < 2) throw InputError("init_source_svm: need at least two classes");
  WeightedTrainSet train{source.features, source.labels, Vector(source.count(), c_s)};
  return train_weighted_ovr(train, source.class_count, options);
}

double hinge_loss_target(const HyperplaneStack& h, const Matrix& z, const OvrLabelMatrix& y) {
  if (z.rows() != h.dim()) throw InputError("hinge_loss_target: dimension mismatch");
  if (y.class_count() != h.class_count() || y.sample_count() != z.cols()) {
    throw InputError("hinge_loss_target: label matrix shape mismatch");
  }
  const Matrix scores = linalg::matmul_tn(h.theta, z);  // K x M
  double loss = 0.0;
  for (std::size_t k = 0; k < h.class_count(); ++k)
    for (std::size_t m = 0; m < z.cols(); ++m) loss += std::max(0.0, 1.0 - y.at(k, m) * (scores(k, m) + h.bias[k]));
  return loss;
}

double hinge_loss_source(const HyperplaneStack& h, const DomainDataset& source) {
  return hinge_loss_target(h, source.features, ovr_labels(source.labels, static_cast<int>(h.class_count())));
}

Vector decision_values(const HyperplaneStack& h, std::span<const double> x) {
  if (x.size() != h.dim()) throw InputError("decision_values: dimension mismatch");
  Vector v = linalg::matvec_t(h.theta, x);
  for (std::size_t k = 0; k < v.size(); ++k) v[k] += h.bias[k];
  return v;
}

int argmax_class(std::span<const double> values) {
  if (values.empty()) throw InputError("argmax_class: no values");
  std::size_t best = 0;
  for (std::size_t k = 1; k < values.size(); ++k)
    if (values[k] > values[best]) best = k;
  return static_cast<int>(best + 1);
}

}  // namespace mmdtl2
