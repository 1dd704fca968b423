#include "mmdtl2/adapt.hpp"

#include <algorithm>
#include <cmath>

namespace mmdtl2 {

std::string_view to_string(Mode mode) { return mode == Mode::mmdt ? "mmdt" : "mmdtl2"; }

Mode parse_mode(std::string_view name) {
  if (name == "mmdtl2") return Mode::mmdtl2;
  if (name == "mmdt") return Mode::mmdt;
  throw InputError("unknown method '" + std::string(name) + "' (expected mmdtl2 or mmdt)");
}

AdaptParams AdaptParams::mmdtl2_defaults() { return {}; }

AdaptParams AdaptParams::mmdt_defaults() {
  AdaptParams p;
  p.mode = Mode::mmdt;
  p.c_f = 1.0;
  p.c_t = 1.0;
  p.c_s = 0.05;
  p.c_d = 0.0;
  return p;
}

AdaptParams AdaptParams::effective() const {
  AdaptParams p = *this;
  if (p.mode == Mode::mmdt) {
    p.c_f = 1.0;
    p.c_d = 0.0;
  }
  p.c_T = p.hinge_weight();
  return p;
}

void AdaptParams::validate() const {
  auto finite_nonneg = [](double v) { return std::isfinite(v) && v >= 0.0; };
  if (!(c_f > 0.0) || !std::isfinite(c_f)) throw InputError("c_f must be > 0");
  if (!finite_nonneg(c_d)) throw InputError("c_d must be >= 0");
  if (!(c_t > 0.0) || !std::isfinite(c_t)) throw InputError("c_t must be > 0");
  if (!(c_s > 0.0) || !std::isfinite(c_s)) throw InputError("c_s must be > 0");
  if (!(hinge_weight() > 0.0) || !std::isfinite(hinge_weight())) throw InputError("c_T must be > 0");
  if (iterations < 1) throw InputError("iterations must be >= 1");
  if (!(qp.tol > 0.0) || qp.max_sweeps < 1) throw InputError("QP tolerance and sweep limit must be positive");
  if (!(svm.tol > 0.0) || svm.max_sweeps < 1) throw InputError("SVM tolerance and sweep limit must be positive");
  kernel.validate();
  if (explicit_linear && !kernel.is_linear()) throw InputError("explicit linear mode requires the linear kernel");
}

void NumericalEvents::merge(const NumericalEvents& o) {
  jitter_events += o.jitter_events;
  max_jitter = std::max(max_jitter, o.max_jitter);
  instability_events += o.instability_events;
  max_residual = std::max(max_residual, o.max_residual);
  qp_unconverged += o.qp_unconverged;
}

namespace {

void require_dims(const HyperplaneStack& h, const DomainDataset& source, const OvrLabelMatrix& y,
                  const WeightModel& weights, const Matrix& G) {
  const std::size_t M = y.sample_count();
  if (h.dim() != source.dim()) throw InputError("hyperplanes and source data differ in dimension");
  if (y.class_count() != h.class_count()) throw InputError("label matrix and hyperplanes differ in class count");
  if (weights.S.rows() != source.count() || weights.S.cols() != M) {
    throw InputError("weight matrix shape does not match the source and target counts");
  }
  if (G.rows() != M || G.cols() != M) throw InputError("G must be M x M");
}

/// X_s S, L_s x M.
Matrix anchor_sums(const DomainDataset& source, const WeightModel& weights) {
  return linalg::matmul(source.features, weights.S);
}

}  // namespace

BoxQP build_dual(const HyperplaneStack& h, const DomainDataset& source, const OvrLabelMatrix& y,
                 const WeightModel& weights, const Matrix& G, double c_T) {
  require_dims(h, source, y, weights, G);
  const std::size_t K = h.class_count();
  const std::size_t M = y.sample_count();

  const Matrix theta_gram = linalg::matmul_tn(h.theta, h.theta);  // K x K
  Matrix Q(K * M, K * M);
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t k2 = 0; k2 < K; ++k2) {
      const double tt = theta_gram(k, k2);
      for (std::size_t m = 0; m < M; ++m) {
        auto qrow = Q.row(k * M + m);
        const double ykm = y.at(k, m);
        for (std::size_t m2 = 0; m2 < M; ++m2) qrow[k2 * M + m2] = ykm * y.at(k2, m2) * tt * G(m, m2);
      }
    }
  }

  // Theta^T X_s S G through (Theta^T X_s) S: K x N first, never L_s x M here.
  const Matrix theta_xs = linalg::matmul_tn(h.theta, source.features);
  const Matrix lin = linalg::matmul(linalg::matmul(theta_xs, weights.S), G);  // K x M
  Vector l(K * M);
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t m = 0; m < M; ++m) {
      const double ykm = y.at(k, m);
      l[k * M + m] = 1.0 - ykm * h.bias[k] - ykm * lin(k, m);
    }
  return BoxQP::make(std::move(Q), std::move(l), c_T);
}

Matrix compute_R(const HyperplaneStack& h, const DomainDataset& source, const WeightModel& weights,
                 const DualSolution& dual) {
  const std::size_t M = dual.Lambda.rows();
  const std::size_t K = dual.Lambda.cols();
  if (K != h.class_count() || weights.S.cols() != M) throw InputError("compute_R: shape mismatch");
  Matrix signed_dual(M, K);  // Upsilon .* Lambda
  for (std::size_t m = 0; m < M; ++m)
    for (std::size_t k = 0; k < K; ++k) signed_dual(m, k) = dual.Upsilon(m, k) * dual.Lambda(m, k);
  Matrix r = anchor_sums(source, weights);
  r += linalg::matmul_nt(h.theta, signed_dual);
  return r;
}

double dual_constant(const DomainDataset& source, const WeightModel& weights, const Matrix& G) {
  if (weights.c_d == 0.0) return 0.0;
  const Matrix p = anchor_sums(source, weights);
  const Matrix pg = linalg::matmul(p, G);
  double quad = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) quad += p.values()[i] * pg.values()[i];
  double s = 0.0;
  const Vector norms = [&] {
    Vector v(source.count(), 0.0);
    for (std::size_t d = 0; d < source.dim(); ++d) {
      const auto row = source.features.row(d);
      for (std::size_t n = 0; n < v.size(); ++n) v[n] += row[n] * row[n];
    }
    return v;
  }();
  for (std::size_t n = 0; n < source.count(); ++n) s += weights.row_sums[n] * norms[n];
  return -0.5 * quad + 0.5 * s;
}

Matrix transform_columns(const TransformModel& model, const Matrix& x) {
  if (x.rows() != model.target_dim()) {
    throw InputError("transform: expected " + std::to_string(model.target_dim()) + " target features, got " +
                     std::to_string(x.rows()));
  }
  const Matrix x_aug = augment_columns(x);
  if (model.W_explicit) return linalg::matmul(*model.W_explicit, x_aug);
  const Matrix stored_aug = augment_columns(model.targets);
  const Matrix k = cross_gram(model.kernel, stored_aug, x_aug);  // M x n
  return linalg::matmul(model.R, linalg::matmul(model.T, k));
}

Vector transform_sample(const TransformModel& model, std::span<const double> x) {
  if (x.size() != model.target_dim()) {
    throw InputError("transform: expected " + std::to_string(model.target_dim()) + " target features, got " +
                     std::to_string(x.size()));
  }
  const Vector x_aug = augment(x);
  if (model.W_explicit) return linalg::matvec(*model.W_explicit, x_aug);
  const Vector k = kernel_column(model.kernel, augment_columns(model.targets), x_aug);
  return linalg::matvec(model.R, linalg::matvec(model.T, k));
}

Matrix materialize_W(const TransformModel& model) {
  if (!model.kernel.is_linear()) {
    throw InputError("materialize_W: a " + std::string(to_string(model.kernel.kind)) +
                     " kernel transform has no finite-dimensional matrix form");
  }
  if (model.W_explicit) return *model.W_explicit;
  return linalg::matmul_nt(linalg::matmul(model.R, model.T), augment_columns(model.targets));
}

double w_subproblem_objective(const TransformModel& model, const HyperplaneStack& h, const DomainDataset& source,
                              const DomainDataset& targets, const WeightModel& weights, double c_f, double c_T) {
  const Matrix z = transform_columns(model, targets.features);  // L_s x M'

  double frob = 0.0;
  if (model.W_explicit) {
    frob = linalg::squared_norm(model.W_explicit->values());
  } else {
    const Matrix p = linalg::matmul(model.R, model.T);
    const Matrix ptp = linalg::matmul_tn(p, p);
    const Matrix k = gram(model.kernel, augment_columns(model.targets));
    for (std::size_t i = 0; i < k.size(); ++i) frob += ptp.values()[i] * k.values()[i];
  }

  const OvrLabelMatrix y = ovr_labels(targets.labels, static_cast<int>(h.class_count()));
  const double hinge = hinge_loss_target(h, z, y);

  double anchor = 0.0;
  if (weights.c_d != 0.0) {
    // 1/2 sum_nm s_nm |z_m - x_n|^2 expanded so that no N x M x L loop is needed.
    const Matrix xs_s = anchor_sums(source, weights);
    double cross = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) cross += xs_s.values()[i] * z.values()[i];
    double zz = 0.0;
    for (std::size_t m = 0; m < z.cols(); ++m) {
      double norm = 0.0;
      for (std::size_t d = 0; d < z.rows(); ++d) norm += z(d, m) * z(d, m);
      zz += weights.col_sums[m] * norm;
    }
    double xx = 0.0;
    for (std::size_t n = 0; n < source.count(); ++n) {
      double norm = 0.0;
      for (std::size_t d = 0; d < source.dim(); ++d) norm += source.features(d, n) * source.features(d, n);
      xx += weights.row_sums[n] * norm;
    }
    anchor = 0.5 * (zz - 2.0 * cross + xx);
  }
  return 0.5 * c_f * frob + c_T * hinge + anchor;
}

WStepResult solve_w_subproblem(const HyperplaneStack& h, const DomainDataset& source, const DomainDataset& targets,
                               const WeightModel& weights, const AdaptParams& raw_params) {
  const AdaptParams params = raw_params.effective();
  params.validate();
  if (targets.count() == 0) throw InputError("W-subproblem: no target samples");
  if (weights.S.cols() != targets.count()) throw InputError("W-subproblem: weights do not match the targets");

  WStepResult out;
  const Matrix targets_aug = augment_columns(targets.features);
  const KernelSpec kernel = params.kernel.resolved(targets_aug.rows());
  out.gram = gram(kernel, targets_aug);

  const Matrix* explicit_targets = kernel.is_linear() ? &targets_aug : nullptr;
  out.G = compute_G(out.gram, weights.col_sums, params.c_f, explicit_targets, params.explicit_linear);
  if (out.G.retries > 0) {
    ++out.events.jitter_events;
    out.events.max_jitter = std::max(out.events.max_jitter, out.G.jitter);
  }

  TOperator t = out.G.case_used == GCase::woodbury ? compute_T(out.gram, weights.col_sums, params.c_f)
                                                   : compute_T_direct(out.gram, weights.col_sums, params.c_f);
  if (t.retries > 0) {
    ++out.events.jitter_events;
    out.events.max_jitter = std::max(out.events.max_jitter, t.jitter);
  }
  out.events.max_residual = t.residual;
  if (!(t.residual <= NumericalEvents::kInstabilityThreshold)) ++out.events.instability_events;

  const OvrLabelMatrix y = ovr_labels(targets.labels, static_cast<int>(h.class_count()));
  out.problem = build_dual(h, source, y, weights, out.G.G, params.hinge_weight());
  QpResult qp = solve_box_qp(out.problem, params.qp);
  if (!qp.converged) ++out.events.qp_unconverged;
  out.kkt = kkt_residual(out.problem, qp.a);
  out.dual = make_dual_solution(std::move(qp.a), y);
  out.dual.converged = qp.converged;
  out.dual.sweeps = qp.sweeps;

  out.transform.R = compute_R(h, source, weights, out.dual);
  out.transform.T = std::move(t.T);
  out.transform.targets = targets.features;
  out.transform.kernel = kernel;
  if (params.explicit_linear) {
    // W = R (A^{-1} X_t)^T, the direct retrieval formula.
    out.transform.W_explicit = linalg::matmul_nt(out.transform.R, out.G.a_inverse_targets);
  }

  out.dual_value = dual_objective(out.problem, out.dual.a) + dual_constant(source, weights, out.G.G);
  out.primal_value =
      w_subproblem_objective(out.transform, h, source, targets, weights, params.c_f, params.hinge_weight());
  return out;
}

namespace {

void check_fit_inputs(const DomainDataset& source, const DomainDataset& target, const AdaptParams& p) {
  if (source.count() == 0) throw InputError("fit: source data is empty");
  if (target.count() == 0) throw InputError("fit: target data is empty");
  if (source.class_count < 2) throw InputError("fit: source data needs at least two classes");
  for (int y : target.labels) {
    if (y > source.class_count) {
      throw InputError("fit: target label " + std::to_string(y) + " is not a source class");
    }
  }
  if (p.c_d > 0.0 && !p.kernel.is_linear()) {
    for (int y : target.labels) {
      if (std::find(source.labels.begin(), source.labels.end(), y) == source.labels.end()) {
        throw InputError("fit: target class " + std::to_string(y) +
                         " has no source samples; kernel mode needs every target class in the source data");
      }
    }
  }
}

/// Largest square side any matrix may have during fit: sample-count scale,
/// plus the (L_t + 1)-sided A when the dense path may be taken, and always
/// strictly below the L_s (L_t + 1) side of the vectorized primal.
std::size_t fit_square_limit(const DomainDataset& source, const DomainDataset& target, const WeightModel& w,
                             const AdaptParams& p) {
  const std::size_t K = static_cast<std::size_t>(source.class_count);
  std::size_t limit = std::max(source.count() + target.count(), K * target.count()) + 1;
  const bool dense_possible =
      p.kernel.is_linear() &&
      (p.explicit_linear || std::any_of(w.col_sums.begin(), w.col_sums.end(), [](double s) { return s <= 0.0; }));
  if (dense_possible) limit = std::max(limit, target.dim() + 1);
  return limit;
}

}  // namespace

AdaptedModel fit(const DomainDataset& source, const DomainDataset& target_in, const AdaptParams& raw_params,
                 FitStats* stats) {
  const AdaptParams params = raw_params.effective();
  params.validate();
  check_fit_inputs(source, target_in, params);
  DomainDataset target = target_in;
  target.class_count = source.class_count;

  FitStats local;
  FitStats& st = stats ? *stats : local;
  st = FitStats{};

  const WeightModel weights = build_weight_model(source.labels, target.labels, params.c_d);
  linalg::AllocationGuard guard(fit_square_limit(source, target, weights, params));

  const double c_T = params.hinge_weight();
  HyperplaneStack h = init_source_svm(source, params.c_s, params.svm);
  ++st.init_svm_solves;

  std::optional<TransformModel> previous;
  std::optional<double> previous_objective;
  TransformModel transform;

  WeightedTrainSet train;
  train.labels = source.labels;
  train.labels.insert(train.labels.end(), target.labels.begin(), target.labels.end());
  train.C.assign(source.count(), params.c_s);
  train.C.insert(train.C.end(), target.count(), params.c_t);

  for (int it = 1; it <= params.iterations; ++it) {
    WStepResult step = solve_w_subproblem(h, source, target, weights, params);
    ++st.w_solves;
    st.events.merge(step.events);

    IterationLog entry;
    entry.iteration = it;
    entry.w_objective = step.primal_value;
    entry.dual_value = step.dual_value;
    entry.kkt = step.kkt;
    entry.qp_sweeps = step.dual.sweeps;
    entry.qp_converged = step.dual.converged;
    entry.g_case = step.G.case_used;
    if (previous) {
      entry.previous_w_objective = w_subproblem_objective(*previous, h, source, target, weights, params.c_f, c_T);
    }
    transform = std::move(step.transform);

    const Matrix z = transform_columns(transform, target.features);
    train.features = Matrix(source.dim(), source.count() + target.count());
    for (std::size_t d = 0; d < source.dim(); ++d) {
      auto row = train.features.row(d);
      const auto src = source.features.row(d);
      const auto tgt = z.row(d);
      std::copy(src.begin(), src.end(), row.begin());
      std::copy(tgt.begin(), tgt.end(), row.begin() + static_cast<std::ptrdiff_t>(src.size()));
    }
    h = train_weighted_ovr(train, source.class_count, params.svm);
    ++st.svm_solves;
    st.log.push_back(entry);

    const bool settled = previous_objective &&
                         std::abs(entry.w_objective - *previous_objective) <
                             params.early_stop * std::max(std::abs(*previous_objective), 1e-300);
    previous_objective = entry.w_objective;
    if (settled) break;
    if (it < params.iterations) previous = transform;
  }
  st.peak_square_side = guard.peak_square_side();

  AdaptedModel model;
  model.transform = std::move(transform);
  model.hyperplanes = std::move(h);
  model.class_count = source.class_count;
  model.mode = params.mode;
  model.params = params;
  return model;
}

int predict(const AdaptedModel& model, std::span<const double> x) {
  return argmax_class(decision_values(model.hyperplanes, transform_sample(model.transform, x)));
}

std::vector<int> predict_all(const AdaptedModel& model, const Matrix& x) {
  std::vector<int> out;
  if (x.cols() == 0) return out;
  const Matrix z = transform_columns(model.transform, x);
  const Matrix scores = linalg::matmul_tn(model.hyperplanes.theta, z);  // K x n
  out.reserve(x.cols());
  Vector v(model.hyperplanes.class_count());
  for (std::size_t i = 0; i < x.cols(); ++i) {
    for (std::size_t k = 0; k < v.size(); ++k) v[k] = scores(k, i) + model.hyperplanes.bias[k];
    out.push_back(argmax_class(v));
  }
  return out;
}

}  // namespace mmdtl2
