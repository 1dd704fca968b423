#include "oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace mmdtl2::oracle {

Vector vec_op(const Matrix& w) {
  Vector v;
  v.reserve(w.size());
  for (std::size_t r = 0; r < w.rows(); ++r)
    for (std::size_t c = 0; c < w.cols(); ++c) v.push_back(w(r, c));
  return v;
}

Matrix unvec(std::span<const double> v, std::size_t rows, std::size_t cols) {
  if (v.size() != rows * cols) throw InputError("unvec: length does not match the shape");
  Matrix w(rows, cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) w(r, c) = v[r * cols + c];
  return w;
}

Matrix kron(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j)
      for (std::size_t p = 0; p < b.rows(); ++p)
        for (std::size_t q = 0; q < b.cols(); ++q) out(i * b.rows() + p, j * b.cols() + q) = a(i, j) * b(p, q);
  return out;
}

Matrix u_matrix(std::span<const double> x, std::size_t blocks) {
  const std::size_t d = x.size();
  Matrix u(blocks * d, blocks * d);
  for (std::size_t b = 0; b < blocks; ++b)
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) u(b * d + i, b * d + j) = x[i] * x[j];
  return u;
}

Matrix dense_inverse(const Matrix& a) {
  const std::size_t n = a.rows();
  if (a.cols() != n) throw InputError("dense_inverse: matrix is not square");
  Matrix work = a;
  Matrix inv = Matrix::identity(n);
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t pivot = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::abs(work(r, c)) > std::abs(work(pivot, c))) pivot = r;
    if (work(pivot, c) == 0.0) throw NumericalError("dense_inverse: singular matrix");
    if (pivot != c) {
      for (std::size_t j = 0; j < n; ++j) {
        std::swap(work(c, j), work(pivot, j));
        std::swap(inv(c, j), inv(pivot, j));
      }
    }
    const double d = work(c, c);
    for (std::size_t j = 0; j < n; ++j) {
      work(c, j) /= d;
      inv(c, j) /= d;
    }
    for (std::size_t r = 0; r < n; ++r) {
      if (r == c || work(r, c) == 0.0) continue;
      const double f = work(r, c);
      for (std::size_t j = 0; j < n; ++j) {
        work(r, j) -= f * work(c, j);
        inv(r, j) -= f * inv(c, j);
      }
    }
  }
  return inv;
}

PrimalAssembly build_assembly(const HyperplaneStack& h, const DomainDataset& source, const Matrix& targets_aug,
                              std::span<const int> target_labels, const WeightModel& weights, double c_f) {
  const std::size_t ls = source.dim();
  const std::size_t lt1 = targets_aug.rows();
  const std::size_t side = ls * lt1;
  if (side > kMaxPrimalSide) {
    throw InputError("build_assembly: L_s (L_t + 1) = " + std::to_string(side) + " exceeds the oracle limit");
  }
  const std::size_t N = source.count();
  const std::size_t M = targets_aug.cols();
  const std::size_t K = h.class_count();

  PrimalAssembly p;
  p.source_dim = ls;
  p.target_dim_aug = lt1;
  p.c_f = c_f;
  p.U = Matrix(side, side);
  p.q.assign(side, 0.0);
  for (std::size_t n = 0; n < N; ++n) {
    const Vector xn = source.sample(n);
    for (std::size_t m = 0; m < M; ++m) {
      const double snm = weights.S(n, m);
      if (snm == 0.0) continue;
      const Vector xm = targets_aug.col(m);
      p.U += snm * u_matrix(xm, ls);
      Matrix outer(ls, lt1);
      for (std::size_t i = 0; i < ls; ++i)
        for (std::size_t j = 0; j < lt1; ++j) outer(i, j) = xn[i] * xm[j];
      const Vector v = vec_op(outer);
      for (std::size_t i = 0; i < side; ++i) p.q[i] += snm * v[i];
      double norm = 0.0;
      for (double x : xn) norm += x * x;
      p.s += snm * norm;
    }
  }
  p.V = c_f * Matrix::identity(side);
  p.V += p.U;

  p.Phi = Matrix(side, K * M);
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t m = 0; m < M; ++m) {
      Matrix outer(ls, lt1);
      for (std::size_t i = 0; i < ls; ++i)
        for (std::size_t j = 0; j < lt1; ++j) outer(i, j) = h.theta(i, k) * targets_aug(j, m);
      const Vector v = vec_op(outer);
      for (std::size_t i = 0; i < side; ++i) p.Phi(i, k * M + m) = v[i];
    }
  }
  p.Y_diag.resize(K * M);
  p.b_tilde.resize(K * M);
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t m = 0; m < M; ++m) {
      p.Y_diag[k * M + m] = target_labels[m] == static_cast<int>(k + 1) ? 1.0 : -1.0;
      p.b_tilde[k * M + m] = h.bias[k];
    }
  }
  return p;
}

Vector slacks(const PrimalAssembly& p, const Matrix& W) {
  const Vector w = vec_op(W);
  Vector xi(p.Y_diag.size());
  for (std::size_t i = 0; i < xi.size(); ++i) {
    double phi_w = 0.0;
    for (std::size_t r = 0; r < w.size(); ++r) phi_w += p.Phi(r, i) * w[r];
    xi[i] = std::max(0.0, 1.0 - p.Y_diag[i] * (phi_w + p.b_tilde[i]));
  }
  return xi;
}

double primal_canonical(const PrimalAssembly& p, const Matrix& W, double c_T) {
  const Vector w = vec_op(W);
  double quad = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i)
    for (std::size_t j = 0; j < w.size(); ++j) quad += w[i] * p.V(i, j) * w[j];
  double lin = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) lin += p.q[i] * w[i];
  double hinge = 0.0;
  for (double x : slacks(p, W)) hinge += x;
  return 0.5 * quad - lin + 0.5 * p.s + c_T * hinge;
}

double primal_direct(const HyperplaneStack& h, const DomainDataset& source, const Matrix& targets_aug,
                     std::span<const int> target_labels, const WeightModel& weights, const Matrix& W, double c_f,
                     double c_T) {
  double frob = 0.0;
  for (double v : W.values()) frob += v * v;
  double hinge = 0.0;
  double anchor = 0.0;
  for (std::size_t m = 0; m < targets_aug.cols(); ++m) {
    const Vector z = linalg::matvec(W, targets_aug.col(m));
    for (std::size_t k = 0; k < h.class_count(); ++k) {
      const double y = target_labels[m] == static_cast<int>(k + 1) ? 1.0 : -1.0;
      double score = h.bias[k];
      for (std::size_t i = 0; i < z.size(); ++i) score += h.theta(i, k) * z[i];
      hinge += std::max(0.0, 1.0 - y * score);
    }
    for (std::size_t n = 0; n < source.count(); ++n) {
      double d2 = 0.0;
      for (std::size_t i = 0; i < z.size(); ++i) {
        const double d = z[i] - source.features(i, n);
        d2 += d * d;
      }
      anchor += weights.S(n, m) * d2;
    }
  }
  return 0.5 * c_f * frob + c_T * hinge + 0.5 * anchor;
}

double mmdt_reduced_dual(const HyperplaneStack& h, const Matrix& targets_aug, std::span<const int> target_labels,
                         std::span<const double> a) {
  const std::size_t M = targets_aug.cols();
  const std::size_t K = h.class_count();
  const Matrix tt = linalg::matmul_tn(h.theta, h.theta);
  const Matrix kt = linalg::matmul_tn(targets_aug, targets_aug);
  const Matrix big = kron(tt, kt);
  Vector y(K * M);
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t m = 0; m < M; ++m) y[k * M + m] = target_labels[m] == static_cast<int>(k + 1) ? 1.0 : -1.0;
  double quad = 0.0;
  double lin = 0.0;
  for (std::size_t i = 0; i < K * M; ++i) {
    for (std::size_t j = 0; j < K * M; ++j) quad += a[i] * y[i] * big(i, j) * y[j] * a[j];
    lin += (1.0 - y[i] * h.bias[i / M]) * a[i];
  }
  return -0.5 * quad + lin;
}

namespace {

double max_abs(const Matrix& m) { return linalg::norm_inf(m); }

IdentityCheck compare(std::string name, const Matrix& dense, const Matrix& compact) {
  if (dense.rows() != compact.rows() || dense.cols() != compact.cols()) {
    throw InputError("identity_suite: shape mismatch in " + name);
  }
  return {std::move(name), linalg::max_abs_diff(dense, compact), std::max(max_abs(dense), max_abs(compact))};
}

Matrix column(std::span<const double> v) {
  Matrix m(v.size(), 1);
  for (std::size_t i = 0; i < v.size(); ++i) m(i, 0) = v[i];
  return m;
}

}  // namespace

std::vector<IdentityCheck> identity_suite(const PrimalAssembly& p, const HyperplaneStack& h,
                                          const DomainDataset& source, const Matrix& targets_aug,
                                          std::span<const int> target_labels, const WeightModel& weights,
                                          std::span<const double> a, double c_T) {
  const std::size_t M = targets_aug.cols();
  const std::size_t K = h.class_count();
  const std::size_t ls = p.source_dim;
  const std::size_t lt1 = p.target_dim_aug;

  // Dense side.
  const Matrix v_inv = dense_inverse(p.V);
  const Matrix v_inv_phi = linalg::matmul(v_inv, p.Phi);
  const Matrix phi_v_phi = linalg::matmul_tn(p.Phi, v_inv_phi);
  const Matrix q_v_phi = linalg::matmul_tn(column(p.q), v_inv_phi);  // 1 x KM
  const Vector v_inv_q = linalg::matvec(v_inv, p.q);
  Matrix a_mat = p.c_f * Matrix::identity(lt1);
  for (std::size_t m = 0; m < M; ++m)
    for (std::size_t i = 0; i < lt1; ++i)
      for (std::size_t j = 0; j < lt1; ++j) a_mat(i, j) += weights.col_sums[m] * targets_aug(i, m) * targets_aug(j, m);
  const Matrix a_inv = dense_inverse(a_mat);
  const Matrix g_dense = linalg::matmul_tn(targets_aug, linalg::matmul(a_inv, targets_aug));
  Vector rhs = p.q;
  for (std::size_t i = 0; i < p.Phi.rows(); ++i)
    for (std::size_t c = 0; c < p.Phi.cols(); ++c) rhs[i] += p.Phi(i, c) * p.Y_diag[c] * a[c];
  const Matrix w_dense = unvec(linalg::matvec(v_inv, rhs), ls, lt1);

  // Compact side, through the library.
  const Matrix gram_t = gram(KernelSpec::linear(), targets_aug);
  const bool woodbury = std::all_of(weights.col_sums.begin(), weights.col_sums.end(), [](double s) { return s > 0; });
  const GOperator g = compute_G(gram_t, weights.col_sums, p.c_f, &targets_aug);
  const TOperator t = woodbury ? compute_T(gram_t, weights.col_sums, p.c_f)
                               : compute_T_direct(gram_t, weights.col_sums, p.c_f);
  const Matrix a_inv_x = linalg::matmul_nt(t.T, targets_aug).transpose();  // (L_t + 1) x M
  const OvrLabelMatrix y = ovr_labels(target_labels, static_cast<int>(K));
  const BoxQP qp = build_dual(h, source, y, weights, g.G, c_T);
  Matrix vec_term(1, K * M);
  for (std::size_t i = 0; i < K * M; ++i) vec_term(0, i) = y.flat(i) * (1.0 - qp.l[i]) - h.bias[i / M];
  const Matrix xs_s = linalg::matmul(source.features, weights.S);
  const Matrix v_inv_q_compact = column(vec_op(linalg::matmul_nt(xs_s, a_inv_x)));

  TransformModel model;
  model.R = compute_R(h, source, weights, make_dual_solution(Vector(a.begin(), a.end()), y));
  model.T = t.T;
  model.targets = Matrix(lt1 - 1, M);
  for (std::size_t i = 0; i + 1 < lt1; ++i)
    for (std::size_t m = 0; m < M; ++m) model.targets(i, m) = targets_aug(i, m);
  model.kernel = KernelSpec::linear();
  const Matrix w_compact = materialize_W(model);

  Matrix y_phi_v_phi_y = phi_v_phi;
  for (std::size_t i = 0; i < K * M; ++i)
    for (std::size_t j = 0; j < K * M; ++j) y_phi_v_phi_y(i, j) *= p.Y_diag[i] * p.Y_diag[j];

  std::vector<IdentityCheck> out;
  out.push_back(compare("phi_vinv_phi", phi_v_phi, kron(linalg::matmul_tn(h.theta, h.theta), g.G)));
  out.push_back(compare("dual_hessian", y_phi_v_phi_y, qp.Q));
  out.push_back(compare("q_vinv_phi", q_v_phi, vec_term));
  out.push_back(compare("vinv_phi", v_inv_phi, kron(h.theta, a_inv_x)));
  out.push_back(compare("vinv_q", column(v_inv_q), v_inv_q_compact));
  out.push_back(compare("v_block", p.V, kron(Matrix::identity(ls), a_mat)));
  out.push_back(compare("g_operator", g_dense, g.G));
  out.push_back(compare("w_retrieval", w_dense, w_compact));
  const double canon = primal_canonical(p, w_compact, c_T);
  const double direct = primal_direct(h, source, targets_aug, target_labels, weights, w_compact, p.c_f, c_T);
  out.push_back({"primal_two_forms", std::abs(canon - direct), std::max(std::abs(canon), std::abs(direct))});
  return out;
}

double t_tail_by_quadrature(double t, double df) {
  const double c = std::exp(std::lgamma((df + 1) / 2) - std::lgamma(df / 2)) / std::sqrt(df * std::numbers::pi);
  auto f = [&](double u) {
    const double x = std::tan(u);
    return c * std::pow(1.0 + x * x / df, -(df + 1) / 2) * (1.0 + x * x);
  };
  const double lo = std::atan(t);
  const double hi = std::numbers::pi / 2;
  const int n = 200000;
  const double h = (hi - lo) / n;
  double sum = f(lo) + (df > 1 ? 0.0 : f(hi - 1e-12));
  for (int i = 1; i < n; ++i) sum += f(lo + i * h) * (i % 2 ? 4.0 : 2.0);
  return sum * h / 3.0;
}

}  // namespace mmdtl2::oracle
