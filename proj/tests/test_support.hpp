#pragma once

#include <algorithm>
#include <optional>

#include "mmdtl2/adapt.hpp"
#include "oracle/oracle.hpp"

namespace mmdtl2::testing {

struct Instance {
  HyperplaneStack h;
  DomainDataset source;
  DomainDataset targets;
  Matrix targets_aug;
  WeightModel weights;
  double c_f = 1.0;
  double c_T = 1.0;
};

struct InstanceShape {
  /// Every target class also appears in the source, so S_M > 0 when c_d > 0.
  bool full_coverage = false;
  std::optional<double> c_d;
  std::optional<double> c_f;
};

/// Small random W-subproblem: L_s in 1..6, L_t in 1..5, M in 1..5, N in 2..8,
/// K in {2, 3}.
inline Instance random_instance(std::uint64_t seed, const InstanceShape& shape = {}) {
  linalg::SplitMix64 rng(seed * 0x9E3779B97F4A7C15ULL + 17);
  const std::size_t ls = 1 + rng.below(6);
  const std::size_t lt = 1 + rng.below(5);
  const std::size_t M = 1 + rng.below(5);
  const std::size_t N = 2 + rng.below(7);
  const int K = 2 + static_cast<int>(rng.below(2));

  Instance in;
  in.h.theta = Matrix(ls, static_cast<std::size_t>(K));
  for (double& v : in.h.theta.values()) v = rng.normal();
  in.h.bias.resize(static_cast<std::size_t>(K));
  for (double& b : in.h.bias) b = 0.5 * rng.normal();

  const std::size_t n_src = shape.full_coverage ? std::max<std::size_t>(N, static_cast<std::size_t>(K)) : N;
  Matrix xs(ls, n_src);
  for (double& v : xs.values()) v = rng.normal();
  std::vector<int> ys(n_src);
  for (auto& y : ys) y = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(K)));
  if (shape.full_coverage)
    for (int k = 0; k < K; ++k) ys[static_cast<std::size_t>(k)] = k + 1;
  Matrix xt(lt, M);
  for (double& v : xt.values()) v = rng.normal();
  std::vector<int> yt(M);
  for (auto& y : yt) y = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(K)));
  in.source = make_dataset(std::move(xs), std::move(ys), K);
  in.targets = make_dataset(std::move(xt), std::move(yt), K);
  in.targets_aug = augment_columns(in.targets.features);
  const double c_d = shape.c_d.value_or(0.05 + rng.uniform01());
  in.c_f = shape.c_f.value_or(0.1 + rng.uniform01());
  in.c_T = 0.1 + 2.0 * rng.uniform01();
  in.weights = build_weight_model(in.source.labels, in.targets.labels, c_d);
  return in;
}

inline AdaptParams params_for(const Instance& in, double qp_tol = 1e-12) {
  AdaptParams p;
  p.c_f = in.c_f;
  p.c_d = in.weights.c_d;
  p.c_t = in.c_T;
  p.c_T = in.c_T;
  p.qp.tol = qp_tol;
  p.qp.max_sweeps = 200000;
  return p;
}

inline Vector random_feasible(std::size_t n, double upper, std::uint64_t seed) {
  linalg::SplitMix64 rng(seed);
  Vector a(n);
  for (double& v : a) {
    const double u = rng.uniform01();
    v = u < 0.2 ? 0.0 : u > 0.8 ? upper : upper * rng.uniform01();
  }
  return a;
}

}  // namespace mmdtl2::testing
