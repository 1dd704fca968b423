// Acceptance gate: one PASS/FAIL line per criterion. With no arguments every
// criterion runs; `acceptance 3 5` runs a subset. Exit status is nonzero when
// any selected criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <string>
#include <thread>
#include <vector>

#include "mmdtl2/cli.hpp"
#include "mmdtl2/eval.hpp"
#include "test_support.hpp"

#ifndef MMDTL2_CONFIG_DIR
#define MMDTL2_CONFIG_DIR "configs"
#endif

using namespace mmdtl2;
using namespace mmdtl2::linalg;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

int hardware_jobs() { return static_cast<int>(std::max(1u, std::thread::hardware_concurrency())); }

SynthConfig standard_config() { return cli::load_synth_config(MMDTL2_CONFIG_DIR "/standard.conf"); }

AdaptParams instance_params(const testing::Instance& in) {
  AdaptParams p;
  p.c_f = in.c_f;
  p.c_d = in.weights.c_d;
  p.c_t = in.c_T;
  p.c_T = in.c_T;
  return p;
}

Outcome identity_suite() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::string worst_name;
  std::size_t checks = 0, failed = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto in = testing::random_instance(seed, {.c_d = seed % 5 == 0 ? std::optional(0.0) : std::nullopt});
    const auto p = oracle::build_assembly(in.h, in.source, in.targets_aug, in.targets.labels, in.weights, in.c_f);
    const Vector a = testing::random_feasible(in.targets.count() * in.h.class_count(), in.c_T, seed);
    for (const auto& c :
         oracle::identity_suite(p, in.h, in.source, in.targets_aug, in.targets.labels, in.weights, a, in.c_T)) {
      ++checks;
      const double rel = c.deviation / (1.0 + c.scale);
      if (rel > worst) {
        worst = rel;
        worst_name = c.name;
      }
      if (!c.holds(1e-9)) ++failed;
    }
  }
  const double elapsed = seconds_since(t0);
  return {failed == 0 && checks == 900 && elapsed < 10.0,
          fmt("%zu checks, %zu failed, worst relative deviation %.2e (%s), %.2f s", checks, failed, worst,
              worst_name.c_str(), elapsed)};
}

Outcome duality_gap() {
  double worst_gap = -1e300, worst_kkt = 0.0, min_gap = 1e300;
  std::size_t failed = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto in = testing::random_instance(seed, {.c_d = seed % 5 == 0 ? std::optional(0.0) : std::nullopt});
    const auto step = solve_w_subproblem(in.h, in.source, in.targets, in.weights, instance_params(in));
    const double primal = oracle::primal_direct(in.h, in.source, in.targets_aug, in.targets.labels, in.weights,
                                                materialize_W(step.transform), in.c_f, in.c_T);
    const double gap = primal - step.dual_value;
    const double rel = gap / (1.0 + std::abs(primal));
    worst_gap = std::max(worst_gap, rel);
    min_gap = std::min(min_gap, rel);
    worst_kkt = std::max(worst_kkt, step.kkt);
    if (rel > 1e-4 || step.kkt > 1e-6) ++failed;
  }
  return {failed == 0, fmt("100 instances, %zu failed, max gap/(1+|primal|) %.2e, min %.2e, max KKT %.2e", failed,
                           worst_gap, min_gap, worst_kkt)};
}

Outcome mmdt_reduction() {
  double worst_qs = 0.0, worst_g = 0.0, worst_dual = 0.0;
  bool dense = true;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto in = testing::random_instance(seed + 1000, {.c_d = 0.0, .c_f = 1.0});
    const auto p = oracle::build_assembly(in.h, in.source, in.targets_aug, in.targets.labels, in.weights, 1.0);
    worst_qs = std::max({worst_qs, norm_inf(p.q), std::abs(p.s)});
    auto params = instance_params(in);
    params.mode = Mode::mmdt;
    const auto step = solve_w_subproblem(in.h, in.source, in.targets, in.weights, params);
    dense = dense && step.G.case_used == GCase::dense_A;
    worst_g = std::max(worst_g, max_abs_diff(step.G.G, gram(KernelSpec::linear(), in.targets_aug)));
    const double reduced = oracle::mmdt_reduced_dual(in.h, in.targets_aug, in.targets.labels, step.dual.a);
    worst_dual = std::max(worst_dual, std::abs(step.dual_value - reduced) / (1.0 + std::abs(reduced)));
  }
  return {worst_qs == 0.0 && worst_g <= 1e-12 && worst_dual <= 1e-10 && dense,
          fmt("20 instances, max |q|,|s| %.1e, max |G - K| %.2e, max relative dual mismatch %.2e", worst_qs, worst_g,
              worst_dual)};
}

Outcome kernel_linear_consistency() {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto in = testing::random_instance(seed + 2000, {.full_coverage = true});
    auto p = instance_params(in);
    p.qp.tol = 1e-12;
    p.qp.max_sweeps = 200000;
    auto q = p;
    q.explicit_linear = true;
    const auto factored = solve_w_subproblem(in.h, in.source, in.targets, in.weights, p);
    const auto explicit_ = solve_w_subproblem(in.h, in.source, in.targets, in.weights, q);
    if (!explicit_.transform.W_explicit) return {false, "explicit path did not build W"};
    const Matrix probes = seeded_fill(in.targets.dim(), 8, Distribution::standard_normal, seed);
    for (const Matrix* x : std::initializer_list<const Matrix*>{&in.targets.features, &probes})
      worst = std::max(worst, max_abs_diff(transform_columns(factored.transform, *x),
                                           transform_columns(explicit_.transform, *x)));
  }
  return {worst <= 1e-8, fmt("20 instances, max |factored - explicit| %.2e", worst)};
}

Outcome class_mean_limit() {
  const auto source = make_dataset(Matrix{{1.0, 3.0, -4.0}}, {1, 1, 2}, 2);
  const auto target = make_dataset(Matrix{{0.0}}, {1}, 2);
  const HyperplaneStack h{Matrix{{1.0, -1.0}}, Vector{-1.0, 1.0}};
  const auto weights = build_weight_model(source.labels, target.labels, 1.0);
  AdaptParams p;
  p.c_f = 1e-9;
  p.c_d = 1.0;
  p.c_T = 1e-15;
  const auto step = solve_w_subproblem(h, source, target, weights, p);
  const double z = transform_sample(step.transform, Vector{0.0})[0];
  // Sherman-Morrison with x = (0, 1): W x = (sum_n s_n x_n) |x|^2 / (c_f + S_M |x|^2).
  const double closed = (1.0 + 3.0) * 1.0 / (p.c_f + 2.0 * 1.0);
  return {std::abs(z - 2.0) <= 1e-5 && std::abs(z - closed) <= 1e-5,
          fmt("transform %.10f, closed form %.10f, class mean 2", z, closed)};
}

Outcome welch_statistics() {
  const std::vector<double> a{90, 92, 94}, b{80, 82, 84};
  const auto r = welch_t(a, b);
  const auto s = welch_t(b, a);
  const double oracle_p = oracle::t_tail_by_quadrature(r.t, r.df);
  const bool ok = std::abs(r.t - 6.1237) <= 1e-4 && std::abs(r.df - 4.0) <= 1e-4 &&
                  std::abs(r.p_one_tailed - oracle_p) <= 1e-6 && s.t == -r.t;
  return {ok, fmt("t %.6f, df %.6f, p %.3e vs quadrature %.3e, reversed t %.6f", r.t, r.df, r.p_one_tailed,
                  oracle_p, s.t)};
}

Outcome synthetic_trend() {
  const auto t0 = Clock::now();
  const auto [source, pool] = synth_generate(standard_config());
  ExperimentConfig cfg;
  cfg.M_values = {5, 10, 40};
  cfg.repeats = 10;
  cfg.methods = {Method::target_svm, Method::mmdtl2_linear};
  cfg.jobs = hardware_jobs();
  const auto report = run_experiment(cfg, source, pool);
  std::string detail;
  bool ok = true;
  for (std::size_t M : cfg.M_values) {
    const double t = report.find(M, Method::target_svm)->mean_percent;
    const double m = report.find(M, Method::mmdtl2_linear)->mean_percent;
    ok = ok && (M == 40 ? m >= t - 2.0 : m >= t);
    detail += fmt("M=%zu mmdtl2_linear %.2f vs targetSVM %.2f; ", M, m, t);
  }
  const double elapsed = seconds_since(t0);
  return {ok && elapsed < 120.0, detail + fmt("%.1f s", elapsed)};
}

/// N = 200 sources and M = 40 targets in L dimensions, K = 3.
std::pair<DomainDataset, DomainDataset> scalability_data(std::size_t L) {
  SynthConfig c;
  c.classes = 3;
  c.source_dim = c.target_dim = L;
  c.source_per_class = 67;
  c.target_per_class = 14;
  c.seed = 7;
  auto [source, target] = synth_generate(c);
  // Samples are class-ordered, so the prefixes keep all three classes.
  std::vector<std::size_t> keep_s(200), keep_t(40);
  std::iota(keep_s.begin(), keep_s.end(), 0);
  std::iota(keep_t.begin(), keep_t.end(), 0);
  return {source.subset(keep_s), target.subset(keep_t)};
}

struct TimedFit {
  double seconds = 0.0;
  FitStats stats;
};

TimedFit timed_fit(const DomainDataset& source, const DomainDataset& target, int runs) {
  TimedFit best{1e300, {}};
  for (int r = 0; r < runs; ++r) {
    FitStats st;
    const auto t0 = Clock::now();
    fit(source, target, AdaptParams::mmdtl2_defaults(), &st);
    const double s = seconds_since(t0);
    if (s < best.seconds) best = {s, st};
  }
  return best;
}

Outcome scalability() {
  const auto [s_small, t_small] = scalability_data(4096);
  const auto [s_big, t_big] = scalability_data(16384);
  if (s_big.count() != 200 || t_big.count() != 40) return {false, "data construction produced wrong sizes"};
  try {
    const auto small = timed_fit(s_small, t_small, 3);
    const auto big = timed_fit(s_big, t_big, 3);
    const std::size_t primal_side = 16384 * (16384 + 1);
    const double ratio = big.seconds / small.seconds;
    const bool ok = big.seconds < 120.0 && ratio <= 4.0 && big.stats.peak_square_side < primal_side;
    return {ok, fmt("L=16384 fit %.2f s, L=4096 fit %.2f s, ratio %.2f, largest square array side %zu "
                    "(primal side %zu)",
                    big.seconds, small.seconds, ratio, big.stats.peak_square_side, primal_side)};
  } catch (const std::exception& e) {
    return {false, std::string("fit aborted: ") + e.what()};
  }
}

Outcome cf_sweep() {
  const auto [source, pool] = synth_generate(standard_config());
  SweepConfig cfg;
  cfg.param = SweepParam::c_f;
  cfg.grid = log_grid(-10, 0);
  cfg.method = Method::mmdtl2_linear;
  cfg.base.M_values = {5, 10, 40};
  cfg.base.repeats = 10;
  cfg.base.jobs = hardware_jobs();
  SweepReport report;
  try {
    report = run_sweep(cfg, source, pool);
  } catch (const std::exception& e) {
    return {false, std::string("sweep aborted: ") + e.what()};
  }
  bool events = true;
  std::size_t failures = 0;
  std::vector<const SweepPoint*> large;
  for (const auto& pt : report.points) {
    failures += pt.failures;
    if (pt.value <= 1e-7 * (1 + 1e-12)) events = events && pt.events.total() > 0;
    if (pt.value >= 1e-3 * (1 - 1e-12)) large.push_back(&pt);
  }
  double spread = 0.0;
  for (std::size_t i = 0; i < report.M_values.size(); ++i) {
    double lo = 1e300, hi = -1e300;
    for (const auto* pt : large) {
      lo = std::min(lo, pt->per_M[i].mean_percent);
      hi = std::max(hi, pt->per_M[i].mean_percent);
    }
    spread = std::max(spread, hi - lo);
  }
  return {report.points.size() == 11 && events && large.size() == 4 && spread <= 2.0,
          fmt("11-point grid, events recorded at every c_f <= 1e-7: %s, %zu cell failures, max accuracy spread over "
              "c_f >= 1e-3: %.2f points",
              events ? "yes" : "no", failures, spread)};
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria{
      {1, "identity suite", identity_suite},
      {2, "duality gap and KKT", duality_gap},
      {3, "mmdt reduction", mmdt_reduction},
      {4, "kernel and explicit linear consistency", kernel_linear_consistency},
      {5, "class-mean limit", class_mean_limit},
      {6, "Welch statistics", welch_statistics},
      {7, "synthetic trend", synthetic_trend},
      {8, "scalability", scalability},
      {9, "c_f sweep", cf_sweep},
  };
  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) selected.push_back(std::atoi(argv[i]));
  int failures = 0;
  for (const auto& c : criteria) {
    if (!selected.empty() && std::find(selected.begin(), selected.end(), c.id) == selected.end()) continue;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s criterion %d: %s: %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str());
    std::fflush(stdout);
    failures += !o.pass;
  }
  return failures == 0 ? 0 : 1;
}
