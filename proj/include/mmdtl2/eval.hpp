#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mmdtl2/adapt.hpp"

namespace mmdtl2 {

/// Fraction of equal entries. Both spans must have the same nonzero length.
double accuracy(std::span<const int> predictions, std::span<const int> truth);

// -- Welch's t-test ---------------------------------------------------------------

/// I_x(a, b) by Lentz's continued fraction, relative tolerance 1e-12.
double regularized_incomplete_beta(double a, double b, double x);

/// P(T > t) for Student's t with df degrees of freedom (df may be fractional).
double student_t_upper_tail(double t, double df);

struct WelchResult {
  double t = 0.0;
  double df = 0.0;
  /// P(T_df > t): small when the first sample's mean is larger.
  double p_one_tailed = 0.5;
};

/// Unequal-variance two-sample test with the Welch-Satterthwaite df.
/// When both variances are zero: equal means give t = 0, p = 0.5; otherwise
/// t = +-inf and p is 0 or 1.
WelchResult welch_t(std::span<const double> a, std::span<const double> b);

inline constexpr double kStrongLevel = 0.01;
inline constexpr double kWeakLevel = 0.05;

/// "**", "*" or "" from a p-value against sourceSVM.
std::string source_mark(double p);
/// "++", "+" or "" from a p-value against targetSVM.
std::string target_mark(double p);

// -- Experiment protocol -----------------------------------------------------------

enum class Method { source_svm, target_svm, mmdt, mmdtl2_linear, mmdtl2_rbf, mmdtl2_poly };
std::string_view to_string(Method m);
Method parse_method(std::string_view name);
std::vector<Method> all_methods();
[[nodiscard]] bool is_adaptive(Method m) noexcept;

struct MethodSettings {
  AdaptParams mmdt = AdaptParams::mmdt_defaults();
  AdaptParams mmdtl2_linear = AdaptParams::mmdtl2_defaults();
  AdaptParams mmdtl2_rbf = [] {
    auto p = AdaptParams::mmdtl2_defaults();
    p.kernel.kind = KernelKind::rbf;
    return p;
  }();
  AdaptParams mmdtl2_poly = [] {
    auto p = AdaptParams::mmdtl2_defaults();
    p.kernel.kind = KernelKind::poly;
    return p;
  }();
  /// Hinge weight of the sourceSVM and targetSVM baselines.
  double baseline_C = 1.0;
  SvmOptions baseline_svm;

  [[nodiscard]] const AdaptParams& params(Method m) const;
  AdaptParams& params(Method m);
};

struct ExperimentConfig {
  std::vector<std::size_t> M_values = {1, 2, 3, 4, 5, 10, 15, 20, 25, 30, 35, 40};
  int repeats = 10;
  std::vector<Method> methods = all_methods();
  MethodSettings settings;
  /// Fraction of each target class held out for testing in every repeat.
  double test_fraction = 0.5;
  std::uint64_t seed = 1;
  /// Upper bound on concurrently evaluated cells.
  int jobs = 1;

  void validate() const;
};

struct CellSummary {
  bool skipped = false;
  std::string skip_reason;
  /// Accuracies of the repeats that finished, as fractions in repeat order.
  std::vector<double> accuracies;
  std::vector<int> finished_repeats;
  double mean_percent = 0.0;
  double sd_percent = 0.0;
  std::optional<double> p_vs_source;
  std::optional<double> p_vs_target;
  std::string marks_source;
  std::string marks_target;
  NumericalEvents events;
  std::vector<std::string> failures;
};

struct ExperimentReport {
  std::vector<std::size_t> M_values;
  std::vector<Method> methods;
  /// cells[i][j] belongs to M_values[i] and methods[j].
  std::vector<std::vector<CellSummary>> cells;
  std::vector<std::string> notes;

  [[nodiscard]] const CellSummary* find(std::size_t M, Method m) const;
};

/// Per repeat r the target pool is re-split with seed + r; every (M, method)
/// is trained on the first M shuffled samples of each class and scored on the
/// held-out part, which is the same for all M within a repeat.
ExperimentReport run_experiment(const ExperimentConfig& config, const DomainDataset& source,
                                const DomainDataset& target_pool);

/// Header comment, then one row per M with `mean±std marks` cells.
std::string render_report_tsv(const ExperimentReport& report);
/// `M method repeat accuracy` rows.
std::string render_raw_tsv(const ExperimentReport& report);
/// Whitespace-separated columns `M mean_1 sd_1 mean_2 sd_2 ...` for gnuplot.
std::string render_plot_data(const ExperimentReport& report);

// -- Parameter sweep ---------------------------------------------------------------

enum class SweepParam { c_f, c_d };
std::string_view to_string(SweepParam p);

/// 10^first, 10^(first+1), ..., 10^last
std::vector<double> log_grid(int first_exponent, int last_exponent);

struct SweepConfig {
  SweepParam param = SweepParam::c_f;
  std::vector<double> grid = log_grid(-10, 0);
  Method method = Method::mmdtl2_linear;
  ExperimentConfig base;

  void validate() const;
};

struct SweepPoint {
  double value = 0.0;
  std::vector<CellSummary> per_M;  // aligned with base.M_values
  NumericalEvents events;
  std::size_t failures = 0;
};

struct SweepReport {
  SweepParam param = SweepParam::c_f;
  Method method = Method::mmdtl2_linear;
  std::vector<std::size_t> M_values;
  std::vector<SweepPoint> points;
};

/// Runs `method` once per grid value with the swept parameter overridden and
/// all others at their configured values. Numerical failures are recorded per
/// cell instead of aborting the sweep.
SweepReport run_sweep(const SweepConfig& config, const DomainDataset& source, const DomainDataset& target_pool);
std::string render_sweep_tsv(const SweepReport& report);

}  // namespace mmdtl2
