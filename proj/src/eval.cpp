#include "mmdtl2/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <limits>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

namespace mmdtl2 {

double accuracy(std::span<const int> predictions, std::span<const int> truth) {
  if (predictions.empty()) throw InputError("accuracy: no predictions");
  if (predictions.size() != truth.size()) throw InputError("accuracy: predictions and truth differ in length");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += predictions[i] == truth[i];
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

namespace {

double beta_continued_fraction(double a, double b, double x) {
  constexpr double kTiny = 1e-300;
  constexpr double kTol = 1e-12;
  constexpr int kMaxTerms = 10000;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxTerms; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < kTol) return h;
  }
  throw NumericalError("incomplete beta: continued fraction did not converge");
}

}  // namespace

double regularized_incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0)) throw InputError("incomplete beta: a and b must be > 0");
  if (!(x >= 0.0 && x <= 1.0)) throw InputError("incomplete beta: x must lie in [0, 1]");
  if (x == 0.0 || x == 1.0) return x;
  const double log_front =
      std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double student_t_upper_tail(double t, double df) {
  if (!(df > 0.0)) throw InputError("student t: df must be > 0");
  if (std::isnan(t)) throw InputError("student t: t is NaN");
  if (std::isinf(t)) return t > 0 ? 0.0 : 1.0;
  const double tail = 0.5 * regularized_incomplete_beta(0.5 * df, 0.5, df / (df + t * t));
  return t >= 0.0 ? tail : 1.0 - tail;
}

WelchResult welch_t(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) throw InputError("welch_t: each sample needs at least two values");
  auto moments = [](std::span<const double> s) {
    const double n = static_cast<double>(s.size());
    const double mean = std::accumulate(s.begin(), s.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : s) ss += (v - mean) * (v - mean);
    return std::pair{mean, ss / (n - 1.0)};
  };
  const auto [ma, va] = moments(a);
  const auto [mb, vb] = moments(b);
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  const double ea = va / na;
  const double eb = vb / nb;

  WelchResult r;
  if (ea + eb == 0.0) {
    r.df = na + nb - 2.0;
    if (ma == mb) return r;
    r.t = ma > mb ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
    r.p_one_tailed = ma > mb ? 0.0 : 1.0;
    return r;
  }
  r.t = (ma - mb) / std::sqrt(ea + eb);
  r.df = (ea + eb) * (ea + eb) / (ea * ea / (na - 1.0) + eb * eb / (nb - 1.0));
  r.p_one_tailed = student_t_upper_tail(r.t, r.df);
  return r;
}

std::string source_mark(double p) { return p < kStrongLevel ? "**" : p < kWeakLevel ? "*" : ""; }
std::string target_mark(double p) { return p < kStrongLevel ? "++" : p < kWeakLevel ? "+" : ""; }

std::string_view to_string(Method m) {
  switch (m) {
    case Method::source_svm: return "sourceSVM";
    case Method::target_svm: return "targetSVM";
    case Method::mmdt: return "mmdt";
    case Method::mmdtl2_linear: return "mmdtl2_linear";
    case Method::mmdtl2_rbf: return "mmdtl2_rbf";
    case Method::mmdtl2_poly: return "mmdtl2_poly";
  }
  return "?";
}

std::vector<Method> all_methods() {
  return {Method::source_svm,    Method::target_svm, Method::mmdt,
          Method::mmdtl2_linear, Method::mmdtl2_rbf, Method::mmdtl2_poly};
}

Method parse_method(std::string_view name) {
  for (Method m : all_methods())
    if (to_string(m) == name) return m;
  std::string known;
  for (Method m : all_methods()) known += (known.empty() ? "" : ", ") + std::string(to_string(m));
  throw InputError("unknown method '" + std::string(name) + "' (known: " + known + ")");
}

bool is_adaptive(Method m) noexcept { return m != Method::source_svm && m != Method::target_svm; }

const AdaptParams& MethodSettings::params(Method m) const {
  switch (m) {
    case Method::mmdt: return mmdt;
    case Method::mmdtl2_linear: return mmdtl2_linear;
    case Method::mmdtl2_rbf: return mmdtl2_rbf;
    case Method::mmdtl2_poly: return mmdtl2_poly;
    default: throw InputError("method '" + std::string(to_string(m)) + "' has no adaptation parameters");
  }
}

AdaptParams& MethodSettings::params(Method m) {
  return const_cast<AdaptParams&>(static_cast<const MethodSettings&>(*this).params(m));
}

void ExperimentConfig::validate() const {
  if (M_values.empty()) throw InputError("experiment: no M values");
  for (std::size_t i = 0; i < M_values.size(); ++i) {
    if (M_values[i] == 0) throw InputError("experiment: M values must be positive");
    if (i && M_values[i] <= M_values[i - 1]) throw InputError("experiment: M values must be ascending");
  }
  if (repeats < 2) throw InputError("experiment: repeats must be >= 2");
  if (methods.empty()) throw InputError("experiment: no methods");
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw InputError("experiment: test fraction must be in (0, 1)");
  if (jobs < 1) throw InputError("experiment: jobs must be >= 1");
  if (!(settings.baseline_C > 0.0)) throw InputError("experiment: baseline C must be > 0");
  for (Method m : methods)
    if (is_adaptive(m)) settings.params(m).validate();
}

const CellSummary* ExperimentReport::find(std::size_t M, Method m) const {
  for (std::size_t i = 0; i < M_values.size(); ++i) {
    if (M_values[i] != M) continue;
    for (std::size_t j = 0; j < methods.size(); ++j)
      if (methods[j] == m) return &cells[i][j];
  }
  return nullptr;
}

namespace {

struct SplitSlot {
  Split split;
  std::string skip_reason;  // nonempty when M is infeasible for this repeat
};

struct CellOutcome {
  std::optional<double> accuracy;
  std::string skip_reason;
  std::string failure;
  NumericalEvents events;
};

DomainDataset concat(const DomainDataset& a, const DomainDataset& b, int class_count) {
  Matrix f(a.dim(), a.count() + b.count());
  for (std::size_t d = 0; d < a.dim(); ++d) {
    auto row = f.row(d);
    const auto ra = a.features.row(d);
    const auto rb = b.features.row(d);
    std::copy(ra.begin(), ra.end(), row.begin());
    std::copy(rb.begin(), rb.end(), row.begin() + static_cast<std::ptrdiff_t>(ra.size()));
  }
  std::vector<int> labels = a.labels;
  labels.insert(labels.end(), b.labels.begin(), b.labels.end());
  return make_dataset(std::move(f), std::move(labels), class_count);
}

std::vector<int> svm_predict(const HyperplaneStack& h, const Matrix& x) {
  const Matrix scores = linalg::matmul_tn(h.theta, x);
  std::vector<int> out(x.cols());
  Vector v(h.class_count());
  for (std::size_t i = 0; i < x.cols(); ++i) {
    for (std::size_t k = 0; k < v.size(); ++k) v[k] = scores(k, i) + h.bias[k];
    out[i] = argmax_class(v);
  }
  return out;
}

CellOutcome run_cell(Method method, const ExperimentConfig& cfg, const DomainDataset& source, const Split& split,
                     int class_count) {
  CellOutcome out;
  const auto& train = split.train;
  const auto& test = split.test;
  const double C = cfg.settings.baseline_C;
  try {
    std::vector<int> predictions;
    if (method == Method::source_svm || method == Method::target_svm) {
      const DomainDataset data = method == Method::source_svm ? concat(source, train, class_count) : train;
      WeightedTrainSet set{data.features, data.labels, Vector(data.count(), C)};
      predictions = svm_predict(train_weighted_ovr(set, class_count, cfg.settings.baseline_svm), test.features);
    } else {
      FitStats stats;
      const AdaptedModel model = fit(source, train, cfg.settings.params(method), &stats);
      out.events = stats.events;
      predictions = predict_all(model, test.features);
    }
    out.accuracy = accuracy(predictions, test.labels);
  } catch (const NumericalError& e) {
    out.failure = e.what();
  }
  return out;
}

std::vector<std::size_t> class_counts(const DomainDataset& d, int class_count) {
  std::vector<std::size_t> counts(static_cast<std::size_t>(class_count) + 1, 0);
  for (int y : d.labels) ++counts[static_cast<std::size_t>(y)];
  return counts;
}

void summarize(CellSummary& cell) {
  const std::size_t n = cell.accuracies.size();
  if (n == 0) return;
  const double mean = std::accumulate(cell.accuracies.begin(), cell.accuracies.end(), 0.0) / static_cast<double>(n);
  double ss = 0.0;
  for (double a : cell.accuracies) ss += (a - mean) * (a - mean);
  cell.mean_percent = 100.0 * mean;
  cell.sd_percent = n > 1 ? 100.0 * std::sqrt(ss / static_cast<double>(n - 1)) : 0.0;
}

template <class Fn>
void run_parallel(std::size_t count, int jobs, Fn&& fn) {
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(jobs), count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace

ExperimentReport run_experiment(const ExperimentConfig& config, const DomainDataset& source,
                                const DomainDataset& target_pool) {
  config.validate();
  if (source.count() == 0 || target_pool.count() == 0) throw InputError("experiment: empty source or target data");
  const int class_count = std::max(source.class_count, target_pool.class_count);
  const std::size_t R = static_cast<std::size_t>(config.repeats);
  const std::size_t nM = config.M_values.size();
  const std::size_t nJ = config.methods.size();

  ExperimentReport report;
  report.M_values = config.M_values;
  report.methods = config.methods;

  std::string source_skip;
  if (source.dim() != target_pool.dim()) {
    source_skip = "source and target feature dimensions differ (" + std::to_string(source.dim()) + " vs " +
                  std::to_string(target_pool.dim()) + ")";
    if (std::find(config.methods.begin(), config.methods.end(), Method::source_svm) != config.methods.end()) {
      report.notes.push_back("sourceSVM skipped: " + source_skip);
    }
  }

  const auto pool_counts = class_counts(target_pool, class_count);
  std::vector<SplitSlot> slots(R * nM);
  for (std::size_t r = 0; r < R; ++r) {
    for (std::size_t i = 0; i < nM; ++i) {
      SplitSlot& slot = slots[r * nM + i];
      const std::size_t M = config.M_values[i];
      slot.split = split_per_class(target_pool, M, config.test_fraction, config.seed + r);
      std::vector<bool> test_rows(target_pool.count(), false);
      for (std::size_t t : slot.split.test_indices) test_rows[t] = true;
      for (std::size_t t : slot.split.train_indices) {
        if (test_rows[t]) throw Error("experiment: a target sample is in both the train and test sets");
      }
      const auto train_counts = class_counts(slot.split.train, class_count);
      for (std::size_t c = 1; c < pool_counts.size(); ++c) {
        if (pool_counts[c] > 0 && train_counts[c] < M) {
          slot.skip_reason = "class " + std::to_string(c) + " has only " + std::to_string(train_counts[c]) +
                             " target training samples";
          break;
        }
      }
      if (slot.skip_reason.empty() && slot.split.test.count() == 0) slot.skip_reason = "empty target test set";
    }
  }

  std::vector<CellOutcome> outcomes(R * nM * nJ);
  run_parallel(outcomes.size(), config.jobs, [&](std::size_t idx) {
    const std::size_t j = idx % nJ;
    const std::size_t i = (idx / nJ) % nM;
    const std::size_t r = idx / (nJ * nM);
    const SplitSlot& slot = slots[r * nM + i];
    const Method method = config.methods[j];
    CellOutcome& out = outcomes[idx];
    if (method == Method::source_svm && !source_skip.empty()) out.skip_reason = source_skip;
    else if (!slot.skip_reason.empty()) out.skip_reason = slot.skip_reason;
    else out = run_cell(method, config, source, slot.split, class_count);
  });

  report.cells.assign(nM, std::vector<CellSummary>(nJ));
  for (std::size_t i = 0; i < nM; ++i) {
    for (std::size_t j = 0; j < nJ; ++j) {
      CellSummary& cell = report.cells[i][j];
      for (std::size_t r = 0; r < R; ++r) {
        const CellOutcome& o = outcomes[(r * nM + i) * nJ + j];
        cell.events.merge(o.events);
        if (!o.skip_reason.empty()) {
          if (cell.skip_reason.empty()) cell.skip_reason = o.skip_reason;
          continue;
        }
        if (o.accuracy) {
          cell.accuracies.push_back(*o.accuracy);
          cell.finished_repeats.push_back(static_cast<int>(r));
        } else {
          cell.failures.push_back("repeat " + std::to_string(r) + ": " + o.failure);
        }
      }
      cell.skipped = cell.accuracies.empty() && cell.failures.empty();
      summarize(cell);
    }
  }

  auto column = [&](Method m) -> std::optional<std::size_t> {
    for (std::size_t j = 0; j < nJ; ++j)
      if (config.methods[j] == m) return j;
    return std::nullopt;
  };
  const auto src_col = column(Method::source_svm);
  const auto tgt_col = column(Method::target_svm);
  for (std::size_t i = 0; i < nM; ++i) {
    for (std::size_t j = 0; j < nJ; ++j) {
      if (!is_adaptive(config.methods[j])) continue;
      CellSummary& cell = report.cells[i][j];
      if (cell.accuracies.size() < 2) continue;
      if (src_col && report.cells[i][*src_col].accuracies.size() >= 2) {
        cell.p_vs_source = welch_t(cell.accuracies, report.cells[i][*src_col].accuracies).p_one_tailed;
        cell.marks_source = source_mark(*cell.p_vs_source);
      }
      if (tgt_col && report.cells[i][*tgt_col].accuracies.size() >= 2) {
        cell.p_vs_target = welch_t(cell.accuracies, report.cells[i][*tgt_col].accuracies).p_one_tailed;
        cell.marks_target = target_mark(*cell.p_vs_target);
      }
    }
  }
  for (std::size_t i = 0; i < nM; ++i) {
    for (std::size_t j = 0; j < nJ; ++j) {
      const CellSummary& cell = report.cells[i][j];
      for (const auto& f : cell.failures) {
        report.notes.push_back("M=" + std::to_string(config.M_values[i]) + " " +
                               std::string(to_string(config.methods[j])) + " failed, " + f);
      }
    }
  }
  return report;
}

namespace {

std::string percent_pair(double mean, double sd) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f\xC2\xB1%.2f", mean, sd);
  return buf;
}

std::string render_cell(const CellSummary& cell) {
  if (cell.accuracies.empty()) return cell.failures.empty() ? "skipped" : "failed";
  std::string s = percent_pair(cell.mean_percent, cell.sd_percent);
  if (!cell.marks_source.empty()) s += " " + cell.marks_source;
  if (!cell.marks_target.empty()) s += " " + cell.marks_target;
  return s;
}

}  // namespace

std::string render_report_tsv(const ExperimentReport& report) {
  std::ostringstream out;
  out << "# one-tailed Welch t-test, H1: method > baseline; ** p<0.01, * p<0.05 vs sourceSVM; "
         "++ p<0.01, + p<0.05 vs targetSVM; accuracy in percent, mean\xC2\xB1sd over repeats\n";
  for (const auto& note : report.notes) out << "# " << note << '\n';
  out << 'M';
  for (Method m : report.methods) out << '\t' << to_string(m);
  out << '\n';
  for (std::size_t i = 0; i < report.M_values.size(); ++i) {
    out << report.M_values[i];
    for (const auto& cell : report.cells[i]) out << '\t' << render_cell(cell);
    out << '\n';
  }
  return out.str();
}

std::string render_raw_tsv(const ExperimentReport& report) {
  std::ostringstream out;
  out << "M\tmethod\trepeat\taccuracy\n";
  for (std::size_t i = 0; i < report.M_values.size(); ++i) {
    for (std::size_t j = 0; j < report.methods.size(); ++j) {
      const CellSummary& cell = report.cells[i][j];
      for (std::size_t r = 0; r < cell.accuracies.size(); ++r) {
        out << report.M_values[i] << '\t' << to_string(report.methods[j]) << '\t' << cell.finished_repeats[r]
            << '\t' << format_double(cell.accuracies[r]) << '\n';
      }
    }
  }
  return out.str();
}

std::string render_plot_data(const ExperimentReport& report) {
  std::ostringstream out;
  out << "# M";
  for (Method m : report.methods) out << ' ' << to_string(m) << "_mean " << to_string(m) << "_sd";
  out << '\n';
  char buf[64];
  for (std::size_t i = 0; i < report.M_values.size(); ++i) {
    out << report.M_values[i];
    for (const auto& cell : report.cells[i]) {
      if (cell.accuracies.empty()) {
        out << " NaN NaN";
      } else {
        std::snprintf(buf, sizeof buf, " %.4f %.4f", cell.mean_percent, cell.sd_percent);
        out << buf;
      }
    }
    out << '\n';
  }
  return out.str();
}

std::string_view to_string(SweepParam p) { return p == SweepParam::c_f ? "c_f" : "c_d"; }

std::vector<double> log_grid(int first_exponent, int last_exponent) {
  if (last_exponent < first_exponent) throw InputError("log_grid: empty exponent range");
  std::vector<double> grid;
  for (int e = first_exponent; e <= last_exponent; ++e) grid.push_back(std::pow(10.0, e));
  return grid;
}

void SweepConfig::validate() const {
  if (grid.empty()) throw InputError("sweep: empty grid");
  for (double v : grid)
    if (!(v > 0.0) || !std::isfinite(v)) throw InputError("sweep: grid values must be positive");
  if (!is_adaptive(method)) throw InputError("sweep: method must be an adaptive method");
  if (method == Method::mmdt) throw InputError("sweep: mmdt pins c_f and c_d; sweep an mmdtl2 method");
}

SweepReport run_sweep(const SweepConfig& config, const DomainDataset& source, const DomainDataset& target_pool) {
  config.validate();
  SweepReport report;
  report.param = config.param;
  report.method = config.method;
  report.M_values = config.base.M_values;
  for (double v : config.grid) {
    ExperimentConfig cfg = config.base;
    cfg.methods = {config.method};
    AdaptParams& p = cfg.settings.params(config.method);
    (config.param == SweepParam::c_f ? p.c_f : p.c_d) = v;
    const ExperimentReport r = run_experiment(cfg, source, target_pool);
    SweepPoint point;
    point.value = v;
    for (const auto& row : r.cells) {
      point.per_M.push_back(row[0]);
      point.events.merge(row[0].events);
      point.failures += row[0].failures.size();
    }
    report.points.push_back(std::move(point));
  }
  return report;
}

std::string render_sweep_tsv(const SweepReport& report) {
  std::ostringstream out;
  out << "# sweep of " << to_string(report.param) << " for " << to_string(report.method)
      << "; events: jitter = SPD solves needing a diagonal shift, instability = operator residual above "
      << format_double(NumericalEvents::kInstabilityThreshold) << ", qp = unconverged dual solves\n";
  out << to_string(report.param)
      << "\tM\taccuracy\tjitter_events\tmax_jitter\tinstability_events\tmax_residual\tqp_unconverged\tfailures\tflags\n";
  char buf[32];
  for (const auto& point : report.points) {
    for (std::size_t i = 0; i < point.per_M.size(); ++i) {
      const CellSummary& cell = point.per_M[i];
      const NumericalEvents& e = cell.events;
      std::string flags;
      if (e.jitter_events) flags += "jitter";
      if (e.instability_events) flags += std::string(flags.empty() ? "" : ",") + "instability";
      if (e.qp_unconverged) flags += std::string(flags.empty() ? "" : ",") + "qp";
      if (!cell.failures.empty()) flags += std::string(flags.empty() ? "" : ",") + "failed";
      std::snprintf(buf, sizeof buf, "%.0e", point.value);
      out << buf << '\t' << report.M_values[i] << '\t' << render_cell(cell) << '\t' << e.jitter_events << '\t'
          << format_double(e.max_jitter) << '\t' << e.instability_events << '\t' << format_double(e.max_residual)
          << '\t' << e.qp_unconverged << '\t' << cell.failures.size() << '\t' << (flags.empty() ? "-" : flags)
          << '\n';
    }
  }
  return out.str();
}

}  // namespace mmdtl2
