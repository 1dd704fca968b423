#include "mmdtl2/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>

#include "mmdtl2/eval.hpp"
#include "mmdtl2/model_io.hpp"

namespace mmdtl2::cli {

namespace {

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::string& path, const std::string& text, std::ostream& fallback) {
  if (path.empty() || path == "-") {
    fallback << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write '" + path + "'");
  out << text;
}

template <class T>
std::vector<T> parse_list(const std::string& text, const char* what) {
  std::vector<T> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    item = trim(item);
    if (item.empty()) continue;
    if constexpr (std::is_same_v<T, std::string>) {
      out.push_back(item);
    } else {
      std::size_t used = 0;
      long long v = 0;
      try {
        v = std::stoll(item, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != item.size() || v < 0) throw InputError(std::string("bad ") + what + " entry '" + item + "'");
      out.push_back(static_cast<T>(v));
    }
  }
  if (out.empty()) throw InputError(std::string(what) + " list is empty");
  return out;
}

/// Moves `--config path` out of the argument list and splices its `key=value`
/// pairs in as `--key=value` right after the subcommand, so explicit flags win.
std::vector<std::string> expand_config(std::vector<std::string> args) {
  std::optional<std::string> path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config") {
      if (i + 1 >= args.size()) throw InputError("--config needs a path");
      path = args[i + 1];
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i), args.begin() + static_cast<std::ptrdiff_t>(i) + 2);
      break;
    }
    if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i));
      break;
    }
  }
  if (!path) return args;
  std::vector<std::string> injected;
  for (const auto& [k, v] : read_key_values(*path)) injected.push_back("--" + k + "=" + v);
  const auto at = args.empty() ? args.begin() : args.begin() + 1;
  args.insert(at, injected.begin(), injected.end());
  return args;
}

void parse_app(CLI::App& app, std::vector<std::string> args) {
  std::reverse(args.begin(), args.end());
  app.parse(args);
}

// -- option groups ------------------------------------------------------------------

struct SynthFlags {
  SynthConfig cfg;
  std::string shift = "banded";

  void add(CLI::App& app) {
    app.add_option("--classes", cfg.classes, "number of classes")->capture_default_str();
    app.add_option("--source-per-class", cfg.source_per_class, "source samples per class")->capture_default_str();
    app.add_option("--target-per-class", cfg.target_per_class, "target samples per class")->capture_default_str();
    app.add_option("--source-dim", cfg.source_dim, "source feature dimension")->capture_default_str();
    app.add_option("--target-dim", cfg.target_dim, "target feature dimension")->capture_default_str();
    app.add_option("--class-separation", cfg.class_separation, "sd of class-mean coordinates")->capture_default_str();
    app.add_option("--within-sd", cfg.within_sd, "within-class sd")->capture_default_str();
    app.add_option("--shift", shift, "target map: banded or identity")->capture_default_str();
    app.add_option("--band", cfg.shift.band, "band width of the banded map")->capture_default_str();
    app.add_option("--offset-sd", cfg.shift.offset_sd, "sd of the map's offset")->capture_default_str();
    app.add_option("--noise-sd", cfg.noise_sd, "target noise sd")->capture_default_str();
    app.add_option("--seed", cfg.seed, "generator seed")->capture_default_str();
  }

  SynthConfig build() const {
    SynthConfig c = cfg;
    if (shift == "banded") c.shift.kind = ShiftKind::banded;
    else if (shift == "identity") c.shift.kind = ShiftKind::identity;
    else throw InputError("unknown shift '" + shift + "' (expected banded or identity)");
    validate(c);
    return c;
  }
};

struct ParamFlags {
  std::optional<double> cf, ct, cs, cd, cT;
  std::string kernel = "linear";
  std::optional<double> gamma;
  std::optional<double> coef0;
  std::optional<int> degree;
  std::optional<int> iterations;
  std::optional<double> early_stop, qp_tol, svm_tol;
  std::optional<int> qp_max_sweeps, svm_max_sweeps;
  bool explicit_linear = false;

  void add(CLI::App& app, bool with_kernel_choice) {
    app.add_option("--cf", cf, "transform regularization c_f");
    app.add_option("--ct", ct, "target hinge weight c_t");
    app.add_option("--cs", cs, "source hinge weight c_s");
    app.add_option("--cd", cd, "class-anchoring weight c_d");
    app.add_option("--cT", cT, "W-step hinge weight (defaults to c_t)");
    if (with_kernel_choice) app.add_option("--kernel", kernel, "linear, rbf or poly")->capture_default_str();
    app.add_option("--gamma", gamma, "kernel gamma (0 means 1 / (L_t + 1))");
    app.add_option("--coef0", coef0, "poly kernel offset");
    app.add_option("--degree", degree, "poly kernel degree");
    app.add_option("--iterations", iterations, "outer alternation steps");
    app.add_option("--early-stop", early_stop, "relative W-objective change that ends the alternation");
    app.add_option("--qp-tol", qp_tol, "dual solver step tolerance");
    app.add_option("--qp-max-sweeps", qp_max_sweeps, "dual solver sweep limit");
    app.add_option("--svm-tol", svm_tol, "SVM step tolerance");
    app.add_option("--svm-max-sweeps", svm_max_sweeps, "SVM sweep limit");
  }

  void apply_common(AdaptParams& p) const {
    if (gamma) p.kernel.gamma = *gamma;
    if (coef0) p.kernel.coef0 = *coef0;
    if (degree) p.kernel.degree = *degree;
    if (iterations) p.iterations = *iterations;
    if (early_stop) p.early_stop = *early_stop;
    if (qp_tol) p.qp.tol = *qp_tol;
    if (svm_tol) p.svm.tol = *svm_tol;
    if (qp_max_sweeps) p.qp.max_sweeps = *qp_max_sweeps;
    if (svm_max_sweeps) p.svm.max_sweeps = *svm_max_sweeps;
  }

  void apply_weights(AdaptParams& p) const {
    if (cf) p.c_f = *cf;
    if (ct) p.c_t = *ct;
    if (cs) p.c_s = *cs;
    if (cd) p.c_d = *cd;
    if (cT) p.c_T = *cT;
  }

  AdaptParams build(Mode mode) const {
    AdaptParams p = mode == Mode::mmdt ? AdaptParams::mmdt_defaults() : AdaptParams::mmdtl2_defaults();
    p.kernel.kind = parse_kernel_kind(kernel);
    apply_weights(p);
    apply_common(p);
    p.explicit_linear = explicit_linear;
    return p;
  }
};

// -- subcommands ------------------------------------------------------------------

void log_fit(std::ostream& err, const FitStats& st) {
  char buf[256];
  for (const auto& e : st.log) {
    std::snprintf(buf, sizeof buf, "iteration %d  W-objective %.10g  dual %.10g  kkt %.3g  qp-sweeps %d%s  G %s",
                  e.iteration, e.w_objective, e.dual_value, e.kkt, e.qp_sweeps, e.qp_converged ? "" : " (limit)",
                  std::string(to_string(e.g_case)).c_str());
    err << buf << '\n';
  }
  const auto& ev = st.events;
  err << "numerical events: jitter " << ev.jitter_events << ", instability " << ev.instability_events
      << ", unconverged qp " << ev.qp_unconverged << '\n';
}

int cmd_synth(const SynthFlags& flags, const std::string& source_out, const std::string& target_out,
              std::ostream& err) {
  const auto [source, target] = synth_generate(flags.build());
  std::ostringstream s, t;
  write_csv(s, source);
  write_csv(t, target);
  write_text(source_out, s.str(), err);
  write_text(target_out, t.str(), err);
  err << "wrote " << source.count() << " source and " << target.count() << " target samples\n";
  return kExitOk;
}

int cmd_train(const std::string& source_path, const std::string& target_path, const std::string& model_out,
              const std::string& method, const ParamFlags& flags, std::uint64_t seed, std::ostream& out,
              std::ostream& err) {
  const auto source = load_csv(source_path);
  const auto target = load_csv(target_path);
  AdaptParams params = flags.build(parse_mode(method));
  params.seed = seed;
  FitStats stats;
  const AdaptedModel model = fit(source, target, params, &stats);
  log_fit(err, stats);
  if (model_out.empty() || model_out == "-") {
    write_model(out, model);
  } else {
    save_model(model_out, model);
    err << "model written to " << model_out << '\n';
  }
  return kExitOk;
}

int cmd_predict(const std::string& model_path, const std::string& data_path, bool report, std::ostream& out,
                std::ostream& err) {
  const AdaptedModel model = load_model(model_path);
  const FeatureTable table = parse_feature_csv(read_file(data_path), model.transform.target_dim(), data_path);
  if (table.count() == 0) return kExitOk;
  if (report && !table.labels) throw InputError("--report needs labeled input, '" + data_path + "' has no labels");
  const auto predictions = predict_all(model, table.features);
  for (int p : predictions) out << p << '\n';
  if (report) {
    const double acc = accuracy(predictions, *table.labels);
    out << "# accuracy " << format_double(acc) << '\n';
    err << "accuracy " << format_double(acc) << " on " << predictions.size() << " samples\n";
  }
  return kExitOk;
}

int cmd_export_w(const std::string& model_path, const std::string& out_path, std::ostream& out) {
  const AdaptedModel model = load_model(model_path);
  const Matrix W = materialize_W(model.transform);
  std::ostringstream ss;
  for (std::size_t r = 0; r < W.rows(); ++r) {
    for (std::size_t c = 0; c < W.cols(); ++c) ss << (c ? "," : "") << format_double(W(r, c));
    ss << '\n';
  }
  write_text(out_path, ss.str(), out);
  return kExitOk;
}

int cmd_inspect(const std::string& model_path, const std::string& data_path, std::ostream& out) {
  if (model_path.empty() == data_path.empty()) throw InputError("inspect needs exactly one of --model or --data");
  if (!model_path.empty()) {
    const AdaptedModel m = load_model(model_path);
    const auto& t = m.transform;
    const auto& p = m.params;
    out << "format " << kModelMagic << " v" << kModelVersion << '\n'
        << "mode " << to_string(m.mode) << '\n'
        << "kernel " << to_string(t.kernel.kind) << " gamma " << format_double(t.kernel.gamma) << " coef0 "
        << format_double(t.kernel.coef0) << " degree " << t.kernel.degree << '\n'
        << "source_dim " << t.source_dim() << '\n'
        << "target_dim " << t.target_dim() << '\n'
        << "anchors " << t.anchor_count() << '\n'
        << "classes " << m.hyperplanes.class_count() << '\n'
        << "c_f " << format_double(p.c_f) << " c_t " << format_double(p.c_t) << " c_s " << format_double(p.c_s)
        << " c_d " << format_double(p.c_d) << " c_T " << format_double(p.hinge_weight()) << '\n';
    return kExitOk;
  }
  const auto d = load_csv(data_path);
  std::vector<std::size_t> per_class(static_cast<std::size_t>(d.class_count) + 1, 0);
  for (int y : d.labels) ++per_class[static_cast<std::size_t>(y)];
  out << "samples " << d.count() << '\n' << "dim " << d.dim() << '\n' << "classes " << d.class_count << '\n';
  for (std::size_t c = 1; c < per_class.size(); ++c) out << "class " << c << ' ' << per_class[c] << '\n';
  return kExitOk;
}

struct ExperimentFlags {
  std::string source, target, out, raw_out, plot_out;
  std::string m_values, methods;
  int repeats = 10;
  double test_fraction = 0.5;
  std::uint64_t seed = 1;
  int jobs = 1;
  double baseline_c = 1.0;
  std::optional<double> mmdt_cs, mmdt_ct;
  bool sweep_cf = false, sweep_cd = false;
  int sweep_min_exp = -10, sweep_max_exp = 0;
  std::string sweep_method = "mmdtl2_linear";
  ParamFlags params;
};

ExperimentConfig build_experiment(const ExperimentFlags& f) {
  ExperimentConfig cfg;
  if (!f.m_values.empty()) cfg.M_values = parse_list<std::size_t>(f.m_values, "M value");
  if (!f.methods.empty()) {
    cfg.methods.clear();
    for (const auto& name : parse_list<std::string>(f.methods, "method")) cfg.methods.push_back(parse_method(name));
  }
  cfg.repeats = f.repeats;
  cfg.test_fraction = f.test_fraction;
  cfg.seed = f.seed;
  cfg.jobs = f.jobs;
  cfg.settings.baseline_C = f.baseline_c;
  for (Method m : {Method::mmdtl2_linear, Method::mmdtl2_rbf, Method::mmdtl2_poly}) {
    AdaptParams& p = cfg.settings.params(m);
    f.params.apply_weights(p);
    f.params.apply_common(p);
  }
  AdaptParams& mmdt = cfg.settings.mmdt;
  f.params.apply_common(mmdt);
  mmdt.kernel = KernelSpec::linear();
  if (f.mmdt_cs) mmdt.c_s = *f.mmdt_cs;
  if (f.mmdt_ct) mmdt.c_t = *f.mmdt_ct;
  return cfg;
}

int cmd_experiment(const ExperimentFlags& f, std::ostream& out, std::ostream& err) {
  const auto source = load_csv(f.source);
  const auto target = load_csv(f.target);
  const ExperimentConfig cfg = build_experiment(f);

  if (f.sweep_cf || f.sweep_cd) {
    if (f.sweep_cf && f.sweep_cd) throw InputError("--sweep-cf and --sweep-cd are exclusive");
    SweepConfig sweep;
    sweep.param = f.sweep_cf ? SweepParam::c_f : SweepParam::c_d;
    sweep.grid = log_grid(f.sweep_min_exp, f.sweep_max_exp);
    sweep.method = parse_method(f.sweep_method);
    sweep.base = cfg;
    const SweepReport report = run_sweep(sweep, source, target);
    write_text(f.out, render_sweep_tsv(report), out);
    if (!f.plot_out.empty()) {
      std::ostringstream plot;
      plot << "# " << to_string(report.param) << " M mean sd\n";
      char buf[96];
      for (const auto& point : report.points) {
        for (std::size_t i = 0; i < point.per_M.size(); ++i) {
          const auto& c = point.per_M[i];
          if (c.accuracies.empty()) std::snprintf(buf, sizeof buf, "%.0e %zu NaN NaN\n", point.value, report.M_values[i]);
          else std::snprintf(buf, sizeof buf, "%.0e %zu %.4f %.4f\n", point.value, report.M_values[i], c.mean_percent, c.sd_percent);
          plot << buf;
        }
      }
      write_text(f.plot_out, plot.str(), out);
    }
    for (const auto& point : report.points) {
      if (point.events.total() > 0 || point.failures > 0) {
        err << to_string(report.param) << "=" << format_double(point.value) << ": jitter "
            << point.events.jitter_events << ", instability " << point.events.instability_events
            << ", unconverged qp " << point.events.qp_unconverged << ", failures " << point.failures << '\n';
      }
    }
    return kExitOk;
  }

  const ExperimentReport report = run_experiment(cfg, source, target);
  write_text(f.out, render_report_tsv(report), out);
  if (!f.raw_out.empty()) write_text(f.raw_out, render_raw_tsv(report), out);
  if (!f.plot_out.empty()) write_text(f.plot_out, render_plot_data(report), out);
  for (const auto& note : report.notes) err << note << '\n';
  return kExitOk;
}

}  // namespace

std::vector<std::pair<std::string, std::string>> read_key_values(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  std::vector<std::pair<std::string, std::string>> out;
  std::stringstream ss(text);
  std::size_t number = 0;
  for (std::string line; std::getline(ss, line);) {
    ++number;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(path.string(), number, "expected key=value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ParseError(path.string(), number, "empty key");
    out.emplace_back(std::move(key), std::move(value));
  }
  return out;
}

SynthConfig load_synth_config(const std::filesystem::path& path) {
  CLI::App app("synth config");
  SynthFlags flags;
  flags.add(app);
  std::vector<std::string> args;
  for (const auto& [k, v] : read_key_values(path)) args.push_back("--" + k + "=" + v);
  try {
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    parse_app(app, args);
  } catch (const CLI::ParseError& e) {
    throw InputError(path.string() + ": " + e.what());
  }
  return flags.build();
}

int run(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  CLI::App app("Max-margin domain transform learning with class anchoring", "mmdtl2");
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);

  SynthFlags synth_flags;
  std::string synth_source_out, synth_target_out;
  auto* synth = app.add_subcommand("synth", "generate a synthetic two-domain dataset");
  synth_flags.add(*synth);
  synth->add_option("--source-out", synth_source_out, "source CSV path")->required();
  synth->add_option("--target-out", synth_target_out, "target CSV path")->required();

  std::string train_source, train_target, model_out, method = "mmdtl2";
  std::uint64_t train_seed = 0;
  ParamFlags train_flags;
  auto* train = app.add_subcommand("train", "fit a transform and classifiers");
  train->add_option("--source", train_source, "labeled source CSV")->required();
  train->add_option("--target", train_target, "labeled target CSV")->required();
  train->add_option("--model-out", model_out, "model path (stdout when omitted)");
  train->add_option("--method", method, "mmdtl2 or mmdt")->capture_default_str();
  train->add_option("--seed", train_seed, "seed stored with the model")->capture_default_str();
  train->add_flag("--explicit-linear", train_flags.explicit_linear, "linear only: build W from the dense A");
  train_flags.add(*train, true);

  std::string predict_model, predict_data;
  bool predict_report = false;
  auto* predict = app.add_subcommand("predict", "label target samples with a model");
  predict->add_option("--model", predict_model, "model file")->required();
  predict->add_option("--data", predict_data, "CSV, labeled or unlabeled")->required();
  predict->add_flag("--report", predict_report, "append the accuracy (needs labels)");

  ExperimentFlags ex;
  auto* experiment = app.add_subcommand("experiment", "repeated-split comparison of methods");
  experiment->add_option("--source", ex.source, "labeled source CSV")->required();
  experiment->add_option("--target", ex.target, "labeled target pool CSV")->required();
  experiment->add_option("--out", ex.out, "report path (stdout when omitted)");
  experiment->add_option("--raw-out", ex.raw_out, "per-repeat accuracies TSV");
  experiment->add_option("--emit-plot-data", ex.plot_out, "gnuplot data file");
  experiment->add_option("--m-values", ex.m_values, "comma list of target samples per class");
  experiment->add_option("--methods", ex.methods, "comma list of methods");
  experiment->add_option("--repeats", ex.repeats, "random splits")->capture_default_str();
  experiment->add_option("--test-fraction", ex.test_fraction, "held-out share of each target class")
      ->capture_default_str();
  experiment->add_option("--seed", ex.seed, "split seed; repeat r uses seed + r")->capture_default_str();
  experiment->add_option("--jobs", ex.jobs, "concurrent cells")->capture_default_str();
  experiment->add_option("--baseline-c", ex.baseline_c, "C of sourceSVM and targetSVM")->capture_default_str();
  experiment->add_option("--mmdt-cs", ex.mmdt_cs, "c_s of the mmdt method");
  experiment->add_option("--mmdt-ct", ex.mmdt_ct, "c_t of the mmdt method");
  experiment->add_flag("--sweep-cf", ex.sweep_cf, "sweep c_f over a log grid");
  experiment->add_flag("--sweep-cd", ex.sweep_cd, "sweep c_d over a log grid");
  experiment->add_option("--sweep-min-exp", ex.sweep_min_exp, "smallest grid exponent")->capture_default_str();
  experiment->add_option("--sweep-max-exp", ex.sweep_max_exp, "largest grid exponent")->capture_default_str();
  experiment->add_option("--sweep-method", ex.sweep_method, "method swept")->capture_default_str();
  ex.params.add(*experiment, false);

  std::string export_model, export_out;
  auto* export_w = app.add_subcommand("export-w", "write the linear transform W as CSV");
  export_w->add_option("--model", export_model, "model file")->required();
  export_w->add_option("--out", export_out, "CSV path (stdout when omitted)");

  std::string inspect_model, inspect_data;
  auto* inspect = app.add_subcommand("inspect", "summarize a model or dataset");
  inspect->add_option("--model", inspect_model, "model file");
  inspect->add_option("--data", inspect_data, "labeled CSV");

  try {
    try {
      parse_app(app, expand_config(raw_args));
    } catch (const CLI::ParseError& e) {
      if (e.get_exit_code() == 0) {
        app.exit(e, out, err);
        return kExitOk;
      }
      err << "error: " << e.what() << '\n';
      return kExitInput;
    }
    if (synth->parsed()) return cmd_synth(synth_flags, synth_source_out, synth_target_out, err);
    if (train->parsed())
      return cmd_train(train_source, train_target, model_out, method, train_flags, train_seed, out, err);
    if (predict->parsed()) return cmd_predict(predict_model, predict_data, predict_report, out, err);
    if (experiment->parsed()) return cmd_experiment(ex, out, err);
    if (export_w->parsed()) return cmd_export_w(export_model, export_out, out);
    if (inspect->parsed()) return cmd_inspect(inspect_model, inspect_data, out);
    err << "error: no subcommand\n";
    return kExitInput;
  } catch (const InputError& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const std::exception& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  }
}

}  // namespace mmdtl2::cli
