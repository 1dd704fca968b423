#include "mmdtl2/model_io.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <vector>

namespace mmdtl2 {

namespace {

void write_rows(std::ostream& out, const char* name, const Matrix& m) {
  out << name << '\n';
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) out << (c ? " " : "") << format_double(m(r, c));
    out << '\n';
  }
}

class LineReader {
 public:
  LineReader(std::istream& in, std::string source) : in_(in), source_(std::move(source)) {}

  [[nodiscard]] std::size_t line() const noexcept { return line_; }
  [[noreturn]] void fail(const std::string& what) const { throw ParseError(source_, line_, what); }

  /// Next non-empty line split on whitespace; empty when the stream is done.
  std::vector<std::string> next() {
    std::string text;
    while (std::getline(in_, text)) {
      ++line_;
      if (!text.empty() && text.back() == '\r') text.pop_back();
      std::istringstream ss(text);
      std::vector<std::string> tokens;
      for (std::string t; ss >> t;) tokens.push_back(t);
      if (!tokens.empty()) return tokens;
    }
    return {};
  }

  std::vector<std::string> expect(const std::string& keyword, std::size_t values) {
    auto tokens = next();
    if (tokens.empty()) fail("unexpected end of file, expected '" + keyword + "'");
    if (tokens[0] != keyword) fail("expected '" + keyword + "', found '" + tokens[0] + "'");
    if (tokens.size() != values + 1) fail("'" + keyword + "' takes " + std::to_string(values) + " values");
    return tokens;
  }

  double number(const std::string& token) const {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
    if (ec != std::errc{} || ptr != token.data() + token.size()) fail("bad number '" + token + "'");
    return v;
  }

  std::size_t count(const std::string& token) const {
    std::size_t v = 0;
    const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
    if (ec != std::errc{} || ptr != token.data() + token.size()) fail("bad count '" + token + "'");
    return v;
  }

  Matrix matrix(const std::string& keyword, std::size_t rows, std::size_t cols) {
    expect(keyword, 0);
    Matrix m(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
      const auto tokens = next();
      if (tokens.size() != cols) {
        fail("section '" + keyword + "' row " + std::to_string(r + 1) + ": expected " + std::to_string(cols) +
             " values, got " + std::to_string(tokens.size()));
      }
      for (std::size_t c = 0; c < cols; ++c) m(r, c) = number(tokens[c]);
    }
    return m;
  }

 private:
  std::istream& in_;
  std::string source_;
  std::size_t line_ = 0;
};

}  // namespace

void write_model(std::ostream& out, const AdaptedModel& model) {
  const auto& t = model.transform;
  const auto& h = model.hyperplanes;
  const auto& p = model.params;
  out << kModelMagic << " v" << kModelVersion << '\n';
  out << "dims " << t.source_dim() << ' ' << t.target_dim() << ' ' << t.anchor_count() << ' ' << h.class_count()
      << '\n';
  out << "mode " << to_string(model.mode) << '\n';
  out << "kernel " << to_string(t.kernel.kind) << ' ' << format_double(t.kernel.gamma) << ' '
      << format_double(t.kernel.coef0) << ' ' << t.kernel.degree << '\n';
  write_rows(out, "Theta", h.theta);
  out << "bias\n";
  for (std::size_t k = 0; k < h.bias.size(); ++k) out << (k ? " " : "") << format_double(h.bias[k]);
  out << '\n';
  write_rows(out, "R", t.R);
  write_rows(out, "T", t.T);
  write_rows(out, "targets", t.targets);
  out << "params\n";
  out << "c_f " << format_double(p.c_f) << '\n';
  out << "c_t " << format_double(p.c_t) << '\n';
  out << "c_s " << format_double(p.c_s) << '\n';
  out << "c_d " << format_double(p.c_d) << '\n';
  out << "c_T " << format_double(p.hinge_weight()) << '\n';
  out << "iterations " << p.iterations << '\n';
  out << "early_stop " << format_double(p.early_stop) << '\n';
  out << "qp_tol " << format_double(p.qp.tol) << '\n';
  out << "qp_max_sweeps " << p.qp.max_sweeps << '\n';
  out << "svm_tol " << format_double(p.svm.tol) << '\n';
  out << "svm_max_sweeps " << p.svm.max_sweeps << '\n';
  out << "seed " << p.seed << '\n';
  out << "explicit_linear " << (p.explicit_linear ? 1 : 0) << '\n';
}

AdaptedModel read_model(std::istream& in, const std::string& source_name) {
  LineReader rd(in, source_name);
  auto header = rd.next();
  if (header.size() != 2 || header[0] != kModelMagic) rd.fail("not a model file");
  if (header[1] != "v" + std::to_string(kModelVersion)) rd.fail("unsupported model version '" + header[1] + "'");

  const auto dims = rd.expect("dims", 4);
  const std::size_t ls = rd.count(dims[1]);
  const std::size_t lt = rd.count(dims[2]);
  const std::size_t m = rd.count(dims[3]);
  const std::size_t k = rd.count(dims[4]);
  if (ls == 0 || lt == 0 || m == 0 || k < 2) rd.fail("invalid dims");

  AdaptedModel model;
  const auto mode = rd.expect("mode", 1);
  try {
    model.mode = parse_mode(mode[1]);
  } catch (const InputError& e) {
    rd.fail(e.what());
  }

  const auto kern = rd.expect("kernel", 4);
  KernelSpec spec;
  try {
    spec.kind = parse_kernel_kind(kern[1]);
  } catch (const InputError& e) {
    rd.fail(e.what());
  }
  spec.gamma = rd.number(kern[2]);
  spec.coef0 = rd.number(kern[3]);
  spec.degree = static_cast<int>(rd.count(kern[4]));

  model.hyperplanes.theta = rd.matrix("Theta", ls, k);
  const Matrix bias = rd.matrix("bias", 1, k);
  model.hyperplanes.bias.assign(bias.values().begin(), bias.values().end());
  model.transform.R = rd.matrix("R", ls, m);
  model.transform.T = rd.matrix("T", m, m);
  model.transform.targets = rd.matrix("targets", lt, m);
  model.transform.kernel = spec;
  model.class_count = static_cast<int>(k);

  rd.expect("params", 0);
  AdaptParams& p = model.params;
  p.mode = model.mode;
  p.kernel = spec;
  for (auto tokens = rd.next(); !tokens.empty(); tokens = rd.next()) {
    if (tokens.size() != 2) rd.fail("params lines are 'key value'");
    const std::string& key = tokens[0];
    const std::string& v = tokens[1];
    if (key == "c_f") p.c_f = rd.number(v);
    else if (key == "c_t") p.c_t = rd.number(v);
    else if (key == "c_s") p.c_s = rd.number(v);
    else if (key == "c_d") p.c_d = rd.number(v);
    else if (key == "c_T") p.c_T = rd.number(v);
    else if (key == "iterations") p.iterations = static_cast<int>(rd.count(v));
    else if (key == "early_stop") p.early_stop = rd.number(v);
    else if (key == "qp_tol") p.qp.tol = rd.number(v);
    else if (key == "qp_max_sweeps") p.qp.max_sweeps = static_cast<int>(rd.count(v));
    else if (key == "svm_tol") p.svm.tol = rd.number(v);
    else if (key == "svm_max_sweeps") p.svm.max_sweeps = static_cast<int>(rd.count(v));
    else if (key == "seed") p.seed = rd.count(v);
    else if (key == "explicit_linear") p.explicit_linear = rd.count(v) != 0;
    else rd.fail("unknown parameter '" + key + "'");
  }
  try {
    spec.validate();
  } catch (const InputError& e) {
    throw InputError(source_name + ": " + e.what());
  }
  return model;
}

void save_model(const std::filesystem::path& path, const AdaptedModel& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write '" + path.string() + "'");
  write_model(out, model);
  if (!out) throw InputError("write failed for '" + path.string() + "'");
}

AdaptedModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path.string() + "'");
  return read_model(in, path.string());
}

}  // namespace mmdtl2
