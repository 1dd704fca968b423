#include "mmdtl2/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>

namespace mmdtl2 {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    fields.push_back(trim(line.substr(start, comma == std::string_view::npos ? line.npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return fields;
}

/// Non-blank lines with their 1-based line numbers.
std::vector<std::pair<std::size_t, std::string_view>> data_lines(std::string_view text) {
  std::vector<std::pair<std::size_t, std::string_view>> lines;
  std::size_t number = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t nl = text.find('\n', start);
    std::string_view line = text.substr(start, nl == std::string_view::npos ? text.npos : nl - start);
    ++number;
    if (!trim(line).empty()) lines.emplace_back(number, trim(line));
    if (nl == std::string_view::npos) break;
    start = nl + 1;
  }
  return lines;
}

double parse_double(std::string_view field, const std::string& source, std::size_t line) {
  double v = 0.0;
  const char* first = field.data();
  const char* last = field.data() + field.size();
  if (!field.empty() && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc{} || ptr != last || field.empty()) {
    throw ParseError(source, line, "invalid number '" + std::string(field) + "'");
  }
  if (!std::isfinite(v)) throw ParseError(source, line, "non-finite value '" + std::string(field) + "'");
  return v;
}

int parse_label(std::string_view field, const std::string& source, std::size_t line) {
  int v = 0;
  const char* first = field.data();
  const char* last = field.data() + field.size();
  if (!field.empty() && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc{} || ptr != last || field.empty()) {
    throw ParseError(source, line, "label '" + std::string(field) + "' is not an integer");
  }
  if (v < 1) throw ParseError(source, line, "label " + std::to_string(v) + " must be >= 1");
  return v;
}

}  // namespace

DomainDataset DomainDataset::subset(std::span<const std::size_t> indices) const {
  DomainDataset out;
  out.features = features.select_cols(indices);
  out.labels.reserve(indices.size());
  for (std::size_t i : indices) out.labels.push_back(labels.at(i));
  out.class_count = class_count;
  return out;
}

DomainDataset make_dataset(Matrix features, std::vector<int> labels, int class_count) {
  if (features.cols() != labels.size()) {
    throw InputError("dataset: " + std::to_string(features.cols()) + " feature columns but " +
                     std::to_string(labels.size()) + " labels");
  }
  const int max_label = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end());
  if (class_count == 0) class_count = std::max(max_label, 1);
  for (int y : labels) {
    if (y < 1 || y > class_count) {
      throw InputError("dataset: label " + std::to_string(y) + " outside 1.." + std::to_string(class_count));
    }
  }
  if (!linalg::all_finite(features.values())) throw InputError("dataset: non-finite feature value");
  return {std::move(features), std::move(labels), class_count};
}

DomainDataset parse_csv(std::string_view text, const std::string& source_name) {
  const auto lines = data_lines(text);
  if (lines.empty()) throw InputError(source_name + ": empty file");

  std::size_t arity = 0;
  std::vector<int> labels;
  std::vector<double> rows;
  for (const auto& [number, line] : lines) {
    const auto fields = split_fields(line);
    if (arity == 0) {
      arity = fields.size();
      if (arity < 2) throw ParseError(source_name, number, "row needs a label and at least one feature");
    } else if (fields.size() != arity) {
      throw ParseError(source_name, number,
                       "ragged row " + std::to_string(number) + ": expected " + std::to_string(arity) +
                           " fields, found " + std::to_string(fields.size()));
    }
    labels.push_back(parse_label(fields[0], source_name, number));
    for (std::size_t f = 1; f < fields.size(); ++f) rows.push_back(parse_double(fields[f], source_name, number));
  }

  const std::size_t dim = arity - 1;
  Matrix features(dim, labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i)
    for (std::size_t d = 0; d < dim; ++d) features(d, i) = rows[i * dim + d];
  return make_dataset(std::move(features), std::move(labels));
}

DomainDataset load_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path.string() + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_csv(buffer.str(), path.string());
}

FeatureTable parse_feature_csv(std::string_view text, std::size_t dim, const std::string& source_name) {
  const auto lines = data_lines(text);
  FeatureTable table;
  if (lines.empty()) {
    table.features = Matrix(dim, 0);
    return table;
  }
  const std::size_t first_arity = split_fields(lines.front().second).size();
  bool labeled = false;
  if (first_arity == dim + 1) {
    labeled = true;
  } else if (first_arity != dim) {
    throw ParseError(source_name, lines.front().first,
                     "expected " + std::to_string(dim) + " features (optionally preceded by a label), found " +
                         std::to_string(first_arity) + " fields");
  }

  std::vector<int> labels;
  std::vector<double> values;
  for (const auto& [number, line] : lines) {
    const auto fields = split_fields(line);
    if (fields.size() != first_arity) {
      throw ParseError(source_name, number,
                       "ragged row " + std::to_string(number) + ": expected " + std::to_string(first_arity) +
                           " fields, found " + std::to_string(fields.size()));
    }
    std::size_t f = 0;
    if (labeled) labels.push_back(parse_label(fields[f++], source_name, number));
    for (; f < fields.size(); ++f) values.push_back(parse_double(fields[f], source_name, number));
  }
  const std::size_t n = lines.size();
  table.features = Matrix(dim, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t d = 0; d < dim; ++d) table.features(d, i) = values[i * dim + d];
  if (labeled) table.labels = std::move(labels);
  return table;
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc{}) throw Error("format_double: conversion failed");
  return {buf, ptr};
}

void write_csv(std::ostream& out, const DomainDataset& data) {
  for (std::size_t i = 0; i < data.count(); ++i) {
    out << data.labels[i];
    for (std::size_t d = 0; d < data.dim(); ++d) out << ',' << format_double(data.features(d, i));
    out << '\n';
  }
}

Vector augment(std::span<const double> x) {
  Vector out(x.begin(), x.end());
  out.push_back(1.0);
  return out;
}

Matrix augment_columns(const Matrix& x) {
  Matrix out(x.rows() + 1, x.cols());
  std::copy(x.values().begin(), x.values().end(), out.values().begin());
  for (double& v : out.row(x.rows())) v = 1.0;
  return out;
}

WeightModel build_weight_model(std::span<const int> source_labels, std::span<const int> target_labels,
                               double c_d) {
  if (!(c_d >= 0.0) || !std::isfinite(c_d)) throw InputError("weight model: c_d must be a finite value >= 0");
  WeightModel w;
  w.c_d = c_d;
  w.S = Matrix(source_labels.size(), target_labels.size());
  w.col_sums.assign(target_labels.size(), 0.0);
  w.row_sums.assign(source_labels.size(), 0.0);
  if (c_d == 0.0) return w;
  for (std::size_t n = 0; n < source_labels.size(); ++n) {
    for (std::size_t m = 0; m < target_labels.size(); ++m) {
      if (source_labels[n] == target_labels[m]) w.S(n, m) = c_d;
    }
  }
  // Sums are accumulated as counts so S_M[m] is an exact multiple of c_d.
  for (std::size_t m = 0; m < target_labels.size(); ++m) {
    const auto count = std::count(source_labels.begin(), source_labels.end(), target_labels[m]);
    w.col_sums[m] = static_cast<double>(count) * c_d;
  }
  for (std::size_t n = 0; n < source_labels.size(); ++n) {
    const auto count = std::count(target_labels.begin(), target_labels.end(), source_labels[n]);
    w.row_sums[n] = static_cast<double>(count) * c_d;
  }
  return w;
}

OvrLabelMatrix ovr_labels(std::span<const int> labels, int class_count) {
  if (class_count < 1) throw InputError("ovr_labels: class count must be >= 1");
  OvrLabelMatrix out{Matrix(static_cast<std::size_t>(class_count), labels.size(), -1.0)};
  for (std::size_t m = 0; m < labels.size(); ++m) {
    if (labels[m] < 1 || labels[m] > class_count) {
      throw InputError("ovr_labels: label " + std::to_string(labels[m]) + " outside 1.." +
                       std::to_string(class_count));
    }
    out.Y(static_cast<std::size_t>(labels[m] - 1), m) = 1.0;
  }
  return out;
}

void validate(const SynthConfig& c) {
  if (c.classes < 1) throw InputError("synth: classes must be >= 1");
  if (c.source_per_class < 1 || c.target_per_class < 1) throw InputError("synth: per-class counts must be >= 1");
  if (c.source_dim < 1 || c.target_dim < 1) throw InputError("synth: dimensions must be >= 1");
  if (!(c.class_separation >= 0.0) || !(c.within_sd >= 0.0) || !(c.noise_sd >= 0.0) ||
      !(c.shift.offset_sd >= 0.0)) {
    throw InputError("synth: standard deviations must be >= 0");
  }
  if (c.shift.kind == ShiftKind::identity && c.source_dim != c.target_dim) {
    throw InputError("synth: identity shift requires equal source and target dimensions");
  }
  if (c.shift.kind == ShiftKind::banded && c.shift.band < 1) throw InputError("synth: band must be >= 1");
}

std::pair<DomainDataset, DomainDataset> synth_generate(const SynthConfig& c) {
  validate(c);
  const std::size_t K = static_cast<std::size_t>(c.classes);
  const std::size_t Ls = c.source_dim;
  const std::size_t Lt = c.target_dim;

  // Independent streams so that changing one count does not perturb the others.
  linalg::SplitMix64 mean_rng(c.seed ^ 0x6d65616e73ULL);
  linalg::SplitMix64 source_rng(c.seed ^ 0x736f75726365ULL);
  linalg::SplitMix64 target_rng(c.seed ^ 0x746172676574ULL);
  linalg::SplitMix64 shift_rng(c.seed ^ 0x7368696674ULL);

  Matrix means(Ls, K);
  for (double& v : means.values()) v = mean_rng.normal(0.0, c.class_separation);

  const std::size_t band = std::min(c.shift.band, Ls);
  Matrix band_weights;
  Vector offsets(Lt, 0.0);
  if (c.shift.kind == ShiftKind::banded) {
    band_weights = Matrix(Lt, band);
    const double sd = 1.0 / std::sqrt(static_cast<double>(band));
    for (double& v : band_weights.values()) v = shift_rng.normal(0.0, sd);
    for (double& v : offsets) v = shift_rng.normal(0.0, c.shift.offset_sd);
  }

  auto draw = [&](linalg::SplitMix64& rng, std::size_t k, Vector& x) {
    for (std::size_t d = 0; d < Ls; ++d) x[d] = means(d, k) + rng.normal(0.0, c.within_sd);
  };

  DomainDataset source;
  source.features = Matrix(Ls, K * c.source_per_class);
  source.class_count = c.classes;
  Vector x(Ls);
  std::size_t col = 0;
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t i = 0; i < c.source_per_class; ++i, ++col) {
      draw(source_rng, k, x);
      source.features.set_col(col, x);
      source.labels.push_back(static_cast<int>(k + 1));
    }
  }

  DomainDataset target;
  target.features = Matrix(Lt, K * c.target_per_class);
  target.class_count = c.classes;
  Vector y(Lt);
  col = 0;
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t i = 0; i < c.target_per_class; ++i, ++col) {
      draw(target_rng, k, x);
      if (c.shift.kind == ShiftKind::identity) {
        y = x;
      } else {
        for (std::size_t j = 0; j < Lt; ++j) {
          double v = offsets[j];
          for (std::size_t r = 0; r < band; ++r) v += band_weights(j, r) * x[(j + r) % Ls];
          y[j] = v;
        }
      }
      if (c.noise_sd > 0.0)
        for (double& v : y) v += target_rng.normal(0.0, c.noise_sd);
      target.features.set_col(col, y);
      target.labels.push_back(static_cast<int>(k + 1));
    }
  }
  return {std::move(source), std::move(target)};
}

Split split_per_class(const DomainDataset& data, std::size_t per_class_cap, double test_fraction,
                      std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw InputError("split: test_fraction must be in (0, 1)");
  Split split;
  linalg::SplitMix64 rng(seed);
  for (int k = 1; k <= data.class_count; ++k) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < data.count(); ++i)
      if (data.labels[i] == k) members.push_back(i);
    linalg::seeded_shuffle(members, rng);
    if (members.empty()) continue;
    const auto n_test =
        static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(members.size())));
    if (n_test == 0) split.warnings.push_back("class " + std::to_string(k) + " has no test samples");
    const std::size_t n_train = std::min(per_class_cap, members.size() - n_test);
    split.test_indices.insert(split.test_indices.end(), members.begin(),
                              members.begin() + static_cast<std::ptrdiff_t>(n_test));
    split.train_indices.insert(split.train_indices.end(), members.begin() + static_cast<std::ptrdiff_t>(n_test),
                               members.begin() + static_cast<std::ptrdiff_t>(n_test + n_train));
  }
  split.train = data.subset(split.train_indices);
  split.test = data.subset(split.test_indices);
  return split;
}

}  // namespace mmdtl2
