#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mmdtl2/linalg.hpp"

namespace mmdtl2 {

using linalg::Matrix;
using linalg::Vector;

/// Labeled samples of one domain. Features are stored L x count, one sample per
/// column; labels are 1-based class ids.
struct DomainDataset {
  Matrix features;
  std::vector<int> labels;
  int class_count = 0;

  [[nodiscard]] std::size_t dim() const noexcept { return features.rows(); }
  [[nodiscard]] std::size_t count() const noexcept { return labels.size(); }
  [[nodiscard]] Vector sample(std::size_t i) const { return features.col(i); }
  [[nodiscard]] DomainDataset subset(std::span<const std::size_t> indices) const;
};

/// Validates the invariants and returns the assembled dataset. `class_count`
/// of 0 means "infer as the largest label".
DomainDataset make_dataset(Matrix features, std::vector<int> labels, int class_count = 0);

/// Parses `label,f1,...,fL` rows, no header, LF or CRLF line endings.
DomainDataset parse_csv(std::string_view text, const std::string& source_name = "<memory>");
DomainDataset load_csv(const std::filesystem::path& path);

/// Writes the same format parse_csv reads, floats in shortest round-trip form.
void write_csv(std::ostream& out, const DomainDataset& data);

/// Rows for prediction: either `label,f1,...,fL` or `f1,...,fL` with L given.
/// All rows must use the same form. An empty input yields zero samples.
struct FeatureTable {
  Matrix features;  // L x count
  std::optional<std::vector<int>> labels;
  [[nodiscard]] std::size_t count() const noexcept { return features.cols(); }
};

FeatureTable parse_feature_csv(std::string_view text, std::size_t dim,
                               const std::string& source_name = "<memory>");

/// Shortest decimal that reads back to the same double.
std::string format_double(double v);

/// x with a trailing 1.
Vector augment(std::span<const double> x);
/// Appends a row of ones: (L+1) x count.
Matrix augment_columns(const Matrix& x);

/// Pairwise anchoring weights s_nm = c_d when the source and target labels agree.
struct WeightModel {
  Matrix S;           // N x M
  Vector col_sums;    // length M, the diagonal of S_M
  Vector row_sums;    // length N
  double c_d = 0.0;
};

WeightModel build_weight_model(std::span<const int> source_labels, std::span<const int> target_labels,
                               double c_d);

/// One-vs-rest labels y_km = 2 delta(y_m, k) - 1, stored K x M. The flat index
/// of (k, m) (both 0-based here) is k * M + m everywhere in the library.
struct OvrLabelMatrix {
  Matrix Y;

  [[nodiscard]] std::size_t class_count() const noexcept { return Y.rows(); }
  [[nodiscard]] std::size_t sample_count() const noexcept { return Y.cols(); }
  [[nodiscard]] double at(std::size_t k, std::size_t m) const noexcept { return Y(k, m); }
  [[nodiscard]] double flat(std::size_t i) const noexcept { return Y.values()[i]; }
};

OvrLabelMatrix ovr_labels(std::span<const int> labels, int class_count);

// -- Synthetic two-domain data -------------------------------------------------

enum class ShiftKind {
  identity,  // target = source draw (requires L_s == L_t)
  banded,    // target_j = sum_{r < band} w_jr * x_{(j + r) mod L_s} + offset_j
};

struct AffineShift {
  ShiftKind kind = ShiftKind::banded;
  std::size_t band = 4;
  double offset_sd = 1.0;
};

struct SynthConfig {
  int classes = 3;
  std::size_t source_per_class = 50;
  std::size_t target_per_class = 100;
  std::size_t source_dim = 64;
  std::size_t target_dim = 64;
  /// Standard deviation of each class-mean coordinate.
  double class_separation = 1.0;
  /// Within-class standard deviation of the shared latent distribution.
  double within_sd = 1.0;
  AffineShift shift;
  /// Extra isotropic noise added to target samples after the shift.
  double noise_sd = 0.5;
  std::uint64_t seed = 1;
};

void validate(const SynthConfig& config);

/// Source samples are Gaussian blobs around per-class means; target samples are
/// the configured affine image of fresh draws from the same blobs plus noise.
/// Samples are written class by class.
std::pair<DomainDataset, DomainDataset> synth_generate(const SynthConfig& config);

struct Split {
  DomainDataset train;
  DomainDataset test;
  std::vector<std::size_t> train_indices;  // into the input dataset
  std::vector<std::size_t> test_indices;
  std::vector<std::string> warnings;
};

/// Stratified split. Within each class the samples are shuffled with `seed`;
/// the first round(test_fraction * n_c) go to test and at most `per_class_cap`
/// of the remainder go to train. The test set does not depend on the cap, and
/// train sets for growing caps are nested.
Split split_per_class(const DomainDataset& data, std::size_t per_class_cap, double test_fraction,
                      std::uint64_t seed);

}  // namespace mmdtl2
