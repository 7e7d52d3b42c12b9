#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <vector>

namespace gdd {

using Vector = std::vector<double>;

/// Per-pixel feature vectors of one square patch, stored row-major
/// (pixel-major, feature_dim values per pixel).
///
/// The default layout produced by extract_features() is
/// (x, y, intensity, d/dx, d/dy) with coordinates in raw pixel units.
struct FeatureField {
  int patch_side = 0;
  int feature_dim = 0;
  Vector features;

  std::size_t size() const { return static_cast<std::size_t>(patch_side) * patch_side; }
  std::span<const double> feature(std::size_t pixel) const {
    return {features.data() + pixel * feature_dim, static_cast<std::size_t>(feature_dim)};
  }
};

inline constexpr int kDefaultFeatureDim = 5;

/// Builds the five-feature field from a noisy row-major patch. Gradients use
/// central differences inside the patch and one-sided differences on borders.
FeatureField extract_features(std::span<const double> noisy_patch, int patch_side);

/// Square factor C of the metric M = C^T C. Lower-triangular by convention;
/// the packed form lists the lower triangle row by row.
class MetricFactor {
 public:
  explicit MetricFactor(int dim);

  /// C = diag(1/sigma_spatial, 1/sigma_spatial, 1/sigma_range, g, g).
  static MetricFactor bilateral(double sigma_spatial, double sigma_range,
                                double gradient_scale);
  static MetricFactor identity(int dim);
  static MetricFactor from_packed_lower(int dim, std::span<const double> packed);

  static std::size_t packed_size(int dim) { return static_cast<std::size_t>(dim) * (dim + 1) / 2; }

  int dim() const { return dim_; }
  double operator()(int row, int col) const { return entries_[row * dim_ + col]; }
  double& operator()(int row, int col) { return entries_[row * dim_ + col]; }

  Vector packed_lower() const;
  /// Row-major dim x dim metric M = C^T C.
  Vector metric() const;
  /// Ascending eigenvalues of M.
  Vector metric_eigenvalues() const;
  MetricFactor scaled(double factor) const;

  /// ||C d||^2 for a feature difference d.
  double quadratic(std::span<const double> difference) const;

 private:
  int dim_;
  Vector entries_;
};

/// b = exp(-(f_i - f_j)^T M (f_i - f_j)).
double filter_weight(std::span<const double> f_i, std::span<const double> f_j,
                     const MetricFactor& metric);

/// Compressed-row sparsity pattern with explicit transpose lookup.
/// Columns are sorted within each row, and every stored (i, j) has a
/// stored (j, i) at index mirror[idx].
struct CsrPattern {
  std::size_t n = 0;
  std::vector<std::size_t> row_offsets;
  std::vector<std::size_t> columns;
  std::vector<std::size_t> mirror;

  std::size_t nnz() const { return columns.size(); }
  /// Index of (row, col) or nnz() when not stored.
  std::size_t find(std::size_t row, std::size_t col) const;

  /// Grid pattern: pixel pairs with Chebyshev distance <= radius.
  static std::shared_ptr<const CsrPattern> grid_window(int patch_side, int radius);
  /// Pattern from (row, col) pairs; the diagonal is always included and the
  /// pattern is symmetrized.
  static std::shared_ptr<const CsrPattern> from_pairs(
      std::size_t n, std::span<const std::pair<std::size_t, std::size_t>> pairs);
};

struct Triplet {
  std::size_t row;
  std::size_t col;
  double value;
};

/// Symmetric filter weight matrix B with unit diagonal and entries in (0, 1].
class SparseFilterMatrix {
 public:
  SparseFilterMatrix(std::shared_ptr<const CsrPattern> pattern, Vector values, int window_radius);

  /// Validates exact symmetry, unit diagonal and the (0, 1] range.
  static SparseFilterMatrix from_triplets(std::size_t n, std::span<const Triplet> triplets);

  std::size_t size() const { return pattern_->n; }
  int window_radius() const { return window_radius_; }
  const CsrPattern& pattern() const { return *pattern_; }
  std::shared_ptr<const CsrPattern> shared_pattern() const { return pattern_; }
  std::span<const double> values() const { return values_; }
  double entry(std::size_t row, std::size_t col) const;

 private:
  std::shared_ptr<const CsrPattern> pattern_;
  Vector values_;
  int window_radius_;
};

SparseFilterMatrix build_filter_matrix(const FeatureField& field, const MetricFactor& metric,
                                       int window_radius);

/// Same as above but reuses a precomputed grid pattern.
SparseFilterMatrix build_filter_matrix(const FeatureField& field, const MetricFactor& metric,
                                       std::shared_ptr<const CsrPattern> pattern,
                                       int window_radius);

/// Symmetrically normalized denoiser Psi = S^{-1/2} B S^{-1/2}.
class DenoiserOperator {
 public:
  DenoiserOperator(std::shared_ptr<const CsrPattern> pattern, Vector values, Vector row_sums);

  /// Arbitrary symmetric operator (row sums reported as ones). Used for
  /// synthetic spectra; symmetry is checked to 1e-12.
  static DenoiserOperator from_triplets(std::size_t n, std::span<const Triplet> triplets);

  std::size_t size() const { return pattern_->n; }
  const CsrPattern& pattern() const { return *pattern_; }
  std::shared_ptr<const CsrPattern> shared_pattern() const { return pattern_; }
  std::span<const double> values() const { return values_; }
  std::span<const double> row_sums() const { return row_sums_; }
  double entry(std::size_t row, std::size_t col) const;

  void apply(std::span<const double> v, std::span<double> out) const;
  Vector apply(std::span<const double> v) const;

  /// (1 - epsilon) Psi + epsilon I.
  DenoiserOperator with_diagonal_loading(double epsilon) const;

  /// Row-major dense copy, for diagnostics and small tests.
  Vector to_dense() const;

 private:
  std::shared_ptr<const CsrPattern> pattern_;
  Vector values_;
  Vector row_sums_;
};

DenoiserOperator normalize(const SparseFilterMatrix& filter);

inline Vector apply_psi(const DenoiserOperator& op, std::span<const double> v) { return op.apply(v); }

struct SpectrumEstimate {
  double lambda_min = 0.0;
  double lambda_max = 0.0;
  bool positive_definite() const { return lambda_min > 0.0; }
};

/// Power iteration for lambda_max and shifted power iteration on
/// (lambda_max I - Psi) for lambda_min. Rayleigh-quotient estimates only;
/// no accuracy guarantee for clustered spectra.
SpectrumEstimate estimate_spectrum(const DenoiserOperator& op, int iterations);

}  // namespace gdd
