#include "gdd/graph_filter.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include <Eigen/Dense>

#include "gdd/error.hpp"

namespace gdd {

FeatureField extract_features(std::span<const double> noisy_patch, int patch_side) {
  if (patch_side <= 0 ||
      noisy_patch.size() != static_cast<std::size_t>(patch_side) * patch_side) {
    throw InvalidInput("extract_features: patch of " + std::to_string(noisy_patch.size()) +
                       " pixels is not " + std::to_string(patch_side) + " squared");
  }
  for (double v : noisy_patch) {
    if (!(v >= 0.0 && v <= 1.0)) throw InvalidInput("extract_features: intensity outside [0,1]");
  }

  const int side = patch_side;
  auto at = [&](int r, int c) { return noisy_patch[static_cast<std::size_t>(r) * side + c]; };
  auto diff = [side](auto&& sample, int i) {
    // sample(k) reads along the differentiated axis
    if (side == 1) return 0.0;
    if (i == 0) return sample(1) - sample(0);
    if (i == side - 1) return sample(side - 1) - sample(side - 2);
    return 0.5 * (sample(i + 1) - sample(i - 1));
  };

  FeatureField field;
  field.patch_side = side;
  field.feature_dim = kDefaultFeatureDim;
  field.features.resize(noisy_patch.size() * kDefaultFeatureDim);
  for (int r = 0; r < side; ++r) {
    for (int c = 0; c < side; ++c) {
      double* f = field.features.data() + (static_cast<std::size_t>(r) * side + c) * kDefaultFeatureDim;
      f[0] = c;
      f[1] = r;
      f[2] = at(r, c);
      f[3] = diff([&](int k) { return at(r, k); }, c);
      f[4] = diff([&](int k) { return at(k, c); }, r);
    }
  }
  return field;
}

// ---------------------------------------------------------------------------

MetricFactor::MetricFactor(int dim) : dim_(dim) {
  if (dim <= 0) throw InvalidInput("MetricFactor: dimension must be positive");
  entries_.assign(static_cast<std::size_t>(dim) * dim, 0.0);
}

MetricFactor MetricFactor::bilateral(double sigma_spatial, double sigma_range,
                                     double gradient_scale) {
  if (!(sigma_spatial > 0.0) || !(sigma_range > 0.0)) {
    throw InvalidInput("MetricFactor::bilateral: sigmas must be positive");
  }
  MetricFactor c(kDefaultFeatureDim);
  c(0, 0) = 1.0 / sigma_spatial;
  c(1, 1) = 1.0 / sigma_spatial;
  c(2, 2) = 1.0 / sigma_range;
  c(3, 3) = gradient_scale;
  c(4, 4) = gradient_scale;
  return c;
}

MetricFactor MetricFactor::identity(int dim) {
  MetricFactor c(dim);
  for (int i = 0; i < dim; ++i) c(i, i) = 1.0;
  return c;
}

MetricFactor MetricFactor::from_packed_lower(int dim, std::span<const double> packed) {
  if (packed.size() != packed_size(dim)) {
    throw InvalidInput("MetricFactor: packed lower triangle has wrong length");
  }
  MetricFactor c(dim);
  std::size_t k = 0;
  for (int r = 0; r < dim; ++r) {
    for (int col = 0; col <= r; ++col) c(r, col) = packed[k++];
  }
  return c;
}

Vector MetricFactor::packed_lower() const {
  Vector out;
  out.reserve(packed_size(dim_));
  for (int r = 0; r < dim_; ++r) {
    for (int col = 0; col <= r; ++col) out.push_back((*this)(r, col));
  }
  return out;
}

Vector MetricFactor::metric() const {
  Vector m(static_cast<std::size_t>(dim_) * dim_, 0.0);
  for (int i = 0; i < dim_; ++i) {
    for (int j = 0; j < dim_; ++j) {
      double acc = 0.0;
      for (int k = 0; k < dim_; ++k) acc += (*this)(k, i) * (*this)(k, j);
      m[i * dim_ + j] = acc;
    }
  }
  return m;
}

Vector MetricFactor::metric_eigenvalues() const {
  const Vector m = metric();
  Eigen::MatrixXd dense(dim_, dim_);
  for (int i = 0; i < dim_; ++i) {
    for (int j = 0; j < dim_; ++j) dense(i, j) = m[i * dim_ + j];
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(dense, Eigen::EigenvaluesOnly);
  const auto& ev = solver.eigenvalues();
  return Vector(ev.data(), ev.data() + ev.size());
}

MetricFactor MetricFactor::scaled(double factor) const {
  MetricFactor out = *this;
  for (double& e : out.entries_) e *= factor;
  return out;
}

double MetricFactor::quadratic(std::span<const double> difference) const {
  double total = 0.0;
  for (int r = 0; r < dim_; ++r) {
    const double* row = entries_.data() + static_cast<std::size_t>(r) * dim_;
    double proj = 0.0;
    for (int c = 0; c < dim_; ++c) proj += row[c] * difference[c];
    total += proj * proj;
  }
  return total;
}

double filter_weight(std::span<const double> f_i, std::span<const double> f_j,
                     const MetricFactor& metric) {
  const auto dim = static_cast<std::size_t>(metric.dim());
  if (f_i.size() != dim || f_j.size() != dim) {
    throw InvalidInput("filter_weight: feature length does not match metric dimension");
  }
  double diff[16];
  Vector heap;
  double* d = diff;
  if (dim > 16) {
    heap.resize(dim);
    d = heap.data();
  }
  for (std::size_t k = 0; k < dim; ++k) d[k] = f_i[k] - f_j[k];
  return std::exp(-metric.quadratic({d, dim}));
}

// ---------------------------------------------------------------------------

std::size_t CsrPattern::find(std::size_t row, std::size_t col) const {
  const auto first = columns.begin() + static_cast<std::ptrdiff_t>(row_offsets[row]);
  const auto last = columns.begin() + static_cast<std::ptrdiff_t>(row_offsets[row + 1]);
  const auto it = std::lower_bound(first, last, col);
  if (it == last || *it != col) return nnz();
  return static_cast<std::size_t>(it - columns.begin());
}

namespace {

void fill_mirror(CsrPattern& p) {
  p.mirror.assign(p.nnz(), 0);
  for (std::size_t i = 0; i < p.n; ++i) {
    for (std::size_t idx = p.row_offsets[i]; idx < p.row_offsets[i + 1]; ++idx) {
      const std::size_t m = p.find(p.columns[idx], i);
      if (m == p.nnz()) throw InvalidInput("CsrPattern: pattern is not symmetric");
      p.mirror[idx] = m;
    }
  }
}

}  // namespace

std::shared_ptr<const CsrPattern> CsrPattern::grid_window(int patch_side, int radius) {
  if (patch_side <= 0) throw InvalidInput("grid_window: patch side must be positive");
  if (radius < 0) throw InvalidInput("grid_window: window radius must be nonnegative");
  auto p = std::make_shared<CsrPattern>();
  const int side = patch_side;
  p->n = static_cast<std::size_t>(side) * side;
  p->row_offsets.reserve(p->n + 1);
  p->row_offsets.push_back(0);
  for (int r = 0; r < side; ++r) {
    for (int c = 0; c < side; ++c) {
      for (int rr = std::max(0, r - radius); rr <= std::min(side - 1, r + radius); ++rr) {
        for (int cc = std::max(0, c - radius); cc <= std::min(side - 1, c + radius); ++cc) {
          p->columns.push_back(static_cast<std::size_t>(rr) * side + cc);
        }
      }
      p->row_offsets.push_back(p->columns.size());
    }
  }
  fill_mirror(*p);
  return p;
}

std::shared_ptr<const CsrPattern> CsrPattern::from_pairs(
    std::size_t n, std::span<const std::pair<std::size_t, std::size_t>> pairs) {
  std::vector<std::vector<std::size_t>> rows(n);
  for (std::size_t i = 0; i < n; ++i) rows[i].push_back(i);
  for (const auto& [r, c] : pairs) {
    if (r >= n || c >= n) throw InvalidInput("CsrPattern: index out of range");
    rows[r].push_back(c);
    rows[c].push_back(r);
  }
  auto p = std::make_shared<CsrPattern>();
  p->n = n;
  p->row_offsets.push_back(0);
  for (auto& row : rows) {
    std::sort(row.begin(), row.end());
    row.erase(std::unique(row.begin(), row.end()), row.end());
    p->columns.insert(p->columns.end(), row.begin(), row.end());
    p->row_offsets.push_back(p->columns.size());
  }
  fill_mirror(*p);
  return p;
}

namespace {

struct Assembled {
  std::shared_ptr<const CsrPattern> pattern;
  Vector values;
};

Assembled assemble(std::size_t n, std::span<const Triplet> triplets) {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  pairs.reserve(triplets.size());
  for (const auto& t : triplets) pairs.emplace_back(t.row, t.col);
  Assembled out;
  out.pattern = CsrPattern::from_pairs(n, pairs);
  out.values.assign(out.pattern->nnz(), 0.0);
  std::vector<bool> seen(out.pattern->nnz(), false);
  for (const auto& t : triplets) {
    const std::size_t idx = out.pattern->find(t.row, t.col);
    if (seen[idx]) throw InvalidInput("duplicate matrix entry");
    seen[idx] = true;
    out.values[idx] = t.value;
  }
  return out;
}

}  // namespace

SparseFilterMatrix::SparseFilterMatrix(std::shared_ptr<const CsrPattern> pattern, Vector values,
                                       int window_radius)
    : pattern_(std::move(pattern)), values_(std::move(values)), window_radius_(window_radius) {
  if (!pattern_ || values_.size() != pattern_->nnz()) {
    throw InvalidInput("SparseFilterMatrix: values do not match pattern");
  }
}

SparseFilterMatrix SparseFilterMatrix::from_triplets(std::size_t n,
                                                     std::span<const Triplet> triplets) {
  Assembled a = assemble(n, triplets);
  const CsrPattern& p = *a.pattern;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t idx = p.row_offsets[i]; idx < p.row_offsets[i + 1]; ++idx) {
      const double v = a.values[idx];
      if (p.columns[idx] == i && v != 1.0) {
        throw InvalidInput("SparseFilterMatrix: diagonal entries must equal 1");
      }
      if (!(v > 0.0 && v <= 1.0)) {
        throw InvalidInput("SparseFilterMatrix: entries must lie in (0, 1]");
      }
      if (a.values[p.mirror[idx]] != v) {
        throw InvalidInput("SparseFilterMatrix: matrix is not symmetric");
      }
    }
  }
  return SparseFilterMatrix(std::move(a.pattern), std::move(a.values), -1);
}

double SparseFilterMatrix::entry(std::size_t row, std::size_t col) const {
  const std::size_t idx = pattern_->find(row, col);
  return idx == pattern_->nnz() ? 0.0 : values_[idx];
}

SparseFilterMatrix build_filter_matrix(const FeatureField& field, const MetricFactor& metric,
                                       int window_radius) {
  return build_filter_matrix(field, metric,
                             CsrPattern::grid_window(field.patch_side, window_radius),
                             window_radius);
}

SparseFilterMatrix build_filter_matrix(const FeatureField& field, const MetricFactor& metric,
                                       std::shared_ptr<const CsrPattern> pattern,
                                       int window_radius) {
  if (field.feature_dim != metric.dim()) {
    throw InvalidInput("build_filter_matrix: feature and metric dimensions differ");
  }
  if (pattern->n != field.size()) {
    throw InvalidInput("build_filter_matrix: pattern size does not match patch");
  }
  const CsrPattern& p = *pattern;
  Vector values(p.nnz(), 0.0);
  for (std::size_t i = 0; i < p.n; ++i) {
    for (std::size_t idx = p.row_offsets[i]; idx < p.row_offsets[i + 1]; ++idx) {
      const std::size_t j = p.columns[idx];
      if (j == i) {
        values[idx] = 1.0;
      } else if (j > i) {
        const double w = filter_weight(field.feature(i), field.feature(j), metric);
        values[idx] = w;
        values[p.mirror[idx]] = w;
      }
    }
  }
  return SparseFilterMatrix(std::move(pattern), std::move(values), window_radius);
}

// ---------------------------------------------------------------------------

DenoiserOperator::DenoiserOperator(std::shared_ptr<const CsrPattern> pattern, Vector values,
                                   Vector row_sums)
    : pattern_(std::move(pattern)), values_(std::move(values)), row_sums_(std::move(row_sums)) {
  if (!pattern_ || values_.size() != pattern_->nnz() || row_sums_.size() != pattern_->n) {
    throw InvalidInput("DenoiserOperator: inconsistent storage");
  }
}

DenoiserOperator DenoiserOperator::from_triplets(std::size_t n,
                                                 std::span<const Triplet> triplets) {
  Assembled a = assemble(n, triplets);
  for (std::size_t idx = 0; idx < a.values.size(); ++idx) {
    if (std::abs(a.values[idx] - a.values[a.pattern->mirror[idx]]) > 1e-12) {
      throw InvalidInput("DenoiserOperator: matrix is not symmetric");
    }
  }
  return DenoiserOperator(std::move(a.pattern), std::move(a.values), Vector(n, 1.0));
}

double DenoiserOperator::entry(std::size_t row, std::size_t col) const {
  const std::size_t idx = pattern_->find(row, col);
  return idx == pattern_->nnz() ? 0.0 : values_[idx];
}

void DenoiserOperator::apply(std::span<const double> v, std::span<double> out) const {
  const CsrPattern& p = *pattern_;
  if (v.size() != p.n || out.size() != p.n) {
    throw InvalidInput("apply_psi: vector length does not match operator size");
  }
  const std::size_t* cols = p.columns.data();
  const double* vals = values_.data();
  for (std::size_t i = 0; i < p.n; ++i) {
    double acc = 0.0;
    for (std::size_t idx = p.row_offsets[i]; idx < p.row_offsets[i + 1]; ++idx) {
      acc += vals[idx] * v[cols[idx]];
    }
    out[i] = acc;
  }
}

Vector DenoiserOperator::apply(std::span<const double> v) const {
  Vector out(size());
  apply(v, out);
  return out;
}

DenoiserOperator DenoiserOperator::with_diagonal_loading(double epsilon) const {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) {
    throw InvalidInput("diagonal loading must lie in [0, 1]");
  }
  Vector loaded = values_;
  for (double& v : loaded) v *= (1.0 - epsilon);
  for (std::size_t i = 0; i < size(); ++i) {
    const std::size_t idx = pattern_->find(i, i);
    if (idx == pattern_->nnz()) throw InvalidInput("diagonal loading needs a stored diagonal");
    loaded[idx] += epsilon;
  }
  return DenoiserOperator(pattern_, std::move(loaded), row_sums_);
}

Vector DenoiserOperator::to_dense() const {
  const std::size_t n = size();
  Vector dense(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t idx = pattern_->row_offsets[i]; idx < pattern_->row_offsets[i + 1]; ++idx) {
      dense[i * n + pattern_->columns[idx]] = values_[idx];
    }
  }
  return dense;
}

DenoiserOperator normalize(const SparseFilterMatrix& filter) {
  const CsrPattern& p = filter.pattern();
  const auto b = filter.values();
  Vector row_sums(p.n, 0.0);
  for (std::size_t i = 0; i < p.n; ++i) {
    double acc = 0.0;
    for (std::size_t idx = p.row_offsets[i]; idx < p.row_offsets[i + 1]; ++idx) acc += b[idx];
    if (!(acc > 0.0)) {
      throw DegenerateMatrix("normalize: row " + std::to_string(i) + " has non-positive sum");
    }
    row_sums[i] = acc;
  }
  Vector inv_sqrt(p.n);
  for (std::size_t i = 0; i < p.n; ++i) inv_sqrt[i] = 1.0 / std::sqrt(row_sums[i]);

  Vector psi(p.nnz());
  for (std::size_t i = 0; i < p.n; ++i) {
    for (std::size_t idx = p.row_offsets[i]; idx < p.row_offsets[i + 1]; ++idx) {
      // the product d_i * d_j is commutative, so Psi is bitwise symmetric
      const std::size_t j = p.columns[idx];
      const double scale = i < j ? inv_sqrt[i] * inv_sqrt[j] : inv_sqrt[j] * inv_sqrt[i];
      psi[idx] = b[idx] * scale;
    }
  }
  return DenoiserOperator(filter.shared_pattern(), std::move(psi), std::move(row_sums));
}

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

// Rayleigh quotient of the dominant eigenvector of apply_fn.
template <class ApplyFn>
double power_iteration(std::size_t n, int iterations, ApplyFn&& apply_fn) {
  Vector v(n), w(n);
  for (std::size_t i = 0; i < n; ++i) {
    v[i] = 1.0 + 0.5 * std::sin(1.0 + 2.0 * static_cast<double>(i));
  }
  double norm = std::sqrt(dot(v, v));
  for (double& x : v) x /= norm;
  for (int it = 0; it < iterations; ++it) {
    apply_fn(v, w);
    norm = std::sqrt(dot(w, w));
    if (norm == 0.0) return 0.0;
    for (std::size_t i = 0; i < n; ++i) v[i] = w[i] / norm;
  }
  apply_fn(v, w);
  return dot(v, w);
}

}  // namespace

SpectrumEstimate estimate_spectrum(const DenoiserOperator& op, int iterations) {
  if (iterations < 1) throw InvalidInput("estimate_spectrum: iterations must be >= 1");
  const std::size_t n = op.size();
  SpectrumEstimate est;
  est.lambda_max = power_iteration(n, iterations, [&](std::span<const double> in, std::span<double> out) {
    op.apply(in, out);
  });
  const double shift = est.lambda_max;
  const double gap = power_iteration(n, iterations, [&](std::span<const double> in, std::span<double> out) {
    op.apply(in, out);
    for (std::size_t i = 0; i < n; ++i) out[i] = shift * in[i] - out[i];
  });
  est.lambda_min = shift - gap;
  return est;
}

}  // namespace gdd
