#include "gdd/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "gdd/error.hpp"

namespace gdd {

void Hyper::validate() const {
  if (window_radius < 0) throw InvalidInput("window_radius must be nonnegative");
  if (tse_degree < 0) throw InvalidInput("K must be nonnegative");
  if (cg_depth < 0) throw InvalidInput("T must be nonnegative");
  if (!(expansion_point > 0.0)) throw InvalidInput("s must be positive");
  if (!(mu > 0.0)) throw InvalidInput("mu must be positive");
  if (!(diagonal_loading >= 0.0 && diagonal_loading < 1.0)) {
    throw InvalidInput("diagonal_loading must lie in [0, 1)");
  }
  if (feature_dim != kDefaultFeatureDim) {
    throw InvalidInput("feature_dim must be " + std::to_string(kDefaultFeatureDim));
  }
}

ParamVector ParamVector::initial(const Hyper& hyper, const MetricInit& init) {
  hyper.validate();
  ParamVector p;
  p.metric_factor =
      MetricFactor::bilateral(init.sigma_spatial, init.sigma_range, init.gradient_scale).packed_lower();
  p.tse_coeffs = TseSystemOperator::taylor_coefficients(hyper.tse_degree);
  p.cg_alpha.assign(static_cast<std::size_t>(hyper.cg_depth), 0.0);
  p.cg_beta.assign(hyper.cg_depth == 0 ? 0 : static_cast<std::size_t>(hyper.cg_depth) - 1, 0.0);
  return p;
}

std::size_t ParamVector::packed_size(const Hyper& hyper) {
  const std::size_t t = static_cast<std::size_t>(hyper.cg_depth);
  return MetricFactor::packed_size(hyper.feature_dim) + static_cast<std::size_t>(hyper.tse_degree) + 1 +
         t + (t == 0 ? 0 : t - 1);
}

std::size_t ParamVector::size() const {
  return metric_factor.size() + tse_coeffs.size() + cg_alpha.size() + cg_beta.size();
}

Vector ParamVector::pack() const {
  Vector out;
  out.reserve(size());
  for (const Vector* part : {&metric_factor, &tse_coeffs, &cg_alpha, &cg_beta}) {
    out.insert(out.end(), part->begin(), part->end());
  }
  return out;
}

ParamVector ParamVector::unpack(std::span<const double> packed, const Hyper& hyper) {
  if (packed.size() != packed_size(hyper)) {
    throw InvalidInput("ParamVector::unpack: expected " + std::to_string(packed_size(hyper)) +
                       " values, got " + std::to_string(packed.size()));
  }
  const std::size_t t = static_cast<std::size_t>(hyper.cg_depth);
  const std::size_t lengths[] = {MetricFactor::packed_size(hyper.feature_dim),
                                 static_cast<std::size_t>(hyper.tse_degree) + 1, t,
                                 t == 0 ? 0 : t - 1};
  ParamVector p;
  Vector* parts[] = {&p.metric_factor, &p.tse_coeffs, &p.cg_alpha, &p.cg_beta};
  std::size_t offset = 0;
  for (int i = 0; i < 4; ++i) {
    parts[i]->assign(packed.begin() + static_cast<std::ptrdiff_t>(offset),
                     packed.begin() + static_cast<std::ptrdiff_t>(offset + lengths[i]));
    offset += lengths[i];
  }
  return p;
}

MetricFactor ParamVector::metric(int feature_dim) const {
  return MetricFactor::from_packed_lower(feature_dim, metric_factor);
}

void ParamVector::validate(const Hyper& hyper) const {
  const std::size_t t = static_cast<std::size_t>(hyper.cg_depth);
  if (metric_factor.size() != MetricFactor::packed_size(hyper.feature_dim) ||
      tse_coeffs.size() != static_cast<std::size_t>(hyper.tse_degree) + 1 || cg_alpha.size() != t ||
      cg_beta.size() != (t == 0 ? 0 : t - 1)) {
    throw InvalidInput("ParamVector: lengths do not match hyperparameters");
  }
  for (double v : pack()) {
    if (!std::isfinite(v)) throw NumericError("ParamVector: non-finite parameter");
  }
}

int patch_side_of(std::size_t pixel_count) {
  const auto side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(pixel_count))));
  if (side <= 0 || static_cast<std::size_t>(side) * side != pixel_count) {
    throw InvalidInput("patch of " + std::to_string(pixel_count) + " pixels is not square");
  }
  return side;
}

DenoiserOperator build_denoiser(const MetricFactor& metric, std::span<const double> noisy_patch,
                                int patch_side, const Hyper& hyper) {
  const FeatureField field = extract_features(noisy_patch, patch_side);
  DenoiserOperator psi = normalize(build_filter_matrix(field, metric, hyper.window_radius));
  if (hyper.diagonal_loading > 0.0) return psi.with_diagonal_loading(hyper.diagonal_loading);
  return psi;
}

TseSystemOperator build_system(const ParamVector& params, std::span<const double> noisy_patch,
                               int patch_side, const Hyper& hyper) {
  return TseSystemOperator(build_denoiser(params.metric(hyper.feature_dim), noisy_patch, patch_side, hyper),
                           params.tse_coeffs, hyper.expansion_point, hyper.mu);
}

CgConfig make_cg_config(const ParamVector& params, const Hyper& hyper) {
  CgConfig cfg;
  cfg.depth = hyper.cg_depth;
  cfg.mode = hyper.cg_mode;
  if (cfg.mode == CgMode::learned) {
    cfg.learned_alpha = params.cg_alpha;
    cfg.learned_beta = params.cg_beta;
  }
  return cfg;
}

Vector forward(const ParamVector& params, std::span<const double> noisy_patch, int patch_side,
               const Hyper& hyper) {
  hyper.validate();
  params.validate(hyper);
  const TseSystemOperator system = build_system(params, noisy_patch, patch_side, hyper);
  return unrolled_cg(system, noisy_patch, make_cg_config(params, hyper)).x;
}

ParamVector calibrate(ParamVector params, std::span<const Vector> noisy_patches,
                      const Hyper& hyper) {
  if (noisy_patches.empty()) throw InvalidInput("calibrate: no patches");
  std::vector<TseSystemOperator> systems;
  systems.reserve(noisy_patches.size());
  for (const Vector& patch : noisy_patches) {
    systems.push_back(build_system(params, patch, patch_side_of(patch.size()), hyper));
  }
  std::vector<std::pair<const TseSystemOperator*, std::span<const double>>> batch;
  for (std::size_t i = 0; i < systems.size(); ++i) batch.emplace_back(&systems[i], noisy_patches[i]);
  CgScalars scalars = calibrate_cg_params(batch, hyper.cg_depth);
  params.cg_alpha = std::move(scalars.alpha);
  params.cg_beta = std::move(scalars.beta);
  return params;
}

GrayImage denoise_image(const ParamVector& params, const GrayImage& noisy, int patch_side,
                        const Hyper& hyper) {
  PatchGrid grid = partition(noisy, patch_side);
  for (Vector& patch : grid.patches) {
    patch = forward(params, patch, patch_side, hyper);
    for (double& v : patch) v = std::clamp(v, 0.0, 1.0);
  }
  return reassemble(grid);
}

GrayImage bilateral_filter_image(const MetricFactor& metric, const GrayImage& noisy,
                                 int patch_side, const Hyper& hyper) {
  PatchGrid grid = partition(noisy, patch_side);
  for (Vector& patch : grid.patches) {
    patch = build_denoiser(metric, patch, patch_side, hyper).apply(patch);
    for (double& v : patch) v = std::clamp(v, 0.0, 1.0);
  }
  return reassemble(grid);
}

}  // namespace gdd
