#pragma once

#include <span>
#include <vector>

#include "gdd/cg_unroll.hpp"
#include "gdd/graph_filter.hpp"
#include "gdd/imaging.hpp"
#include "gdd/tse_system.hpp"

namespace gdd {

/// Structural hyperparameters of the unrolled denoiser.
struct Hyper {
  int window_radius = 3;
  int tse_degree = 10;            // K
  double expansion_point = 1.0;   // s
  int cg_depth = 15;              // T
  CgMode cg_mode = CgMode::learned;
  double mu = 1.0;
  double diagonal_loading = 0.0;
  int feature_dim = kDefaultFeatureDim;

  void validate() const;
};

/// Starting point of the metric factor: a classical bilateral filter with a
/// negligible gradient-feature contribution.
struct MetricInit {
  double sigma_spatial = 2.0;
  double sigma_range = 0.1;
  double gradient_scale = 1e-3;
};

/// Trainable parameters. Packed layout, in order:
///   metric_factor  lower triangle of C, row by row   (d(d+1)/2)
///   tse_coeffs     a_0..a_K                          (K+1)
///   cg_alpha       alpha_0..alpha_{T-1}              (T)
///   cg_beta        beta_0..beta_{T-2}                (T-1)
struct ParamVector {
  Vector metric_factor;
  Vector tse_coeffs;
  Vector cg_alpha;
  Vector cg_beta;

  /// Bilateral metric, a_k = (-1)^k, CG scalars zero until calibrated.
  static ParamVector initial(const Hyper& hyper, const MetricInit& init = {});
  static std::size_t packed_size(const Hyper& hyper);
  static ParamVector unpack(std::span<const double> packed, const Hyper& hyper);

  std::size_t size() const;
  Vector pack() const;
  MetricFactor metric(int feature_dim) const;
  void validate(const Hyper& hyper) const;

  bool operator==(const ParamVector&) const = default;
};

struct PatchPair {
  Vector noisy;
  Vector clean;
};

int patch_side_of(std::size_t pixel_count);

/// Psi for one noisy patch under the given metric (diagonal loading applied).
DenoiserOperator build_denoiser(const MetricFactor& metric, std::span<const double> noisy_patch,
                                int patch_side, const Hyper& hyper);

TseSystemOperator build_system(const ParamVector& params, std::span<const double> noisy_patch,
                               int patch_side, const Hyper& hyper);

CgConfig make_cg_config(const ParamVector& params, const Hyper& hyper);

/// Full pipeline: features -> B -> Psi -> TSE system -> unrolled CG.
Vector forward(const ParamVector& params, std::span<const double> noisy_patch, int patch_side,
               const Hyper& hyper);

/// Seeds the learned CG scalars with analytic CG averaged over the patches.
ParamVector calibrate(ParamVector params, std::span<const Vector> noisy_patches,
                      const Hyper& hyper);

/// Patch-wise denoising of a whole image (cropped to whole patches), clamped
/// to [0, 1].
GrayImage denoise_image(const ParamVector& params, const GrayImage& noisy, int patch_side,
                        const Hyper& hyper);

/// Patch-wise Psi y with the given metric: the plain normalized bilateral
/// filter, clamped to [0, 1].
GrayImage bilateral_filter_image(const MetricFactor& metric, const GrayImage& noisy,
                                 int patch_side, const Hyper& hyper);

}  // namespace gdd
