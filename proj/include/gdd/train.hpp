#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "gdd/imaging.hpp"
#include "gdd/model.hpp"

namespace gdd {

/// Sum over the batch of ||clean - forward(noisy)||^2.
double loss(const ParamVector& params, std::span<const PatchPair> batch, const Hyper& hyper);

/// Central differences with step h_rel * max(|theta_i|, 1).
Vector finite_difference_gradient(const std::function<double(std::span<const double>)>& objective,
                                  std::span<const double> theta, double h_rel = 1e-5);

/// Finite-difference gradient of loss() in packed parameter order. The
/// forward passes run in long double through forward_extended_precision().
Vector grad_fd(const ParamVector& params, std::span<const PatchPair> batch, const Hyper& hyper,
               double h_rel = 1e-5);

/// forward() evaluated in long double by a standalone implementation of the
/// pipeline (used as the finite-difference oracle).
Vector forward_extended_precision(const ParamVector& params, std::span<const double> noisy_patch,
                                  const Hyper& hyper);

struct LossGradient {
  double loss = 0.0;
  Vector gradient;  // packed order
};

/// Exact reverse-mode gradient of loss() through learned-mode CG, the TSE
/// recurrence, the symmetric normalization and the filter weights. Features
/// of the noisy input are held constant.
LossGradient grad_reverse(const ParamVector& params, std::span<const PatchPair> batch,
                          const Hyper& hyper);

struct TrainState {
  ParamVector params;
  Vector adam_m;
  Vector adam_v;
  std::int64_t step_count = 0;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static TrainState start(ParamVector params, double learning_rate = 1e-3);
};

/// One bias-corrected Adam update. The gradient is divided by batch_size
/// first, so the learning rate does not depend on the batch size.
TrainState adam_step(const TrainState& state, std::span<const double> gradient,
                     const Hyper& hyper, int batch_size = 1);

struct Dataset {
  std::vector<PatchPair> train;
  /// (noisy, clean) validation images.
  std::vector<std::pair<GrayImage, GrayImage>> validation;
};

/// Noisy/clean patch pairs and validation images; image i gets noise seed
/// seed + i (validation images continue the count after training images).
Dataset make_dataset(std::span<const GrayImage> train_images, std::span<const GrayImage> val_images,
                     double sigma_8bit, int patch_side, std::uint64_t seed);

struct TrainOptions {
  Hyper hyper;
  MetricInit init;
  int epochs = 20;
  int batch_size = 3;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  int patch_side = 64;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;  // mean per-patch loss seen during the epoch
  double val_psnr = 0.0;
};

struct TrainResult {
  TrainState state;
  ParamVector initial_params;
  double initial_val_psnr = 0.0;
  std::vector<EpochRecord> history;
};

/// Mean PSNR of denoise_image() over validation pairs (NaN when empty).
double validation_psnr(const ParamVector& params, const Dataset& data, int patch_side,
                       const Hyper& hyper);

using EpochCallback = std::function<void(const EpochRecord&)>;

TrainResult train_loop(const Dataset& data, const TrainOptions& options,
                       const EpochCallback& on_epoch = {});

}  // namespace gdd
