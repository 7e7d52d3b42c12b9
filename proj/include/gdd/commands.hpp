#pragma once

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "gdd/checkpoint.hpp"
#include "gdd/config.hpp"

namespace gdd::cli {

/// Noisy copies of every image in config.input, plus manifest.csv
/// (file,seed,sigma). Image i is corrupted with seed config.seed + i.
std::size_t cmd_corrupt(const RunConfig& config, std::ostream& log);

/// Trains on clean images in train_dir (noised at sigma_train), validates on
/// test_dir when set. Writes the checkpoint and history.csv
/// (epoch,train_loss,val_psnr).
TrainResult cmd_train(const RunConfig& config, std::ostream& log);

struct DenoiseReport {
  std::filesystem::path output;
  bool has_psnr = false;
  double psnr = 0.0;
};

/// Denoises config.input with the checkpoint (or the calibrated
/// initialization when no checkpoint is given).
DenoiseReport cmd_denoise(const RunConfig& config, std::ostream& log);

struct EvalRow {
  double sigma = 0.0;
  double noisy_psnr = 0.0;
  double bf_psnr = 0.0;
  double gdd_init_psnr = 0.0;
  double gdd_trained_psnr = 0.0;
};

/// PSNR table over eval_sigmas for the bilateral baseline, the untrained and
/// the trained model. Written to eval.csv.
std::vector<EvalRow> cmd_eval(const RunConfig& config, std::ostream& log);

/// Key-value report of the learned parameters, written to inspect.txt and
/// returned as text.
std::string cmd_inspect(const RunConfig& config, std::ostream& log);

/// Writes `count` synthetic test images (synthetic_NN.pgm) to output_dir.
std::vector<std::filesystem::path> cmd_synth(const RunConfig& config, int count, int size,
                                             std::ostream& log);

}  // namespace gdd::cli
