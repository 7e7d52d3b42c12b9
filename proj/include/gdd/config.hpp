#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gdd/model.hpp"
#include "gdd/train.hpp"

namespace gdd {

/// Reproducible settings shared by every command. Loaded from a flat
/// `key = value` file; '#' starts a comment.
struct RunConfig {
  int patch_side = 64;
  int window_radius = 3;
  int feature_dim = kDefaultFeatureDim;
  int K = 10;
  double s = 1.0;
  int T = 15;
  CgMode cg_mode = CgMode::learned;
  double sigma_train = 15.0;
  double sigma_test = 15.0;
  std::vector<double> eval_sigmas = {10.0, 15.0, 20.0, 25.0, 30.0};
  int epochs = 20;
  int batch_size = 3;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;

  double sigma_spatial = 2.0;
  double sigma_range = 0.1;
  double gradient_scale = 1e-3;
  double diagonal_loading = 0.0;
  double mu = 1.0;

  std::filesystem::path train_dir;
  std::filesystem::path test_dir;
  std::filesystem::path checkpoint;
  std::filesystem::path output_dir = ".";
  std::filesystem::path input;
  std::filesystem::path ground_truth;

  /// Sets one field from its textual value; throws InvalidInput for unknown
  /// keys or unparsable values.
  void set(const std::string& key, const std::string& value);

  Hyper hyper() const;
  MetricInit metric_init() const;
  TrainOptions train_options() const;

  static const std::vector<std::string>& keys();
};

RunConfig parse_config_text(const std::string& text, RunConfig base = {});
RunConfig load_config(const std::filesystem::path& path, RunConfig base = {});
std::string format_config(const RunConfig& config);

const char* to_string(CgMode mode);
CgMode parse_cg_mode(const std::string& text);

}  // namespace gdd
