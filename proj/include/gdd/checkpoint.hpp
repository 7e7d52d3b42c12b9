#pragma once

#include <filesystem>
#include <string>

#include "gdd/model.hpp"

namespace gdd {

/// A trained (or freshly initialized) model.
///
/// Text layout, version 1, one record per line:
///
///     gdd-checkpoint 1
///     feature_dim 5
///     K 10
///     T 15
///     window_radius 3
///     s 1
///     mu 1
///     diagonal_loading 0
///     metric_factor <15 values>
///     tse_coeffs <K+1 values>
///     cg_alpha <T values>
///     cg_beta <T-1 values>
///
/// Reals are written with 17 significant digits, so a write/read round trip
/// is exact.
struct Checkpoint {
  Hyper hyper;
  ParamVector params;

  bool operator==(const Checkpoint& other) const;
};

std::string format_checkpoint(const Checkpoint& checkpoint);
Checkpoint parse_checkpoint(const std::string& text);

void write_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace gdd
