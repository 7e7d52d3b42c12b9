#pragma once

#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "gdd/graph_filter.hpp"
#include "gdd/tse_system.hpp"

namespace gdd {

enum class CgMode { analytic, learned };

/// Fixed-depth conjugate gradient configuration.
///
/// In learned mode alpha has depth entries and beta depth - 1 entries (the
/// momentum of the last iteration never feeds an output).
///
/// Analytic mode freezes the remaining iterations (alpha = beta = 0) once
/// ||r_k|| <= epsilon_guard ||r_0|| or |p_k^T A p_k| <= epsilon_guard r_k^T r_k.
struct CgConfig {
  int depth = 15;
  CgMode mode = CgMode::analytic;
  std::vector<double> learned_alpha;
  std::vector<double> learned_beta;
  double epsilon_guard = 1e-12;
  /// Keep x_0..x_T in the trace.
  bool keep_iterates = false;
  /// Keep p_k and v_{k+1} = A p_k, needed for reverse-mode differentiation.
  bool keep_directions = false;

  void validate() const;
};

struct CgTrace {
  std::vector<Vector> iterates;      // x_0..x_T when requested
  std::vector<double> residual_norms;  // ||r_0||..||r_T||
  std::vector<double> used_alphas;   // T values
  std::vector<double> used_betas;    // T - 1 values
  std::vector<Vector> directions;    // p_0..p_{T-1} when requested
  std::vector<Vector> products;      // A p_0..A p_{T-1} when requested
  /// Iteration at which the analytic guard froze the solve, or -1.
  int guarded_at = -1;
};

struct CgResult {
  Vector x;
  CgTrace trace;
};

using LinearMap = std::function<void(std::span<const double>, std::span<double>)>;

/// Unrolled CG on A x = y with warm start x_0 = y.
CgResult unrolled_cg(const LinearMap& system, std::span<const double> y, const CgConfig& cfg);
CgResult unrolled_cg(const TseSystemOperator& system, std::span<const double> y,
                     const CgConfig& cfg);

struct CgScalars {
  std::vector<double> alpha;
  std::vector<double> beta;
};

/// Per-iteration mean of the analytic alpha/beta over a batch of systems.
CgScalars calibrate_cg_params(
    std::span<const std::pair<const TseSystemOperator*, std::span<const double>>> batch,
    int depth);

}  // namespace gdd
