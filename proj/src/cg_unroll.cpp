#include "gdd/cg_unroll.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "gdd/error.hpp"

namespace gdd {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

bool all_finite(std::span<const double> v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

}  // namespace

void CgConfig::validate() const {
  if (depth < 0) throw InvalidInput("CgConfig: depth must be nonnegative");
  if (!(epsilon_guard > 0.0)) throw InvalidInput("CgConfig: epsilon_guard must be positive");
  if (mode == CgMode::learned) {
    const std::size_t t = static_cast<std::size_t>(depth);
    if (learned_alpha.size() != t || learned_beta.size() != (t == 0 ? 0 : t - 1)) {
      throw InvalidInput("CgConfig: learned scalars must have lengths T and T-1");
    }
  }
}

CgResult unrolled_cg(const LinearMap& system, std::span<const double> y, const CgConfig& cfg) {
  cfg.validate();
  const std::size_t n = y.size();
  const int depth = cfg.depth;

  CgResult result;
  CgTrace& trace = result.trace;
  Vector& x = result.x;
  x.assign(y.begin(), y.end());

  Vector r(n), p(n), v(n);
  system(x, v);
  for (std::size_t i = 0; i < n; ++i) r[i] = y[i] - v[i];
  p = r;
  if (!all_finite(r)) throw NumericDivergence("unrolled_cg: non-finite initial residual", 0);

  double rr = dot(r, r);
  const double rr0 = rr;
  trace.residual_norms.push_back(std::sqrt(rr));
  if (cfg.keep_iterates) trace.iterates.push_back(x);

  bool frozen = false;
  for (int k = 0; k < depth; ++k) {
    const bool last = k + 1 == depth;
    if (frozen) {
      trace.used_alphas.push_back(0.0);
      if (!last) trace.used_betas.push_back(0.0);
      trace.residual_norms.push_back(trace.residual_norms.back());
      if (cfg.keep_iterates) trace.iterates.push_back(x);
      if (cfg.keep_directions) {
        trace.directions.push_back(p);
        trace.products.emplace_back(n, 0.0);
      }
      continue;
    }

    system(p, v);
    if (cfg.keep_directions) {
      trace.directions.push_back(p);
      trace.products.push_back(v);
    }

    double alpha = 0.0;
    if (cfg.mode == CgMode::learned) {
      alpha = cfg.learned_alpha[k];
    } else {
      // Converged to eps relative to the start, or alpha would exceed 1/eps.
      const double pv = dot(p, v);
      const double eps = cfg.epsilon_guard;
      if (rr <= eps * eps * rr0 || std::abs(pv) <= eps * rr) {
        frozen = true;
        trace.guarded_at = k;
        trace.used_alphas.push_back(0.0);
        if (!last) trace.used_betas.push_back(0.0);
        trace.residual_norms.push_back(trace.residual_norms.back());
        if (cfg.keep_iterates) trace.iterates.push_back(x);
        if (cfg.keep_directions) trace.products.back().assign(n, 0.0);
        continue;
      }
      alpha = rr / pv;
    }

    for (std::size_t i = 0; i < n; ++i) {
      x[i] += alpha * p[i];
      r[i] -= alpha * v[i];
    }
    const double rr_next = dot(r, r);
    if (!std::isfinite(rr_next) || !all_finite(x)) {
      throw NumericDivergence("unrolled_cg: non-finite values at iteration " + std::to_string(k), k);
    }
    trace.used_alphas.push_back(alpha);
    trace.residual_norms.push_back(std::sqrt(rr_next));
    if (cfg.keep_iterates) trace.iterates.push_back(x);

    if (!last) {
      const double beta = cfg.mode == CgMode::learned ? cfg.learned_beta[k] : rr_next / rr;
      trace.used_betas.push_back(beta);
      for (std::size_t i = 0; i < n; ++i) p[i] = r[i] + beta * p[i];
    }
    rr = rr_next;
  }
  return result;
}

CgResult unrolled_cg(const TseSystemOperator& system, std::span<const double> y,
                     const CgConfig& cfg) {
  if (y.size() != system.size()) {
    throw InvalidInput("unrolled_cg: right-hand side length does not match system size");
  }
  return unrolled_cg(
      [&system](std::span<const double> in, std::span<double> out) {
        system.apply_system(in, out);
      },
      y, cfg);
}

CgScalars calibrate_cg_params(
    std::span<const std::pair<const TseSystemOperator*, std::span<const double>>> batch,
    int depth) {
  if (batch.empty()) throw InvalidInput("calibrate_cg_params: empty batch");
  if (depth < 0) throw InvalidInput("calibrate_cg_params: depth must be nonnegative");
  CgScalars mean;
  mean.alpha.assign(static_cast<std::size_t>(depth), 0.0);
  mean.beta.assign(depth == 0 ? 0 : static_cast<std::size_t>(depth) - 1, 0.0);

  CgConfig cfg;
  cfg.depth = depth;
  cfg.mode = CgMode::analytic;
  for (const auto& [system, y] : batch) {
    const CgResult run = unrolled_cg(*system, y, cfg);
    for (std::size_t k = 0; k < mean.alpha.size(); ++k) mean.alpha[k] += run.trace.used_alphas[k];
    for (std::size_t k = 0; k < mean.beta.size(); ++k) mean.beta[k] += run.trace.used_betas[k];
  }
  const double count = static_cast<double>(batch.size());
  for (double& a : mean.alpha) a /= count;
  for (double& b : mean.beta) b /= count;
  return mean;
}

}  // namespace gdd
