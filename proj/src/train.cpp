#include "gdd/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>

#include "gdd/error.hpp"

namespace gdd {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

void check_batch(std::span<const PatchPair> batch) {
  if (batch.empty()) throw InvalidInput("empty batch");
  for (const PatchPair& pair : batch) {
    if (pair.noisy.size() != pair.clean.size()) {
      throw InvalidInput("noisy and clean patches differ in size");
    }
  }
}

// Everything the backward sweep needs for one patch.
struct PatchGraph {
  FeatureField features;
  SparseFilterMatrix filter;
  DenoiserOperator psi;  // after diagonal loading
  TseSystemOperator system;
  CgResult cg;
};

PatchGraph forward_patch(const ParamVector& params, const MetricFactor& metric,
                         std::span<const double> noisy, const Hyper& hyper) {
  const int side = patch_side_of(noisy.size());
  FeatureField features = extract_features(noisy, side);
  SparseFilterMatrix filter = build_filter_matrix(features, metric, hyper.window_radius);
  DenoiserOperator psi = normalize(filter);
  if (hyper.diagonal_loading > 0.0) psi = psi.with_diagonal_loading(hyper.diagonal_loading);
  TseSystemOperator system(psi, params.tse_coeffs, hyper.expansion_point, hyper.mu);
  CgConfig cfg = make_cg_config(params, hyper);
  cfg.keep_directions = true;
  CgResult cg = unrolled_cg(system, noisy, cfg);
  return {std::move(features), std::move(filter), std::move(psi), std::move(system), std::move(cg)};
}

// Accumulates d(u^T P(Psi) w) into psi_bar (per stored entry) and coeff_bar,
// and returns P(Psi) u, which falls out of the same reverse sweep.
Vector backprop_polynomial(const TseSystemOperator& system, std::span<const double> u,
                           std::span<const double> w, Vector& psi_bar, Vector& coeff_bar) {
  const std::size_t n = system.size();
  const int degree = system.degree();
  const double s = system.expansion_point();
  const CsrPattern& pattern = system.psi().pattern();
  const std::vector<Vector> terms = system.power_terms(w);

  for (int k = 0; k <= degree; ++k) {
    coeff_bar[k] += dot(u, terms[k]) / std::pow(s, k + 1);
  }

  // adjoint of t_k: c_k u + (Psi - sI) adjoint(t_{k+1})
  Vector adj(n), next(n);
  for (std::size_t i = 0; i < n; ++i) adj[i] = system.scaled_coefficient(degree) * u[i];
  for (int k = degree - 1; k >= 0; --k) {
    const Vector& t = terms[k];
    for (std::size_t i = 0; i < n; ++i) {
      const double a = adj[i];
      for (std::size_t idx = pattern.row_offsets[i]; idx < pattern.row_offsets[i + 1]; ++idx) {
        psi_bar[idx] += a * t[pattern.columns[idx]];
      }
    }
    system.psi().apply(adj, next);
    const double c = system.scaled_coefficient(k);
    for (std::size_t i = 0; i < n; ++i) next[i] += c * u[i] - s * adj[i];
    adj.swap(next);
  }
  return adj;
}

// Reverse sweep for one patch; adds into the packed gradient.
double backward_patch(const ParamVector& params, const MetricFactor& metric,
                      const PatchPair& pair, const Hyper& hyper, Vector& grad) {
  const PatchGraph g = forward_patch(params, metric, pair.noisy, hyper);
  const std::size_t n = pair.noisy.size();
  const int depth = hyper.cg_depth;
  const CgTrace& trace = g.cg.trace;

  double patch_loss = 0.0;
  Vector x_bar(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double d = g.cg.x[i] - pair.clean[i];
    patch_loss += d * d;
    x_bar[i] = 2.0 * d;
  }

  const std::size_t metric_len = params.metric_factor.size();
  const std::size_t coeff_off = metric_len;
  const std::size_t alpha_off = coeff_off + params.tse_coeffs.size();
  const std::size_t beta_off = alpha_off + params.cg_alpha.size();

  const CsrPattern& pattern = g.psi.pattern();
  Vector psi_bar(pattern.nnz(), 0.0);
  Vector coeff_bar(params.tse_coeffs.size(), 0.0);

  Vector r_bar(n, 0.0), p_bar(n, 0.0), v_bar(n), p_prev_bar(n);
  for (int k = depth - 1; k >= 0; --k) {
    const Vector& p = trace.directions[k];
    const Vector& v = trace.products[k];
    const double alpha = params.cg_alpha[k];
    std::fill(p_prev_bar.begin(), p_prev_bar.end(), 0.0);
    if (k + 1 < depth) {
      // p_{k+1} = r_{k+1} + beta_k p_k
      grad[beta_off + k] += dot(p_bar, p);
      const double beta = params.cg_beta[k];
      for (std::size_t i = 0; i < n; ++i) {
        r_bar[i] += p_bar[i];
        p_prev_bar[i] = beta * p_bar[i];
      }
    }
    // r_{k+1} = r_k - alpha_k v_{k+1};  x_{k+1} = x_k + alpha_k p_k
    grad[alpha_off + k] += dot(x_bar, p) - dot(r_bar, v);
    for (std::size_t i = 0; i < n; ++i) {
      v_bar[i] = -alpha * r_bar[i];
      p_prev_bar[i] += alpha * x_bar[i];
    }
    // v_{k+1} = A p_k
    const Vector av = backprop_polynomial(g.system, v_bar, p, psi_bar, coeff_bar);
    for (std::size_t i = 0; i < n; ++i) p_prev_bar[i] += av[i];
    p_bar.swap(p_prev_bar);
  }
  // p_0 = r_0 = y - A y
  Vector r0_bar(n);
  for (std::size_t i = 0; i < n; ++i) r0_bar[i] = -(r_bar[i] + p_bar[i]);
  backprop_polynomial(g.system, r0_bar, pair.noisy, psi_bar, coeff_bar);

  for (std::size_t k = 0; k < coeff_bar.size(); ++k) grad[coeff_off + k] += coeff_bar[k];

  // Psi = (1 - eps) S^{-1/2} B S^{-1/2} + eps I
  const double keep = 1.0 - hyper.diagonal_loading;
  const auto b = g.filter.values();
  const auto row_sums = g.psi.row_sums();
  Vector inv_sqrt(n), d_bar(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) inv_sqrt[i] = 1.0 / std::sqrt(row_sums[i]);
  for (double& v : psi_bar) v *= keep;

  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t idx = pattern.row_offsets[i]; idx < pattern.row_offsets[i + 1]; ++idx) {
      const std::size_t j = pattern.columns[idx];
      acc += (psi_bar[idx] + psi_bar[pattern.mirror[idx]]) * b[idx] * inv_sqrt[j];
    }
    d_bar[i] = acc;
  }

  const int dim = metric.dim();
  Vector c_bar(static_cast<std::size_t>(dim) * dim, 0.0);
  Vector diff(dim), proj(dim);
  for (std::size_t i = 0; i < n; ++i) {
    const double s_bar_i = -0.5 * d_bar[i] * inv_sqrt[i] * inv_sqrt[i] * inv_sqrt[i];
    for (std::size_t idx = pattern.row_offsets[i]; idx < pattern.row_offsets[i + 1]; ++idx) {
      const std::size_t j = pattern.columns[idx];
      if (j <= i) continue;
      const std::size_t m = pattern.mirror[idx];
      const double s_bar_j = -0.5 * d_bar[j] * inv_sqrt[j] * inv_sqrt[j] * inv_sqrt[j];
      // b_ij and b_ji share one weight; each enters Psi directly and a row sum
      const double w_bar = (psi_bar[idx] + psi_bar[m]) * inv_sqrt[i] * inv_sqrt[j] + s_bar_i + s_bar_j;
      // d b / d C = -2 b (C d) d^T
      const auto fi = g.features.feature(i);
      const auto fj = g.features.feature(j);
      for (int a = 0; a < dim; ++a) diff[a] = fi[a] - fj[a];
      for (int r = 0; r < dim; ++r) {
        double acc = 0.0;
        for (int c = 0; c < dim; ++c) acc += metric(r, c) * diff[c];
        proj[r] = acc;
      }
      const double scale = -2.0 * w_bar * b[idx];
      for (int r = 0; r < dim; ++r) {
        for (int c = 0; c <= r; ++c) c_bar[r * dim + c] += scale * proj[r] * diff[c];
      }
    }
  }
  std::size_t k = 0;
  for (int r = 0; r < dim; ++r) {
    for (int c = 0; c <= r; ++c) grad[k++] += c_bar[r * dim + c];
  }
  return patch_loss;
}

}  // namespace

double loss(const ParamVector& params, std::span<const PatchPair> batch, const Hyper& hyper) {
  check_batch(batch);
  double total = 0.0;
  for (const PatchPair& pair : batch) {
    const Vector x = forward(params, pair.noisy, patch_side_of(pair.noisy.size()), hyper);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double d = pair.clean[i] - x[i];
      total += d * d;
    }
  }
  return total;
}

namespace {

template <class Real, class Objective>
Vector central_differences(const Objective& objective, std::span<const double> theta, double h_rel) {
  if (!(h_rel > 0.0)) throw InvalidInput("finite differences need a positive step");
  Vector probe(theta.begin(), theta.end());
  Vector grad(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double h = h_rel * std::max(std::abs(theta[i]), 1.0);
    probe[i] = theta[i] + h;
    const Real up = objective(std::span<const double>(probe));
    probe[i] = theta[i] - h;
    const Real down = objective(std::span<const double>(probe));
    probe[i] = theta[i];
    if (!std::isfinite(static_cast<double>(up)) || !std::isfinite(static_cast<double>(down))) {
      throw NumericError("finite differences: non-finite objective at parameter " + std::to_string(i));
    }
    grad[i] = static_cast<double>((up - down) / (Real{2} * Real{h}));
  }
  return grad;
}

// The whole forward pipeline in a wider real type. Finite differences of a
// double-precision loss bottom out at one ulp of the loss divided by 2h; the
// extended pass keeps that floor well below the smallest gradients of interest.
template <class Real>
std::vector<Real> forward_extended(const ParamVector& params, std::span<const double> noisy,
                                   const Hyper& hyper) {
  const int side = patch_side_of(noisy.size());
  const std::size_t n = noisy.size();
  const FeatureField features = extract_features(noisy, side);
  const auto pattern = CsrPattern::grid_window(side, hyper.window_radius);
  const CsrPattern& pat = *pattern;
  const int dim = features.feature_dim;

  std::vector<Real> c(static_cast<std::size_t>(dim) * dim, Real{0});
  std::size_t k = 0;
  for (int r = 0; r < dim; ++r) {
    for (int col = 0; col <= r; ++col) c[r * dim + col] = params.metric_factor[k++];
  }

  std::vector<Real> b(pat.nnz());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t idx = pat.row_offsets[i]; idx < pat.row_offsets[i + 1]; ++idx) {
      const std::size_t j = pat.columns[idx];
      if (j == i) {
        b[idx] = Real{1};
      } else if (j > i) {
        Real q{0};
        for (int r = 0; r < dim; ++r) {
          Real proj{0};
          for (int col = 0; col < dim; ++col) {
            proj += c[r * dim + col] * (Real{features.feature(i)[col]} - Real{features.feature(j)[col]});
          }
          q += proj * proj;
        }
        b[idx] = std::exp(-q);
        b[pat.mirror[idx]] = b[idx];
      }
    }
  }
  std::vector<Real> inv_sqrt(n);
  for (std::size_t i = 0; i < n; ++i) {
    Real sum{0};
    for (std::size_t idx = pat.row_offsets[i]; idx < pat.row_offsets[i + 1]; ++idx) sum += b[idx];
    inv_sqrt[i] = Real{1} / std::sqrt(sum);
  }
  const Real keep = Real{1} - Real{hyper.diagonal_loading};
  std::vector<Real> psi(pat.nnz());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t idx = pat.row_offsets[i]; idx < pat.row_offsets[i + 1]; ++idx) {
      const std::size_t j = pat.columns[idx];
      psi[idx] = keep * b[idx] * inv_sqrt[i] * inv_sqrt[j] + (j == i ? Real{hyper.diagonal_loading} : Real{0});
    }
  }

  const Real s{hyper.expansion_point};
  std::vector<Real> scaled(params.tse_coeffs.size());
  Real power = s;
  for (std::size_t a = 0; a < scaled.size(); ++a) {
    scaled[a] = Real{params.tse_coeffs[a]} / power;
    power *= s;
  }
  auto apply_system = [&](const std::vector<Real>& v) {
    std::vector<Real> out(n), term = v, next(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = scaled[0] * term[i];
    for (std::size_t a = 1; a < scaled.size(); ++a) {
      for (std::size_t i = 0; i < n; ++i) {
        Real acc{0};
        for (std::size_t idx = pat.row_offsets[i]; idx < pat.row_offsets[i + 1]; ++idx) {
          acc += psi[idx] * term[pat.columns[idx]];
        }
        next[i] = acc - s * term[i];
      }
      for (std::size_t i = 0; i < n; ++i) out[i] += scaled[a] * next[i];
      term.swap(next);
    }
    return out;
  };
  auto dot_real = [](const std::vector<Real>& a, const std::vector<Real>& b2) {
    Real acc{0};
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b2[i];
    return acc;
  };

  std::vector<Real> x(noisy.begin(), noisy.end());
  std::vector<Real> r = apply_system(x);
  for (std::size_t i = 0; i < n; ++i) r[i] = x[i] - r[i];
  std::vector<Real> p = r;
  Real rr = dot_real(r, r);
  const int depth = hyper.cg_depth;
  for (int it = 0; it < depth; ++it) {
    const std::vector<Real> v = apply_system(p);
    Real alpha{0};
    if (hyper.cg_mode == CgMode::learned) {
      alpha = params.cg_alpha[it];
    } else {
      const Real pv = dot_real(p, v);
      if (std::abs(pv) < Real{1e-12} || rr < Real{1e-12}) break;
      alpha = rr / pv;
    }
    for (std::size_t i = 0; i < n; ++i) {
      x[i] += alpha * p[i];
      r[i] -= alpha * v[i];
    }
    const Real rr_next = dot_real(r, r);
    if (it + 1 < depth) {
      const Real beta = hyper.cg_mode == CgMode::learned ? Real{params.cg_beta[it]} : rr_next / rr;
      for (std::size_t i = 0; i < n; ++i) p[i] = r[i] + beta * p[i];
    }
    rr = rr_next;
  }
  return x;
}

long double loss_extended(const ParamVector& params, std::span<const PatchPair> batch,
                          const Hyper& hyper) {
  long double total = 0.0L;
  for (const PatchPair& pair : batch) {
    const auto x = forward_extended<long double>(params, pair.noisy, hyper);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const long double d = static_cast<long double>(pair.clean[i]) - x[i];
      total += d * d;
    }
  }
  return total;
}

}  // namespace

Vector finite_difference_gradient(const std::function<double(std::span<const double>)>& objective,
                                  std::span<const double> theta, double h_rel) {
  return central_differences<double>(objective, theta, h_rel);
}

Vector grad_fd(const ParamVector& params, std::span<const PatchPair> batch, const Hyper& hyper,
               double h_rel) {
  check_batch(batch);
  hyper.validate();
  params.validate(hyper);
  return central_differences<long double>(
      [&](std::span<const double> probe) {
        return loss_extended(ParamVector::unpack(probe, hyper), batch, hyper);
      },
      params.pack(), h_rel);
}

Vector forward_extended_precision(const ParamVector& params, std::span<const double> noisy_patch,
                                  const Hyper& hyper) {
  hyper.validate();
  params.validate(hyper);
  const auto x = forward_extended<long double>(params, noisy_patch, hyper);
  return Vector(x.begin(), x.end());
}

LossGradient grad_reverse(const ParamVector& params, std::span<const PatchPair> batch,
                          const Hyper& hyper) {
  check_batch(batch);
  hyper.validate();
  params.validate(hyper);
  if (hyper.cg_mode != CgMode::learned) {
    throw InvalidInput("grad_reverse: only learned-mode CG is differentiable");
  }
  const MetricFactor metric = params.metric(hyper.feature_dim);
  LossGradient out;
  out.gradient.assign(params.size(), 0.0);
  for (const PatchPair& pair : batch) {
    out.loss += backward_patch(params, metric, pair, hyper, out.gradient);
  }
  for (double g : out.gradient) {
    if (!std::isfinite(g)) throw NumericError("grad_reverse: non-finite gradient");
  }
  return out;
}

TrainState TrainState::start(ParamVector params, double learning_rate) {
  TrainState state;
  state.adam_m.assign(params.size(), 0.0);
  state.adam_v.assign(params.size(), 0.0);
  state.params = std::move(params);
  state.learning_rate = learning_rate;
  return state;
}

TrainState adam_step(const TrainState& state, std::span<const double> gradient,
                     const Hyper& hyper, int batch_size) {
  if (batch_size <= 0) throw InvalidInput("adam_step: batch size must be positive");
  Vector theta = state.params.pack();
  if (gradient.size() != theta.size() || state.adam_m.size() != theta.size() ||
      state.adam_v.size() != theta.size()) {
    throw InvalidInput("adam_step: gradient or moments do not match parameter count");
  }
  for (double g : gradient) {
    if (!std::isfinite(g)) throw NumericError("adam_step: non-finite gradient");
  }
  TrainState next = state;
  next.step_count = state.step_count + 1;
  const double t = static_cast<double>(next.step_count);
  const double correction1 = 1.0 - std::pow(state.beta1, t);
  const double correction2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double g = gradient[i] / batch_size;
    next.adam_m[i] = state.beta1 * state.adam_m[i] + (1.0 - state.beta1) * g;
    next.adam_v[i] = state.beta2 * state.adam_v[i] + (1.0 - state.beta2) * g * g;
    const double m_hat = next.adam_m[i] / correction1;
    const double v_hat = next.adam_v[i] / correction2;
    theta[i] -= state.learning_rate * m_hat / (std::sqrt(v_hat) + state.eps);
  }
  next.params = ParamVector::unpack(theta, hyper);
  return next;
}

Dataset make_dataset(std::span<const GrayImage> train_images, std::span<const GrayImage> val_images,
                     double sigma_8bit, int patch_side, std::uint64_t seed) {
  Dataset data;
  std::uint64_t next_seed = seed;
  for (const GrayImage& clean : train_images) {
    const GrayImage noisy = add_awgn(clean, sigma_8bit, next_seed++);
    const PatchGrid noisy_grid = partition(noisy, patch_side);
    const PatchGrid clean_grid = partition(clean, patch_side);
    for (std::size_t p = 0; p < noisy_grid.patches.size(); ++p) {
      data.train.push_back({noisy_grid.patches[p], clean_grid.patches[p]});
    }
  }
  for (const GrayImage& clean : val_images) {
    data.validation.emplace_back(add_awgn(clean, sigma_8bit, next_seed++), clean);
  }
  return data;
}

double validation_psnr(const ParamVector& params, const Dataset& data, int patch_side,
                       const Hyper& hyper) {
  if (data.validation.empty()) return std::numeric_limits<double>::quiet_NaN();
  double total = 0.0;
  for (const auto& [noisy, clean] : data.validation) {
    const GrayImage denoised = denoise_image(params, noisy, patch_side, hyper);
    total += psnr(crop(clean, denoised.width, denoised.height), denoised);
  }
  return total / static_cast<double>(data.validation.size());
}

TrainResult train_loop(const Dataset& data, const TrainOptions& options,
                       const EpochCallback& on_epoch) {
  if (data.train.empty()) throw InvalidInput("train_loop: empty training set");
  if (options.epochs < 0) throw InvalidInput("train_loop: epochs must be nonnegative");
  if (options.batch_size <= 0) throw InvalidInput("train_loop: batch size must be positive");
  Hyper hyper = options.hyper;
  hyper.cg_mode = CgMode::learned;
  hyper.validate();

  const std::size_t first = std::min<std::size_t>(static_cast<std::size_t>(options.batch_size), data.train.size());
  std::vector<Vector> calibration;
  for (std::size_t i = 0; i < first; ++i) calibration.push_back(data.train[i].noisy);

  TrainResult result;
  result.initial_params = calibrate(ParamVector::initial(hyper, options.init), calibration, hyper);
  result.initial_val_psnr = validation_psnr(result.initial_params, data, options.patch_side, hyper);
  result.state = TrainState::start(result.initial_params, options.learning_rate);

  std::mt19937_64 rng(options.seed);
  std::vector<std::size_t> order(data.train.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<PatchPair> batch;
  for (int epoch = 1; epoch <= options.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(options.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(options.batch_size));
      batch.clear();
      for (std::size_t i = start; i < stop; ++i) batch.push_back(data.train[order[i]]);
      const LossGradient lg = grad_reverse(result.state.params, batch, hyper);
      epoch_loss += lg.loss;
      result.state = adam_step(result.state, lg.gradient, hyper, static_cast<int>(batch.size()));
    }
    EpochRecord record;
    record.epoch = epoch;
    record.train_loss = epoch_loss / static_cast<double>(order.size());
    record.val_psnr = validation_psnr(result.state.params, data, options.patch_side, hyper);
    result.history.push_back(record);
    if (on_epoch) on_epoch(record);
  }
  return result;
}

}  // namespace gdd
