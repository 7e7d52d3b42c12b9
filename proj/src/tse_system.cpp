#include "gdd/tse_system.hpp"

#include <cmath>
#include <numeric>

#include "gdd/error.hpp"

namespace gdd {

TseSystemOperator::TseSystemOperator(DenoiserOperator psi, std::vector<double> coefficients,
                                     double expansion_point, double mu)
    : psi_(std::move(psi)), coefficients_(std::move(coefficients)), s_(expansion_point), mu_(mu) {
  if (coefficients_.empty()) throw InvalidInput("TseSystemOperator: need at least a_0");
  if (!(s_ > 0.0)) throw InvalidInput("TseSystemOperator: expansion point must be positive");
  if (!(mu_ > 0.0)) throw InvalidInput("TseSystemOperator: mu must be positive");
  scaled_.resize(coefficients_.size());
  double power = s_;
  for (std::size_t k = 0; k < coefficients_.size(); ++k) {
    scaled_[k] = coefficients_[k] / power;
    power *= s_;
  }
}

std::vector<double> TseSystemOperator::taylor_coefficients(int degree) {
  if (degree < 0) throw InvalidInput("taylor_coefficients: degree must be nonnegative");
  std::vector<double> a(static_cast<std::size_t>(degree) + 1);
  for (int k = 0; k <= degree; ++k) a[k] = (k % 2 == 0) ? 1.0 : -1.0;
  return a;
}

void TseSystemOperator::apply_truncated_inverse(std::span<const double> v,
                                                std::span<double> out) const {
  const std::size_t n = size();
  if (v.size() != n || out.size() != n) {
    throw InvalidInput("apply_truncated_inverse: vector length does not match operator size");
  }
  Vector term(v.begin(), v.end());
  Vector next(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = scaled_[0] * term[i];
  for (int k = 1; k <= degree(); ++k) {
    psi_.apply(term, next);
    for (std::size_t i = 0; i < n; ++i) {
      next[i] -= s_ * term[i];
      out[i] += scaled_[k] * next[i];
    }
    term.swap(next);
  }
}

Vector TseSystemOperator::apply_truncated_inverse(std::span<const double> v) const {
  Vector out(size());
  apply_truncated_inverse(v, out);
  return out;
}

void TseSystemOperator::apply_system(std::span<const double> v, std::span<double> out) const {
  apply_truncated_inverse(v, out);
}

Vector TseSystemOperator::apply_system(std::span<const double> v) const {
  return apply_truncated_inverse(v);
}

Vector TseSystemOperator::apply_laplacian(std::span<const double> v) const {
  Vector out = apply_truncated_inverse(v);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (out[i] - v[i]) / mu_;
  return out;
}

double TseSystemOperator::glr_value(std::span<const double> x) const {
  const Vector lx = apply_laplacian(x);
  return std::inner_product(x.begin(), x.end(), lx.begin(), 0.0);
}

std::vector<Vector> TseSystemOperator::power_terms(std::span<const double> v) const {
  const std::size_t n = size();
  if (v.size() != n) throw InvalidInput("power_terms: vector length does not match operator size");
  std::vector<Vector> terms;
  terms.reserve(coefficients_.size());
  terms.emplace_back(v.begin(), v.end());
  for (int k = 1; k <= degree(); ++k) {
    Vector next = psi_.apply(terms.back());
    const Vector& prev = terms.back();
    for (std::size_t i = 0; i < n; ++i) next[i] -= s_ * prev[i];
    terms.push_back(std::move(next));
  }
  return terms;
}

}  // namespace gdd
