#pragma once

#include <span>
#include <vector>

#include "gdd/graph_filter.hpp"

namespace gdd {

/// Truncated Taylor expansion of Psi^{-1} around s:
///
///   P(Psi) = sum_{k=0}^{K} a_k / s^{k+1} (Psi - s I)^k
///
/// With the regularization weight shared between the Laplacian
/// mu^{-1}(P - I) and the system I + mu L, the system operator reduces to P
/// itself; apply_system() is therefore the same code path as
/// apply_truncated_inverse() and never touches mu.
class TseSystemOperator {
 public:
  TseSystemOperator(DenoiserOperator psi, std::vector<double> coefficients,
                    double expansion_point = 1.0, double mu = 1.0);

  /// a_k = (-1)^k for k = 0..degree.
  static std::vector<double> taylor_coefficients(int degree);

  const DenoiserOperator& psi() const { return psi_; }
  std::size_t size() const { return psi_.size(); }
  int degree() const { return static_cast<int>(coefficients_.size()) - 1; }
  double expansion_point() const { return s_; }
  double mu() const { return mu_; }
  std::span<const double> coefficients() const { return coefficients_; }
  /// a_k / s^{k+1}.
  double scaled_coefficient(int k) const { return scaled_[k]; }

  /// Uses exactly degree() applications of Psi.
  void apply_truncated_inverse(std::span<const double> v, std::span<double> out) const;
  Vector apply_truncated_inverse(std::span<const double> v) const;

  /// (I + mu L) v, identical to apply_truncated_inverse(v).
  void apply_system(std::span<const double> v, std::span<double> out) const;
  Vector apply_system(std::span<const double> v) const;

  /// mu^{-1} (P v - v). Diagnostic only.
  Vector apply_laplacian(std::span<const double> v) const;

  /// x^T L x. Truncation can make this slightly negative.
  double glr_value(std::span<const double> x) const;

  /// The power terms t_k = (Psi - s I)^k v for k = 0..degree, row by row.
  std::vector<Vector> power_terms(std::span<const double> v) const;

 private:
  DenoiserOperator psi_;
  std::vector<double> coefficients_;
  std::vector<double> scaled_;
  double s_;
  double mu_;
};

}  // namespace gdd
