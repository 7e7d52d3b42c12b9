#include <cmath>

#include "doctest.h"
#include "gdd/cg_unroll.hpp"
#include "gdd/error.hpp"
#include "test_support.hpp"

using namespace gdd;
using namespace gdd::testing;

namespace {

Eigen::MatrixXd random_spd(int n, std::uint64_t seed, double lo = 0.2, double hi = 1.0) {
  return dense(operator_with_spectrum(uniform_spectrum(n, lo, hi, seed), seed));
}

LinearMap dense_map(const Eigen::MatrixXd& a) {
  return [a](std::span<const double> in, std::span<double> out) {
    Eigen::Map<Eigen::VectorXd>(out.data(), a.rows()) = a * as_eigen(in);
  };
}

CgConfig analytic(int depth) {
  CgConfig cfg;
  cfg.depth = depth;
  cfg.mode = CgMode::analytic;
  return cfg;
}

}  // namespace

TEST_CASE("identity system is already solved") {
  const LinearMap id = [](std::span<const double> in, std::span<double> out) {
    std::copy(in.begin(), in.end(), out.begin());
  };
  const Vector y = random_vector(6, 1);
  for (int depth : {0, 1, 5, 15}) {
    const CgResult r = unrolled_cg(id, y, analytic(depth));
    CHECK(r.x == y);
    CHECK(r.trace.used_alphas.size() == std::size_t(depth));
  }
}

TEST_CASE("depth zero passes the input through") {
  const Eigen::MatrixXd a = random_spd(5, 2);
  const Vector y = random_vector(5, 2);
  CgConfig learned;
  learned.depth = 0;
  learned.mode = CgMode::learned;
  CHECK(unrolled_cg(dense_map(a), y, analytic(0)).x == y);
  CHECK(unrolled_cg(dense_map(a), y, learned).x == y);
}

TEST_CASE("finite termination on a dense SPD system") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Eigen::MatrixXd a = random_spd(8, seed);
    const Vector y = random_vector(8, seed + 100);
    const CgResult r = unrolled_cg(dense_map(a), y, analytic(8));
    CHECK((a * as_eigen(r.x) - as_eigen(y)).norm() / as_eigen(y).norm() < 1e-10);
  }
}

TEST_CASE("energy-norm error decreases monotonically") {
  for (int n : {8, 16, 32}) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const Eigen::MatrixXd a = random_spd(n, seed, 0.05, 1.0);
      const Vector y = random_vector(n, seed + 1);
      const Eigen::VectorXd xs = a.ldlt().solve(as_eigen(y));
      CgConfig cfg = analytic(n);
      cfg.keep_iterates = true;
      const CgResult r = unrolled_cg(dense_map(a), y, cfg);
      REQUIRE(r.trace.iterates.size() == std::size_t(n + 1));
      double prev = INFINITY;
      for (const Vector& x : r.trace.iterates) {
        const Eigen::VectorXd e = as_eigen(x) - xs;
        const double energy = std::sqrt(e.dot(a * e));
        CHECK(energy <= prev * (1.0 + 1e-12) + 1e-14);
        prev = energy;
      }
    }
  }
}

TEST_CASE("successive residuals are orthogonal") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Eigen::MatrixXd a = random_spd(12, seed, 0.05, 1.0);
    const Vector y = random_vector(12, seed);
    CgConfig cfg = analytic(5);
    cfg.keep_iterates = true;
    const CgResult r = unrolled_cg(dense_map(a), y, cfg);
    REQUIRE(r.trace.guarded_at == -1);
    for (std::size_t k = 0; k + 1 < r.trace.iterates.size(); ++k) {
      const Eigen::VectorXd r0 = as_eigen(y) - a * as_eigen(r.trace.iterates[k]);
      const Eigen::VectorXd r1 = as_eigen(y) - a * as_eigen(r.trace.iterates[k + 1]);
      CHECK(std::abs(r1.dot(r0)) / (r1.norm() * r0.norm()) < 1e-6);
      CHECK(r.trace.residual_norms[k] == doctest::Approx(r0.norm()).epsilon(1e-10));
    }
  }
}

TEST_CASE("learned mode with copied scalars reproduces analytic mode") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Eigen::MatrixXd a = random_spd(20, seed, 0.1, 1.0);
    const Vector y = random_vector(20, seed + 3);
    const CgResult ref = unrolled_cg(dense_map(a), y, analytic(15));
    CgConfig cfg;
    cfg.depth = 15;
    cfg.mode = CgMode::learned;
    cfg.learned_alpha = ref.trace.used_alphas;
    cfg.learned_beta = ref.trace.used_betas;
    const CgResult got = unrolled_cg(dense_map(a), y, cfg);
    CHECK(rel_err(got.x, as_eigen(ref.x)) < 1e-12);
  }
}

TEST_CASE("zero right-hand side trips every guard") {
  const Eigen::MatrixXd a = random_spd(6, 4);
  const CgResult r = unrolled_cg(dense_map(a), Vector(6, 0.0), analytic(15));
  CHECK(r.x == Vector(6, 0.0));
  CHECK(r.trace.guarded_at == 0);
  for (double v : r.trace.used_alphas) CHECK(v == 0.0);
  for (double v : r.trace.used_betas) CHECK(v == 0.0);
  for (double v : r.trace.residual_norms) CHECK(std::isfinite(v));
  CHECK(r.trace.used_betas.size() == 14);
  CHECK(r.trace.residual_norms.size() == 16);
}

TEST_CASE("non-finite values report the iteration") {
  const Eigen::MatrixXd a = random_spd(4, 5);
  CgConfig cfg;
  cfg.depth = 6;
  cfg.mode = CgMode::learned;
  cfg.learned_alpha = {0.5, 0.5, INFINITY, 0.5, 0.5, 0.5};
  cfg.learned_beta = Vector(5, 0.1);
  try {
    unrolled_cg(dense_map(a), random_vector(4, 5), cfg);
    FAIL("expected divergence");
  } catch (const NumericDivergence& e) {
    CHECK(e.iteration() == 2);
  }
}

TEST_CASE("learned scalar lengths are validated") {
  CgConfig cfg;
  cfg.depth = 3;
  cfg.mode = CgMode::learned;
  cfg.learned_alpha = {1, 1, 1};
  cfg.learned_beta = {1};
  CHECK_THROWS_AS(cfg.validate(), InvalidInput);
  cfg.learned_beta = {1, 1};
  CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("calibration averages analytic scalars") {
  const auto coeffs = TseSystemOperator::taylor_coefficients(10);
  const TseSystemOperator s1(operator_with_spectrum(uniform_spectrum(10, 0.3, 1.0, 1), 1), coeffs);
  const TseSystemOperator s2(operator_with_spectrum(uniform_spectrum(10, 0.3, 1.0, 2), 2), coeffs);
  const Vector y1 = random_vector(10, 11), y2 = random_vector(10, 12);
  const CgResult r1 = unrolled_cg(s1, y1, analytic(6));
  const CgResult r2 = unrolled_cg(s2, y2, analytic(6));

  using Item = std::pair<const TseSystemOperator*, std::span<const double>>;
  const std::vector<Item> one = {{&s1, y1}};
  const CgScalars single = calibrate_cg_params(one, 6);
  CHECK(single.alpha == r1.trace.used_alphas);
  CHECK(single.beta == r1.trace.used_betas);

  const std::vector<Item> same = {{&s1, y1}, {&s1, y1}, {&s1, y1}};
  const CgScalars triple = calibrate_cg_params(same, 6);
  for (int k = 0; k < 6; ++k) CHECK(triple.alpha[k] == doctest::Approx(r1.trace.used_alphas[k]).epsilon(1e-15));

  const std::vector<Item> two = {{&s1, y1}, {&s2, y2}};
  const CgScalars mean = calibrate_cg_params(two, 6);
  REQUIRE(mean.alpha.size() == 6);
  REQUIRE(mean.beta.size() == 5);
  for (int k = 0; k < 6; ++k) CHECK(mean.alpha[k] == (r1.trace.used_alphas[k] + r2.trace.used_alphas[k]) / 2.0);
  for (int k = 0; k < 5; ++k) CHECK(mean.beta[k] == (r1.trace.used_betas[k] + r2.trace.used_betas[k]) / 2.0);

  CHECK_THROWS_AS(calibrate_cg_params(std::span<const Item>{}, 6), InvalidInput);
}

TEST_CASE("system size mismatch is rejected") {
  const TseSystemOperator s(operator_with_spectrum(uniform_spectrum(4, 0.5, 1.0, 1), 1),
                            TseSystemOperator::taylor_coefficients(3));
  CHECK_THROWS_AS(unrolled_cg(s, Vector(5, 0.0), analytic(3)), InvalidInput);
}

TEST_CASE("vanishing curvature freezes instead of dividing by zero") {
  // A = diag(2, -2) and y = (0.75, 0.25) give r_0 = (-0.75, 0.75) and
  // p_0^T A p_0 = 0.
  const LinearMap a = [](std::span<const double> in, std::span<double> out) {
    out[0] = 2.0 * in[0];
    out[1] = -2.0 * in[1];
  };
  const Vector y = {0.75, 0.25};
  const CgResult r = unrolled_cg(a, y, analytic(4));
  CHECK(r.trace.guarded_at == 0);
  CHECK(r.x == y);
}
