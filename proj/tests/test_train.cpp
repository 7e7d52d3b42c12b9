#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "gdd/error.hpp"
#include "gdd/train.hpp"
#include "test_support.hpp"

using namespace gdd;
using namespace gdd::testing;

namespace {

Hyper small_hyper(CgMode mode = CgMode::learned) {
  Hyper h;
  h.window_radius = 2;
  h.cg_mode = mode;
  return h;
}

ParamVector calibrated(const Hyper& h, const Vector& patch) {
  const std::vector<Vector> one = {patch};
  return calibrate(ParamVector::initial(h), one, h);
}

// Clean patch plus noise, clamped, like the training data.
PatchPair noisy_pair(int side, std::uint64_t seed, double sigma = 0.06) {
  GrayImage img = make_synthetic_image(side, side, seed);
  const GrayImage noisy = add_awgn(img, sigma * 255.0, seed + 1);
  return {noisy.pixels, img.pixels};
}

Vector perturbed(const ParamVector& p, std::uint64_t seed, double scale) {
  Vector theta = p.pack();
  const Vector r = random_vector(theta.size(), seed);
  for (std::size_t i = 0; i < theta.size(); ++i) theta[i] += scale * r[i] * std::max(std::abs(theta[i]), 0.05);
  return theta;
}

}  // namespace

TEST_CASE("parameter packing") {
  const Hyper h;
  const ParamVector p = ParamVector::initial(h);
  CHECK(ParamVector::packed_size(h) == 55);
  CHECK(p.size() == 55);
  CHECK(p.tse_coeffs == TseSystemOperator::taylor_coefficients(10));
  const Vector theta = random_vector(55, 1);
  CHECK(ParamVector::unpack(theta, h).pack() == theta);
  CHECK_THROWS_AS(ParamVector::unpack(Vector(54, 0.0), h), InvalidInput);

  const MetricFactor c = p.metric(5);
  CHECK(c(0, 0) == 0.5);
  CHECK(c(2, 2) == doctest::Approx(10.0));
  CHECK(c(3, 3) == 1e-3);
  CHECK(c(2, 0) == 0.0);
}

TEST_CASE("forward matches a dense solve of the truncated system") {
  Hyper h = small_hyper(CgMode::analytic);
  h.tse_degree = 30;
  h.cg_depth = 16;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Vector y = random_patch(4, seed);
    const ParamVector p = ParamVector::initial(h);
    const Eigen::MatrixXd psi = dense(build_denoiser(p.metric(5), y, 4, h));
    const Eigen::MatrixXd a = dense_truncated_inverse(psi, p.tse_coeffs, 1.0);
    const Eigen::VectorXd want = a.ldlt().solve(as_eigen(y));
    CHECK(rel_err(forward(p, y, 4, h), want) < 1e-8);
  }
}

TEST_CASE("the normalized constant is a fixed point of the pipeline") {
  // With a purely spatial metric Psi does not depend on the input, and
  // S^{1/2} 1 is an eigenvector of Psi with eigenvalue one.
  Hyper h = small_hyper(CgMode::analytic);
  ParamVector p = ParamVector::initial(h);
  MetricFactor c(5);
  c(0, 0) = c(1, 1) = 0.5;
  p.metric_factor = c.packed_lower();
  const int side = 8;
  const DenoiserOperator psi = build_denoiser(c, Vector(side * side, 0.5), side, h);
  Vector u(side * side);
  for (std::size_t i = 0; i < u.size(); ++i) u[i] = 0.1 * std::sqrt(psi.row_sums()[i]);
  const Vector x = forward(p, u, side, h);
  for (std::size_t i = 0; i < u.size(); ++i) CHECK(std::abs(x[i] - u[i]) < 1e-12);

  const Hyper hl = small_hyper();
  const std::vector<Vector> one = {u};
  const ParamVector learned = calibrate(p, one, hl);
  const Vector xl = forward(learned, u, side, hl);
  for (std::size_t i = 0; i < u.size(); ++i) CHECK(std::abs(xl[i] - u[i]) < 1e-12);
}

TEST_CASE("constant patch output stays close to the bilateral filter") {
  const Hyper h;
  const int side = 16;
  const Vector y(side * side, 0.5);
  const ParamVector p = calibrated(h, y);
  const Vector x = forward(p, y, side, h);
  const Vector bf = apply_psi(build_denoiser(p.metric(5), y, side, h), y);
  for (std::size_t i = 0; i < y.size(); ++i) CHECK(std::abs(x[i] - bf[i]) < 5e-3);
  // Pixels far from the patch border keep their value.
  CHECK(std::abs(x[(side / 2) * side + side / 2] - 0.5) < 1e-3);
}

TEST_CASE("untrained model approximates the bilateral filter") {
  const Hyper h;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const PatchPair pp = noisy_pair(32, seed);
    const ParamVector p = calibrated(h, pp.noisy);
    const Vector x = forward(p, pp.noisy, 32, h);
    const Vector bf = apply_psi(build_denoiser(p.metric(5), pp.noisy, 32, h), pp.noisy);
    CHECK(rel_err(x, as_eigen(bf)) < 0.02);
  }
}

TEST_CASE("forward is deterministic and independent of mu") {
  Hyper h;
  const PatchPair pp = noisy_pair(16, 3);
  const ParamVector p = calibrated(h, pp.noisy);
  const Vector ref = forward(p, pp.noisy, 16, h);
  CHECK(forward(p, pp.noisy, 16, h) == ref);
  for (double mu : {0.1, 10.0}) {
    h.mu = mu;
    CHECK(forward(p, pp.noisy, 16, h) == ref);
  }
}

TEST_CASE("loss sums squared errors") {
  const Hyper h = small_hyper();
  const PatchPair a = noisy_pair(8, 1), b = noisy_pair(8, 2);
  const ParamVector p = calibrated(h, a.noisy);

  PatchPair exact = a;
  exact.clean = forward(p, a.noisy, 8, h);
  const std::vector<PatchPair> zero = {exact};
  CHECK(loss(p, zero, h) == 0.0);

  PatchPair shifted = exact;
  shifted.clean[5] += 0.25;
  const std::vector<PatchPair> one = {shifted};
  CHECK(loss(p, one, h) == doctest::Approx(0.0625).epsilon(1e-12));

  const std::vector<PatchPair> batch = {a, b};
  double want = 0.0;
  for (const PatchPair& pp : batch) {
    const Vector x = forward(p, pp.noisy, 8, h);
    for (std::size_t i = 0; i < x.size(); ++i) want += (pp.clean[i] - x[i]) * (pp.clean[i] - x[i]);
  }
  CHECK(loss(p, batch, h) == doctest::Approx(want).epsilon(1e-14));
  CHECK_THROWS_AS(loss(p, std::span<const PatchPair>{}, h), InvalidInput);
}

TEST_CASE("finite differences of a quadratic") {
  const Vector theta = random_vector(20, 4);
  const auto square = [](std::span<const double> t) {
    double s = 0.0;
    for (double v : t) s += v * v;
    return s;
  };
  const Vector g = finite_difference_gradient(square, theta);
  for (std::size_t i = 0; i < theta.size(); ++i) CHECK(std::abs(g[i] - 2.0 * theta[i]) < 1e-8);
}

TEST_CASE("extended-precision forward agrees with the double pipeline") {
  const Hyper h = small_hyper();
  const PatchPair pp = noisy_pair(12, 5);
  const ParamVector p = ParamVector::unpack(perturbed(calibrated(h, pp.noisy), 5, 0.1), h);
  CHECK(rel_err(forward_extended_precision(p, pp.noisy, h), as_eigen(forward(p, pp.noisy, 12, h))) < 1e-13);
}

TEST_CASE("reverse gradient matches finite differences") {
  const Hyper h;
  for (std::uint64_t seed = 0; seed < 2; ++seed) {
    const std::vector<PatchPair> batch = {noisy_pair(16, seed * 10 + 1), noisy_pair(16, seed * 10 + 2)};
    const ParamVector base = calibrated(h, batch[0].noisy);
    const ParamVector p = ParamVector::unpack(perturbed(base, seed, 0.05), h);
    const LossGradient rev = grad_reverse(p, batch, h);
    const Vector fd = grad_fd(p, batch, h);
    REQUIRE(rev.gradient.size() == 55);
    CHECK(rev.loss == doctest::Approx(loss(p, batch, h)).epsilon(1e-13));
    double worst = 0.0;
    for (std::size_t i = 0; i < fd.size(); ++i) {
      if (std::abs(fd[i]) > 1e-8) worst = std::max(worst, std::abs(rev.gradient[i] - fd[i]) / std::abs(fd[i]));
    }
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("zero residual gives a zero gradient") {
  const Hyper h = small_hyper();
  PatchPair pp = noisy_pair(8, 7);
  const ParamVector p = calibrated(h, pp.noisy);
  pp.clean = forward(p, pp.noisy, 8, h);
  const std::vector<PatchPair> batch = {pp};
  for (double g : grad_reverse(p, batch, h).gradient) CHECK(g == 0.0);
}

TEST_CASE("loss is flat in metric columns that only see zero differences") {
  // A constant patch has zero intensity and gradient differences, so the
  // entries of C acting on those features cannot change the output.
  const Hyper h = small_hyper();
  const int side = 8;
  PatchPair pp{Vector(side * side, 0.4), random_patch(side, 3, 0.3, 0.5)};
  const ParamVector p = calibrated(h, pp.noisy);
  const std::vector<PatchPair> batch = {pp};
  const Vector fd = grad_fd(p, batch, h);
  const Vector rev = grad_reverse(p, batch, h).gradient;
  // Packed lower triangle: (2,2)=5 (3,2)=8 (3,3)=9 (4,2)=12 (4,3)=13 (4,4)=14.
  for (std::size_t i : {5u, 8u, 9u, 12u, 13u, 14u}) {
    CHECK(std::abs(fd[i]) < 1e-9);
    CHECK(rev[i] == 0.0);
  }
}

TEST_CASE("gradient sign predicts the loss change") {
  const Hyper h = small_hyper();
  const std::vector<PatchPair> batch = {noisy_pair(10, 11)};
  const ParamVector p = ParamVector::unpack(perturbed(calibrated(h, batch[0].noisy), 11, 0.05), h);
  const LossGradient lg = grad_reverse(p, batch, h);
  std::mt19937_64 rng(42);
  int checked = 0;
  while (checked < 20) {
    const std::size_t i = rng() % lg.gradient.size();
    if (std::abs(lg.gradient[i]) < 1e-6) continue;
    Vector theta = p.pack();
    const double step = 1e-7 * std::max(std::abs(theta[i]), 1.0);
    theta[i] += step;
    const double change = loss(ParamVector::unpack(theta, h), batch, h) - lg.loss;
    CHECK((change > 0) == (lg.gradient[i] > 0));
    ++checked;
  }
}

TEST_CASE("reverse gradient requires learned mode") {
  const Hyper h = small_hyper(CgMode::analytic);
  const std::vector<PatchPair> batch = {noisy_pair(8, 1)};
  CHECK_THROWS_AS(grad_reverse(ParamVector::initial(h), batch, h), InvalidInput);
}

TEST_CASE("Adam update rule") {
  const Hyper h;
  const ParamVector p = ParamVector::unpack(random_vector(55, 3), h);
  const TrainState s0 = TrainState::start(p);

  const TrainState same = adam_step(s0, Vector(55, 0.0), h);
  CHECK(same.params == p);
  CHECK(same.step_count == 1);

  const Vector g = random_vector(55, 8);
  const TrainState s1 = adam_step(s0, g, h);
  const Vector t0 = p.pack(), t1 = s1.params.pack();
  for (std::size_t i = 0; i < 55; ++i) {
    // First bias-corrected step: m_hat = g, v_hat = g^2.
    CHECK(t1[i] == doctest::Approx(t0[i] - 1e-3 * g[i] / (std::abs(g[i]) + 1e-8)).epsilon(1e-12));
  }

  const TrainState s2 = adam_step(s1, g, h);
  const Vector t2 = s2.params.pack();
  for (std::size_t i = 0; i < 55; ++i) {
    double theta = t0[i], m = 0.0, v = 0.0;
    for (int t = 1; t <= 2; ++t) {
      m = 0.9 * m + 0.1 * g[i];
      v = 0.999 * v + 0.001 * g[i] * g[i];
      theta -= 1e-3 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
    }
    CHECK(t2[i] == doctest::Approx(theta).epsilon(1e-12));
  }

  Vector g3 = g;
  for (double& x : g3) x *= 3.0;
  const Vector scaled = adam_step(s0, g3, h, 3).params.pack();
  for (std::size_t i = 0; i < 55; ++i) CHECK(scaled[i] == doctest::Approx(t1[i]).epsilon(1e-14));

  Vector bad = g;
  bad[3] = NAN;
  CHECK_THROWS_AS(adam_step(s0, bad, h), NumericError);
}

TEST_CASE("training loop") {
  std::vector<GrayImage> train, val;
  for (std::uint64_t i = 0; i < 5; ++i) train.push_back(make_synthetic_image(32, 32, 100 + i));
  for (std::uint64_t i = 0; i < 2; ++i) val.push_back(make_synthetic_image(32, 32, 200 + i));
  const Dataset data = make_dataset(train, val, 15.0, 16, 3);
  CHECK(data.train.size() == 20);
  CHECK(data.validation.size() == 2);

  TrainOptions opt;
  opt.patch_side = 16;
  opt.hyper.window_radius = 2;
  opt.seed = 5;

  SUBCASE("zero epochs return the initialization") {
    opt.epochs = 0;
    const TrainResult r = train_loop(data, opt);
    CHECK(r.history.empty());
    CHECK(r.state.params == r.initial_params);
    CHECK(validation_psnr(r.state.params, data, 16, opt.hyper) == r.initial_val_psnr);
    CHECK(r.initial_params.metric_factor == ParamVector::initial(opt.hyper).metric_factor);
    CHECK(r.initial_params.cg_alpha != Vector(15, 0.0));
  }

  SUBCASE("two epochs lower the loss and are reproducible") {
    opt.epochs = 2;
    int calls = 0;
    const TrainResult a = train_loop(data, opt, [&calls](const EpochRecord&) { ++calls; });
    CHECK(calls == 2);
    REQUIRE(a.history.size() == 2);
    CHECK(a.history[1].train_loss <= a.history[0].train_loss);
    CHECK(a.state.step_count == 2 * 7);
    const TrainResult b = train_loop(data, opt);
    CHECK(b.state.params == a.state.params);
    for (std::size_t e = 0; e < 2; ++e) {
      CHECK(b.history[e].train_loss == a.history[e].train_loss);
      CHECK(b.history[e].val_psnr == a.history[e].val_psnr);
    }
  }
}
