#include <stdexcept>
#include <cmath>

#include "doctest.h"
#include "dtm/oracle.hpp"
#include "dtm/terminal.hpp"

using namespace dtm;

TEST_SUITE_BEGIN("terminal");

namespace {
double vec_rel_err(const Vec& a, const Vec& b) {
  double num = 0.0, den = 1e-12;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den = std::max({den, std::abs(a[i]), std::abs(b[i])});
  }
  return std::sqrt(num) / (den * std::sqrt(static_cast<double>(a.size())));
}
}  // namespace

TEST_CASE("mask: elementwise keep/zero") {
  CHECK(apply_mask({1, 0, 1, 0}, {1, 2, 3, 4}) == Vec{1, 0, 3, 0});
  CHECK(apply_mask({1, 1, 1}, {5, 6, 7}) == Vec{5, 6, 7});
  CHECK_THROWS_AS(apply_mask({0.5, 1}, {1, 2}), std::invalid_argument);
}

TEST_CASE("mask vjp is the mask itself (self-adjoint)") {
  const MaskOperator op(Vec{1, 0, 1, 1});
  Rng rng(1);
  const Vec cot = gaussian_sample(rng, 4);
  CHECK(op.vjp({0, 0, 0, 0}, cot) == apply_mask({1, 0, 1, 1}, cot));
}

TEST_CASE("downsample block means and identity") {
  CHECK(apply_downsample(2, {1, 3, 5, 7}) == Vec{2, 6});
  CHECK(apply_downsample(1, {4, 2}) == Vec{4, 2});
  CHECK_THROWS_AS(apply_downsample(3, {1, 2, 3, 4}), std::invalid_argument);
}

TEST_CASE("downsample vjp spreads cot/f and matches finite differences") {
  const DownsampleOperator op(6, 2);
  Rng rng(2);
  const Vec x = gaussian_sample(rng, 6);
  const Vec cot = gaussian_sample(rng, 3);
  const Vec an = op.vjp(x, cot);
  const Vec fd = finite_diff_grad([&](const Vec& q) { return dot(op.apply(q), cot); }, x, 1e-6);
  CHECK(vec_rel_err(an, fd) < 1e-6);
  CHECK(an[0] == doctest::Approx(cot[0] / 2.0));
}

TEST_CASE("circular conv: identity kernel and impulse response") {
  CHECK(apply_circular_conv(BlurKernel{{1.0}}, {3, 1, 4}) == Vec{3, 1, 4});
  const Vec out = apply_circular_conv(BlurKernel{{0.5, 0.25, 0.25}}, {1, 0, 0, 0});
  // kernel centred at index 0, wrapping: out[-1 mod 4] carries the left tap
  CHECK(out[0] == doctest::Approx(0.25));
  CHECK(out[1] == doctest::Approx(0.25));
  CHECK(out[2] == doctest::Approx(0.0));
  CHECK(out[3] == doctest::Approx(0.5));
}

TEST_CASE("circular conv: Young's inequality on random probes") {
  Rng rng(3);
  const BlurKernel k = gaussian_blur_kernel(5, 1.0);
  double l1 = 0.0;
  for (double t : k.taps) l1 += std::abs(t);
  for (int i = 0; i < 50; ++i) {
    const Vec x = gaussian_sample(rng, 16);
    CHECK(norm(apply_circular_conv(k, x)) <= l1 * norm(x) + 1e-12);
  }
}

TEST_CASE("circular conv rejects kernels longer than the signal") {
  CHECK_THROWS_AS(apply_circular_conv(BlurKernel{{0.2, 0.2, 0.2, 0.2, 0.2}}, {1, 2, 3}),
                  std::invalid_argument);
}

TEST_CASE("nonlinear blur: a -> 0 limit equals linear convolution") {
  Rng rng(4);
  const BlurKernel k = gaussian_blur_kernel(3, 0.9);
  const Vec x = gaussian_sample(rng, 8);
  const Vec lin = apply_circular_conv(k, x);
  const Vec non = apply_nonlinear_blur(k, 1e-4, x);
  CHECK(vec_rel_err(lin, non) < 1e-6);
}

TEST_CASE("nonlinear blur vjp matches finite differences") {
  Rng rng(5);
  const NonlinearBlurOperator op(8, gaussian_blur_kernel(3, 0.9), 1.3);
  for (int p = 0; p < 10; ++p) {
    const Vec x = gaussian_sample(rng, 8);
    const Vec cot = gaussian_sample(rng, 8);
    const Vec an = op.vjp(x, cot);
    const Vec fd = finite_diff_grad([&](const Vec& q) { return dot(op.apply(q), cot); }, x, 1e-5);
    CHECK(vec_rel_err(an, fd) < 1e-4);
  }
}

TEST_CASE("residual cost basics") {
  auto op = std::make_shared<MaskOperator>(Vec{1, 1});
  SUBCASE("zero at exact fit") {
    const ProblemSpec spec{op, op->apply({0.4, -0.2}), 0.0};
    CHECK(residual_cost(spec, {0.4, -0.2}) == 0.0);
  }
  SUBCASE("identity operator pinned value") {
    const ProblemSpec spec{op, {0.0, 0.0}, 0.0};
    CHECK(residual_cost(spec, {1.0, 1.0}) == doctest::Approx(2.0));
  }
  SUBCASE("gradient of the identity case is 2(x-y)") {
    const ProblemSpec spec{op, {0.5, -1.0}, 0.0};
    const Vec g = residual_cost_grad(spec, {1.0, 1.0});
    CHECK(g[0] == doctest::Approx(2.0 * (1.0 - 0.5)));
    CHECK(g[1] == doctest::Approx(2.0 * (1.0 + 1.0)));
  }
}

TEST_CASE("residual cost gradient matches finite differences across operators") {
  Rng rng(6);
  const std::size_t d = 8;
  const Vec truth = gaussian_sample(rng, d);
  std::vector<std::shared_ptr<const ForwardOperator>> ops = {
      std::make_shared<MaskOperator>(MaskOperator::random(d, 0.6, rng)),
      std::make_shared<DownsampleOperator>(d, 2),
      std::make_shared<CircularConvOperator>(d, gaussian_blur_kernel(3, 1.0)),
      std::make_shared<NonlinearBlurOperator>(d, gaussian_blur_kernel(3, 1.0), 1.1)};
  for (const auto& op : ops) {
    Rng obs_rng(77);
    const ProblemSpec spec{op, op->observe(truth, 0.05, obs_rng), 0.05};
    for (int p = 0; p < 10; ++p) {
      const Vec x = gaussian_sample(rng, d);
      const Vec an = residual_cost_grad(spec, x);
      const Vec fd =
          finite_diff_grad([&](const Vec& q) { return residual_cost(spec, q); }, x, 1e-5);
      CHECK(vec_rel_err(an, fd) < 1e-4);
    }
  }
}

TEST_CASE("cost gradient vanishes at a minimiser") {
  auto op = std::make_shared<MaskOperator>(Vec{1, 1, 1});
  const Vec xstar = {0.3, -0.8, 1.2};
  const ProblemSpec spec{op, op->apply(xstar), 0.0};
  const Vec g = residual_cost_grad(spec, xstar);
  for (double v : g) CHECK(std::abs(v) < 1e-10);
}

TEST_CASE("gram cost: zero when features match the reference") {
  const StyleExtractor ex(6, 3, 4, 42);
  Rng rng(7);
  const Vec x = gaussian_sample(rng, 6);
  const GramStyleCost cost(ex.features(x), ex);
  CHECK(cost.value(x) == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("gram is invariant to orthogonal column rotations") {
  // rotate feature columns by a Givens rotation; the Gram matrix is unchanged
  const StyleExtractor ex(6, 3, 4, 42);
  Rng rng(8);
  const Vec x = gaussian_sample(rng, 6);
  Mat f = ex.features(x);
  Mat rot(f.rows, f.cols);
  const double c = std::cos(0.7), s = std::sin(0.7);
  for (std::size_t i = 0; i < f.rows; ++i) {
    rot(i, 0) = c * f(i, 0) - s * f(i, 1);
    rot(i, 1) = s * f(i, 0) + c * f(i, 1);
    rot(i, 2) = f(i, 3);  // column swap (permutation) for the remaining pair
    rot(i, 3) = f(i, 2);
  }
  const GramStyleCost cost(rot, ex);
  CHECK(cost.value(x) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("gram cost gradient matches finite differences") {
  const StyleExtractor ex(6, 3, 4, 43);
  Rng rng(9);
  const Vec ref_in = gaussian_sample(rng, 6);
  const GramStyleCost cost(ex.features(ref_in), ex);
  for (int p = 0; p < 10; ++p) {
    const Vec x = gaussian_sample(rng, 6);
    const Vec an = cost.grad(x);
    const Vec fd = finite_diff_grad([&](const Vec& q) { return cost.value(q); }, x, 1e-5);
    CHECK(vec_rel_err(an, fd) < 1e-4);
  }
}

TEST_CASE("blind kernel gradient: zero residual, FD match, linear in residual") {
  Rng rng(10);
  const std::size_t d = 8;
  const BlurKernel ktrue = gaussian_blur_kernel(3, 0.8);
  const Vec x = gaussian_sample(rng, d);

  SUBCASE("zero residual gives zero kernel gradient") {
    const BlindDeconvCost cost(apply_circular_conv(ktrue, x), 0.0, ktrue);
    const Vec g = cost.kernel_grad(x);
    for (double v : g) CHECK(std::abs(v) < 1e-12);
  }
  SUBCASE("matches finite differences in kernel space") {
    const Vec y = gaussian_sample(rng, d);
    for (int p = 0; p < 10; ++p) {
      const Vec k = gaussian_sample(rng, 3);
      const BlindDeconvCost cost(y, 0.0, BlurKernel{k});
      const Vec an = cost.kernel_grad(x);
      const Vec fd = finite_diff_grad(
          [&](const Vec& q) { return BlindDeconvCost(y, 0.0, BlurKernel{q}).value(x); }, k, 1e-6);
      CHECK(vec_rel_err(an, fd) < 1e-5);
    }
  }
  SUBCASE("gradient is linear in the residual at fixed x") {
    // grad = -2 crosscorr(residual, x); doubling the residual doubles it
    const Vec y1 = apply_circular_conv(ktrue, x);
    Vec y2 = y1, y3 = y1;
    Rng nrng(11);
    const Vec dy = gaussian_sample(nrng, d);
    for (std::size_t i = 0; i < d; ++i) {
      y2[i] += dy[i];
      y3[i] += 2.0 * dy[i];
    }
    const Vec g2 = BlindDeconvCost(y2, 0.0, ktrue).kernel_grad(x);
    const Vec g3 = BlindDeconvCost(y3, 0.0, ktrue).kernel_grad(x);
    for (std::size_t i = 0; i < g2.size(); ++i) CHECK(g3[i] == doctest::Approx(2.0 * g2[i]));
  }
}

TEST_CASE("adjoint identity for the linear operators") {
  Rng rng(12);
  const std::size_t d = 12;
  std::vector<std::shared_ptr<const ForwardOperator>> ops = {
      std::make_shared<MaskOperator>(MaskOperator::random(d, 0.4, rng)),
      std::make_shared<DownsampleOperator>(d, 3),
      std::make_shared<CircularConvOperator>(d, gaussian_blur_kernel(5, 1.2))};
  for (const auto& op : ops) {
    for (int p = 0; p < 20; ++p) {
      const Vec x = gaussian_sample(rng, op->input_dim());
      const Vec w = gaussian_sample(rng, op->output_dim());
      CHECK(dot(op->apply(x), w) == doctest::Approx(dot(x, op->vjp(x, w))).epsilon(1e-10));
    }
  }
}

TEST_SUITE_END();
