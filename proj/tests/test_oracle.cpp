#include <stdexcept>
#include <cmath>

#include "doctest.h"
#include "dtm/oracle.hpp"

using namespace dtm;

TEST_SUITE_BEGIN("oracle");

namespace {
const NoiseSchedule& classic() {
  static NoiseSchedule s = build_schedule(ScheduleKind::LinearBeta, 1000, 1e-4, 0.02);
  return s;
}

Mat identity(std::size_t d) {
  Mat m(d, d);
  for (std::size_t i = 0; i < d; ++i) m(i, i) = 1.0;
  return m;
}
}  // namespace

TEST_CASE("gaussian_posterior: scalar conjugate example") {
  const GaussianDist p = gaussian_posterior({0.0}, identity(1), identity(1), 1.0, {2.0});
  CHECK(p.mean[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(p.cov(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("gaussian_posterior: uninformative likelihood recovers the prior") {
  const GaussianDist p = gaussian_posterior({0.4, -0.3}, identity(2), identity(2), 1e6, {9.0, 9.0});
  CHECK(std::abs(p.mean[0] - 0.4) < 1e-5);
  CHECK(std::abs(p.mean[1] + 0.3) < 1e-5);
}

TEST_CASE("gaussian_posterior: A = 0 returns the prior exactly") {
  Mat a(2, 2);  // zero matrix
  const GaussianDist p = gaussian_posterior({0.7, 0.1}, identity(2), a, 0.5, {1.0, 2.0});
  CHECK(p.mean[0] == doctest::Approx(0.7).epsilon(1e-12));
  CHECK(p.mean[1] == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(p.cov(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("gaussian_posterior precision is SPD for random inputs") {
  Rng rng(1);
  for (int rep = 0; rep < 20; ++rep) {
    const std::size_t d = 3;
    Mat a(d, d);
    for (auto& v : a.a) v = rng.normal();
    Mat cov = identity(d);
    for (std::size_t i = 0; i < d; ++i) cov(i, i) = 0.5 + rng.uniform();
    const Vec y = gaussian_sample(rng, d);
    const GaussianDist p = gaussian_posterior(Vec(d, 0.0), cov, a, 0.3, y);
    // sampling exercises the Cholesky factorisation; failure would throw
    Rng srng(2);
    const Vec s = p.sample(srng);
    CHECK(s.size() == d);
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j)
        CHECK(p.cov(i, j) == doctest::Approx(p.cov(j, i)).epsilon(1e-9));
  }
}

TEST_CASE("gaussian_posterior rejects a singular prior covariance") {
  Mat cov(2, 2);  // rank deficient
  cov(0, 0) = 1.0;
  CHECK_THROWS(gaussian_posterior({0.0, 0.0}, cov, identity(2), 1.0, {1.0, 1.0}));
}

TEST_CASE("conditional_score: zero at y = sqrt(abar) x, pinned value") {
  NoiseSchedule s;
  s.T = 1;
  s.alpha_bar = {0.9999, 0.25};
  CHECK(conditional_score(s, 1, {1.0}, {0.5}, 1.0)[0] == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(conditional_score(s, 1, {1.0}, {2.0}, 1.0)[0] == doctest::Approx(0.428571).epsilon(1e-6));
}

TEST_CASE("conditional_score matches finite differences of the quadrature log-marginal") {
  Rng rng(3);
  for (int p = 0; p < 10; ++p) {
    const int t = 100 + static_cast<int>(rng.below(850));
    const double abar = classic().at(t);
    const double x = rng.normal();
    const double y = rng.normal();
    const double sy = 0.3 + rng.uniform();
    const double h = 1e-4;
    const double fd = (log_marginal_y_quadrature_1d(abar, x + h, y, sy) -
                       log_marginal_y_quadrature_1d(abar, x - h, y, sy)) /
                      (2.0 * h);
    const Vec cs = conditional_score(classic(), t, {x}, {y}, sy);
    CHECK(std::abs(cs[0] - fd) / std::max(1e-10, std::abs(fd)) < 1e-5);
  }
}

TEST_CASE("finite_diff_grad: quadratic and constant functions") {
  const Vec g = finite_diff_grad([](const Vec& x) { return squared_norm(x); }, {3.0}, 1e-3);
  CHECK(g[0] == doctest::Approx(6.0).epsilon(1e-5));
  const Vec c = finite_diff_grad([](const Vec&) { return 4.2; }, {1.0, -1.0}, 1e-3);
  CHECK(c[0] == 0.0);
  CHECK(c[1] == 0.0);
}

TEST_CASE("mc_chain_kl: identical chains give exactly zero") {
  auto mean = [](const Vec& x) {
    Vec m(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) m[i] = 0.8 * x[i];
    return m;
  };
  std::vector<ChainStep> steps = {ChainStep{mean, mean, 0.5}, ChainStep{mean, mean, 0.4}};
  Rng rng(4);
  const KlEstimate est = mc_chain_kl(steps, 2, 100, rng);
  CHECK(est.estimate == 0.0);
  CHECK(est.stderr_ == 0.0);
}

TEST_CASE("mc_chain_kl: single step with fixed mean shift") {
  // means differ by 1 with sigma^2 = 0.25 -> KL = 1 / (2 * 0.25) = 2
  auto mg = [](const Vec& x) {
    Vec m(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) m[i] = x[i] + 1.0;
    return m;
  };
  auto mu = [](const Vec& x) { return x; };
  std::vector<ChainStep> steps = {ChainStep{mg, mu, 0.5}};
  Rng rng(5);
  const KlEstimate est = mc_chain_kl(steps, 1, 50, rng);
  CHECK(est.estimate == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(est.stderr_ == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("mc_chain_kl: 3-step chain with state-independent controls matches the analytic sum") {
  const Vec deltas = {0.6, -0.4, 0.9};
  const Vec sigmas = {0.5, 0.7, 0.3};
  std::vector<ChainStep> steps;
  double analytic = 0.0;
  const std::size_t dim = 2;
  for (int i = 0; i < 3; ++i) {
    const double dlt = deltas[static_cast<std::size_t>(i)];
    const double sg = sigmas[static_cast<std::size_t>(i)];
    steps.push_back(ChainStep{[dlt](const Vec& x) {
                                Vec m(x.size());
                                for (std::size_t j = 0; j < x.size(); ++j) m[j] = 0.9 * x[j] + dlt;
                                return m;
                              },
                              [](const Vec& x) {
                                Vec m(x.size());
                                for (std::size_t j = 0; j < x.size(); ++j) m[j] = 0.9 * x[j];
                                return m;
                              },
                              sg});
    analytic += static_cast<double>(dim) * dlt * dlt / (2.0 * sg * sg);
  }
  Rng rng(6);
  const KlEstimate est = mc_chain_kl(steps, dim, 10000, rng);
  CHECK(std::abs(est.estimate - analytic) <= 3.0 * est.stderr_ + 1e-9);
}

TEST_CASE("mc_chain_kl rejects sigma = 0 and long chains") {
  auto id = [](const Vec& x) { return x; };
  std::vector<ChainStep> bad = {ChainStep{id, id, 0.0}};
  Rng rng(7);
  CHECK_THROWS_AS(mc_chain_kl(bad, 1, 10, rng), std::invalid_argument);
  std::vector<ChainStep> five(5, ChainStep{id, id, 1.0});
  CHECK_THROWS_AS(mc_chain_kl(five, 1, 10, rng), std::invalid_argument);
}

TEST_CASE("squared triangle bound: aligned, cancelling and fuzzed pairs") {
  SUBCASE("aligned vectors break the uncorrected bound") {
    const TriangleBoundCheck c = check_squared_triangle_bound({1.0}, {1.0});
    CHECK_FALSE(c.holds_paper);
    CHECK(c.holds_factor2);
  }
  SUBCASE("cancellation satisfies both") {
    const TriangleBoundCheck c = check_squared_triangle_bound({1.0}, {-1.0});
    CHECK(c.holds_paper);
    CHECK(c.holds_factor2);
  }
  SUBCASE("factor-2 bound holds universally on random pairs") {
    Rng rng(8);
    for (int i = 0; i < 100000; ++i) {
      const Vec a = gaussian_sample(rng, 3);
      const Vec b = gaussian_sample(rng, 3);
      CHECK(check_squared_triangle_bound(a, b).holds_factor2);
    }
  }
}

TEST_CASE("mc_chain_kl estimate is nonnegative up to 3 stderr") {
  auto mg = [](const Vec& x) {
    Vec m(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) m[i] = 0.7 * x[i] + 0.1 * std::sin(x[i]);
    return m;
  };
  auto mu = [](const Vec& x) {
    Vec m(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) m[i] = 0.7 * x[i];
    return m;
  };
  std::vector<ChainStep> steps = {ChainStep{mg, mu, 0.6}, ChainStep{mg, mu, 0.8}};
  Rng rng(9);
  const KlEstimate est = mc_chain_kl(steps, 2, 500, rng);
  CHECK(est.estimate + 3.0 * est.stderr_ >= 0.0);
  CHECK(est.estimate >= 0.0);  // per-step terms are squared norms
}

TEST_SUITE_END();
