// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Thresholds are fixed here, not configurable.

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "dtm/baselines.hpp"
#include "dtm/config.hpp"
#include "dtm/metrics.hpp"
#include "dtm/mlp.hpp"
#include "dtm/oracle.hpp"
#include "dtm/runner.hpp"
#include "dtm/samplers.hpp"

using namespace dtm;

namespace {

int g_failures = 0;

void criterion(int index, const std::string& name, const std::function<std::string()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  std::string detail;
  bool pass = true;
  try {
    detail = body();
  } catch (const std::exception& e) {
    pass = false;
    detail = std::string("exception: ") + e.what();
  }
  if (!detail.empty() && detail.rfind("FAIL", 0) == 0) pass = false;
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::printf("[%s] criterion %2d %-28s (%.1fs) %s\n", pass ? "PASS" : "FAIL", index, name.c_str(),
              secs, detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

const NoiseSchedule& classic() {
  static NoiseSchedule s = build_schedule(ScheduleKind::LinearBeta, 1000, 1e-4, 0.02);
  return s;
}

struct Conjugate2d {
  GmmPrior prior = GmmPrior::standard_normal(2);
  std::shared_ptr<MaskOperator> op = std::make_shared<MaskOperator>(Vec{1, 0});
  Vec truth, y;
  std::shared_ptr<ResidualCost> cost;
  GaussianDist posterior;
  GuidanceConfig cfg;

  Conjugate2d() {
    Rng rng(5);
    truth = gaussian_sample(rng, 2);
    y = op->observe(truth, 0.1, rng);
    cost = std::make_shared<ResidualCost>(ProblemSpec{op, y, 0.1});
    Mat A(2, 2);
    A(0, 0) = 1.0;
    Mat cov(2, 2);
    cov(0, 0) = cov(1, 1) = 1.0;
    posterior = gaussian_posterior({0.0, 0.0}, cov, A, 0.1, y);
    // full Table-8 style tuple: N=5, gamma=1, eta=0.7, truncation 400, w_T=50,
    // schedule-derived weights, 50 sampling steps, lr 0.01 with linear decay
    cfg.n_inner = 5;
    cfg.gamma = 1.0;
    cfg.w_T = 50.0;
    cfg.w_s = Weight::ddim();
    cfg.w_c = Weight::ddim();
    cfg.eta = 0.7;
    cfg.n_steps = 50;
    cfg.start = 400;
    cfg.lr = 0.01;
  }

  // energy-distance ratio of guided vs unguided samples against the analytic
  // posterior; model defaults to the analytic prior.
  double ed_ratio(const ScoreModel& model, int n_samples, std::uint64_t seed_base) const {
    std::vector<Vec> guided, unguided, post;
    Rng prng(9090);
    for (int i = 0; i < n_samples; ++i) {
      Rng rg(seed_base + static_cast<std::uint64_t>(i));
      Rng ru(seed_base + static_cast<std::uint64_t>(i));
      guided.push_back(ndtm_sample(model, classic(), cost.get(), cfg, rg).x0);
      unguided.push_back(ddim_sample(model, classic(), cfg, ru).x0);
      post.push_back(posterior.sample(prng));
    }
    return energy_distance(guided, post) / energy_distance(unguided, post);
  }
};

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list args;
  va_start(args, f);
  std::vsnprintf(buf, sizeof(buf), f, args);
  va_end(args);
  return buf;
}

}  // namespace

int main() {
  std::printf("acceptance suite\n");

  criterion(1, "gradient-exactness", [] {
    const auto rows = run_gradcheck(2024, 100, "");
    int failures = 0;
    double worst = 0.0;
    int checked = 0;
    for (const auto& r : rows) {
      if (r.informational) continue;
      ++checked;
      worst = std::max(worst, r.value);
      if (!r.pass) ++failures;
    }
    if (failures > 0) return fmt("FAIL %d/%d checks exceeded 1e-4 (worst %.2e)", failures, checked, worst);
    return fmt("%d FD/adjoint checks, worst rel err %.2e < 1e-4", checked, worst);
  });

  criterion(2, "null-guidance-identity", [] {
    Conjugate2d f;
    GuidanceConfig cfg = f.cfg;
    cfg.w_T = 0.0;
    const OtGaussianFlow flow(2);
    GuidanceConfig fcfg = cfg;
    fcfg.n_steps = 60;
    GuidanceConfig scfg = cfg;
    scfg.n_steps = 100;
    int mismatches = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      Rng a1(seed), a2(seed);
      if (ndtm_sample(f.prior, classic(), f.cost.get(), cfg, a1).x0 !=
          ddim_sample(f.prior, classic(), cfg, a2).x0)
        ++mismatches;
      Rng b1(seed), b2(seed);
      if (sde_sample(f.prior, classic(), f.cost.get(), scfg, b1).x0 !=
          sde_sample(f.prior, classic(), nullptr, scfg, b2).x0)
        ++mismatches;
      Rng c1(seed), c2(seed);
      if (ftm_sample(flow, f.cost.get(), fcfg, c1).x0 != ftm_sample(flow, nullptr, fcfg, c2).x0)
        ++mismatches;
    }
    if (mismatches > 0) return fmt("FAIL %d/60 trajectories differ bitwise", mismatches);
    return std::string("20 seeds x 3 samplers bit-identical");
  });

  criterion(3, "marginal-preservation", [] {
    // 50-step eta=1 DDIM with an exact score under-disperses on coarse grids;
    // the cosine schedule keeps the bias inside the tolerance band.
    const NoiseSchedule sched = build_schedule(ScheduleKind::Cosine, 1000, 1e-7, 0.999);
    const GmmPrior prior = GmmPrior::standard_normal(2);
    GuidanceConfig cfg;
    cfg.eta = 1.0;
    cfg.n_steps = 50;
    Rng rng(31337);
    const int n = 10000;
    double sum[2] = {0, 0}, sum2[2] = {0, 0};
    for (int i = 0; i < n; ++i) {
      const SampleResult r = ddim_sample(prior, sched, cfg, rng);
      for (int k = 0; k < 2; ++k) {
        sum[k] += r.x0[k];
        sum2[k] += r.x0[k] * r.x0[k];
      }
    }
    bool ok = true;
    double m[2], v[2];
    for (int k = 0; k < 2; ++k) {
      m[k] = sum[k] / n;
      v[k] = sum2[k] / n - m[k] * m[k];
      ok = ok && std::abs(m[k]) < 0.05 && v[k] > 0.9 && v[k] < 1.1;
    }
    const std::string detail =
        fmt("mean (%.4f, %.4f), var (%.4f, %.4f) vs |m|<0.05, var in [0.9,1.1]", m[0], m[1],
            v[0], v[1]);
    if (!ok) return "FAIL " + detail;
    return detail;
  });

  criterion(4, "conjugate-posterior-recovery", [] {
    Conjugate2d f;
    const double ratio = f.ed_ratio(f.prior, 500, 77000);
    if (!(ratio < 0.2)) return fmt("FAIL energy-distance ratio %.4f >= 0.2", ratio);
    return fmt("energy-distance ratio %.4f < 0.2", ratio);
  });

  criterion(5, "rb-modulation-equality", [] {
    Conjugate2d f;
    GuidanceConfig base = f.cfg;
    base.gamma = 3.0;  // arbitrary; the preset overrides it
    GuidanceConfig manual = base;
    manual.gamma = 1.0;
    manual.w_s = Weight::fixed(0.0);
    manual.w_c = Weight::fixed(0.0);
    int mismatches = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      Rng r1(seed), r2(seed);
      if (ndtm_sample(f.prior, classic(), f.cost.get(), rb_modulation_config(base), r1).x0 !=
          ndtm_sample(f.prior, classic(), f.cost.get(), manual, r2).x0)
        ++mismatches;
    }
    if (mismatches > 0) return fmt("FAIL %d/20 seeds differ bitwise", mismatches);
    return std::string("20 seeds bit-identical");
  });

  criterion(6, "linear-control-reduction", [] {
    Rng rng(606);
    double worst = 0.0;
    for (int p = 0; p < 1000; ++p) {
      const int t = 1 + static_cast<int>(rng.below(1000));
      const Vec x = gaussian_sample(rng, 3);
      const Vec y = gaussian_sample(rng, 3);
      const double sy = 0.05 + rng.uniform();
      const double w_T = 0.1 + 2.0 * rng.uniform();
      const double g = 0.1 + rng.uniform();
      const Vec u = linear_optimal_control_gaussian(classic(), t, x, y, sy, w_T, g);
      const Vec cs = conditional_score(classic(), t, x, y, sy);
      for (int i = 0; i < 3; ++i) worst = std::max(worst, std::abs(u[i] - g * w_T * cs[i]));
    }
    if (!(worst < 1e-9)) return fmt("FAIL max abs diff %.2e >= 1e-9", worst);
    return fmt("1000 probes, max abs diff %.2e < 1e-9", worst);
  });

  criterion(7, "kl-decomposition", [] {
    const std::size_t dim = 2;
    const Vec deltas = {0.8, -0.5, 0.3};
    const Vec sigmas = {0.6, 0.45, 0.7};
    std::vector<ChainStep> steps;
    double analytic = 0.0;
    for (int i = 0; i < 3; ++i) {
      const double dlt = deltas[static_cast<std::size_t>(i)];
      const double sg = sigmas[static_cast<std::size_t>(i)];
      steps.push_back(ChainStep{[dlt](const Vec& x) {
                                  Vec m(x.size());
                                  for (std::size_t j = 0; j < x.size(); ++j)
                                    m[j] = 0.85 * x[j] + dlt;
                                  return m;
                                },
                                [](const Vec& x) {
                                  Vec m(x.size());
                                  for (std::size_t j = 0; j < x.size(); ++j) m[j] = 0.85 * x[j];
                                  return m;
                                },
                                sg});
      analytic += static_cast<double>(dim) * dlt * dlt / (2.0 * sg * sg);
    }
    Rng rng(707);
    const KlEstimate est = mc_chain_kl(steps, dim, 10000, rng);
    const double diff = std::abs(est.estimate - analytic);
    if (diff > 3.0 * est.stderr_ + 1e-9)
      return fmt("FAIL |%.6f - %.6f| > 3 stderr (%.2e)", est.estimate, analytic, est.stderr_);
    return fmt("estimate %.6f vs analytic %.6f within 3 stderr", est.estimate, analytic);
  });

  criterion(8, "triangle-bound-verification", [] {
    Rng rng(808);
    const int n = 100000;
    int factor2_viol = 0, paper_viol = 0;
    for (int i = 0; i < n; ++i) {
      const Vec a = gaussian_sample(rng, 4);
      const Vec b = gaussian_sample(rng, 4);
      const TriangleBoundCheck c = check_squared_triangle_bound(a, b);
      if (!c.holds_factor2) ++factor2_viol;
      if (!c.holds_paper) ++paper_viol;
    }
    const double rate = static_cast<double>(paper_viol) / n;
    if (factor2_viol != 0) return fmt("FAIL factor-2 bound violated %d times", factor2_viol);
    return fmt("factor-2 bound: 0/%d violations; uncorrected-bound violation rate %.3f "
               "(informational)", n, rate);
  });

  criterion(9, "terminal-weight-trend", [] {
    Conjugate2d f;
    const std::vector<double> grid = {0.0, 1.0, 10.0, 50.0};
    std::vector<double> medians;
    for (double wT : grid) {
      GuidanceConfig cfg = f.cfg;
      cfg.w_T = wT;
      std::vector<double> residuals;
      for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(19000 + seed);
        const Vec x0 = ndtm_sample(f.prior, classic(), f.cost.get(), cfg, rng).x0;
        const Vec ax = f.op->apply(x0);
        double q = 0.0;
        for (std::size_t i = 0; i < ax.size(); ++i) q += std::pow(f.y[i] - ax[i], 2);
        residuals.push_back(std::sqrt(q));
      }
      medians.push_back(median(residuals));
    }
    bool ok = true;
    for (std::size_t i = 1; i < medians.size(); ++i)
      if (medians[i] > medians[i - 1] * (1.0 + 1e-12)) ok = false;
    const std::string detail = fmt("median residuals %.4f, %.4f, %.4f, %.4f for w_T=0,1,10,50",
                                   medians[0], medians[1], medians[2], medians[3]);
    if (!ok) return "FAIL " + detail;
    return detail;
  });

  criterion(10, "runtime-linear-in-N", [] {
    std::vector<double> w, v;
    std::vector<Vec> m;
    signal64_gmm_params(w, m, v);
    const GmmPrior prior(w, m, v);
    const BlurKernel kern = gaussian_blur_kernel(5, 1.0);
    auto op = std::make_shared<CircularConvOperator>(64, kern);
    Rng trng(1010);
    const Vec truth = prior.sample(trng);
    const Vec y = op->observe(truth, 0.01, trng);
    const ResidualCost cost{ProblemSpec{op, y, 0.01}};

    const std::vector<int> grid = {1, 2, 4, 8};
    std::vector<double> secs;
    for (int N : grid) {
      GuidanceConfig cfg;
      cfg.n_inner = N;
      cfg.w_T = 50.0;
      cfg.gamma = 1.0;
      cfg.eta = 0.7;
      cfg.n_steps = 50;
      double best = 1e100;
      for (int rep = 0; rep < 3; ++rep) {
        const auto t0 = std::chrono::steady_clock::now();
        for (int traj = 0; traj < 8; ++traj) {
          Rng rng(800 + static_cast<std::uint64_t>(traj));
          (void)ndtm_sample(prior, classic(), &cost, cfg, rng);
        }
        best = std::min(best,
                        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
      }
      secs.push_back(best);
    }
    // least-squares fit secs = a + b N, report R^2
    double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
    const double n = static_cast<double>(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
      sx += grid[i];
      sy += secs[i];
      sxx += grid[i] * grid[i];
      sxy += grid[i] * secs[i];
      syy += secs[i] * secs[i];
    }
    const double cov = sxy - sx * sy / n;
    const double vx = sxx - sx * sx / n;
    const double vy = syy - sy * sy / n;
    const double r2 = cov * cov / (vx * vy);
    if (!(r2 > 0.95))
      return fmt("FAIL R^2 %.4f <= 0.95 (times %.4f %.4f %.4f %.4f s)", r2, secs[0], secs[1],
                 secs[2], secs[3]);
    return fmt("R^2 %.4f > 0.95 (times %.4f %.4f %.4f %.4f s)", r2, secs[0], secs[1], secs[2],
               secs[3]);
  });

  criterion(11, "blind-deconvolution", [] {
    std::vector<double> w, v;
    std::vector<Vec> m;
    signal64_gmm_params(w, m, v);
    const GmmPrior prior(w, m, v);
    const BlurKernel ktrue = gaussian_blur_kernel(5, 1.0);
    auto op = std::make_shared<CircularConvOperator>(64, ktrue);
    Rng trng(1111);
    const Vec truth = prior.sample(trng);
    const Vec y = op->observe(truth, 0.01, trng);

    GuidanceConfig cfg;
    apply_guidance_preset(cfg, "bid_gaussian");  // N=15, 200 steps, ddim weights
    BlurKernel kinit;
    kinit.taps.assign(5, 0.2);
    Rng rng(2222);
    const BlindSampleResult res =
        ndtm_sample_blind(prior, classic(), y, 0.01, kinit, cfg, rng);

    double kerr = 0.0;
    for (std::size_t i = 0; i < 5; ++i)
      kerr += std::pow(res.kernel.taps[i] - ktrue.taps[i], 2);
    kerr = std::sqrt(kerr);

    auto resid = [&](const BlurKernel& k) {
      const Vec ax = apply_circular_conv(k, res.x0);
      double q = 0.0;
      for (std::size_t i = 0; i < ax.size(); ++i) q += std::pow(y[i] - ax[i], 2);
      return std::sqrt(q);
    };
    const double r_final = resid(res.kernel);
    const double r_init = resid(kinit);
    const double gain = r_init / r_final;
    if (!(kerr < 0.1) || !(gain >= 5.0))
      return fmt("FAIL kernel l2 err %.4f (need < 0.1), init/final residual %.2fx (need >= 5x)",
                 kerr, gain);
    return fmt("kernel l2 err %.4f < 0.1, init/final residual %.1fx >= 5x", kerr, gain);
  });

  criterion(12, "trained-denoiser-swap", [] {
    const std::size_t d = 2;
    Rng init_rng(1212);
    MlpDenoiser mlp(d, 64, init_rng);
    std::vector<Vec> dataset;
    Rng data_rng(1313);
    for (int i = 0; i < 8192; ++i) dataset.push_back(gaussian_sample(data_rng, d));
    Rng train_rng(1414);
    // staged lr decay with growing batches to push down the SGD noise floor
    train_mlp_denoiser(mlp, dataset, classic(), 200, 0.01, 256, train_rng);
    train_mlp_denoiser(mlp, dataset, classic(), 200, 0.002, 256, train_rng);
    train_mlp_denoiser(mlp, dataset, classic(), 150, 5e-4, 512, train_rng);
    train_mlp_denoiser(mlp, dataset, classic(), 150, 1e-4, 1024, train_rng);

    // accuracy against the analytic eps at mid-schedule probes
    Rng probe_rng(1515);
    const GmmPrior analytic = GmmPrior::standard_normal(d);
    double worst = 0.0;
    int bad = 0;
    for (int p = 0; p < 100; ++p) {
      const int t = 400 + static_cast<int>(probe_rng.below(200));
      const double abar = classic().at(t);
      const Vec x = gaussian_sample(probe_rng, d);
      const Vec pred = mlp.eps(x, abar);
      const Vec want = analytic.eps(x, abar);
      double num = 0.0, den = 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        num += std::pow(pred[i] - want[i], 2);
        den += want[i] * want[i];
      }
      const double rel = std::sqrt(num) / std::max(1e-12, std::sqrt(den));
      worst = std::max(worst, rel);
      if (rel >= 0.1) ++bad;
    }
    if (bad > 0) return fmt("FAIL %d/100 probes with rel err >= 0.1 (worst %.3f)", bad, worst);

    Conjugate2d f;
    const double ratio = f.ed_ratio(mlp, 500, 88000);
    if (!(ratio < 0.4)) return fmt("FAIL mlp-guided energy-distance ratio %.4f >= 0.4", ratio);
    return fmt("eps worst rel err %.3f < 0.1; mlp-guided ED ratio %.4f < 0.4", worst, ratio);
  });

  std::printf("%d/%d criteria passed\n", 12 - g_failures, 12);
  return g_failures == 0 ? 0 : 1;
}
