#include <benchmark/benchmark.h>

#include "dtm/config.hpp"
#include "dtm/control.hpp"
#include "dtm/samplers.hpp"

namespace {

const dtm::NoiseSchedule& classic() {
  static dtm::NoiseSchedule s =
      dtm::build_schedule(dtm::ScheduleKind::LinearBeta, 1000, 1e-4, 0.02);
  return s;
}

dtm::GmmPrior signal64_prior() {
  std::vector<double> w;
  std::vector<dtm::Vec> m;
  std::vector<double> v;
  dtm::signal64_gmm_params(w, m, v);
  return dtm::GmmPrior(w, m, v);
}

void GmmEpsilon(benchmark::State& state) {
  const dtm::GmmPrior prior = signal64_prior();
  dtm::Rng rng(1);
  const dtm::Vec x = dtm::gaussian_sample(rng, 64);
  for (auto _ : state) {
    auto e = prior.eps(x, 0.5);
    benchmark::DoNotOptimize(e);
  }
}
BENCHMARK(GmmEpsilon);

void GmmEpsilonVjp(benchmark::State& state) {
  const dtm::GmmPrior prior = signal64_prior();
  dtm::Rng rng(2);
  const dtm::Vec x = dtm::gaussian_sample(rng, 64);
  const dtm::Vec cot = dtm::gaussian_sample(rng, 64);
  for (auto _ : state) {
    auto jv = prior.eps_vjp(x, 0.5, cot);
    benchmark::DoNotOptimize(jv);
  }
}
BENCHMARK(GmmEpsilonVjp);

void ControlInnerLoop(benchmark::State& state) {
  const dtm::GmmPrior prior = signal64_prior();
  const dtm::BlurKernel kern = dtm::gaussian_blur_kernel(5, 1.0);
  auto op = std::make_shared<dtm::CircularConvOperator>(64, kern);
  dtm::Rng rng(3);
  const dtm::Vec truth = dtm::gaussian_sample(rng, 64);
  const dtm::ResidualCost cost{dtm::ProblemSpec{op, op->observe(truth, 0.01, rng), 0.01}};
  dtm::GuidanceConfig cfg;
  cfg.n_inner = static_cast<int>(state.range(0));
  cfg.w_T = 50.0;
  cfg.eta = 0.7;
  const dtm::Vec x = dtm::gaussian_sample(rng, 64);
  for (auto _ : state) {
    dtm::Rng r(4);
    auto res = dtm::optimize_control(prior, classic(), &cost, x, 500, 480, cfg, r);
    benchmark::DoNotOptimize(res);
  }
}
BENCHMARK(ControlInnerLoop)->Arg(1)->Arg(5)->Arg(15);

void Ddim50StepSample(benchmark::State& state) {
  const dtm::GmmPrior prior = dtm::GmmPrior::standard_normal(2);
  dtm::GuidanceConfig cfg;
  cfg.n_steps = 50;
  cfg.eta = 1.0;
  std::uint64_t seed = 0;
  for (auto _ : state) {
    dtm::Rng rng(seed++);
    auto r = dtm::ddim_sample(prior, classic(), cfg, rng);
    benchmark::DoNotOptimize(r);
  }
}
BENCHMARK(Ddim50StepSample);

}  // namespace
