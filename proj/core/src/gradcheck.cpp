#include <cmath>
#include <memory>

#include "dtm/baselines.hpp"
#include "dtm/io.hpp"
#include "dtm/mlp.hpp"
#include "dtm/runner.hpp"

namespace dtm {

namespace {

GmmPrior make_test_gmm(std::size_t dim, Rng& rng) {
  std::vector<double> w = {0.5, 0.3, 0.2};
  std::vector<Vec> means;
  std::vector<double> vars = {0.6, 1.2, 0.9};
  for (int k = 0; k < 3; ++k) {
    Vec m(dim);
    for (auto& v : m) v = 2.0 * rng.normal();
    means.push_back(std::move(m));
  }
  return GmmPrior(w, means, vars);
}

// f = <eps(x), cot> with fixed cotangent; grad = eps_vjp(x, cot).
void add_eps_cases(std::vector<GradCheckCase>& cases, const std::string& name,
                   std::shared_ptr<const ScoreModel> model, double abar, int n_probes, Rng& rng) {
  for (int p = 0; p < n_probes; ++p) {
    Vec probe = gaussian_sample(rng, model->dim());
    auto cot = std::make_shared<Vec>(gaussian_sample(rng, model->dim()));
    cases.push_back(GradCheckCase{
        name,
        [model, abar, cot](const Vec& x) { return dot(model->eps(x, abar), *cot); },
        [model, abar, cot](const Vec& x) { return model->eps_vjp(x, abar, *cot); },
        std::move(probe)});
  }
}

void add_tweedie_cases(std::vector<GradCheckCase>& cases, std::shared_ptr<const ScoreModel> model,
                       double abar, int n_probes, Rng& rng) {
  for (int p = 0; p < n_probes; ++p) {
    Vec probe = gaussian_sample(rng, model->dim());
    auto cot = std::make_shared<Vec>(gaussian_sample(rng, model->dim()));
    cases.push_back(GradCheckCase{
        "priors/tweedie",
        [model, abar, cot](const Vec& x) { return dot(tweedie_estimate(*model, x, abar), *cot); },
        [model, abar, cot](const Vec& x) { return tweedie_vjp(*model, x, abar, *cot); },
        std::move(probe)});
  }
}

void add_cost_cases(std::vector<GradCheckCase>& cases, const std::string& name,
                    std::shared_ptr<const TerminalCost> cost, std::size_t dim, int n_probes,
                    Rng& rng) {
  for (int p = 0; p < n_probes; ++p) {
    cases.push_back(GradCheckCase{
        name, [cost](const Vec& x) { return cost->value(x); },
        [cost](const Vec& x) { return cost->grad(x); }, gaussian_sample(rng, dim)});
  }
}

}  // namespace

std::vector<GradCheckCase> build_gradcheck_registry(std::uint64_t seed, int probes_per_component) {
  Rng rng(seed);
  std::vector<GradCheckCase> cases;
  const int np = probes_per_component;

  const auto sched = std::make_shared<NoiseSchedule>(
      build_schedule(ScheduleKind::LinearBeta, 1000, 1e-4, 0.02));

  // score models at a mid-schedule signal level
  const double abar = sched->at(400);
  auto stdnorm = std::make_shared<GmmPrior>(GmmPrior::standard_normal(2));
  add_eps_cases(cases, "priors/eps_std_normal", stdnorm, abar, np, rng);
  for (std::size_t d : {std::size_t{1}, std::size_t{2}, std::size_t{5}}) {
    Rng prior_rng = rng.child(100 + d);
    auto gmm = std::make_shared<GmmPrior>(make_test_gmm(d, prior_rng));
    add_eps_cases(cases, "priors/eps_gmm_d" + std::to_string(d), gmm, abar, np, rng);
  }
  {
    Rng init = rng.child(7);
    auto mlp = std::make_shared<MlpDenoiser>(2, 16, init);
    add_eps_cases(cases, "priors/eps_mlp", mlp, abar, np, rng);
  }
  {
    Rng prior_rng = rng.child(102);
    auto gmm = std::make_shared<GmmPrior>(make_test_gmm(2, prior_rng));
    add_tweedie_cases(cases, gmm, abar, np, rng);
  }

  // operators composed into residual costs
  const std::size_t d = 8;
  Rng op_rng = rng.child(200);
  Vec truth = gaussian_sample(op_rng, d);
  {
    auto op = std::make_shared<MaskOperator>(MaskOperator::random(d, 0.5, op_rng));
    Vec y = op->observe(truth, 0.05, op_rng);
    add_cost_cases(cases, "terminal/residual_mask",
                   std::make_shared<ResidualCost>(ProblemSpec{op, y, 0.05}), d, np, rng);
  }
  {
    auto op = std::make_shared<DownsampleOperator>(d, 2);
    Vec y = op->observe(truth, 0.05, op_rng);
    add_cost_cases(cases, "terminal/residual_downsample",
                   std::make_shared<ResidualCost>(ProblemSpec{op, y, 0.05}), d, np, rng);
  }
  const BlurKernel kern = gaussian_blur_kernel(3, 0.8);
  {
    auto op = std::make_shared<CircularConvOperator>(d, kern);
    Vec y = op->observe(truth, 0.05, op_rng);
    add_cost_cases(cases, "terminal/residual_conv",
                   std::make_shared<ResidualCost>(ProblemSpec{op, y, 0.05}), d, np, rng);
  }
  {
    auto op = std::make_shared<NonlinearBlurOperator>(d, kern, 1.5);
    Vec y = op->observe(truth, 0.05, op_rng);
    add_cost_cases(cases, "terminal/residual_nonlinear_blur",
                   std::make_shared<ResidualCost>(ProblemSpec{op, y, 0.05}), d, np, rng);
  }
  {
    StyleExtractor ex(d, 3, 4, 99);
    Vec ref_in = gaussian_sample(op_rng, d);
    auto cost = std::make_shared<GramStyleCost>(ex.features(ref_in), ex);
    add_cost_cases(cases, "terminal/gram_style", cost, d, np, rng);
  }
  {
    auto op = std::make_shared<CircularConvOperator>(d, kern);
    Vec y = op->observe(truth, 0.05, op_rng);
    // kernel-side gradient of the blind cost, probed in kernel space
    for (int p = 0; p < np; ++p) {
      auto x0 = std::make_shared<Vec>(gaussian_sample(rng, d));
      auto yk = std::make_shared<Vec>(y);
      cases.push_back(GradCheckCase{
          "terminal/blind_kernel_grad",
          [x0, yk](const Vec& k) {
            return BlindDeconvCost(*yk, 0.05, BlurKernel{k}).value(*x0);
          },
          [x0, yk](const Vec& k) {
            return BlindDeconvCost(*yk, 0.05, BlurKernel{k}).kernel_grad(*x0);
          },
          gaussian_sample(rng, kern.taps.size())});
    }
  }

  // control objective for (prior x cost) pairings
  {
    Rng prior_rng = rng.child(103);
    auto gmm = std::make_shared<GmmPrior>(make_test_gmm(4, prior_rng));
    auto op = std::make_shared<MaskOperator>(MaskOperator::random(4, 0.75, op_rng));
    Vec truth4 = gaussian_sample(op_rng, 4);
    Vec y = op->observe(truth4, 0.05, op_rng);
    auto cost = std::make_shared<ResidualCost>(ProblemSpec{op, y, 0.05});
    auto cfg = std::make_shared<GuidanceConfig>();
    cfg->gamma = 1.5;
    cfg->w_T = 3.0;
    cfg->eta = 0.5;
    for (int p = 0; p < np; ++p) {
      auto xt = std::make_shared<Vec>(gaussian_sample(rng, 4));
      const int t = 200 + static_cast<int>(rng.below(700));
      const int t_prev = t - 1 - static_cast<int>(rng.below(100));
      cases.push_back(GradCheckCase{
          "control/cost_gmm_mask",
          [gmm, sched, cost, xt, t, t_prev, cfg](const Vec& u) {
            return control_cost(*gmm, *sched, cost.get(), *xt, u, t, std::max(0, t_prev), *cfg)
                .total;
          },
          [gmm, sched, cost, xt, t, t_prev, cfg](const Vec& u) {
            return control_grad(*gmm, *sched, cost.get(), *xt, u, t, std::max(0, t_prev), *cfg);
          },
          gaussian_sample(rng, 4)});
    }
    Rng init = rng.child(8);
    auto mlp = std::make_shared<MlpDenoiser>(4, 16, init);
    for (int p = 0; p < np; ++p) {
      auto xt = std::make_shared<Vec>(gaussian_sample(rng, 4));
      const int t = 200 + static_cast<int>(rng.below(700));
      const int t_prev = t - 1 - static_cast<int>(rng.below(100));
      cases.push_back(GradCheckCase{
          "control/cost_mlp_mask",
          [mlp, sched, cost, xt, t, t_prev, cfg](const Vec& u) {
            return control_cost(*mlp, *sched, cost.get(), *xt, u, t, std::max(0, t_prev), *cfg)
                .total;
          },
          [mlp, sched, cost, xt, t, t_prev, cfg](const Vec& u) {
            return control_grad(*mlp, *sched, cost.get(), *xt, u, t, std::max(0, t_prev), *cfg);
          },
          gaussian_sample(rng, 4)});
    }
  }
  return cases;
}

std::vector<ValidationRow> run_gradcheck(std::uint64_t seed, int probes_per_component,
                                         const std::string& csv_path) {
  std::vector<ValidationRow> rows;
  const auto cases = build_gradcheck_registry(seed, probes_per_component);
  for (const auto& r : run_grad_checks(cases, 1e-5, 1e-4))
    rows.push_back(ValidationRow{r.component, r.probe_index, r.rel_err, r.pass, false});

  Rng rng(seed ^ 0x5bd1e995ull);

  // adjoint identity <A x, w> == <x, A^T w> for the linear operators
  auto adjoint_check = [&](const std::string& name, const ForwardOperator& op) {
    for (int p = 0; p < probes_per_component; ++p) {
      const Vec x = gaussian_sample(rng, op.input_dim());
      const Vec w = gaussian_sample(rng, op.output_dim());
      const double lhs = dot(op.apply(x), w);
      const double rhs = dot(x, op.vjp(x, w));
      const double rel = std::abs(lhs - rhs) / std::max({std::abs(lhs), std::abs(rhs), 1e-10});
      rows.push_back(ValidationRow{name, p, rel, rel < 1e-10, false});
    }
  };
  const std::size_t d = 8;
  Rng op_rng(seed + 11);
  adjoint_check("adjoint/mask", MaskOperator(MaskOperator::random(d, 0.5, op_rng)));
  adjoint_check("adjoint/downsample", DownsampleOperator(d, 2));
  adjoint_check("adjoint/circular_conv", CircularConvOperator(d, gaussian_blur_kernel(3, 0.8)));

  // linearity of the linear operators
  auto linearity_check = [&](const std::string& name, const ForwardOperator& op) {
    for (int p = 0; p < probes_per_component; ++p) {
      const Vec x = gaussian_sample(rng, op.input_dim());
      const Vec z = gaussian_sample(rng, op.input_dim());
      const double a = rng.normal(), b = rng.normal();
      Vec comb(x.size());
      for (std::size_t i = 0; i < x.size(); ++i) comb[i] = a * x[i] + b * z[i];
      const Vec lhs = op.apply(comb);
      const Vec ax = op.apply(x), az = op.apply(z);
      double err = 0.0, scale = 1e-12;
      for (std::size_t i = 0; i < lhs.size(); ++i) {
        const double want = a * ax[i] + b * az[i];
        err = std::max(err, std::abs(lhs[i] - want));
        scale = std::max(scale, std::abs(want));
      }
      const double rel = err / scale;
      rows.push_back(ValidationRow{name, p, rel, rel < 1e-12, false});
    }
  };
  linearity_check("linearity/mask", MaskOperator(MaskOperator::random(d, 0.5, op_rng)));
  linearity_check("linearity/downsample", DownsampleOperator(d, 2));
  linearity_check("linearity/circular_conv", CircularConvOperator(d, gaussian_blur_kernel(3, 0.8)));

  // informational: violation rates of the paper's uncorrected bound vs the
  // factor-2 bound on random Gaussian pairs
  {
    const int n = 100000;
    int paper_viol = 0, factor2_viol = 0;
    for (int i = 0; i < n; ++i) {
      const Vec a = gaussian_sample(rng, 4);
      const Vec b = gaussian_sample(rng, 4);
      const TriangleBoundCheck c = check_squared_triangle_bound(a, b);
      paper_viol += c.holds_paper ? 0 : 1;
      factor2_viol += c.holds_factor2 ? 0 : 1;
    }
    rows.push_back(ValidationRow{"info/paper_bound_violation_rate", 0,
                                 static_cast<double>(paper_viol) / n, true, true});
    rows.push_back(ValidationRow{"bound/factor2_violations", 0,
                                 static_cast<double>(factor2_viol), factor2_viol == 0, false});
  }

  if (!csv_path.empty()) {
    CsvWriter csv(csv_path, {"component", "probe", "value", "pass", "informational"});
    for (const auto& r : rows)
      csv.row({r.component, std::to_string(r.probe_index), CsvWriter::num(r.value),
               r.pass ? "1" : "0", r.informational ? "1" : "0"});
  }
  return rows;
}

void run_oracle_report(const RunConfig& cfg, const std::string& csv_path) {
  CsvWriter csv(csv_path, {"check", "value", "detail"});
  const Instance inst = build_instance(cfg);

  if (inst.op && inst.op->linear() && inst.data_prior->components() == 1 &&
      cfg.problem.sigma_y > 0.0) {
    const std::size_t d = inst.data_prior->dim();
    Mat prior_cov(d, d);
    for (std::size_t i = 0; i < d; ++i) prior_cov(i, i) = inst.data_prior->variances()[0];
    const GaussianDist post =
        gaussian_posterior(inst.data_prior->means()[0], prior_cov, operator_matrix(*inst.op),
                           cfg.problem.sigma_y, inst.observation);
    csv.row({"posterior_mean_norm", CsvWriter::num(norm(post.mean)), "conjugate oracle"});
    double tr = 0.0;
    for (std::size_t i = 0; i < d; ++i) tr += post.cov(i, i);
    csv.row({"posterior_cov_trace", CsvWriter::num(tr), "conjugate oracle"});
  }

  // chain-KL spot check on a 3-step synthetic chain with constant shifts
  {
    Rng rng(cfg.seed + 3);
    std::vector<ChainStep> steps;
    Vec shifts = {0.8, -0.5, 0.3};
    double analytic = 0.0;
    for (int i = 0; i < 3; ++i) {
      const double sigma = 0.5 + 0.25 * i;
      const double delta = shifts[static_cast<std::size_t>(i)];
      steps.push_back(ChainStep{
          [delta](const Vec& x) {
            Vec m(x.size());
            for (std::size_t j = 0; j < x.size(); ++j) m[j] = 0.9 * x[j] + delta;
            return m;
          },
          [](const Vec& x) {
            Vec m(x.size());
            for (std::size_t j = 0; j < x.size(); ++j) m[j] = 0.9 * x[j];
            return m;
          },
          sigma});
      analytic += 2.0 * delta * delta / (2.0 * sigma * sigma);  // dim 2
    }
    const KlEstimate est = mc_chain_kl(steps, 2, 2000, rng);
    csv.row({"chain_kl_estimate", CsvWriter::num(est.estimate),
             "analytic=" + CsvWriter::num(analytic) + " stderr=" + CsvWriter::num(est.stderr_)});
  }

  // bound fuzz rates
  {
    Rng rng(cfg.seed + 4);
    const int n = 100000;
    int paper = 0, factor2 = 0;
    for (int i = 0; i < n; ++i) {
      const TriangleBoundCheck c =
          check_squared_triangle_bound(gaussian_sample(rng, 3), gaussian_sample(rng, 3));
      paper += c.holds_paper ? 1 : 0;
      factor2 += c.holds_factor2 ? 1 : 0;
    }
    csv.row({"paper_bound_hold_rate", CsvWriter::num(static_cast<double>(paper) / n),
             "informational"});
    csv.row({"factor2_bound_hold_rate", CsvWriter::num(static_cast<double>(factor2) / n),
             "must be 1"});
  }
}

}  // namespace dtm
