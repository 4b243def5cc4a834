#include "dtm/runner.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <stdexcept>
#include <thread>

#include "dtm/baselines.hpp"
#include "dtm/io.hpp"
#include "dtm/mlp.hpp"

namespace dtm {

namespace {

void parallel_for(int n, int n_threads, const std::function<void(int)>& fn) {
  if (n_threads <= 0) n_threads = static_cast<int>(std::thread::hardware_concurrency());
  n_threads = std::max(1, std::min(n_threads, n));
  if (n_threads == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  std::exception_ptr error;
  std::mutex error_mu;
  for (int w = 0; w < n_threads; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const int i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mu);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

std::shared_ptr<const GmmPrior> build_gmm(const PriorSpec& p) {
  if (p.preset == "signal64") {
    std::vector<double> w;
    std::vector<Vec> m;
    std::vector<double> v;
    signal64_gmm_params(w, m, v);
    return std::make_shared<GmmPrior>(w, m, v);
  }
  if (p.kind == "gmm") return std::make_shared<GmmPrior>(p.weights, p.means, p.variances);
  return std::make_shared<GmmPrior>(GmmPrior::standard_normal(p.dim));
}

BlurKernel init_kernel(const ProblemConfig& p, std::size_t length) {
  BlurKernel k;
  if (p.kernel_init == "delta") {
    k.taps.assign(length, 0.0);
    k.taps[length / 2] = 1.0;
  } else {
    k.taps.assign(length, 1.0 / static_cast<double>(length));
  }
  return k;
}

/// DPS loop: unguided DDIM transition plus the zeta-scaled residual gradient.
Vec dps_sample(const ScoreModel& model, const NoiseSchedule& sched, const ProblemSpec& spec,
               const GuidanceConfig& cfg, double alpha_step, Rng& rng) {
  Vec x = gaussian_sample(rng, model.dim());
  const StepPlan plan = plan_steps(sched, cfg.n_steps, cfg.resolved_start(sched));
  for (std::size_t i = 0; i < plan.timesteps.size(); ++i) {
    const int t = plan.timesteps[i];
    const int t_prev = (i + 1 < plan.timesteps.size()) ? plan.timesteps[i + 1] : 0;
    const DpsStep step = dps_direction(model, sched, spec, x, t, alpha_step);
    x = ddim_step(model, sched, x, t, t_prev, cfg.eta, rng);
    for (std::size_t j = 0; j < x.size(); ++j) x[j] += step.direction[j];
  }
  return x;
}

/// Linear-control baseline: DDIM with the score shifted by the analytic
/// likelihood score scaled by rho = w_T (classifier guidance, Eq.-5 style).
/// Valid for the standard-normal prior with identity/mask observations.
Vec linear_cg_sample(const ScoreModel& model, const NoiseSchedule& sched, const Vec& y,
                     const Vec& mask, double sigma_y, const GuidanceConfig& cfg, bool nonlog,
                     Rng& rng) {
  Vec x = gaussian_sample(rng, model.dim());
  const StepPlan plan = plan_steps(sched, cfg.n_steps, cfg.resolved_start(sched));
  for (std::size_t i = 0; i < plan.timesteps.size(); ++i) {
    const int t = plan.timesteps[i];
    const int t_prev = (i + 1 < plan.timesteps.size()) ? plan.timesteps[i + 1] : 0;
    const double a = sched.at(t);
    Vec u = nonlog ? linear_optimal_control_gaussian_nonlog(sched, t, x, y, sigma_y, cfg.w_T, 1.0)
                   : linear_optimal_control_gaussian(sched, t, x, y, sigma_y, cfg.w_T, 1.0);
    for (std::size_t j = 0; j < u.size(); ++j) u[j] *= mask[j];

    // shift eps by the control: eps' = eps - sqrt(1-abar) * u
    const Vec e = model.eps(x, a);
    const double b = sched.at(t_prev);
    const double sigma = ddim_sigma(sched, t, t_prev, cfg.eta);
    const double rem = 1.0 - b - sigma * sigma;
    const double sa = std::sqrt(a), sn = std::sqrt(1.0 - a);
    const double cb = std::sqrt(b), ce = std::sqrt(rem);
    for (std::size_t j = 0; j < x.size(); ++j) {
      const double eg = e[j] - sn * u[j];
      const double x0hat = (x[j] - sn * eg) / sa;
      x[j] = cb * x0hat + ce * eg;
    }
    if (sigma > 0.0)
      for (auto& v : x) v += sigma * rng.normal();
  }
  return x;
}

bool is_perfect_square(std::size_t n, std::size_t& side) {
  side = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(n))));
  return side * side == n;
}

}  // namespace

Mat operator_matrix(const ForwardOperator& op) {
  Mat A(op.output_dim(), op.input_dim());
  Vec basis(op.input_dim(), 0.0);
  for (std::size_t j = 0; j < op.input_dim(); ++j) {
    basis[j] = 1.0;
    const Vec col = op.apply(basis);
    for (std::size_t i = 0; i < col.size(); ++i) A(i, j) = col[i];
    basis[j] = 0.0;
  }
  return A;
}

Instance build_instance(const RunConfig& cfg) {
  Instance inst;
  inst.sched = build_schedule(cfg.schedule.kind, cfg.schedule.T, cfg.schedule.beta_min,
                              cfg.schedule.beta_max);
  inst.data_prior = build_gmm(cfg.prior);
  const std::size_t dim = inst.data_prior->dim();

  if (cfg.prior.kind == "mlp") {
    if (cfg.prior.model_file.empty())
      throw ConfigError("prior.model_file", "required for the mlp prior");
    inst.model = std::make_shared<MlpDenoiser>(MlpDenoiser::load(cfg.prior.model_file));
    if (inst.model->dim() != dim) throw ConfigError("prior.model_file", "model dim mismatch");
  } else {
    inst.model = inst.data_prior;
  }

  Rng truth_rng(cfg.problem.truth_seed);
  inst.ground_truth = inst.data_prior->sample(truth_rng);

  const auto& o = cfg.problem.op;
  if (o.kind == "none") return inst;

  if (o.kind == "identity") {
    inst.op = std::make_shared<MaskOperator>(Vec(dim, 1.0));
  } else if (o.kind == "mask") {
    if (!o.mask.empty()) {
      if (o.mask.size() != dim) throw ConfigError("problem.operator.mask", "mask dim mismatch");
      inst.op = std::make_shared<MaskOperator>(o.mask);
    } else {
      Rng mask_rng(o.mask_seed);
      inst.op = std::make_shared<MaskOperator>(MaskOperator::random(dim, o.keep_prob, mask_rng));
    }
  } else if (o.kind == "downsample") {
    inst.op = std::make_shared<DownsampleOperator>(dim, o.factor);
  } else if (o.kind == "circular_conv" || o.kind == "nonlinear_blur") {
    inst.true_kernel = o.kernel_taps.empty() ? gaussian_blur_kernel(o.kernel_length, o.kernel_std)
                                             : BlurKernel{o.kernel_taps};
    if (o.kind == "circular_conv")
      inst.op = std::make_shared<CircularConvOperator>(dim, inst.true_kernel);
    else
      inst.op = std::make_shared<NonlinearBlurOperator>(dim, inst.true_kernel, o.saturation);
  }

  inst.observation = inst.op->observe(inst.ground_truth, cfg.problem.sigma_y, truth_rng);
  if (cfg.problem.blind) {
    inst.cost = std::make_shared<BlindDeconvCost>(inst.observation, cfg.problem.sigma_y,
                                                  init_kernel(cfg.problem, inst.true_kernel.taps.size()));
  } else {
    inst.cost = std::make_shared<ResidualCost>(
        ProblemSpec{inst.op, inst.observation, cfg.problem.sigma_y});
  }
  return inst;
}

SolveOutput run_solve(const RunConfig& cfg) {
  validate_config(cfg);
  const auto t0 = std::chrono::steady_clock::now();

  SolveOutput out;
  out.instance = build_instance(cfg);
  const Instance& inst = out.instance;
  const int n = cfg.n_trajectories;

  out.samples.assign(n, Vec{});
  std::vector<ControlTrace> traces(n);
  std::vector<BlurKernel> kernels(n);

  Rng master(cfg.seed);
  const GuidanceConfig gcfg =
      (cfg.method == "rb_mod") ? rb_modulation_config(cfg.guidance) : cfg.guidance;

  parallel_for(n, cfg.n_threads, [&](int i) {
    Rng rng = master.child(static_cast<std::uint64_t>(i));
    const bool want_trace = (i == 0);
    if (cfg.method == "unguided" || !inst.cost) {
      SampleResult r = ddim_sample(*inst.model, inst.sched, gcfg, rng);
      out.samples[i] = std::move(r.x0);
      if (want_trace) traces[i] = std::move(r.trace);
    } else if (cfg.method == "dps") {
      const ProblemSpec spec{inst.op, inst.observation, cfg.problem.sigma_y};
      out.samples[i] = dps_sample(*inst.model, inst.sched, spec, gcfg, cfg.dps_alpha, rng);
    } else if (cfg.method == "linear_cg") {
      const auto* mask_op = dynamic_cast<const MaskOperator*>(inst.op.get());
      const Vec mask = mask_op ? mask_op->mask() : Vec(inst.model->dim(), 1.0);
      out.samples[i] = linear_cg_sample(*inst.model, inst.sched, inst.observation, mask,
                                        cfg.problem.sigma_y, gcfg, cfg.linear_cg_nonlog, rng);
    } else if (cfg.problem.blind) {
      const auto* blind = dynamic_cast<const BlindDeconvCost*>(inst.cost.get());
      BlindSampleResult r =
          ndtm_sample_blind(*inst.model, inst.sched, inst.observation, cfg.problem.sigma_y,
                            blind->kernel(), gcfg, rng, cfg.trace_controls && want_trace);
      out.samples[i] = std::move(r.x0);
      kernels[i] = std::move(r.kernel);
      if (want_trace) traces[i] = std::move(r.trace);
    } else {
      SampleResult r = ndtm_sample(*inst.model, inst.sched, inst.cost.get(), gcfg, rng,
                                   cfg.trace_controls && want_trace);
      out.samples[i] = std::move(r.x0);
      if (want_trace) traces[i] = std::move(r.trace);
    }
  });

  out.trace0 = std::move(traces[0]);
  if (cfg.problem.blind) out.recovered_kernel = kernels[0];

  // metrics (sorted/deterministic reductions)
  MetricsRecord& m = out.metrics;
  double span = 0.0;
  {
    double lo = inst.ground_truth[0], hi = inst.ground_truth[0];
    for (double v : inst.ground_truth) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    span = (hi > lo) ? hi - lo : 1.0;
  }
  for (int i = 0; i < n; ++i) {
    m.per_trajectory_psnr.push_back(psnr(out.samples[i], inst.ground_truth, span));
    if (inst.op) {
      const Vec ax = inst.op->apply(out.samples[i]);
      double q = 0.0;
      for (std::size_t j = 0; j < ax.size(); ++j) {
        const double d = inst.observation[j] - ax[j];
        q += d * d;
      }
      m.per_trajectory_residual.push_back(std::sqrt(q));
    }
  }
  m.psnr_db = median(m.per_trajectory_psnr);
  m.residual = m.per_trajectory_residual.empty()
                   ? std::numeric_limits<double>::quiet_NaN()
                   : median(m.per_trajectory_residual);

  // conjugate-oracle comparisons for linear-Gaussian problems
  m.sample_mean_error = std::numeric_limits<double>::quiet_NaN();
  m.energy_distance = std::numeric_limits<double>::quiet_NaN();
  const bool gaussian_prior =
      cfg.prior.kind == "standard_normal" ||
      (cfg.prior.kind == "gmm" && inst.data_prior->components() == 1);
  if (inst.op && inst.op->linear() && gaussian_prior && cfg.problem.sigma_y > 0.0) {
    const std::size_t d = inst.model->dim();
    Mat prior_cov(d, d);
    Vec prior_mean = inst.data_prior->means()[0];
    for (std::size_t i = 0; i < d; ++i) prior_cov(i, i) = inst.data_prior->variances()[0];
    const GaussianDist post = gaussian_posterior(prior_mean, prior_cov, operator_matrix(*inst.op),
                                                 cfg.problem.sigma_y, inst.observation);
    Vec mean_x0(d, 0.0);
    for (const auto& x : out.samples)
      for (std::size_t j = 0; j < d; ++j) mean_x0[j] += x[j] / n;
    double err = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double dd = mean_x0[j] - post.mean[j];
      err += dd * dd;
    }
    m.sample_mean_error = std::sqrt(err);

    Rng post_rng = master.child(0x9e3779b9ull);
    std::vector<Vec> post_samples;
    post_samples.reserve(out.samples.size());
    for (std::size_t i = 0; i < out.samples.size(); ++i) post_samples.push_back(post.sample(post_rng));
    m.energy_distance = energy_distance(out.samples, post_samples);
  }

  m.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  if (cfg.write_outputs && !cfg.out_dir.empty()) {
    make_directories(cfg.out_dir);
    const std::string base = cfg.out_dir + "/";
    {
      CsvWriter csv(base + "metrics.csv",
                    {"row", "index", "psnr", "residual", "sample_mean_error", "energy_distance",
                     "wall_time_s"});
      for (int i = 0; i < n; ++i)
        csv.row({"trajectory", std::to_string(i), CsvWriter::num(m.per_trajectory_psnr[i]),
                 CsvWriter::num(inst.op ? m.per_trajectory_residual[i]
                                        : std::numeric_limits<double>::quiet_NaN()),
                 "", "", ""});
      csv.row({"aggregate", "", CsvWriter::num(m.psnr_db), CsvWriter::num(m.residual),
               CsvWriter::num(m.sample_mean_error), CsvWriter::num(m.energy_distance),
               CsvWriter::num(m.wall_time_s)});
    }
    write_trace_csv(base + "trace.csv", out.trace0);
    if (cfg.trace_controls) {
      Vec flat;
      std::uint64_t rows = 0;
      for (const auto& r : out.trace0)
        if (r.u) {
          flat.insert(flat.end(), r.u->begin(), r.u->end());
          ++rows;
        }
      if (rows > 0)
        write_tensor(base + "controls.bin", {rows, static_cast<std::uint64_t>(inst.model->dim())},
                     flat);
    }
    std::size_t side = 0;
    if (is_perfect_square(inst.ground_truth.size(), side)) {
      write_pgm(base + "ground_truth.pgm", inst.ground_truth, side, side);
      write_pgm(base + "recon0.pgm", out.samples[0], side, side);
      std::size_t oside = 0;
      if (inst.op && is_perfect_square(inst.observation.size(), oside))
        write_pgm(base + "observation.pgm", inst.observation, oside, oside);
    }
  }
  return out;
}

void run_sweep(const RunConfig& base, const std::string& param, const std::vector<double>& values,
               int n_seeds, const std::string& csv_path) {
  if (values.empty()) throw std::invalid_argument("run_sweep: empty value grid");
  if (n_seeds < 1) throw std::invalid_argument("run_sweep: need at least one seed");
  if (param != "w_T" && param != "gamma" && param != "N" && param != "steps")
    throw std::invalid_argument("run_sweep: param must be one of w_T, gamma, N, steps");

  CsvWriter csv(csv_path, {"param", "value", "seed", "status", "psnr", "residual",
                           "sample_mean_error", "energy_distance", "wall_time_s"});
  for (double v : values) {
    for (int s = 0; s < n_seeds; ++s) {
      RunConfig cfg = base;
      cfg.write_outputs = false;
      cfg.seed = base.seed + static_cast<std::uint64_t>(s);
      if (param == "w_T")
        cfg.guidance.w_T = v;
      else if (param == "gamma")
        cfg.guidance.gamma = v;
      else if (param == "N")
        cfg.guidance.n_inner = static_cast<int>(v);
      else
        cfg.guidance.n_steps = static_cast<int>(v);
      std::string status = "ok";
      MetricsRecord m;
      try {
        m = run_solve(cfg).metrics;
      } catch (const std::exception& e) {
        std::string msg = e.what();
        for (auto& c : msg)
          if (c == ',' || c == '\n') c = ';';
        status = "failed:" + msg;
      }
      csv.row({param, CsvWriter::num(v), std::to_string(s), status,
               status == "ok" ? CsvWriter::num(m.psnr_db) : "",
               status == "ok" ? CsvWriter::num(m.residual) : "",
               status == "ok" ? CsvWriter::num(m.sample_mean_error) : "",
               status == "ok" ? CsvWriter::num(m.energy_distance) : "",
               status == "ok" ? CsvWriter::num(m.wall_time_s) : ""});
    }
  }
}

}  // namespace dtm
