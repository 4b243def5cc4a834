#include "dtm/samplers.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace dtm {

namespace {

std::vector<std::pair<int, int>> transitions(const NoiseSchedule& sched,
                                             const GuidanceConfig& cfg) {
  const StepPlan plan = plan_steps(sched, cfg.n_steps, cfg.resolved_start(sched));
  std::vector<std::pair<int, int>> out;
  out.reserve(plan.timesteps.size());
  for (std::size_t i = 0; i < plan.timesteps.size(); ++i) {
    const int t = plan.timesteps[i];
    const int t_prev = (i + 1 < plan.timesteps.size()) ? plan.timesteps[i + 1] : 0;
    out.emplace_back(t, t_prev);
  }
  return out;
}

double residual_at(const ScoreModel& model, const NoiseSchedule& sched, const TerminalCost* phi,
                   const Vec& xb, int t) {
  if (!phi) return std::numeric_limits<double>::quiet_NaN();
  const auto r = phi->residual_norm(tweedie(model, sched, xb, t));
  return r ? *r : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace

Vec ddim_step(const ScoreModel& model, const NoiseSchedule& sched, const Vec& x, int t, int t_prev,
              double eta, Rng& rng) {
  const double a = sched.at(t);
  const double b = sched.at(t_prev);
  const double sigma = ddim_sigma(sched, t, t_prev, eta);
  const double rem = 1.0 - b - sigma * sigma;
  if (rem < 0.0)
    throw std::domain_error("ddim_step: 1 - alpha_bar[t_prev] - sigma^2 negative at t=" +
                            std::to_string(t));
  const Vec e = model.eps(x, a);
  const double sa = std::sqrt(a);
  const double sn = std::sqrt(1.0 - a);
  const double cb = std::sqrt(b);
  const double ce = std::sqrt(rem);

  Vec out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double x0hat = (x[i] - sn * e[i]) / sa;
    out[i] = cb * x0hat + ce * e[i];
  }
  if (sigma > 0.0) {
    for (auto& v : out) v += sigma * rng.normal();
  }
  return out;
}

SampleResult ddim_sample(const ScoreModel& model, const NoiseSchedule& sched,
                         const GuidanceConfig& cfg, Rng& rng, bool trace_controls) {
  return ndtm_sample(model, sched, nullptr, cfg, rng, trace_controls);
}

SampleResult ndtm_sample(const ScoreModel& model, const NoiseSchedule& sched,
                         const TerminalCost* phi, const GuidanceConfig& cfg, Rng& rng,
                         bool trace_controls) {
  SampleResult res;
  Vec x = gaussian_sample(rng, model.dim());
  for (const auto& [t, t_prev] : transitions(sched, cfg)) {
    TraceRow row;
    row.t = t;
    Vec xb = x;
    if (phi != nullptr) {
      ControlOptResult opt = optimize_control(model, sched, phi, x, t, t_prev, cfg, rng);
      row.u_norm = norm(opt.u);
      if (!opt.history.empty())
        row.parts = opt.history.back();
      else
        row.parts = control_cost(model, sched, phi, x, opt.u, t, t_prev, cfg);
      for (std::size_t i = 0; i < x.size(); ++i) xb[i] = x[i] + cfg.gamma * opt.u[i];
      row.residual = residual_at(model, sched, phi, xb, t);
      if (trace_controls) row.u = std::move(opt.u);
    }
    x = ddim_step(model, sched, xb, t, t_prev, cfg.eta, rng);
    res.trace.push_back(std::move(row));
  }
  res.x0 = std::move(x);
  return res;
}

BlindSampleResult ndtm_sample_blind(const ScoreModel& model, const NoiseSchedule& sched,
                                    const Vec& y, double sigma_y, BlurKernel kernel_init,
                                    const GuidanceConfig& cfg, Rng& rng, bool trace_controls) {
  BlindSampleResult res;
  res.kernel = std::move(kernel_init);
  Vec x = gaussian_sample(rng, model.dim());
  for (const auto& [t, t_prev] : transitions(sched, cfg)) {
    BlindControlOptResult opt =
        optimize_control_blind(model, sched, y, sigma_y, res.kernel, x, t, t_prev, cfg, rng);
    res.kernel = std::move(opt.kernel);

    TraceRow row;
    row.t = t;
    row.u_norm = norm(opt.u);
    if (!opt.history.empty()) row.parts = opt.history.back();
    Vec xb(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) xb[i] = x[i] + cfg.gamma * opt.u[i];
    const BlindDeconvCost cost(y, sigma_y, res.kernel);
    row.residual = residual_at(model, sched, &cost, xb, t);
    if (trace_controls) row.u = std::move(opt.u);

    x = ddim_step(model, sched, xb, t, t_prev, cfg.eta, rng);
    res.trace.push_back(std::move(row));
  }
  res.x0 = std::move(x);
  return res;
}

Vec sde_step_ctdtm(const ScoreModel& model, const NoiseSchedule& sched, const Vec& x, const Vec& u,
                   double s, double ds, double gamma, Rng& rng) {
  if (!(ds > 0.0)) throw std::invalid_argument("sde_step_ctdtm: ds must be positive");
  require_same_dim(x, u, "sde_step_ctdtm");
  const double beta = sched.beta_cont(s);
  const double abar = sched.alpha_bar_cont(s);
  Vec xb(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) xb[i] = x[i] + gamma * u[i];
  const Vec sc = score(model, xb, abar);
  const double g = std::sqrt(beta);
  Vec out(x.size());
  // x' = x - [f x - g^2 score] ds + g sqrt(ds) z, with f(s) = -beta/2
  for (std::size_t i = 0; i < x.size(); ++i)
    out[i] = x[i] + ds * beta * (0.5 * x[i] + sc[i]);
  const double noise = g * std::sqrt(ds);
  for (auto& v : out) v += noise * rng.normal();
  return out;
}

double sde_transient_cost(const ScoreModel& model, const NoiseSchedule& sched, const Vec& x,
                          const Vec& u, double s, double ds, double gamma) {
  const double beta = sched.beta_cont(s);
  const double abar = sched.alpha_bar_cont(s);
  Vec xb(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) xb[i] = x[i] + gamma * u[i];
  const Vec s0 = score(model, x, abar);
  const Vec s1 = score(model, xb, abar);
  double q = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = s1[i] - s0[i];
    q += d * d;
  }
  return 0.5 * beta * q * ds;
}

SampleResult sde_sample(const ScoreModel& model, const NoiseSchedule& sched,
                        const TerminalCost* phi, const GuidanceConfig& cfg, Rng& rng,
                        bool trace_controls) {
  const int n = cfg.n_steps;
  if (n < 1) throw std::invalid_argument("sde_sample: n_steps must be >= 1");
  const double s_start = static_cast<double>(cfg.resolved_start(sched)) / sched.T;
  const double ds = s_start / n;

  SampleResult res;
  Vec x = gaussian_sample(rng, model.dim());
  for (int i = 0; i < n; ++i) {
    const double s = s_start - i * ds;
    const double abar = sched.alpha_bar_cont(s);
    const double beta = sched.beta_cont(s);
    const double ws = 0.5 * beta * ds;  // transient weight from the Girsanov cost

    Vec u(x.size(), 0.0);
    TraceRow row;
    row.t = i;
    if (phi != nullptr && cfg.n_inner > 0) {
      const Vec eps_uncond = model.eps(x, abar);
      const double inv_sn = 1.0 / std::sqrt(1.0 - abar);
      AdamState opt;
      for (int it = 0; it < cfg.n_inner; ++it) {
        Vec xb(x.size());
        for (std::size_t j = 0; j < x.size(); ++j) xb[j] = x[j] + cfg.gamma * u[j];
        const Vec e = model.eps(xb, abar);
        Vec dscore(x.size());
        for (std::size_t j = 0; j < x.size(); ++j)
          dscore[j] = -(e[j] - eps_uncond[j]) * inv_sn;
        row.parts.c_score = ws * squared_norm(dscore);
        row.parts.c_control = 0.0;

        Vec grad(x.size(), 0.0);
        if (cfg.w_T != 0.0) {
          const double sa = std::sqrt(abar), sn = std::sqrt(1.0 - abar);
          Vec x0hat(x.size());
          for (std::size_t j = 0; j < x.size(); ++j) x0hat[j] = (xb[j] - sn * e[j]) / sa;
          row.parts.c_terminal = cfg.w_T * phi->value(x0hat);
          const Vec pg = phi->grad(x0hat);
          const Vec jpg = model.eps_vjp(xb, abar, pg);
          for (std::size_t j = 0; j < x.size(); ++j)
            grad[j] += cfg.w_T * cfg.gamma * (pg[j] - sn * jpg[j]) / sa;
        } else {
          row.parts.c_terminal = 0.0;
        }
        // transient gradient: 2 ws gamma J_score^T dscore, J_score = -J_eps / sqrt(1-abar)
        Vec jds = model.eps_vjp(xb, abar, dscore);
        for (std::size_t j = 0; j < x.size(); ++j)
          grad[j] += -2.0 * ws * cfg.gamma * inv_sn * jds[j];
        row.parts.total = row.parts.c_score + row.parts.c_control + row.parts.c_terminal;
        if (!std::isfinite(row.parts.total))
          throw std::runtime_error("sde_sample: objective diverged at step " + std::to_string(i));
        const double lr = cfg.lr_linear_decay
                              ? cfg.lr * (1.0 - static_cast<double>(it) / cfg.n_inner)
                              : cfg.lr;
        adam_step(u, grad, opt, lr);
      }
      row.u_norm = norm(u);
      Vec xb(x.size());
      for (std::size_t j = 0; j < x.size(); ++j) xb[j] = x[j] + cfg.gamma * u[j];
      if (const auto r = phi->residual_norm(tweedie_estimate(model, xb, abar)); r)
        row.residual = *r;
      if (trace_controls) row.u = u;
    }
    x = sde_step_ctdtm(model, sched, x, u, s, ds, cfg.gamma, rng);
    res.trace.push_back(std::move(row));
  }
  res.x0 = std::move(x);
  return res;
}

Vec OtGaussianFlow::velocity(const Vec& x, double t) const {
  const double k = (2.0 * t - 1.0) / ((1.0 - t) * (1.0 - t) + t * t);
  Vec v(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) v[i] = k * x[i];
  return v;
}

Vec OtGaussianFlow::velocity_vjp(const Vec& x, double t, const Vec& cot) const {
  (void)x;
  const double k = (2.0 * t - 1.0) / ((1.0 - t) * (1.0 - t) + t * t);
  Vec v(cot.size());
  for (std::size_t i = 0; i < cot.size(); ++i) v[i] = k * cot[i];
  return v;
}

SampleResult ftm_sample(const FlowModel& flow, const TerminalCost* phi, const GuidanceConfig& cfg,
                        Rng& rng, bool trace_controls) {
  const int n = cfg.n_steps;
  if (n < 1) throw std::invalid_argument("ftm_sample: n_steps must be >= 1");
  const double dt = 1.0 / n;

  SampleResult res;
  Vec x = gaussian_sample(rng, flow.dim());
  for (int i = 0; i < n; ++i) {
    const double t = i * dt;
    Vec u(x.size(), 0.0);
    TraceRow row;
    row.t = i;
    if (phi != nullptr && cfg.n_inner > 0) {
      const Vec v_uncond = flow.velocity(x, t);
      AdamState opt;
      for (int it = 0; it < cfg.n_inner; ++it) {
        Vec xb(x.size());
        for (std::size_t j = 0; j < x.size(); ++j) xb[j] = x[j] + cfg.gamma * u[j];
        const Vec v = flow.velocity(xb, t);
        Vec dv(x.size());
        for (std::size_t j = 0; j < x.size(); ++j) dv[j] = v[j] - v_uncond[j];
        row.parts.c_score = dt * squared_norm(dv);
        row.parts.c_control = 0.0;

        Vec grad(x.size(), 0.0);
        if (cfg.w_T != 0.0) {
          Vec x1hat(x.size());  // one-step extrapolation to t = 1 along the guided velocity
          for (std::size_t j = 0; j < x.size(); ++j) x1hat[j] = x[j] + (1.0 - t) * v[j];
          row.parts.c_terminal = cfg.w_T * phi->value(x1hat);
          const Vec pg = phi->grad(x1hat);
          // d x1hat / du = gamma (1-t) J_v
          const Vec jpg = flow.velocity_vjp(xb, t, pg);
          for (std::size_t j = 0; j < x.size(); ++j)
            grad[j] += cfg.w_T * cfg.gamma * (1.0 - t) * jpg[j];
        } else {
          row.parts.c_terminal = 0.0;
        }
        const Vec jdv = flow.velocity_vjp(xb, t, dv);
        for (std::size_t j = 0; j < x.size(); ++j) grad[j] += 2.0 * dt * cfg.gamma * jdv[j];
        row.parts.total = row.parts.c_score + row.parts.c_control + row.parts.c_terminal;
        if (!std::isfinite(row.parts.total))
          throw std::runtime_error("ftm_sample: objective diverged at step " + std::to_string(i));
        const double lr = cfg.lr_linear_decay
                              ? cfg.lr * (1.0 - static_cast<double>(it) / cfg.n_inner)
                              : cfg.lr;
        adam_step(u, grad, opt, lr);
      }
      row.u_norm = norm(u);
      if (trace_controls) row.u = u;
      Vec xb(x.size());
      for (std::size_t j = 0; j < x.size(); ++j) xb[j] = x[j] + cfg.gamma * u[j];
      const Vec v = flow.velocity(xb, t);
      if (phi) {
        Vec x1hat(x.size());
        for (std::size_t j = 0; j < x.size(); ++j) x1hat[j] = x[j] + (1.0 - t) * v[j];
        if (const auto r = phi->residual_norm(x1hat); r) row.residual = *r;
      }
    }
    // Euler update with the (possibly shifted) velocity
    Vec xb(x.size());
    for (std::size_t j = 0; j < x.size(); ++j) xb[j] = x[j] + cfg.gamma * u[j];
    const Vec v = flow.velocity(xb, t);
    for (std::size_t j = 0; j < x.size(); ++j) x[j] = x[j] + dt * v[j];
    res.trace.push_back(std::move(row));
  }
  res.x0 = std::move(x);
  return res;
}

}  // namespace dtm
