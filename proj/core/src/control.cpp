#include "dtm/control.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace dtm {

namespace {

struct StepWeights {
  double w_s, w_c, abar;
};

StepWeights resolve_weights(const NoiseSchedule& sched, int t, int t_prev,
                            const GuidanceConfig& cfg) {
  const NdtmCoeffs c = ndtm_coefficients(sched, t, t_prev, cfg.eta, cfg.gamma);
  StepWeights w;
  w.w_s = cfg.w_s.resolve(c.tau * c.tau);
  w.w_c = cfg.w_c.resolve(c.kappa * c.kappa);
  w.abar = sched.at(t);
  return w;
}

Vec shifted(const Vec& x, double gamma, const Vec& u) {
  Vec xb(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) xb[i] = x[i] + gamma * u[i];
  return xb;
}

// Shared evaluation: objective parts and, when grad != nullptr, the exact
// gradient with respect to u. eps_uncond is eps(x_t) precomputed by the
// caller. kphi, when given, adds the blind-kernel gradient of the terminal
// term into *kgrad.
ControlCostParts eval_cost(const ScoreModel& model, const TerminalCost* phi, const Vec& x_t,
                           const Vec& u, const Vec& eps_uncond, double gamma, double w_T,
                           const StepWeights& w, Vec* grad, const BlindDeconvCost* kphi,
                           Vec* kgrad) {
  const Vec xb = shifted(x_t, gamma, u);
  const Vec eps_ctrl = model.eps(xb, w.abar);

  ControlCostParts parts;
  Vec delta(eps_ctrl.size());
  for (std::size_t i = 0; i < delta.size(); ++i) delta[i] = eps_ctrl[i] - eps_uncond[i];
  parts.c_score = w.w_s * squared_norm(delta);
  parts.c_control = w.w_c * squared_norm(u);

  Vec x0hat;
  Vec phi_grad;
  if (w_T != 0.0 && phi != nullptr) {
    const double sq = std::sqrt(1.0 - w.abar);
    const double sa = std::sqrt(w.abar);
    x0hat.resize(xb.size());
    for (std::size_t i = 0; i < xb.size(); ++i) x0hat[i] = (xb[i] - sq * eps_ctrl[i]) / sa;
    parts.c_terminal = w_T * phi->value(x0hat);
    if (grad) phi_grad = phi->grad(x0hat);
    if (kgrad && kphi) {
      *kgrad = kphi->kernel_grad(x0hat);
      for (auto& g : *kgrad) g *= w_T;
    }
  } else if (kgrad) {
    kgrad->assign(kphi ? kphi->kernel().taps.size() : 0, 0.0);
  }
  parts.total = parts.c_score + parts.c_control + parts.c_terminal;

  if (grad) {
    // 2 w_c u + 2 w_s gamma J^T delta + w_T gamma (d x0hat / d xb)^T dPhi
    Vec g(u.size(), 0.0);
    if (parts.c_score != 0.0 || w.w_s != 0.0) {
      const Vec jv = model.eps_vjp(xb, w.abar, delta);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += 2.0 * w.w_s * gamma * jv[i];
    }
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += 2.0 * w.w_c * u[i];
    if (!phi_grad.empty()) {
      const Vec jphi = model.eps_vjp(xb, w.abar, phi_grad);
      const double sq = std::sqrt(1.0 - w.abar);
      const double sa = std::sqrt(w.abar);
      for (std::size_t i = 0; i < g.size(); ++i)
        g[i] += w_T * gamma * ((phi_grad[i] - sq * jphi[i]) / sa);
    }
    *grad = std::move(g);
  }
  return parts;
}

double decayed_lr(const GuidanceConfig& cfg, int i) {
  if (!cfg.lr_linear_decay) return cfg.lr;
  return cfg.lr * (1.0 - static_cast<double>(i) / cfg.n_inner);
}

}  // namespace

ControlCostParts control_cost(const ScoreModel& model, const NoiseSchedule& sched,
                              const TerminalCost* phi, const Vec& x_t, const Vec& u, int t,
                              int t_prev, const GuidanceConfig& cfg) {
  require_same_dim(x_t, u, "control_cost");
  const StepWeights w = resolve_weights(sched, t, t_prev, cfg);
  const Vec eps_uncond = model.eps(x_t, w.abar);
  return eval_cost(model, phi, x_t, u, eps_uncond, cfg.gamma, cfg.w_T, w, nullptr, nullptr,
                   nullptr);
}

Vec control_grad(const ScoreModel& model, const NoiseSchedule& sched, const TerminalCost* phi,
                 const Vec& x_t, const Vec& u, int t, int t_prev, const GuidanceConfig& cfg) {
  require_same_dim(x_t, u, "control_grad");
  const StepWeights w = resolve_weights(sched, t, t_prev, cfg);
  const Vec eps_uncond = model.eps(x_t, w.abar);
  Vec grad;
  eval_cost(model, phi, x_t, u, eps_uncond, cfg.gamma, cfg.w_T, w, &grad, nullptr, nullptr);
  return grad;
}

ControlOptResult optimize_control(const ScoreModel& model, const NoiseSchedule& sched,
                                  const TerminalCost* phi, const Vec& x_t, int t, int t_prev,
                                  const GuidanceConfig& cfg, Rng&) {
  if (cfg.n_inner < 0) throw std::invalid_argument("optimize_control: N must be >= 0");
  const StepWeights w = resolve_weights(sched, t, t_prev, cfg);
  const Vec eps_uncond = model.eps(x_t, w.abar);

  ControlOptResult res;
  res.u.assign(x_t.size(), 0.0);
  AdamState opt;
  for (int i = 0; i < cfg.n_inner; ++i) {
    Vec grad;
    const ControlCostParts parts =
        eval_cost(model, phi, x_t, res.u, eps_uncond, cfg.gamma, cfg.w_T, w, &grad, nullptr,
                  nullptr);
    if (!std::isfinite(parts.total))
      throw std::runtime_error("optimize_control: objective diverged (non-finite) at inner step " +
                               std::to_string(i) + ", t=" + std::to_string(t));
    res.history.push_back(parts);
    adam_step(res.u, grad, opt, decayed_lr(cfg, i));
  }
  return res;
}

// The trainable kernel lives under a softmax (taps nonnegative, sum one);
// this removes the sign and scale ambiguity of joint deconvolution. The raw
// kernel-space gradient from BlindDeconvCost is chained through the softmax
// Jacobian before the Adam update on the logits.
BlindControlOptResult optimize_control_blind(const ScoreModel& model, const NoiseSchedule& sched,
                                             const Vec& y, double sigma_y,
                                             const BlurKernel& kernel, const Vec& x_t, int t,
                                             int t_prev, const GuidanceConfig& cfg, Rng&) {
  if (cfg.n_inner < 0) throw std::invalid_argument("optimize_control_blind: N must be >= 0");
  const StepWeights w = resolve_weights(sched, t, t_prev, cfg);
  const Vec eps_uncond = model.eps(x_t, w.abar);

  BlindControlOptResult res;
  res.u.assign(x_t.size(), 0.0);
  res.kernel = kernel;
  BlindDeconvCost cost(y, sigma_y, res.kernel);

  const std::size_t klen = kernel.taps.size();
  Vec theta(klen);
  for (std::size_t i = 0; i < klen; ++i) theta[i] = std::log(std::max(kernel.taps[i], 1e-12));
  auto softmax = [&](const Vec& th) {
    Vec k(th.size());
    double mx = th[0];
    for (double v : th) mx = std::max(mx, v);
    double z = 0.0;
    for (std::size_t i = 0; i < th.size(); ++i) {
      k[i] = std::exp(th[i] - mx);
      z += k[i];
    }
    for (auto& v : k) v /= z;
    return k;
  };

  AdamState u_opt;
  AdamState k_opt;
  for (int i = 0; i < cfg.n_inner; ++i) {
    res.kernel.taps = softmax(theta);
    cost.set_kernel(res.kernel);
    Vec grad, kgrad;
    const ControlCostParts parts =
        eval_cost(model, &cost, x_t, res.u, eps_uncond, cfg.gamma, cfg.w_T, w, &grad, &cost,
                  &kgrad);
    if (!std::isfinite(parts.total))
      throw std::runtime_error("optimize_control_blind: objective diverged at inner step " +
                               std::to_string(i) + ", t=" + std::to_string(t));
    res.history.push_back(parts);
    adam_step(res.u, grad, u_opt, decayed_lr(cfg, i));
    if (!kgrad.empty()) {
      // d/d theta = J_softmax^T dk = k .* (dk - <k, dk>)
      const double kdot = dot(res.kernel.taps, kgrad);
      Vec tgrad(klen);
      for (std::size_t j = 0; j < klen; ++j)
        tgrad[j] = res.kernel.taps[j] * (kgrad[j] - kdot);
      const double klr = cfg.lr_linear_decay
                             ? cfg.kernel_lr * (1.0 - static_cast<double>(i) / cfg.n_inner)
                             : cfg.kernel_lr;
      adam_step(theta, tgrad, k_opt, klr);
    }
  }
  if (cfg.n_inner > 0) res.kernel.taps = softmax(theta);
  return res;
}

}  // namespace dtm
