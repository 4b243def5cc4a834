#include "dtm/baselines.hpp"

#include <cmath>

namespace dtm {

Vec classifier_guidance_score(const ScoreModel& model, const NoiseSchedule& sched, const Vec& x,
                              int t, const Vec& likelihood_score, double rho) {
  require_same_dim(x, likelihood_score, "classifier_guidance_score");
  Vec s = score(model, x, sched.at(t));
  for (std::size_t i = 0; i < s.size(); ++i) s[i] += rho * likelihood_score[i];
  return s;
}

DpsStep dps_direction(const ScoreModel& model, const NoiseSchedule& sched, const ProblemSpec& spec,
                      const Vec& x_t, int t, double alpha_step) {
  DpsStep out;
  const Vec x0hat = tweedie(model, sched, x_t, t);
  const double r2 = residual_cost(spec, x0hat);
  if (r2 == 0.0) {
    out.direction.assign(x_t.size(), 0.0);
    return out;
  }
  out.zeta = alpha_step / r2;
  const Vec phi_grad = residual_cost_grad(spec, x0hat);
  const Vec g = tweedie_vjp(model, x_t, sched.at(t), phi_grad);
  out.direction.resize(x_t.size());
  for (std::size_t i = 0; i < g.size(); ++i) out.direction[i] = -out.zeta * g[i];
  return out;
}

GuidanceConfig rb_modulation_config(GuidanceConfig base) {
  base.w_s = Weight::fixed(0.0);
  base.w_c = Weight::fixed(0.0);
  base.gamma = 1.0;
  return base;
}

Vec linear_optimal_control_gaussian(const NoiseSchedule& sched, int t, const Vec& x_t, const Vec& y,
                                    double sigma_y, double w_T, double g) {
  require_same_dim(x_t, y, "linear_optimal_control_gaussian");
  const double a = sched.at(t);
  const double sa = std::sqrt(a);
  const double denom = 1.0 - a + sigma_y * sigma_y;
  Vec u(x_t.size());
  for (std::size_t i = 0; i < u.size(); ++i) u[i] = g * w_T * sa * (y[i] - sa * x_t[i]) / denom;
  return u;
}

Vec linear_optimal_control_gaussian_nonlog(const NoiseSchedule& sched, int t, const Vec& x_t,
                                           const Vec& y, double sigma_y, double w_T, double g) {
  // grad p(y|x_t) = p(y|x_t) * grad log p(y|x_t) under the same marginal.
  const double a = sched.at(t);
  const double sa = std::sqrt(a);
  const double var = 1.0 - a + sigma_y * sigma_y;
  double q = 0.0;
  for (std::size_t i = 0; i < x_t.size(); ++i) {
    const double d = y[i] - sa * x_t[i];
    q += d * d;
  }
  const double dens = std::exp(-0.5 * q / var) /
                      std::pow(6.283185307179586 * var, 0.5 * static_cast<double>(x_t.size()));
  Vec u = linear_optimal_control_gaussian(sched, t, x_t, y, sigma_y, w_T, g);
  for (auto& v : u) v *= dens;
  return u;
}

}  // namespace dtm
