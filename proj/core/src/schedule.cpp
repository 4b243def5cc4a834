#include "dtm/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dtm {

ScheduleKind schedule_kind_from_string(const std::string& s) {
  if (s == "linear-beta") return ScheduleKind::LinearBeta;
  if (s == "cosine") return ScheduleKind::Cosine;
  throw std::invalid_argument("unknown schedule kind: " + s);
}

std::string to_string(ScheduleKind k) {
  return k == ScheduleKind::LinearBeta ? "linear-beta" : "cosine";
}

double NoiseSchedule::at(int t) const {
  if (t < 0 || t > T) throw std::invalid_argument("NoiseSchedule::at: t out of range");
  return alpha_bar[static_cast<std::size_t>(t)];
}

double NoiseSchedule::log_alpha_bar_cont(double s) const {
  s = std::clamp(s, 0.0, 1.0);
  const double ts = s * T;
  const int lo = std::clamp(static_cast<int>(std::floor(ts)), 0, T - 1);
  const double frac = ts - lo;
  const double llo = std::log(alpha_bar[lo]);
  const double lhi = std::log(alpha_bar[lo + 1]);
  return llo + frac * (lhi - llo);
}

double NoiseSchedule::alpha_bar_cont(double s) const { return std::exp(log_alpha_bar_cont(s)); }

double NoiseSchedule::beta_cont(double s) const {
  s = std::clamp(s, 0.0, 1.0);
  const int t = std::clamp(static_cast<int>(std::ceil(s * T)), 1, T);
  return T * (std::log(alpha_bar[t - 1]) - std::log(alpha_bar[t]));
}

namespace {

void validate(const NoiseSchedule& s) {
  if (!(s.alpha_bar[0] > 0.999 && s.alpha_bar[0] <= 1.0))
    throw std::invalid_argument("build_schedule: alpha_bar[0] must lie in (0.999, 1]");
  for (int t = 0; t <= s.T; ++t) {
    const double a = s.alpha_bar[t];
    if (!(a > 0.0 && a <= 1.0) || !std::isfinite(a))
      throw std::invalid_argument("build_schedule: alpha_bar out of (0, 1] at t=" + std::to_string(t));
    if (t > 0 && !(a < s.alpha_bar[t - 1]))
      throw std::invalid_argument("build_schedule: alpha_bar not strictly decreasing at t=" +
                                  std::to_string(t));
  }
  if (!(s.alpha_bar[s.T] < 0.01))
    throw std::invalid_argument("build_schedule: alpha_bar[T] must be below 0.01 (schedule too short)");
}

}  // namespace

NoiseSchedule build_schedule(ScheduleKind kind, int T, double beta_min, double beta_max) {
  if (T < 2) throw std::invalid_argument("build_schedule: T must be >= 2");
  if (!(beta_min > 0.0 && beta_min < beta_max && beta_max < 1.0))
    throw std::invalid_argument("build_schedule: need 0 < beta_min < beta_max < 1");

  std::vector<double> beta(static_cast<std::size_t>(T));
  if (kind == ScheduleKind::LinearBeta) {
    for (int t = 0; t < T; ++t)
      beta[t] = beta_min + (beta_max - beta_min) * static_cast<double>(t) / (T - 1);
  } else {
    // Nichol-Dhariwal cosine profile; beta_min / beta_max act as clip bounds.
    const double s = 0.008;
    auto f = [&](double t) {
      const double c = std::cos((t / T + s) / (1.0 + s) * 1.5707963267948966);
      return c * c;
    };
    for (int t = 1; t <= T; ++t) {
      const double b = 1.0 - f(static_cast<double>(t)) / f(static_cast<double>(t - 1));
      beta[t - 1] = std::clamp(b, beta_min, beta_max);
    }
  }

  NoiseSchedule sched;
  sched.kind = kind;
  sched.T = T;
  sched.beta_min = beta_min;
  sched.beta_max = beta_max;
  sched.alpha_bar.resize(static_cast<std::size_t>(T) + 1);
  sched.alpha_bar[0] = 1.0 - beta[0];
  for (int t = 1; t <= T; ++t) sched.alpha_bar[t] = sched.alpha_bar[t - 1] * (1.0 - beta[t - 1]);
  validate(sched);
  return sched;
}

double ddim_sigma(const NoiseSchedule& sched, int t, int t_prev, double eta) {
  if (!(t > t_prev && t_prev >= 0)) throw std::invalid_argument("ddim_sigma: need t > t_prev >= 0");
  if (!(eta >= 0.0 && eta <= 1.0)) throw std::invalid_argument("ddim_sigma: eta must be in [0, 1]");
  const double a = sched.at(t);
  const double b = sched.at(t_prev);
  if (a >= b)
    throw std::invalid_argument("ddim_sigma: schedule order violated (alpha_bar[t] >= alpha_bar[t_prev]) at t=" +
                                std::to_string(t));
  // eta = 1 equals the ancestral posterior standard deviation.
  return eta * std::sqrt((1.0 - b) * (1.0 - a / b) / (1.0 - a));
}

NdtmCoeffs ndtm_coefficients(const NoiseSchedule& sched, int t, int t_prev, double eta,
                             double gamma) {
  if (!(gamma >= 0.0)) throw std::invalid_argument("ndtm_coefficients: gamma must be >= 0");
  const double sigma = ddim_sigma(sched, t, t_prev, eta);
  const double a = sched.at(t);
  const double b = sched.at(t_prev);
  const double rem = 1.0 - b - sigma * sigma;
  if (rem < 0.0)
    throw std::domain_error("ndtm_coefficients: 1 - alpha_bar[t_prev] - sigma^2 negative at t=" +
                            std::to_string(t));
  NdtmCoeffs c;
  c.kappa = gamma * (std::sqrt(b) / std::sqrt(a));  // exactly linear in gamma
  c.tau = std::sqrt(rem) - std::sqrt(b * (1.0 - a)) / std::sqrt(a);
  return c;
}

StepPlan plan_steps(const NoiseSchedule& sched, int n_steps, int start) {
  if (!(n_steps >= 1 && n_steps <= start && start <= sched.T))
    throw std::invalid_argument("plan_steps: need 1 <= n_steps <= start <= T");
  StepPlan plan;
  plan.start = start;
  plan.timesteps.resize(static_cast<std::size_t>(n_steps));
  for (int k = n_steps; k >= 1; --k) {
    const int t = static_cast<int>(std::lround(static_cast<double>(start) * k / n_steps));
    plan.timesteps[static_cast<std::size_t>(n_steps - k)] = std::max(1, t);
  }
  return plan;
}

}  // namespace dtm
