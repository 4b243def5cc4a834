#ifndef DTM_SCHEDULE_HPP
#define DTM_SCHEDULE_HPP

#include <string>
#include <vector>

namespace dtm {

enum class ScheduleKind { LinearBeta, Cosine };

ScheduleKind schedule_kind_from_string(const std::string& s);
std::string to_string(ScheduleKind k);

/// Variance-preserving noise schedule over discrete steps 1..T.
///
/// alpha_bar[t] is the cumulative signal-retention product; alpha_bar[0] is
/// set to 1 - beta_1 rather than exactly 1 so that the final denoising
/// transition keeps 1 - alpha_bar[0] - sigma^2 strictly positive.
struct NoiseSchedule {
  ScheduleKind kind = ScheduleKind::LinearBeta;
  int T = 0;
  double beta_min = 0.0;
  double beta_max = 0.0;
  std::vector<double> alpha_bar;  // size T + 1

  double at(int t) const;

  /// log alpha_bar at continuous time s in [0, 1], interpolated linearly in
  /// log-space between grid points (s = t / T).
  double log_alpha_bar_cont(double s) const;
  double alpha_bar_cont(double s) const;
  /// Continuous VP rate beta(s) = -d/ds log alpha_bar(s); piecewise constant
  /// between grid points. g(s)^2 for the associated SDE.
  double beta_cont(double s) const;
};

NoiseSchedule build_schedule(ScheduleKind kind, int T, double beta_min, double beta_max);

/// Stochasticity coefficient of the DDIM family for the transition
/// t -> t_prev, scaled by eta in [0, 1] (eta = 0 deterministic, eta = 1
/// matches the ancestral posterior standard deviation).
double ddim_sigma(const NoiseSchedule& sched, int t, int t_prev, double eta);

struct NdtmCoeffs {
  double kappa;  // control coefficient  gamma * sqrt(abar_prev / abar_t)
  double tau;    // denoiser coefficient sqrt(1 - abar_prev - sigma^2) - sqrt(abar_prev (1 - abar_t)) / sqrt(abar_t)
};

NdtmCoeffs ndtm_coefficients(const NoiseSchedule& sched, int t, int t_prev, double eta,
                             double gamma);

/// Decreasing timestep plan: n_steps indices evenly spaced in {1..start}.
struct StepPlan {
  std::vector<int> timesteps;
  int start = 0;
};

StepPlan plan_steps(const NoiseSchedule& sched, int n_steps, int start);

}  // namespace dtm

#endif  // DTM_SCHEDULE_HPP
