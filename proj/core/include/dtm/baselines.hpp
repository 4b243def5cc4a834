#ifndef DTM_BASELINES_HPP
#define DTM_BASELINES_HPP

#include "dtm/control.hpp"
#include "dtm/numerics.hpp"
#include "dtm/priors.hpp"
#include "dtm/schedule.hpp"
#include "dtm/terminal.hpp"

namespace dtm {

/// Classifier guidance: s_theta(x, t) + rho * likelihood_score.
Vec classifier_guidance_score(const ScoreModel& model, const NoiseSchedule& sched, const Vec& x,
                              int t, const Vec& likelihood_score, double rho);

struct DpsStep {
  Vec direction;  // zeta-scaled negative gradient of the residual cost
  double zeta = 0.0;
};

/// Per-step posterior-sampling direction: -zeta * grad_x ||y - A(x0_hat(x))||^2
/// with zeta = alpha_step / ||y - A(x0_hat)||^2. Zero residual yields a zero
/// direction (zeta undefined).
DpsStep dps_direction(const ScoreModel& model, const NoiseSchedule& sched, const ProblemSpec& spec,
                      const Vec& x_t, int t, double alpha_step);

/// Special case of the guided sampler: w_s = 0, w_c = 0, gamma = 1.
GuidanceConfig rb_modulation_config(GuidanceConfig base);

/// Closed-form optimal linear control for the standard-normal prior with a
/// Gaussian likelihood y ~ N(x0, sigma_y^2 I):
///   u* = g w_T sqrt(abar) (y - sqrt(abar) x_t) / (1 - abar + sigma_y^2).
Vec linear_optimal_control_gaussian(const NoiseSchedule& sched, int t, const Vec& x_t, const Vec& y,
                                    double sigma_y, double w_T, double g = 1.0);

/// Non-log variant (gradient of the likelihood rather than its log); exposed
/// for inspection only.
Vec linear_optimal_control_gaussian_nonlog(const NoiseSchedule& sched, int t, const Vec& x_t,
                                           const Vec& y, double sigma_y, double w_T,
                                           double g = 1.0);

}  // namespace dtm

#endif  // DTM_BASELINES_HPP
