#ifndef DTM_CONTROL_HPP
#define DTM_CONTROL_HPP

#include <vector>

#include "dtm/numerics.hpp"
#include "dtm/priors.hpp"
#include "dtm/schedule.hpp"
#include "dtm/terminal.hpp"

namespace dtm {

/// Loss weight that is either a fixed number or the "ddim" sentinel, which
/// resolves to the schedule-derived coefficient (tau_t^2 for the score term,
/// kappa_t^2 for the control term).
struct Weight {
  bool use_ddim = true;
  double value = 0.0;

  static Weight ddim() { return Weight{true, 0.0}; }
  static Weight fixed(double v) { return Weight{false, v}; }
  double resolve(double ddim_value) const { return use_ddim ? ddim_value : value; }
};

/// Every knob of the guided sampling loop.
struct GuidanceConfig {
  int n_inner = 5;        // N, inner optimisation steps per timestep
  double gamma = 1.0;     // guidance weight on the control
  double w_T = 0.0;       // terminal cost weight
  Weight w_s = Weight::ddim();
  Weight w_c = Weight::ddim();
  double eta = 0.0;       // DDIM stochasticity
  int n_steps = 50;       // sampling steps
  int start = 0;          // truncation time; 0 means start at T
  double lr = 0.01;       // inner Adam learning rate
  bool lr_linear_decay = true;
  double kernel_lr = 0.01;  // blind-kernel learning rate

  int resolved_start(const NoiseSchedule& sched) const { return start > 0 ? start : sched.T; }
};

struct ControlCostParts {
  double c_score = 0.0;
  double c_control = 0.0;
  double c_terminal = 0.0;
  double total = 0.0;
};

/// Per-step guidance objective at state x_t with control u:
///   w_c ||u||^2 + w_s ||eps(x_t + gamma u) - eps(x_t)||^2 + w_T Phi(x0_hat),
/// where x0_hat is the Tweedie estimate at the shifted state. phi may be null
/// (no terminal cost).
ControlCostParts control_cost(const ScoreModel& model, const NoiseSchedule& sched,
                              const TerminalCost* phi, const Vec& x_t, const Vec& u, int t,
                              int t_prev, const GuidanceConfig& cfg);

/// Exact gradient of control_cost().total with respect to u.
Vec control_grad(const ScoreModel& model, const NoiseSchedule& sched, const TerminalCost* phi,
                 const Vec& x_t, const Vec& u, int t, int t_prev, const GuidanceConfig& cfg);

struct ControlOptResult {
  Vec u;                                  // optimised control
  std::vector<ControlCostParts> history;  // objective parts at iterates 0..N-1
};

/// N Adam steps from u = 0 with optional linear lr decay. The unconditional
/// noise prediction is computed once per timestep and reused. With w_T = 0
/// the gradient vanishes at the start point and the returned control is
/// exactly zero.
ControlOptResult optimize_control(const ScoreModel& model, const NoiseSchedule& sched,
                                  const TerminalCost* phi, const Vec& x_t, int t, int t_prev,
                                  const GuidanceConfig& cfg, Rng& rng);

struct BlindControlOptResult {
  Vec u;
  BlurKernel kernel;
  std::vector<ControlCostParts> history;
};

/// Joint inner loop for blind deconvolution: simultaneous Adam updates of the
/// control (cfg.lr) and the kernel taps (cfg.kernel_lr), both from gradients
/// at the current iterate. The updated kernel is returned so it can persist
/// across timesteps; optimiser moments are reset each call.
BlindControlOptResult optimize_control_blind(const ScoreModel& model, const NoiseSchedule& sched,
                                             const Vec& y, double sigma_y,
                                             const BlurKernel& kernel, const Vec& x_t, int t,
                                             int t_prev, const GuidanceConfig& cfg, Rng& rng);

}  // namespace dtm

#endif  // DTM_CONTROL_HPP
