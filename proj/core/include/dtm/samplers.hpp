#ifndef DTM_SAMPLERS_HPP
#define DTM_SAMPLERS_HPP

#include <optional>
#include <vector>

#include "dtm/control.hpp"
#include "dtm/numerics.hpp"
#include "dtm/priors.hpp"
#include "dtm/schedule.hpp"
#include "dtm/terminal.hpp"

namespace dtm {

struct TraceRow {
  int t = 0;                 // timestep (or step index for continuous samplers)
  double u_norm = 0.0;
  ControlCostParts parts;
  double residual = std::numeric_limits<double>::quiet_NaN();
  std::optional<Vec> u;      // full control when trace_controls is enabled
};

/// One record per planned timestep, in sampling order (decreasing t).
using ControlTrace = std::vector<TraceRow>;

struct SampleResult {
  Vec x0;
  ControlTrace trace;
};

/// One DDIM transition t -> t_prev:
///   x' = sqrt(abar') x0_hat + sqrt(1 - abar' - sigma^2) eps + sigma z,
/// with z drawn only when sigma > 0.
Vec ddim_step(const ScoreModel& model, const NoiseSchedule& sched, const Vec& x, int t, int t_prev,
              double eta, Rng& rng);

/// Unguided DDIM sampling over the plan implied by cfg (n_steps, start, eta).
SampleResult ddim_sample(const ScoreModel& model, const NoiseSchedule& sched,
                         const GuidanceConfig& cfg, Rng& rng, bool trace_controls = false);

/// Guided sampling: at every planned timestep the control is optimised from
/// zero, the state is shifted to x + gamma u*, and the DDIM transition is
/// applied at the shifted state. phi may be null (reduces to unguided DDIM
/// with identical draws).
SampleResult ndtm_sample(const ScoreModel& model, const NoiseSchedule& sched,
                         const TerminalCost* phi, const GuidanceConfig& cfg, Rng& rng,
                         bool trace_controls = false);

struct BlindSampleResult {
  Vec x0;
  BlurKernel kernel;
  ControlTrace trace;
};

/// Guided sampling with joint blur-kernel inference; the kernel persists
/// across timesteps.
BlindSampleResult ndtm_sample_blind(const ScoreModel& model, const NoiseSchedule& sched,
                                    const Vec& y, double sigma_y, BlurKernel kernel_init,
                                    const GuidanceConfig& cfg, Rng& rng,
                                    bool trace_controls = false);

/// One reverse-SDE Euler-Maruyama step at continuous time s with step ds,
/// using the score evaluated at the shifted state x + gamma u:
///   x' = x - [f(s) x - g(s)^2 score(x + gamma u)] ds + g(s) sqrt(ds) z.
Vec sde_step_ctdtm(const ScoreModel& model, const NoiseSchedule& sched, const Vec& x, const Vec& u,
                   double s, double ds, double gamma, Rng& rng);

/// Transient cost of the continuous-time formulation at one step:
///   (g(s)^2 / 2) ||score(x + gamma u) - score(x)||^2 * ds.
double sde_transient_cost(const ScoreModel& model, const NoiseSchedule& sched, const Vec& x,
                          const Vec& u, double s, double ds, double gamma);

/// Euler-Maruyama sampler over cfg.n_steps uniform steps from s = 1 to 0;
/// per-step control minimises the transient + terminal objective with the
/// same Adam inner loop as the discrete sampler.
SampleResult sde_sample(const ScoreModel& model, const NoiseSchedule& sched,
                        const TerminalCost* phi, const GuidanceConfig& cfg, Rng& rng,
                        bool trace_controls = false);

/// Velocity-field model over t in [0, 1] (t = 0 noise, t = 1 data).
class FlowModel {
 public:
  virtual ~FlowModel() = default;
  virtual std::size_t dim() const = 0;
  virtual Vec velocity(const Vec& x, double t) const = 0;
  virtual Vec velocity_vjp(const Vec& x, double t, const Vec& cot) const = 0;
};

/// Closed-form marginal velocity of the conditional-OT path for a standard
/// normal target: v(x, t) = x (2t - 1) / ((1-t)^2 + t^2).
class OtGaussianFlow final : public FlowModel {
 public:
  explicit OtGaussianFlow(std::size_t dim) : dim_(dim) {}
  std::size_t dim() const override { return dim_; }
  Vec velocity(const Vec& x, double t) const override;
  Vec velocity_vjp(const Vec& x, double t, const Vec& cot) const override;

 private:
  std::size_t dim_;
};

/// Euler ODE integration of the guided flow; per-step control minimises
/// ||v(x + gamma u) - v(x)||^2 dt + w_T Phi(x1_hat) with the one-step
/// extrapolation x1_hat = x + (1 - t) v(x + gamma u).
SampleResult ftm_sample(const FlowModel& flow, const TerminalCost* phi, const GuidanceConfig& cfg,
                        Rng& rng, bool trace_controls = false);

}  // namespace dtm

#endif  // DTM_SAMPLERS_HPP
