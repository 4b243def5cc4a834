#ifndef DTM_PRIORS_HPP
#define DTM_PRIORS_HPP

#include <cstddef>
#include <vector>

#include "dtm/numerics.hpp"
#include "dtm/schedule.hpp"

namespace dtm {

/// Noise-prediction model over VP-diffused states. Implementations expose the
/// eps head and its input vector-Jacobian product; score and Tweedie views are
/// derived identities shared by every model:
///   score(x)   = -eps(x) / sqrt(1 - abar)
///   x0_hat(x)  = (x - sqrt(1 - abar) * eps(x)) / sqrt(abar)
class ScoreModel {
 public:
  virtual ~ScoreModel() = default;
  virtual std::size_t dim() const = 0;
  /// Noise prediction at signal level alpha_bar in (0, 1].
  virtual Vec eps(const Vec& x, double alpha_bar) const = 0;
  /// J^T cot where J = d eps / d x at (x, alpha_bar).
  virtual Vec eps_vjp(const Vec& x, double alpha_bar, const Vec& cot) const = 0;
};

Vec score(const ScoreModel& m, const Vec& x, double alpha_bar);
Vec tweedie_estimate(const ScoreModel& m, const Vec& x, double alpha_bar);
/// (d x0_hat / d x)^T cot == (cot - sqrt(1-abar) * eps_vjp(x, cot)) / sqrt(abar).
Vec tweedie_vjp(const ScoreModel& m, const Vec& x, double alpha_bar, const Vec& cot);

/// Discrete-time wrappers over the schedule (t in [1, T]).
Vec epsilon(const ScoreModel& m, const NoiseSchedule& sched, const Vec& x, int t);
Vec epsilon_vjp(const ScoreModel& m, const NoiseSchedule& sched, const Vec& x, int t,
                const Vec& cot);
Vec tweedie(const ScoreModel& m, const NoiseSchedule& sched, const Vec& x, int t);

/// Isotropic Gaussian mixture prior with closed-form marginal score under the
/// VP kernel: the marginal at signal level abar is again a mixture with
/// component means sqrt(abar) * mu_k and variances abar * v_k + (1 - abar).
class GmmPrior final : public ScoreModel {
 public:
  GmmPrior(std::vector<double> weights, std::vector<Vec> means, std::vector<double> variances);

  static GmmPrior standard_normal(std::size_t dim);

  std::size_t dim() const override { return dim_; }
  std::size_t components() const { return weights_.size(); }
  const std::vector<double>& weights() const { return weights_; }
  const std::vector<Vec>& means() const { return means_; }
  const std::vector<double>& variances() const { return variances_; }

  /// Posterior component probabilities under the diffused marginal.
  Vec responsibilities(const Vec& x, double alpha_bar) const;
  Vec eps(const Vec& x, double alpha_bar) const override;
  Vec eps_vjp(const Vec& x, double alpha_bar, const Vec& cot) const override;

  /// Draw from the data distribution (component choice then Gaussian).
  Vec sample(Rng& rng) const;

 private:
  Vec score_at(const Vec& x, double alpha_bar, Vec* resp_out) const;

  std::size_t dim_;
  std::vector<double> weights_;
  std::vector<Vec> means_;
  std::vector<double> variances_;
};

Vec gmm_responsibilities(const GmmPrior& prior, const Vec& x, const NoiseSchedule& sched, int t);

}  // namespace dtm

#endif  // DTM_PRIORS_HPP
