#ifndef DTM_ORACLE_HPP
#define DTM_ORACLE_HPP

#include <functional>
#include <string>
#include <vector>

#include "dtm/numerics.hpp"
#include "dtm/priors.hpp"
#include "dtm/schedule.hpp"

namespace dtm {

/// Multivariate Gaussian with dense covariance. Sampling factorises the
/// covariance on first use.
struct GaussianDist {
  Vec mean;
  Mat cov;

  Vec sample(Rng& rng) const;
};

/// Conjugate posterior for the linear-Gaussian model y = A x0 + sigma_y z with
/// prior N(prior_mean, prior_cov): precision = prior_cov^{-1} + A^T A / sigma_y^2.
GaussianDist gaussian_posterior(const Vec& prior_mean, const Mat& prior_cov, const Mat& A,
                                double sigma_y, const Vec& y);

/// Analytic grad_x log p(y | x_t) for the standard-normal prior with identity
/// (or masked/diagonal) observation: sqrt(abar)(y - sqrt(abar) x)/(1 - abar + sigma_y^2).
Vec conditional_score(const NoiseSchedule& sched, int t, const Vec& x_t, const Vec& y,
                      double sigma_y);

/// Central finite differences of a scalar function, per coordinate.
Vec finite_diff_grad(const std::function<double(const Vec&)>& f, const Vec& x, double h);

/// One step of a pair of Gaussian chains sharing the per-step standard
/// deviation; the KL between the conditionals at state x is
/// ||mu_g(x) - mu_u(x)||^2 / (2 sigma^2).
struct ChainStep {
  std::function<Vec(const Vec&)> guided_mean;
  std::function<Vec(const Vec&)> unguided_mean;
  double sigma = 0.0;
};

struct KlEstimate {
  double estimate = 0.0;
  double stderr_ = 0.0;
};

/// Rao-Blackwellised Monte-Carlo estimate of the chain KL: trajectories are
/// sampled from the guided chain (x_init ~ N(0, I_dim)) and per-step analytic
/// Gaussian KLs are summed. Chains must be short (<= 4 steps).
KlEstimate mc_chain_kl(const std::vector<ChainStep>& steps, std::size_t dim, int n_samples,
                       Rng& rng);

struct TriangleBoundCheck {
  bool holds_paper = false;    // ||a+b||^2 <= ||a||^2 + ||b||^2
  bool holds_factor2 = false;  // ||a+b||^2 <= 2||a||^2 + 2||b||^2
};

TriangleBoundCheck check_squared_triangle_bound(const Vec& a, const Vec& b);

/// 1-D quadrature oracles (2001-point grids over +-8 combined standard
/// deviations).
double posterior_mean_quadrature_1d(const GmmPrior& prior, double alpha_bar, double x_t);
double log_marginal_y_quadrature_1d(double alpha_bar, double x_t, double y, double sigma_y);

/// A registered analytic-gradient claim: grad must match central finite
/// differences of f at the probe.
struct GradCheckCase {
  std::string component;
  std::function<double(const Vec&)> f;
  std::function<Vec(const Vec&)> grad;
  Vec probe;
};

struct GradCheckRow {
  std::string component;
  int probe_index = 0;
  double rel_err = 0.0;
  bool pass = false;
};

std::vector<GradCheckRow> run_grad_checks(const std::vector<GradCheckCase>& cases, double h,
                                          double tol);

}  // namespace dtm

#endif  // DTM_ORACLE_HPP
