#include "dtm/priors.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dtm {

namespace {
double abar_at(const NoiseSchedule& sched, int t) {
  if (t < 1 || t > sched.T) throw std::invalid_argument("score model: t must be in [1, T]");
  return sched.at(t);
}
}  // namespace

Vec score(const ScoreModel& m, const Vec& x, double alpha_bar) {
  Vec e = m.eps(x, alpha_bar);
  const double sq = std::sqrt(1.0 - alpha_bar);
  for (auto& v : e) v = -v / sq;
  return e;
}

Vec tweedie_estimate(const ScoreModel& m, const Vec& x, double alpha_bar) {
  if (!(alpha_bar > 0.0)) throw std::invalid_argument("tweedie: alpha_bar must be positive");
  Vec e = m.eps(x, alpha_bar);
  const double sq = std::sqrt(1.0 - alpha_bar);
  const double sa = std::sqrt(alpha_bar);
  for (std::size_t i = 0; i < x.size(); ++i) e[i] = (x[i] - sq * e[i]) / sa;
  return e;
}

Vec tweedie_vjp(const ScoreModel& m, const Vec& x, double alpha_bar, const Vec& cot) {
  Vec jv = m.eps_vjp(x, alpha_bar, cot);
  const double sq = std::sqrt(1.0 - alpha_bar);
  const double sa = std::sqrt(alpha_bar);
  for (std::size_t i = 0; i < cot.size(); ++i) jv[i] = (cot[i] - sq * jv[i]) / sa;
  return jv;
}

Vec epsilon(const ScoreModel& m, const NoiseSchedule& sched, const Vec& x, int t) {
  return m.eps(x, abar_at(sched, t));
}

Vec epsilon_vjp(const ScoreModel& m, const NoiseSchedule& sched, const Vec& x, int t,
                const Vec& cot) {
  return m.eps_vjp(x, abar_at(sched, t), cot);
}

Vec tweedie(const ScoreModel& m, const NoiseSchedule& sched, const Vec& x, int t) {
  return tweedie_estimate(m, x, abar_at(sched, t));
}

GmmPrior::GmmPrior(std::vector<double> weights, std::vector<Vec> means,
                   std::vector<double> variances)
    : weights_(std::move(weights)), means_(std::move(means)), variances_(std::move(variances)) {
  if (weights_.empty() || weights_.size() != means_.size() || weights_.size() != variances_.size())
    throw std::invalid_argument("GmmPrior: weights/means/variances must have equal nonzero size");
  dim_ = means_[0].size();
  double wsum = 0.0;
  for (std::size_t k = 0; k < weights_.size(); ++k) {
    if (!(weights_[k] > 0.0)) throw std::invalid_argument("GmmPrior: weights must be positive");
    if (!(variances_[k] > 0.0)) throw std::invalid_argument("GmmPrior: variances must be positive");
    if (means_[k].size() != dim_) throw std::invalid_argument("GmmPrior: mean dimension mismatch");
    wsum += weights_[k];
  }
  if (std::abs(wsum - 1.0) > 1e-12)
    throw std::invalid_argument("GmmPrior: weights must sum to 1 within 1e-12");
}

GmmPrior GmmPrior::standard_normal(std::size_t dim) {
  return GmmPrior({1.0}, {Vec(dim, 0.0)}, {1.0});
}

Vec GmmPrior::responsibilities(const Vec& x, double alpha_bar) const {
  if (x.size() != dim_) throw std::invalid_argument("GmmPrior: state dimension mismatch");
  const std::size_t K = weights_.size();
  Vec logp(K);
  for (std::size_t k = 0; k < K; ++k) {
    const double s2 = alpha_bar * variances_[k] + (1.0 - alpha_bar);
    const double sa = std::sqrt(alpha_bar);
    double q = 0.0;
    for (std::size_t i = 0; i < dim_; ++i) {
      const double d = x[i] - sa * means_[k][i];
      q += d * d;
    }
    logp[k] = std::log(weights_[k]) - 0.5 * q / s2 -
              0.5 * static_cast<double>(dim_) * std::log(s2);
  }
  const double mx = *std::max_element(logp.begin(), logp.end());
  double z = 0.0;
  for (auto& v : logp) {
    v = std::exp(v - mx);
    z += v;
  }
  for (auto& v : logp) v /= z;
  return logp;
}

// Marginal score as the responsibility-weighted sum of per-component
// Gaussian scores g_k = (sqrt(abar) mu_k - x) / s_k^2.
Vec GmmPrior::score_at(const Vec& x, double alpha_bar, Vec* resp_out) const {
  const Vec r = responsibilities(x, alpha_bar);
  const double sa = std::sqrt(alpha_bar);
  Vec s(dim_, 0.0);
  for (std::size_t k = 0; k < weights_.size(); ++k) {
    const double s2 = alpha_bar * variances_[k] + (1.0 - alpha_bar);
    for (std::size_t i = 0; i < dim_; ++i) s[i] += r[k] * (sa * means_[k][i] - x[i]) / s2;
  }
  if (resp_out) *resp_out = r;
  return s;
}

Vec GmmPrior::eps(const Vec& x, double alpha_bar) const {
  Vec s = score_at(x, alpha_bar, nullptr);
  const double c = -std::sqrt(1.0 - alpha_bar);
  for (auto& v : s) v *= c;
  return s;
}

// The score Jacobian (a log-density Hessian, hence symmetric) is
//   H = -sum_k r_k / s_k^2 I + sum_k r_k g_k g_k^T - score score^T,
// so the eps VJP is -sqrt(1-abar) * H * cot.
Vec GmmPrior::eps_vjp(const Vec& x, double alpha_bar, const Vec& cot) const {
  if (cot.size() != dim_) throw std::invalid_argument("GmmPrior::eps_vjp: cotangent dim mismatch");
  Vec r;
  const Vec s = score_at(x, alpha_bar, &r);
  const double sa = std::sqrt(alpha_bar);

  Vec out(dim_, 0.0);
  double diag = 0.0;
  for (std::size_t k = 0; k < weights_.size(); ++k) {
    const double s2 = alpha_bar * variances_[k] + (1.0 - alpha_bar);
    diag += r[k] / s2;
    double gk_dot_cot = 0.0;
    for (std::size_t i = 0; i < dim_; ++i) gk_dot_cot += (sa * means_[k][i] - x[i]) / s2 * cot[i];
    for (std::size_t i = 0; i < dim_; ++i) out[i] += r[k] * gk_dot_cot * (sa * means_[k][i] - x[i]) / s2;
  }
  const double s_dot_cot = dot(s, cot);
  const double c = -std::sqrt(1.0 - alpha_bar);
  for (std::size_t i = 0; i < dim_; ++i) out[i] = c * (out[i] - diag * cot[i] - s_dot_cot * s[i]);
  return out;
}

Vec GmmPrior::sample(Rng& rng) const {
  double u = rng.uniform();
  std::size_t k = 0;
  for (; k + 1 < weights_.size(); ++k) {
    if (u < weights_[k]) break;
    u -= weights_[k];
  }
  Vec x = gaussian_sample(rng, dim_);
  const double sd = std::sqrt(variances_[k]);
  for (std::size_t i = 0; i < dim_; ++i) x[i] = means_[k][i] + sd * x[i];
  return x;
}

Vec gmm_responsibilities(const GmmPrior& prior, const Vec& x, const NoiseSchedule& sched, int t) {
  if (t < 0 || t > sched.T) throw std::invalid_argument("gmm_responsibilities: t out of range");
  return prior.responsibilities(x, sched.at(t));
}

}  // namespace dtm
