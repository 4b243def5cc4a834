#include "dtm/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

namespace dtm {

namespace {

Eigen::MatrixXd to_eigen(const Mat& m) {
  Eigen::MatrixXd out(m.rows, m.cols);
  for (std::size_t i = 0; i < m.rows; ++i)
    for (std::size_t j = 0; j < m.cols; ++j) out(static_cast<long>(i), static_cast<long>(j)) = m(i, j);
  return out;
}

Mat from_eigen(const Eigen::MatrixXd& m) {
  Mat out(static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols()));
  for (long i = 0; i < m.rows(); ++i)
    for (long j = 0; j < m.cols(); ++j) out(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) = m(i, j);
  return out;
}

}  // namespace

Vec GaussianDist::sample(Rng& rng) const {
  const std::size_t d = mean.size();
  Eigen::MatrixXd c = to_eigen(cov);
  Eigen::LLT<Eigen::MatrixXd> llt(c);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("GaussianDist::sample: covariance not positive definite");
  Eigen::VectorXd z(static_cast<long>(d));
  for (std::size_t i = 0; i < d; ++i) z(static_cast<long>(i)) = rng.normal();
  Eigen::VectorXd x = llt.matrixL() * z;
  Vec out(d);
  for (std::size_t i = 0; i < d; ++i) out[i] = mean[i] + x(static_cast<long>(i));
  return out;
}

GaussianDist gaussian_posterior(const Vec& prior_mean, const Mat& prior_cov, const Mat& A,
                                double sigma_y, const Vec& y) {
  const std::size_t d = prior_mean.size();
  if (prior_cov.rows != d || prior_cov.cols != d)
    throw std::invalid_argument("gaussian_posterior: prior covariance shape mismatch");
  if (A.cols != d) throw std::invalid_argument("gaussian_posterior: A column count mismatch");
  if (y.size() != A.rows) throw std::invalid_argument("gaussian_posterior: y dim mismatch");
  if (!(sigma_y > 0.0)) throw std::invalid_argument("gaussian_posterior: sigma_y must be positive");

  const Eigen::MatrixXd cov0 = to_eigen(prior_cov);
  Eigen::LLT<Eigen::MatrixXd> llt0(cov0);
  if (llt0.info() != Eigen::Success)
    throw std::invalid_argument("gaussian_posterior: singular prior covariance");

  const Eigen::MatrixXd a = to_eigen(A);
  const Eigen::MatrixXd prior_prec = llt0.solve(Eigen::MatrixXd::Identity(
      static_cast<long>(d), static_cast<long>(d)));
  const Eigen::MatrixXd prec = prior_prec + a.transpose() * a / (sigma_y * sigma_y);

  Eigen::VectorXd m0(static_cast<long>(d));
  for (std::size_t i = 0; i < d; ++i) m0(static_cast<long>(i)) = prior_mean[i];
  Eigen::VectorXd yv(static_cast<long>(y.size()));
  for (std::size_t i = 0; i < y.size(); ++i) yv(static_cast<long>(i)) = y[i];

  const Eigen::VectorXd rhs = prior_prec * m0 + a.transpose() * yv / (sigma_y * sigma_y);
  Eigen::LLT<Eigen::MatrixXd> lltp(prec);
  if (lltp.info() != Eigen::Success)
    throw std::runtime_error("gaussian_posterior: posterior precision not positive definite");
  const Eigen::VectorXd mean = lltp.solve(rhs);
  const Eigen::MatrixXd cov = lltp.solve(Eigen::MatrixXd::Identity(
      static_cast<long>(d), static_cast<long>(d)));

  GaussianDist out;
  out.mean.resize(d);
  for (std::size_t i = 0; i < d; ++i) out.mean[i] = mean(static_cast<long>(i));
  out.cov = from_eigen(0.5 * (cov + cov.transpose()));  // symmetrise rounding noise
  return out;
}

Vec conditional_score(const NoiseSchedule& sched, int t, const Vec& x_t, const Vec& y,
                      double sigma_y) {
  require_same_dim(x_t, y, "conditional_score");
  const double a = sched.at(t);
  const double sa = std::sqrt(a);
  const double denom = 1.0 - a + sigma_y * sigma_y;
  Vec s(x_t.size());
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = sa * (y[i] - sa * x_t[i]) / denom;
  return s;
}

Vec finite_diff_grad(const std::function<double(const Vec&)>& f, const Vec& x, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("finite_diff_grad: h must be positive");
  Vec g(x.size());
  Vec probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + h;
    const double fp = f(probe);
    probe[i] = x[i] - h;
    const double fm = f(probe);
    probe[i] = x[i];
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw std::runtime_error("finite_diff_grad: non-finite function value");
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

KlEstimate mc_chain_kl(const std::vector<ChainStep>& steps, std::size_t dim, int n_samples,
                       Rng& rng) {
  if (steps.empty() || steps.size() > 4)
    throw std::invalid_argument("mc_chain_kl: chain must have 1..4 steps");
  if (n_samples < 2) throw std::invalid_argument("mc_chain_kl: need at least 2 samples");
  for (const auto& s : steps)
    if (!(s.sigma > 0.0)) throw std::invalid_argument("mc_chain_kl: KL undefined at sigma = 0");

  double sum = 0.0, sum2 = 0.0;
  for (int n = 0; n < n_samples; ++n) {
    Vec x = gaussian_sample(rng, dim);
    double kl = 0.0;
    for (const auto& s : steps) {
      const Vec mg = s.guided_mean(x);
      const Vec mu = s.unguided_mean(x);
      require_same_dim(mg, mu, "mc_chain_kl");
      double q = 0.0;
      for (std::size_t i = 0; i < mg.size(); ++i) {
        const double d = mg[i] - mu[i];
        q += d * d;
      }
      kl += q / (2.0 * s.sigma * s.sigma);
      // advance along the guided chain
      Vec nx(mg.size());
      for (std::size_t i = 0; i < mg.size(); ++i) nx[i] = mg[i] + s.sigma * rng.normal();
      x = std::move(nx);
    }
    sum += kl;
    sum2 += kl * kl;
  }
  KlEstimate est;
  est.estimate = sum / n_samples;
  const double var = std::max(0.0, sum2 / n_samples - est.estimate * est.estimate);
  est.stderr_ = std::sqrt(var / n_samples);
  return est;
}

TriangleBoundCheck check_squared_triangle_bound(const Vec& a, const Vec& b) {
  require_same_dim(a, b, "check_squared_triangle_bound");
  double s2 = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double v = a[i] + b[i];
    s2 += v * v;
  }
  const double na = squared_norm(a);
  const double nb = squared_norm(b);
  TriangleBoundCheck out;
  out.holds_paper = s2 <= na + nb;
  out.holds_factor2 = s2 <= 2.0 * (na + nb);
  return out;
}

double posterior_mean_quadrature_1d(const GmmPrior& prior, double alpha_bar, double x_t) {
  if (prior.dim() != 1) throw std::invalid_argument("posterior_mean_quadrature_1d: prior must be 1-D");
  const double kernel_var = (1.0 - alpha_bar) / alpha_bar;
  double lo = x_t / std::sqrt(alpha_bar), hi = lo;
  double max_sd = std::sqrt(kernel_var);
  for (std::size_t k = 0; k < prior.components(); ++k) {
    lo = std::min(lo, prior.means()[k][0]);
    hi = std::max(hi, prior.means()[k][0]);
    max_sd = std::max(max_sd, std::sqrt(prior.variances()[k]));
  }
  lo -= 8.0 * max_sd;
  hi += 8.0 * max_sd;

  const int n = 2001;
  const double dx = (hi - lo) / (n - 1);
  const double sa = std::sqrt(alpha_bar);
  std::vector<double> logw(n);
  for (int i = 0; i < n; ++i) {
    const double x0 = lo + i * dx;
    // log prior density
    double lp = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < prior.components(); ++k) {
      const double v = prior.variances()[k];
      const double d = x0 - prior.means()[k][0];
      const double l = std::log(prior.weights()[k]) - 0.5 * d * d / v - 0.5 * std::log(v);
      lp = std::max(lp, l) + std::log1p(std::exp(-std::abs(l - lp)));
    }
    const double dk = x_t - sa * x0;
    logw[i] = lp - 0.5 * dk * dk / (1.0 - alpha_bar);
  }
  const double mx = *std::max_element(logw.begin(), logw.end());
  double z = 0.0, zx = 0.0;
  for (int i = 0; i < n; ++i) {
    const double w = std::exp(logw[i] - mx) * ((i == 0 || i == n - 1) ? 0.5 : 1.0);
    z += w;
    zx += w * (lo + i * dx);
  }
  return zx / z;
}

double log_marginal_y_quadrature_1d(double alpha_bar, double x_t, double y, double sigma_y) {
  // standard-normal prior: x0 | x_t ~ N(sqrt(abar) x_t, 1 - abar)
  const double mu = std::sqrt(alpha_bar) * x_t;
  const double sd = std::sqrt(1.0 - alpha_bar);
  const double halfwidth = 8.0 * (sd + sigma_y + std::abs(y - mu) * 0.25);
  const int n = 2001;
  const double lo = std::min(mu, y) - halfwidth;
  const double hi = std::max(mu, y) + halfwidth;
  const double dx = (hi - lo) / (n - 1);
  std::vector<double> logw(n);
  for (int i = 0; i < n; ++i) {
    const double x0 = lo + i * dx;
    const double d1 = (x0 - mu) / sd;
    const double d2 = (y - x0) / sigma_y;
    logw[i] = -0.5 * d1 * d1 - std::log(sd) - 0.5 * d2 * d2 - std::log(sigma_y);
  }
  const double mx = *std::max_element(logw.begin(), logw.end());
  double z = 0.0;
  for (int i = 0; i < n; ++i) z += std::exp(logw[i] - mx) * ((i == 0 || i == n - 1) ? 0.5 : 1.0);
  return mx + std::log(z * dx) - std::log(2.0 * 3.141592653589793);
}

std::vector<GradCheckRow> run_grad_checks(const std::vector<GradCheckCase>& cases, double h,
                                          double tol) {
  std::vector<GradCheckRow> rows;
  rows.reserve(cases.size());
  std::size_t idx = 0;
  std::string last;
  for (const auto& c : cases) {
    if (c.component != last) {
      idx = 0;
      last = c.component;
    }
    GradCheckRow row;
    row.component = c.component;
    row.probe_index = static_cast<int>(idx++);
    const Vec fd = finite_diff_grad(c.f, c.probe, h);
    const Vec an = c.grad(c.probe);
    require_same_dim(fd, an, "run_grad_checks");
    double diff2 = 0.0;
    for (std::size_t i = 0; i < fd.size(); ++i) {
      const double d = fd[i] - an[i];
      diff2 += d * d;
    }
    const double scale = std::max({norm(fd), norm(an), 1e-10});
    row.rel_err = std::sqrt(diff2) / scale;
    row.pass = row.rel_err < tol;
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace dtm
