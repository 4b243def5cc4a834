#include "dtm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dtm {

double psnr(const Vec& x, const Vec& ref, double max_value) {
  require_same_dim(x, ref, "psnr");
  if (!(max_value > 0.0)) throw std::invalid_argument("psnr: max_value must be positive");
  double mse = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - ref[i];
    mse += d * d;
  }
  mse /= static_cast<double>(x.size());
  if (mse == 0.0) return 200.0;
  return std::min(200.0, 10.0 * std::log10(max_value * max_value / mse));
}

namespace {
double mean_pair_distance(const std::vector<Vec>& a, const std::vector<Vec>& b) {
  double s = 0.0;
  for (const auto& x : a)
    for (const auto& y : b) {
      double q = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = x[i] - y[i];
        q += d * d;
      }
      s += std::sqrt(q);
    }
  return s / (static_cast<double>(a.size()) * static_cast<double>(b.size()));
}
}  // namespace

double energy_distance(const std::vector<Vec>& a, const std::vector<Vec>& b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("energy_distance: empty sample set");
  return 2.0 * mean_pair_distance(a, b) - mean_pair_distance(a, a) - mean_pair_distance(b, b);
}

double median(std::vector<double> v) {
  if (v.empty()) throw std::invalid_argument("median: empty");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return (n % 2 == 1) ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace dtm
