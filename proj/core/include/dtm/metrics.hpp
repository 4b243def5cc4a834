#ifndef DTM_METRICS_HPP
#define DTM_METRICS_HPP

#include <vector>

#include "dtm/numerics.hpp"

namespace dtm {

/// 10 log10(max^2 / MSE); exact reconstructions are capped at 200 dB.
double psnr(const Vec& x, const Vec& ref, double max_value);

/// 2 E||a-b|| - E||a-a'|| - E||b-b'|| via all-pairs means.
double energy_distance(const std::vector<Vec>& a, const std::vector<Vec>& b);

struct MetricsRecord {
  double psnr_db = 0.0;             // median over trajectories
  double residual = 0.0;            // median ||y - A(x0)||
  double sample_mean_error = 0.0;   // ||mean(x0) - posterior mean|| (conjugate problems)
  double energy_distance = 0.0;     // to analytic posterior samples (conjugate problems)
  double wall_time_s = 0.0;
  std::vector<double> per_trajectory_psnr;
  std::vector<double> per_trajectory_residual;
};

double median(std::vector<double> v);

}  // namespace dtm

#endif  // DTM_METRICS_HPP
