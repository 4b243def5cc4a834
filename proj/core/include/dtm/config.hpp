#ifndef DTM_CONFIG_HPP
#define DTM_CONFIG_HPP

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "dtm/control.hpp"
#include "dtm/numerics.hpp"
#include "dtm/schedule.hpp"

namespace dtm {

/// Config validation failure carrying the offending field path.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& field, const std::string& message)
      : std::runtime_error(field + ": " + message), field_(field) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

struct PriorSpec {
  std::string kind = "standard_normal";  // standard_normal | gmm | mlp
  std::size_t dim = 2;
  std::string preset;                    // gmm preset name, e.g. "signal64"
  std::vector<double> weights;
  std::vector<Vec> means;
  std::vector<double> variances;
  std::string model_file;                // mlp weights (flat binary)
  std::size_t hidden = 64;
};

struct ScheduleSpec {
  ScheduleKind kind = ScheduleKind::LinearBeta;
  int T = 1000;
  double beta_min = 1e-4;
  double beta_max = 0.02;
};

struct OperatorSpec {
  std::string kind = "none";  // none | identity | mask | downsample | circular_conv | nonlinear_blur
  Vec mask;                   // explicit mask; empty -> random
  double keep_prob = 0.5;
  std::uint64_t mask_seed = 1;
  std::size_t factor = 4;
  Vec kernel_taps;            // explicit kernel; empty -> gaussian
  std::size_t kernel_length = 5;
  double kernel_std = 1.0;
  double saturation = 1.0;
};

struct ProblemConfig {
  OperatorSpec op;
  double sigma_y = 0.01;
  std::uint64_t truth_seed = 7;
  bool blind = false;
  std::string kernel_init = "uniform";  // uniform | delta
};

struct RunConfig {
  int schema_version = 1;
  std::uint64_t seed = 0;
  std::string out_dir;
  std::string method = "ndtm";  // ndtm | rb_mod | dps | linear_cg | unguided
  int n_trajectories = 1;
  int n_threads = 0;  // 0 -> hardware concurrency
  bool trace_controls = false;
  bool write_outputs = true;
  double dps_alpha = 1.0;
  bool linear_cg_nonlog = false;  // inspection-only variant
  PriorSpec prior;
  ScheduleSpec schedule;
  ProblemConfig problem;
  GuidanceConfig guidance;
};

RunConfig parse_config_json(const std::string& text);
RunConfig parse_config_file(const std::string& path);
std::string config_to_json(const RunConfig& cfg);

/// Named guidance presets (per-task hyperparameter tuples).
std::vector<std::string> preset_names();
void apply_guidance_preset(GuidanceConfig& g, const std::string& name);

/// Sharp-featured 4-component mixture over length-64 signals, used by the
/// blind-deconvolution demos.
void signal64_gmm_params(std::vector<double>& weights, std::vector<Vec>& means,
                         std::vector<double>& variances);

void validate_config(const RunConfig& cfg);

}  // namespace dtm

#endif  // DTM_CONFIG_HPP
