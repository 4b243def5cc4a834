#ifndef DTM_RUNNER_HPP
#define DTM_RUNNER_HPP

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dtm/config.hpp"
#include "dtm/metrics.hpp"
#include "dtm/oracle.hpp"
#include "dtm/priors.hpp"
#include "dtm/samplers.hpp"
#include "dtm/terminal.hpp"

namespace dtm {

/// Materialised problem instance: prior model, schedule, operator, ground
/// truth and observation, all derived deterministically from the config.
struct Instance {
  std::shared_ptr<const ScoreModel> model;
  std::shared_ptr<const GmmPrior> data_prior;  // generative source of ground truth
  NoiseSchedule sched;
  std::shared_ptr<const ForwardOperator> op;   // null for unconditional runs
  Vec ground_truth;
  Vec observation;
  BlurKernel true_kernel;                      // conv-based problems
  std::shared_ptr<const TerminalCost> cost;    // null for unconditional runs
};

Instance build_instance(const RunConfig& cfg);

struct SolveOutput {
  MetricsRecord metrics;
  std::vector<Vec> samples;
  ControlTrace trace0;  // trace of trajectory 0
  std::optional<BlurKernel> recovered_kernel;
  Instance instance;
};

/// Orchestrates one experiment: synthesise the problem, run the selected
/// method for n_trajectories (work pool, per-trajectory child RNG streams),
/// aggregate metrics deterministically and, when cfg.write_outputs, emit
/// metrics.csv / trace.csv / PGM previews into cfg.out_dir.
SolveOutput run_solve(const RunConfig& cfg);

/// One run_solve per (value, seed) pair; long-format CSV. Rows for failed
/// runs are marked and the sweep continues.
void run_sweep(const RunConfig& base, const std::string& param, const std::vector<double>& values,
               int n_seeds, const std::string& csv_path);

/// Standard gradient/adjoint validation registry (FD checks for every
/// differentiable surface plus adjoint, linearity and bound fuzz rows).
std::vector<GradCheckCase> build_gradcheck_registry(std::uint64_t seed, int probes_per_component);

struct ValidationRow {
  std::string component;
  int probe_index = 0;
  double value = 0.0;  // rel err (FD/adjoint rows) or rate (informational rows)
  bool pass = true;
  bool informational = false;
};

/// Runs the registry plus adjoint/linearity/bound checks; writes the
/// validation CSV when csv_path is nonempty. Informational rows never fail.
std::vector<ValidationRow> run_gradcheck(std::uint64_t seed, int probes_per_component,
                                         const std::string& csv_path);

/// Oracle-side report for a conjugate-Gaussian config: posterior moments,
/// guided/unguided energy distances, chain-KL spot check, bound fuzz rates.
void run_oracle_report(const RunConfig& cfg, const std::string& csv_path);

/// Dense matrix of a linear operator (columns = images of basis vectors).
Mat operator_matrix(const ForwardOperator& op);

}  // namespace dtm

#endif  // DTM_RUNNER_HPP
