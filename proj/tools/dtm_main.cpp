// Command-line front end: sample / solve / sweep / gradcheck / oracle.

#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dtm/config.hpp"
#include "dtm/io.hpp"
#include "dtm/runner.hpp"

namespace {

dtm::RunConfig load_config(const std::string& path, const std::string& out_dir,
                           std::uint64_t seed, bool seed_set, const std::string& method) {
  dtm::RunConfig cfg;
  if (!path.empty()) cfg = dtm::parse_config_file(path);
  if (seed_set) cfg.seed = seed;
  if (!method.empty()) cfg.method = method;
  if (!out_dir.empty()) {
    cfg.out_dir = out_dir;
  } else if (cfg.out_dir.empty()) {
    const char* env = std::getenv("DTM_OUT_DIR");
    cfg.out_dir = env ? env : "out";
  }
  dtm::validate_config(cfg);
  return cfg;
}

void print_metrics(const dtm::MetricsRecord& m) {
  std::cout << "psnr_db=" << m.psnr_db << " residual=" << m.residual
            << " sample_mean_error=" << m.sample_mean_error
            << " energy_distance=" << m.energy_distance << " wall_time_s=" << m.wall_time_s
            << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Guided diffusion sampling via per-step trajectory matching"};
  app.require_subcommand(1);

  std::string config_path, out_dir, method, param;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::vector<double> values;
  int n_seeds = 5;
  int probes = 100;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "config file (JSON)");
    sub->add_option("--seed", seed, "RNG seed override")->each([&](const std::string&) {
      seed_set = true;
    });
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--method", method, "method override (ndtm|rb_mod|dps|linear_cg|unguided)");
  };

  CLI::App* sample = app.add_subcommand("sample", "unguided sampling from the prior");
  add_common(sample);
  CLI::App* solve = app.add_subcommand("solve", "guided solve of the configured inverse problem");
  add_common(solve);
  CLI::App* sweep = app.add_subcommand("sweep", "grid sweep over one hyperparameter");
  add_common(sweep);
  sweep->add_option("--param", param, "one of w_T, gamma, N, steps")->required();
  sweep->add_option("--values", values, "grid values")->required();
  sweep->add_option("--seeds", n_seeds, "seeds per grid point");
  CLI::App* gradcheck = app.add_subcommand("gradcheck", "run the gradient/adjoint validation suite");
  add_common(gradcheck);
  gradcheck->add_option("--probes", probes, "probes per component");
  CLI::App* oracle = app.add_subcommand("oracle", "emit oracle-side report for the config");
  add_common(oracle);

  CLI11_PARSE(app, argc, argv);

  try {
    if (sample->parsed()) {
      dtm::RunConfig cfg = load_config(config_path, out_dir, seed, seed_set, "unguided");
      const auto out = dtm::run_solve(cfg);
      print_metrics(out.metrics);
    } else if (solve->parsed()) {
      dtm::RunConfig cfg = load_config(config_path, out_dir, seed, seed_set, method);
      const auto out = dtm::run_solve(cfg);
      print_metrics(out.metrics);
      if (out.recovered_kernel) {
        std::cout << "kernel=[";
        for (std::size_t i = 0; i < out.recovered_kernel->taps.size(); ++i)
          std::cout << out.recovered_kernel->taps[i]
                    << (i + 1 < out.recovered_kernel->taps.size() ? " " : "");
        std::cout << "]\n";
      }
    } else if (sweep->parsed()) {
      dtm::RunConfig cfg = load_config(config_path, out_dir, seed, seed_set, method);
      dtm::make_directories(cfg.out_dir);
      const std::string csv = cfg.out_dir + "/sweep.csv";
      dtm::run_sweep(cfg, param, values, n_seeds, csv);
      std::cout << "wrote " << csv << "\n";
    } else if (gradcheck->parsed()) {
      dtm::RunConfig cfg;
      if (!config_path.empty()) cfg = dtm::parse_config_file(config_path);
      if (seed_set) cfg.seed = seed;
      const std::string dir = !out_dir.empty() ? out_dir : (cfg.out_dir.empty() ? "out" : cfg.out_dir);
      dtm::make_directories(dir);
      const auto rows = dtm::run_gradcheck(cfg.seed, probes, dir + "/validation.csv");
      int failures = 0;
      for (const auto& r : rows)
        if (!r.pass) ++failures;
      std::cout << rows.size() << " checks, " << failures << " failures; wrote " << dir
                << "/validation.csv\n";
      return failures == 0 ? 0 : 1;
    } else if (oracle->parsed()) {
      dtm::RunConfig cfg = load_config(config_path, out_dir, seed, seed_set, method);
      dtm::make_directories(cfg.out_dir);
      const std::string csv = cfg.out_dir + "/oracle_report.csv";
      dtm::run_oracle_report(cfg, csv);
      std::cout << "wrote " << csv << "\n";
    }
  } catch (const dtm::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
