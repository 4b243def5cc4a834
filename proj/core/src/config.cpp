#include "dtm/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace dtm {

using nlohmann::json;

namespace {

const json* find(const json& j, const std::string& key) {
  auto it = j.find(key);
  return it == j.end() ? nullptr : &*it;
}

double get_num(const json& j, const std::string& path, double fallback) {
  if (!j.is_number()) throw ConfigError(path, "expected a number");
  (void)fallback;
  return j.get<double>();
}

Weight parse_weight(const json& j, const std::string& path) {
  if (j.is_string()) {
    if (j.get<std::string>() == "ddim") return Weight::ddim();
    throw ConfigError(path, "expected a number or the string \"ddim\"");
  }
  if (j.is_number()) {
    const double v = j.get<double>();
    if (v < 0.0) throw ConfigError(path, "weights must be >= 0");
    return Weight::fixed(v);
  }
  throw ConfigError(path, "expected a number or the string \"ddim\"");
}

Vec parse_vec(const json& j, const std::string& path) {
  if (!j.is_array()) throw ConfigError(path, "expected an array of numbers");
  Vec out;
  out.reserve(j.size());
  for (const auto& v : j) {
    if (!v.is_number()) throw ConfigError(path, "expected an array of numbers");
    out.push_back(v.get<double>());
  }
  return out;
}

void parse_guidance(const json& j, GuidanceConfig& g) {
  if (const auto* v = find(j, "preset")) apply_guidance_preset(g, v->get<std::string>());
  if (const auto* v = find(j, "N")) g.n_inner = static_cast<int>(get_num(*v, "guidance.N", 0));
  if (const auto* v = find(j, "gamma")) g.gamma = get_num(*v, "guidance.gamma", 0);
  if (const auto* v = find(j, "w_T")) g.w_T = get_num(*v, "guidance.w_T", 0);
  if (const auto* v = find(j, "w_s")) g.w_s = parse_weight(*v, "guidance.w_s");
  if (const auto* v = find(j, "w_c")) g.w_c = parse_weight(*v, "guidance.w_c");
  if (const auto* v = find(j, "eta")) g.eta = get_num(*v, "guidance.eta", 0);
  if (const auto* v = find(j, "steps")) g.n_steps = static_cast<int>(get_num(*v, "guidance.steps", 0));
  if (const auto* v = find(j, "start")) g.start = static_cast<int>(get_num(*v, "guidance.start", 0));
  if (const auto* v = find(j, "lr")) g.lr = get_num(*v, "guidance.lr", 0);
  if (const auto* v = find(j, "kernel_lr")) g.kernel_lr = get_num(*v, "guidance.kernel_lr", 0);
  if (const auto* v = find(j, "lr_decay")) {
    const std::string s = v->get<std::string>();
    if (s == "linear")
      g.lr_linear_decay = true;
    else if (s == "none")
      g.lr_linear_decay = false;
    else
      throw ConfigError("guidance.lr_decay", "expected \"linear\" or \"none\"");
  }
}

void parse_prior(const json& j, PriorSpec& p) {
  if (const auto* v = find(j, "kind")) p.kind = v->get<std::string>();
  if (const auto* v = find(j, "dim")) p.dim = static_cast<std::size_t>(get_num(*v, "prior.dim", 0));
  if (const auto* v = find(j, "preset")) p.preset = v->get<std::string>();
  if (const auto* v = find(j, "weights")) p.weights = parse_vec(*v, "prior.weights");
  if (const auto* v = find(j, "variances")) p.variances = parse_vec(*v, "prior.variances");
  if (const auto* v = find(j, "means")) {
    if (!v->is_array()) throw ConfigError("prior.means", "expected an array of arrays");
    for (std::size_t k = 0; k < v->size(); ++k)
      p.means.push_back(parse_vec((*v)[k], "prior.means[" + std::to_string(k) + "]"));
  }
  if (const auto* v = find(j, "model_file")) p.model_file = v->get<std::string>();
  if (const auto* v = find(j, "hidden"))
    p.hidden = static_cast<std::size_t>(get_num(*v, "prior.hidden", 0));
}

void parse_schedule(const json& j, ScheduleSpec& s) {
  if (const auto* v = find(j, "kind")) {
    try {
      s.kind = schedule_kind_from_string(v->get<std::string>());
    } catch (const std::exception&) {
      throw ConfigError("schedule.kind", "expected \"linear-beta\" or \"cosine\"");
    }
  }
  if (const auto* v = find(j, "T")) s.T = static_cast<int>(get_num(*v, "schedule.T", 0));
  if (const auto* v = find(j, "beta_min")) s.beta_min = get_num(*v, "schedule.beta_min", 0);
  if (const auto* v = find(j, "beta_max")) s.beta_max = get_num(*v, "schedule.beta_max", 0);
}

void parse_operator(const json& j, OperatorSpec& o) {
  if (const auto* v = find(j, "kind")) o.kind = v->get<std::string>();
  if (const auto* v = find(j, "mask")) o.mask = parse_vec(*v, "problem.operator.mask");
  if (const auto* v = find(j, "keep_prob")) o.keep_prob = get_num(*v, "problem.operator.keep_prob", 0);
  if (const auto* v = find(j, "mask_seed"))
    o.mask_seed = static_cast<std::uint64_t>(get_num(*v, "problem.operator.mask_seed", 0));
  if (const auto* v = find(j, "factor"))
    o.factor = static_cast<std::size_t>(get_num(*v, "problem.operator.factor", 0));
  if (const auto* v = find(j, "kernel"))
    o.kernel_taps = parse_vec(*v, "problem.operator.kernel");
  if (const auto* v = find(j, "kernel_length"))
    o.kernel_length = static_cast<std::size_t>(get_num(*v, "problem.operator.kernel_length", 0));
  if (const auto* v = find(j, "kernel_std"))
    o.kernel_std = get_num(*v, "problem.operator.kernel_std", 0);
  if (const auto* v = find(j, "saturation"))
    o.saturation = get_num(*v, "problem.operator.saturation", 0);
}

void parse_problem(const json& j, ProblemConfig& p) {
  if (const auto* v = find(j, "operator")) {
    if (v->is_string())
      p.op.kind = v->get<std::string>();
    else
      parse_operator(*v, p.op);
  }
  if (const auto* v = find(j, "sigma_y")) p.sigma_y = get_num(*v, "problem.sigma_y", 0);
  if (const auto* v = find(j, "truth_seed"))
    p.truth_seed = static_cast<std::uint64_t>(get_num(*v, "problem.truth_seed", 0));
  if (const auto* v = find(j, "blind")) p.blind = v->get<bool>();
  if (const auto* v = find(j, "kernel_init")) p.kernel_init = v->get<std::string>();
}

}  // namespace

RunConfig parse_config_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const std::exception& e) {
    throw ConfigError("(root)", std::string("invalid JSON: ") + e.what());
  }
  RunConfig cfg;
  const auto* ver = find(j, "schema_version");
  if (!ver) throw ConfigError("schema_version", "required field missing");
  cfg.schema_version = ver->get<int>();
  if (cfg.schema_version != 1) throw ConfigError("schema_version", "unsupported version");

  if (const auto* v = find(j, "seed")) cfg.seed = static_cast<std::uint64_t>(get_num(*v, "seed", 0));
  if (const auto* v = find(j, "out_dir")) cfg.out_dir = v->get<std::string>();
  if (const auto* v = find(j, "method")) cfg.method = v->get<std::string>();
  if (const auto* v = find(j, "n_trajectories"))
    cfg.n_trajectories = static_cast<int>(get_num(*v, "n_trajectories", 0));
  if (const auto* v = find(j, "n_threads")) cfg.n_threads = static_cast<int>(get_num(*v, "n_threads", 0));
  if (const auto* v = find(j, "trace_controls")) cfg.trace_controls = v->get<bool>();
  if (const auto* v = find(j, "dps_alpha")) cfg.dps_alpha = get_num(*v, "dps_alpha", 0);
  if (const auto* v = find(j, "linear_cg_nonlog")) cfg.linear_cg_nonlog = v->get<bool>();
  if (const auto* v = find(j, "prior")) parse_prior(*v, cfg.prior);
  if (const auto* v = find(j, "schedule")) parse_schedule(*v, cfg.schedule);
  if (const auto* v = find(j, "problem")) parse_problem(*v, cfg.problem);
  if (const auto* v = find(j, "guidance")) parse_guidance(*v, cfg.guidance);

  validate_config(cfg);
  return cfg;
}

RunConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("(file)", "cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_json(ss.str());
}

std::string config_to_json(const RunConfig& cfg) {
  json j;
  j["schema_version"] = cfg.schema_version;
  j["seed"] = cfg.seed;
  j["out_dir"] = cfg.out_dir;
  j["method"] = cfg.method;
  j["n_trajectories"] = cfg.n_trajectories;
  j["prior"] = {{"kind", cfg.prior.kind}, {"dim", cfg.prior.dim}};
  if (!cfg.prior.preset.empty()) j["prior"]["preset"] = cfg.prior.preset;
  j["schedule"] = {{"kind", to_string(cfg.schedule.kind)},
                   {"T", cfg.schedule.T},
                   {"beta_min", cfg.schedule.beta_min},
                   {"beta_max", cfg.schedule.beta_max}};
  j["problem"] = {{"operator", {{"kind", cfg.problem.op.kind}}},
                  {"sigma_y", cfg.problem.sigma_y},
                  {"truth_seed", cfg.problem.truth_seed},
                  {"blind", cfg.problem.blind}};
  json g;
  g["N"] = cfg.guidance.n_inner;
  g["gamma"] = cfg.guidance.gamma;
  g["w_T"] = cfg.guidance.w_T;
  g["w_s"] = cfg.guidance.w_s.use_ddim ? json("ddim") : json(cfg.guidance.w_s.value);
  g["w_c"] = cfg.guidance.w_c.use_ddim ? json("ddim") : json(cfg.guidance.w_c.value);
  g["eta"] = cfg.guidance.eta;
  g["steps"] = cfg.guidance.n_steps;
  g["start"] = cfg.guidance.start;
  g["lr"] = cfg.guidance.lr;
  g["lr_decay"] = cfg.guidance.lr_linear_decay ? "linear" : "none";
  j["guidance"] = g;
  return j.dump(2);
}

std::vector<std::string> preset_names() {
  return {"sr4x_ffhq",    "sr4x_imagenet",    "inpaint_ffhq", "inpaint_imagenet",
          "nld_ffhq",     "nld_imagenet",     "bid_gaussian", "bid_motion"};
}

// Per-task tuples (N, gamma, eta, start, w_T, w_s, w_c); lr fixed at 0.01 with
// linear decay, 50 sampling steps except the blind presets which use 200.
void apply_guidance_preset(GuidanceConfig& g, const std::string& name) {
  auto set = [&](int N, double gamma, double eta, int start, double wT, bool ddim_weights,
                 int steps) {
    g.n_inner = N;
    g.gamma = gamma;
    g.eta = eta;
    g.start = start;
    g.w_T = wT;
    g.w_s = ddim_weights ? Weight::ddim() : Weight::fixed(0.0);
    g.w_c = ddim_weights ? Weight::ddim() : Weight::fixed(0.0);
    g.n_steps = steps;
    g.lr = 0.01;
    g.lr_linear_decay = true;
    g.kernel_lr = 0.01;
  };
  if (name == "sr4x_ffhq")
    set(5, 1.0, 0.7, 400, 50.0, true, 50);
  else if (name == "sr4x_imagenet")
    set(2, 2.0, 0.1, 600, 50.0, true, 50);
  else if (name == "inpaint_ffhq")
    set(2, 4.0, 0.2, 500, 1.0, false, 50);
  else if (name == "inpaint_imagenet")
    set(2, 4.0, 0.0, 600, 50.0, true, 50);
  else if (name == "nld_ffhq")
    set(5, 5.0, 0.1, 400, 1.0, false, 50);
  else if (name == "nld_imagenet")
    set(2, 4.0, 0.1, 600, 50.0, true, 50);
  else if (name == "bid_gaussian" || name == "bid_motion")
    set(15, 1.0, 0.7, 1000, 50.0, true, 200);
  else
    throw ConfigError("guidance.preset", "unknown preset '" + name + "'");
}

void signal64_gmm_params(std::vector<double>& weights, std::vector<Vec>& means,
                         std::vector<double>& variances) {
  const std::size_t d = 64;
  Vec square(d), saw(d), spikes(d, 0.0), steps(d);
  for (std::size_t i = 0; i < d; ++i) {
    square[i] = ((i / 8) % 2 == 0) ? 1.0 : -1.0;
    saw[i] = static_cast<double>(i % 16) / 8.0 - 1.0;
    steps[i] = (i < 20) ? 1.2 : (i < 44 ? -0.6 : 0.9);
  }
  spikes[5] = 2.0;
  spikes[21] = -2.0;
  spikes[38] = 1.5;
  spikes[54] = -1.5;
  weights = {0.25, 0.25, 0.25, 0.25};
  means = {square, saw, spikes, steps};
  variances = {0.05, 0.05, 0.05, 0.05};
}

void validate_config(const RunConfig& cfg) {
  if (cfg.method != "ndtm" && cfg.method != "rb_mod" && cfg.method != "dps" &&
      cfg.method != "linear_cg" && cfg.method != "unguided")
    throw ConfigError("method", "unknown method '" + cfg.method + "'");
  if (cfg.n_trajectories < 1) throw ConfigError("n_trajectories", "must be >= 1");

  const auto& p = cfg.prior;
  if (p.kind != "standard_normal" && p.kind != "gmm" && p.kind != "mlp")
    throw ConfigError("prior.kind", "unknown prior kind '" + p.kind + "'");
  if (p.dim == 0) throw ConfigError("prior.dim", "must be >= 1");
  if (p.kind == "gmm" && p.preset.empty()) {
    if (p.weights.empty()) throw ConfigError("prior.weights", "required for gmm prior");
    if (p.weights.size() != p.means.size() || p.weights.size() != p.variances.size())
      throw ConfigError("prior.means", "weights/means/variances must have equal length");
    for (const auto& m : p.means)
      if (m.size() != p.dim) throw ConfigError("prior.means", "component dim mismatch");
  }
  if (p.kind == "gmm" && !p.preset.empty() && p.preset != "signal64")
    throw ConfigError("prior.preset", "unknown gmm preset '" + p.preset + "'");

  const auto& s = cfg.schedule;
  if (s.T < 2) throw ConfigError("schedule.T", "must be >= 2");
  if (!(s.beta_min > 0.0 && s.beta_min < s.beta_max && s.beta_max < 1.0))
    throw ConfigError("schedule.beta_min", "need 0 < beta_min < beta_max < 1");

  const auto& o = cfg.problem.op;
  if (o.kind != "none" && o.kind != "identity" && o.kind != "mask" && o.kind != "downsample" &&
      o.kind != "circular_conv" && o.kind != "nonlinear_blur")
    throw ConfigError("problem.operator.kind", "unknown operator kind '" + o.kind + "'");
  if (o.kind == "downsample" && (o.factor == 0 || p.dim % o.factor != 0))
    throw ConfigError("problem.operator.factor", "dim must be divisible by factor");
  if ((o.kind == "circular_conv" || o.kind == "nonlinear_blur") && o.kernel_taps.empty() &&
      (o.kernel_length % 2 == 0 || o.kernel_length == 0 || o.kernel_length > p.dim))
    throw ConfigError("problem.operator.kernel_length", "must be odd and <= dim");
  if (cfg.problem.sigma_y < 0.0) throw ConfigError("problem.sigma_y", "must be >= 0");
  if (cfg.problem.blind && o.kind != "circular_conv")
    throw ConfigError("problem.blind", "blind inference requires the circular_conv operator");
  if (cfg.problem.kernel_init != "uniform" && cfg.problem.kernel_init != "delta")
    throw ConfigError("problem.kernel_init", "expected \"uniform\" or \"delta\"");

  const auto& g = cfg.guidance;
  if (g.n_inner < 0) throw ConfigError("guidance.N", "must be >= 0");
  if (g.gamma <= 0.0) throw ConfigError("guidance.gamma", "must be > 0");
  if (g.w_T < 0.0) throw ConfigError("guidance.w_T", "must be >= 0");
  if (!(g.eta >= 0.0 && g.eta <= 1.0)) throw ConfigError("guidance.eta", "must be in [0, 1]");
  if (g.lr <= 0.0) throw ConfigError("guidance.lr", "must be > 0");
  if (g.n_steps < 1) throw ConfigError("guidance.steps", "must be >= 1");
  const int start = g.start > 0 ? g.start : s.T;
  if (g.n_steps > start || start > s.T)
    throw ConfigError("guidance.steps", "need steps <= start <= schedule.T");

  if (cfg.method == "linear_cg") {
    if (p.kind != "standard_normal")
      throw ConfigError("method", "linear_cg requires the standard_normal prior");
    if (o.kind != "identity" && o.kind != "mask")
      throw ConfigError("method", "linear_cg requires an identity or mask operator");
  }
  if ((cfg.method == "dps" || cfg.method == "linear_cg") && o.kind == "none")
    throw ConfigError("problem.operator.kind", "guided method requires an observation operator");
}

}  // namespace dtm
