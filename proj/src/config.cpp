#include "dcharge/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <string>

#include "dcharge/errors.hpp"

namespace dcharge {

namespace {

using json = nlohmann::json;

// Strict reader over one JSON object: every key must be consumed.
class Section {
 public:
  Section(const json& doc, std::string name) : doc_(doc), name_(std::move(name)) {
    if (!doc_.is_object()) throw ConfigError(name_ + ": expected a JSON object");
  }

  template <typename T>
  bool opt(const char* key, T& out) {
    if (!doc_.contains(key)) return false;
    seen_.insert(key);
    try {
      out = doc_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(name_ + "." + key + ": " + e.what());
    }
    return true;
  }

  template <typename T>
  void req(const char* key, T& out) {
    if (!opt(key, out)) throw ConfigError(name_ + ": missing required key '" + key + "'");
  }

  const json* sub(const char* key) {
    if (!doc_.contains(key)) return nullptr;
    seen_.insert(key);
    return &doc_.at(key);
  }

  std::string child(const char* key) const { return name_ + "." + key; }

  void finish() const {
    for (const auto& item : doc_.items())
      if (!seen_.count(item.key())) throw ConfigError(name_ + ": unknown key '" + item.key() + "'");
  }

 private:
  const json& doc_;
  std::string name_;
  std::set<std::string> seen_;
};

void read_bounds(const json& doc, Bounds& b) {
  Section s(doc, "expert.bounds");
  s.opt("i_min", b.i_min);
  s.opt("i_max", b.i_max);
  s.opt("soc_min", b.soc_min);
  s.opt("soc_max", b.soc_max);
  s.opt("t_max", b.t_max);
  s.opt("v_max", b.v_max);
  s.finish();
}

void read_noise(const json& doc, const std::string& name, NoiseSpec& n) {
  Section s(doc, name);
  s.opt("sigma_v", n.sigma_v);
  s.opt("sigma_t", n.sigma_t);
  s.opt("sigma_i", n.sigma_i);
  s.finish();
}

void read_sampling(const json& doc, SamplingConfig& c) {
  Section s(doc, "episode");
  s.opt("soc0_min", c.soc0_min);
  s.opt("soc0_max", c.soc0_max);
  s.opt("temp_min", c.temp_min);
  s.opt("temp_max", c.temp_max);
  s.opt("soc_ref_min", c.soc_ref_min);
  s.opt("soc_ref_max", c.soc_ref_max);
  s.opt("capacity_min", c.capacity_min);
  s.opt("capacity_max", c.capacity_max);
  s.opt("r_sei_min", c.r_sei_min);
  s.opt("r_sei_max", c.r_sei_max);
  s.opt("couple_temperatures", c.couple_temperatures);
  s.opt("n_steps", c.n_steps);
  s.opt("rest_steps", c.rest_steps);
  s.opt("ts", c.ts);
  s.finish();
}

void read_policy(const json& doc, Architecture& a) {
  Section s(doc, "policy");
  s.opt("n_w", a.n_w);
  s.opt("lstm_sizes", a.lstm_sizes);
  s.opt("dense_sizes", a.dense_sizes);
  s.finish();
}

void read_train(const json& doc, TrainConfig& t) {
  Section s(doc, "train");
  s.opt("learning_rate", t.learning_rate);
  s.opt("beta1", t.beta1);
  s.opt("beta2", t.beta2);
  s.opt("epsilon", t.epsilon);
  s.opt("batch_size", t.batch_size);
  s.opt("epochs", t.epochs);
  s.opt("patience", t.patience);
  s.opt("validation_fraction", t.validation_fraction);
  s.opt("seed", t.seed);
  s.opt("fit_preprocess", t.fit_preprocess);
  if (const json* n = s.sub("noise")) read_noise(*n, "train.noise", t.noise);
  s.finish();
}

void read_dagger(const json& doc, DaggerConfig& d, int& bc_episodes) {
  Section s(doc, "dagger");
  s.opt("n_iterations", d.n_iterations);
  s.opt("beta0", d.beta0);
  s.opt("beta_decay", d.beta_decay);
  s.opt("episodes_initial", d.episodes_initial);
  s.opt("episodes_per_iter", d.episodes_per_iter);
  s.opt("seed", d.seed);
  s.opt("warm_start_training", d.warm_start_training);
  s.opt("refit_preprocess", d.refit_preprocess);
  s.opt("plateau_exit", d.plateau_exit);
  s.opt("plateau_threshold", d.plateau_threshold);
  s.opt("bc_episodes", bc_episodes);
  s.finish();
}

void read_evaluation(const json& doc, EvaluationConfig& e) {
  Section s(doc, "evaluation");
  s.opt("episodes", e.episodes);
  s.opt("seed", e.seed);
  s.finish();
}

int scaled_count(int n, double scale) {
  return std::max(1, static_cast<int>(std::ceil(n * scale - 1e-9)));
}

}  // namespace

BatteryParams parse_battery_params(const json& doc) {
  BatteryParams p;
  Section s(doc, "battery");
  s.req("capacity_ah", p.capacity_ah);
  s.req("r_sei_ohm", p.r_sei_ohm);
  s.req("c_core", p.c_core);
  s.req("c_surf", p.c_surf);
  s.req("r_core_surf", p.r_core_surf);
  s.req("r_surf_env", p.r_surf_env);
  s.req("t_env", p.t_env);
  s.opt("ocv_p_coeffs", p.ocv_p_coeffs);
  s.opt("ocv_n_coeffs", p.ocv_n_coeffs);
  s.opt("eta_gain_p", p.eta_gain_p);
  s.opt("eta_gain_n", p.eta_gain_n);
  s.opt("eta_current_scale", p.eta_current_scale);
  s.finish();
  p.validate();
  return p;
}

ExpertConfig parse_expert_config(const json& doc) {
  ExpertConfig c;
  Section s(doc, "expert");
  s.opt("horizon", c.horizon);
  s.opt("ts", c.ts);
  s.opt("q_soc", c.q_soc);
  s.opt("r", c.r);
  s.opt("penalty_weight", c.penalty_weight);
  s.opt("max_iterations", c.max_iterations);
  s.opt("fd_step", c.fd_step);
  s.opt("oracle_levels", c.oracle_levels);
  std::string solver;
  if (s.opt("solver", solver)) {
    if (solver == "smooth")
      c.solver = SolverKind::smooth;
    else if (solver == "grid-oracle")
      c.solver = SolverKind::grid_oracle;
    else
      throw ConfigError("expert.solver: expected \"smooth\" or \"grid-oracle\", got \"" + solver + "\"");
  }
  if (const json* b = s.sub("bounds")) read_bounds(*b, c.bounds);
  s.finish();
  c.validate();
  return c;
}

void RunConfig::validate() const {
  battery.validate();
  sampling.validate();
  expert.validate();
  policy.validate();
  train.validate();
  dagger.validate();
  if (sampling.rest_steps < policy.n_w)
    throw ConfigError("config: episode.rest_steps must be >= policy.n_w");
  if (evaluation.episodes < 1) throw ConfigError("config: evaluation.episodes must be >= 1");
  if (bc_episodes < 0) throw ConfigError("config: dagger.bc_episodes must be >= 0");
  if (std::abs(sampling.ts - expert.ts) > 1e-12)
    throw ConfigError("config: episode.ts and expert.ts must agree");
}

RunConfig parse_run_config(const json& doc) {
  RunConfig cfg;
  Section s(doc, "config");
  if (const json* b = s.sub("battery")) cfg.battery = parse_battery_params(*b);
  if (const json* e = s.sub("expert")) cfg.expert = parse_expert_config(*e);
  if (const json* e = s.sub("episode")) read_sampling(*e, cfg.sampling);
  if (const json* p = s.sub("policy")) read_policy(*p, cfg.policy);
  if (const json* t = s.sub("train")) read_train(*t, cfg.train);
  if (const json* d = s.sub("dagger")) read_dagger(*d, cfg.dagger, cfg.bc_episodes);
  if (const json* e = s.sub("evaluation")) read_evaluation(*e, cfg.evaluation);
  s.finish();
  cfg.sampling.base = cfg.battery;
  cfg.policy.i_min = cfg.expert.bounds.i_min;
  cfg.policy.i_max = cfg.expert.bounds.i_max;
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config file not found: " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return parse_run_config(doc);
}

json to_json(const BatteryParams& p) {
  return {{"capacity_ah", p.capacity_ah},     {"r_sei_ohm", p.r_sei_ohm},
          {"c_core", p.c_core},               {"c_surf", p.c_surf},
          {"r_core_surf", p.r_core_surf},     {"r_surf_env", p.r_surf_env},
          {"t_env", p.t_env},                 {"ocv_p_coeffs", p.ocv_p_coeffs},
          {"ocv_n_coeffs", p.ocv_n_coeffs},   {"eta_gain_p", p.eta_gain_p},
          {"eta_gain_n", p.eta_gain_n},       {"eta_current_scale", p.eta_current_scale}};
}

json to_json(const RunConfig& c) {
  json j;
  j["battery"] = to_json(c.battery);
  const Bounds& b = c.expert.bounds;
  j["expert"] = {{"horizon", c.expert.horizon},
                 {"ts", c.expert.ts},
                 {"q_soc", c.expert.q_soc},
                 {"r", c.expert.r},
                 {"penalty_weight", c.expert.penalty_weight},
                 {"max_iterations", c.expert.max_iterations},
                 {"fd_step", c.expert.fd_step},
                 {"oracle_levels", c.expert.oracle_levels},
                 {"solver", c.expert.solver == SolverKind::smooth ? "smooth" : "grid-oracle"},
                 {"bounds",
                  {{"i_min", b.i_min},
                   {"i_max", b.i_max},
                   {"soc_min", b.soc_min},
                   {"soc_max", b.soc_max},
                   {"t_max", b.t_max},
                   {"v_max", b.v_max}}}};
  const SamplingConfig& s = c.sampling;
  j["episode"] = {{"soc0_min", s.soc0_min},
                  {"soc0_max", s.soc0_max},
                  {"temp_min", s.temp_min},
                  {"temp_max", s.temp_max},
                  {"soc_ref_min", s.soc_ref_min},
                  {"soc_ref_max", s.soc_ref_max},
                  {"capacity_min", s.capacity_min},
                  {"capacity_max", s.capacity_max},
                  {"r_sei_min", s.r_sei_min},
                  {"r_sei_max", s.r_sei_max},
                  {"couple_temperatures", s.couple_temperatures},
                  {"n_steps", s.n_steps},
                  {"rest_steps", s.rest_steps},
                  {"ts", s.ts}};
  j["policy"] = {{"n_w", c.policy.n_w}, {"lstm_sizes", c.policy.lstm_sizes}, {"dense_sizes", c.policy.dense_sizes}};
  const TrainConfig& t = c.train;
  j["train"] = {{"learning_rate", t.learning_rate},
                {"beta1", t.beta1},
                {"beta2", t.beta2},
                {"epsilon", t.epsilon},
                {"batch_size", t.batch_size},
                {"epochs", t.epochs},
                {"patience", t.patience},
                {"validation_fraction", t.validation_fraction},
                {"seed", t.seed},
                {"fit_preprocess", t.fit_preprocess},
                {"noise", {{"sigma_v", t.noise.sigma_v}, {"sigma_t", t.noise.sigma_t}, {"sigma_i", t.noise.sigma_i}}}};
  const DaggerConfig& d = c.dagger;
  j["dagger"] = {{"n_iterations", d.n_iterations},
                 {"beta0", d.beta0},
                 {"beta_decay", d.beta_decay},
                 {"episodes_initial", d.episodes_initial},
                 {"episodes_per_iter", d.episodes_per_iter},
                 {"seed", d.seed},
                 {"warm_start_training", d.warm_start_training},
                 {"refit_preprocess", d.refit_preprocess},
                 {"plateau_exit", d.plateau_exit},
                 {"plateau_threshold", d.plateau_threshold},
                 {"bc_episodes", c.bc_episodes}};
  j["evaluation"] = {{"episodes", c.evaluation.episodes}, {"seed", c.evaluation.seed}};
  return j;
}

void apply_scale(RunConfig& cfg, double scale) {
  if (!(scale > 0.0)) throw ConfigError("scale must be > 0");
  if (scale >= 1.0) return;
  cfg.dagger.episodes_initial = scaled_count(cfg.dagger.episodes_initial, scale);
  cfg.dagger.episodes_per_iter = scaled_count(cfg.dagger.episodes_per_iter, scale);
  cfg.dagger.n_iterations = std::clamp(static_cast<int>(std::ceil(15.0 * scale - 1e-9)), 5, 15);
  if (cfg.bc_episodes > 0) cfg.bc_episodes = scaled_count(cfg.bc_episodes, scale);
  cfg.policy = cfg.policy.scaled(std::min(1.0, 5.0 * scale));
}

}  // namespace dcharge
