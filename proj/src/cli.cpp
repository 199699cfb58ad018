#include "dcharge/cli.hpp"

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dcharge/config.hpp"
#include "dcharge/dagger.hpp"
#include "dcharge/errors.hpp"
#include "dcharge/evaluation.hpp"

namespace dcharge {

namespace fs = std::filesystem;

namespace {

struct Common {
  std::string config;
  std::string out = "out";
  std::optional<std::uint64_t> seed;
  int jobs = 1;
  bool quiet = false;
};

struct SimulateArgs {
  std::string policy = "expert";
  std::string scenario = "paper";
};

struct TrainArgs {
  std::string mode;
  std::optional<int> episodes;
  std::optional<int> episodes_per_iter;
  std::optional<int> iters;
  double scale = 1.0;
  bool resume = false;
};

struct EvaluateArgs {
  std::optional<int> episodes;
  std::vector<std::string> policies;
  bool raw = false;
};

struct BenchArgs {
  std::vector<int> horizons{1, 2, 4, 8, 16};
  std::string policy;
  int states = 50;
};

RunConfig load_config(const Common& c) {
  if (c.config.empty()) {
    RunConfig cfg;
    cfg.validate();
    return cfg;
  }
  return load_run_config(c.config);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << text;
}

EvalSetup eval_setup(const RunConfig& cfg, int jobs) {
  EvalSetup s;
  s.sampling = cfg.sampling;
  s.expert = cfg.expert;
  s.n_w = cfg.policy.n_w;
  s.jobs = jobs;
  return s;
}

std::function<void(const std::string&)> logger(const Common& c, std::ostream& err) {
  if (c.quiet) return {};
  return [&err](const std::string& msg) { err << msg << '\n'; };
}

int cmd_simulate(const Common& c, const SimulateArgs& a, std::ostream& out) {
  RunConfig cfg = load_config(c);
  const std::uint64_t seed = c.seed.value_or(cfg.evaluation.seed);
  EpisodeSpec scenario;
  if (a.scenario == "paper") {
    scenario = showcase_scenario(cfg.battery);
    scenario.ts = cfg.expert.ts;
    scenario.seed = seed;
  } else {
    scenario = sample_episode_spec(episode_seed(seed, 0), cfg.sampling);
  }
  std::optional<PolicyModel> model;
  std::string name = "expert";
  if (a.policy != "expert") {
    model = PolicyModel::load(a.policy);
    name = fs::path(a.policy).stem().string();
  }
  EvalSetup setup = eval_setup(cfg, c.jobs);
  if (model) setup.n_w = model->architecture().n_w;
  ScenarioTrace trace = single_scenario_trace(model ? &*model : nullptr, scenario, setup);

  fs::create_directories(c.out);
  const fs::path expert_csv = fs::path(c.out) / ("trace_" + a.scenario + "_expert.csv");
  write_trace_csv(expert_csv, trace.expert, scenario.ts);
  out << "wrote " << expert_csv.string() << " (" << trace.expert.trajectory.size() << " steps)\n";
  if (model) {
    const fs::path policy_csv = fs::path(c.out) / ("trace_" + a.scenario + "_" + name + ".csv");
    write_trace_csv(policy_csv, trace.policy, scenario.ts);
    out << "wrote " << policy_csv.string() << " (" << trace.policy.trajectory.size() << " steps)\n";
  }
  return 0;
}

int cmd_train(const Common& c, const TrainArgs& a, std::ostream& out, std::ostream& err) {
  RunConfig cfg = load_config(c);
  apply_scale(cfg, a.scale);
  if (c.seed) cfg.dagger.seed = *c.seed;
  if (a.iters) cfg.dagger.n_iterations = *a.iters;
  if (a.mode == "dagger") {
    if (a.episodes) cfg.dagger.episodes_initial = *a.episodes;
    if (a.episodes_per_iter) cfg.dagger.episodes_per_iter = *a.episodes_per_iter;
  } else if (a.episodes) {
    cfg.bc_episodes = *a.episodes;
  }
  cfg.validate();

  PipelineSetup setup;
  setup.sampling = cfg.sampling;
  setup.expert = cfg.expert;
  setup.architecture = cfg.policy;
  setup.train = cfg.train;
  setup.jobs = c.jobs;
  setup.out_dir = c.out;
  setup.resume = a.resume;
  setup.log = logger(c, err);

  fs::create_directories(c.out);
  write_text(fs::path(c.out) / ("config_" + a.mode + ".json"), to_json(cfg).dump(2) + "\n");

  PipelineResult result = a.mode == "dagger"
                              ? run_dagger(cfg.dagger, setup)
                              : run_behavioral_cloning(cfg.effective_bc_episodes(), cfg.dagger.seed, setup);
  const IterationReport& last = result.reports.back();
  out << a.mode << ": " << result.reports.size() << " stage(s), " << result.dataset.size() << " rows, "
      << "validation loss " << (last.validation_loss.empty() ? 0.0 : last.validation_loss[last.best_epoch])
      << " A^2\n";
  return 0;
}

int cmd_evaluate(const Common& c, const EvaluateArgs& a, std::ostream& out) {
  RunConfig cfg = load_config(c);
  const int episodes = a.episodes.value_or(cfg.evaluation.episodes);
  if (episodes < 1) throw ConfigError("--episodes must be >= 1");
  const std::uint64_t seed = c.seed.value_or(cfg.evaluation.seed);

  std::vector<std::pair<std::string, fs::path>> entries;
  for (const std::string& spec : a.policies) {
    auto eq = spec.find('=');
    if (eq == std::string::npos)
      entries.emplace_back(fs::path(spec).stem().string(), spec);
    else
      entries.emplace_back(spec.substr(0, eq), spec.substr(eq + 1));
  }
  if (a.policies.empty()) {
    for (auto [name, file] : {std::pair{"dagger", "policy_final.ckpt"}, std::pair{"bc", "policy_bc.ckpt"}})
      if (fs::exists(fs::path(c.out) / file)) entries.emplace_back(name, fs::path(c.out) / file);
  }

  std::vector<PolicyModel> models;
  models.reserve(entries.size());
  for (const auto& e : entries) models.push_back(PolicyModel::load(e.second));
  std::vector<NamedPolicy> policies{{"expert", nullptr}};
  for (std::size_t i = 0; i < entries.size(); ++i) policies.push_back({entries[i].first, &models[i]});

  EvalReport report = evaluate_policies(policies, eval_setup(cfg, c.jobs), episodes, seed);
  fs::create_directories(c.out);
  write_text(fs::path(c.out) / "eval_report.json", eval_report_to_json(report, a.raw) + "\n");
  for (const PolicyEvaluation& p : report.policies)
    write_histogram_csv(fs::path(c.out) / ("hist_" + p.name + ".csv"), p.current_error);

  out << std::left << std::setw(10) << "policy" << std::setw(8) << "steps" << std::setw(12) << "err_mean"
      << std::setw(12) << "err_std" << std::setw(10) << "Tc_viol" << std::setw(12) << "Tc_exc_mean" << std::setw(10)
      << "V_viol" << '\n';
  for (const PolicyEvaluation& p : report.policies)
    out << std::left << std::setw(10) << p.name << std::setw(8) << p.steps << std::setw(12) << p.current_error.mean
        << std::setw(12) << p.current_error.stddev << std::setw(10) << p.temp_core.count << std::setw(12)
        << p.temp_core.mean << std::setw(10) << p.voltage.count << '\n';
  return 0;
}

int cmd_bench(const Common& c, const BenchArgs& a, std::ostream& out) {
  RunConfig cfg = load_config(c);
  if (a.states < 1) throw ConfigError("--states must be >= 1");
  for (int h : a.horizons)
    if (h < 1) throw ConfigError("--horizons entries must be >= 1");
  fs::path ckpt = a.policy.empty() ? fs::path(c.out) / "policy_final.ckpt" : fs::path(a.policy);
  PolicyModel model = (!a.policy.empty() || fs::exists(ckpt)) ? PolicyModel::load(ckpt) : PolicyModel(cfg.policy, 0);
  EvalSetup setup = eval_setup(cfg, 1);
  setup.n_w = model.architecture().n_w;
  auto rows = bench_timing(a.horizons, model, a.states, c.seed.value_or(cfg.evaluation.seed), setup);

  fs::create_directories(c.out);
  write_text(fs::path(c.out) / "timing.json", timing_to_json(rows) + "\n");
  write_timing_csv(fs::path(c.out) / "timing.csv", rows);
  out << std::left << std::setw(8) << "method" << std::setw(9) << "horizon" << std::setw(14) << "mean_ms"
      << std::setw(14) << "std_ms" << "median_ms\n";
  for (const TimingRow& r : rows)
    out << std::left << std::setw(8) << r.method << std::setw(9) << r.horizon << std::setw(14) << r.mean_s * 1e3
        << std::setw(14) << r.stddev_s * 1e3 << r.median_s * 1e3 << '\n';
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Battery charging: MPC expert, DAGGER and behavioural cloning", "dcharge"};
  app.require_subcommand(1);
  app.fallthrough();

  Common common;
  app.add_option("--config", common.config, "JSON run configuration");
  app.add_option("--out", common.out, "Output directory")->capture_default_str();
  app.add_option("--seed", common.seed, "Master seed");
  app.add_option("--jobs", common.jobs, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();
  app.add_flag("--quiet", common.quiet, "Suppress progress messages");

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Closed-loop trace of one scenario");
  simulate->add_option("--policy", sim.policy, "\"expert\" or a checkpoint path")->capture_default_str();
  simulate->add_option("--scenario", sim.scenario, "paper or random")
      ->check(CLI::IsMember({"paper", "random"}))
      ->capture_default_str();

  TrainArgs tr;
  auto* train = app.add_subcommand("train", "Train a policy by DAGGER or behavioural cloning");
  train->add_option("mode", tr.mode, "bc or dagger")->required()->check(CLI::IsMember({"bc", "dagger"}));
  train->add_option("--episodes", tr.episodes, "bc: total episodes; dagger: episodes in D_0")
      ->check(CLI::PositiveNumber);
  train->add_option("--episodes-per-iter", tr.episodes_per_iter, "dagger: episodes per iteration")
      ->check(CLI::PositiveNumber);
  train->add_option("--iters", tr.iters, "DAGGER iterations")->check(CLI::NonNegativeNumber);
  train->add_option("--scale", tr.scale, "Desk-scale multiplier in (0, 1]")
      ->check(CLI::Range(1e-6, 1.0))
      ->capture_default_str();
  train->add_flag("--resume", tr.resume, "Continue from saved iteration artifacts");

  EvaluateArgs ev;
  auto* evaluate = app.add_subcommand("evaluate", "Compare policies against the expert on held-out episodes");
  evaluate->add_option("--episodes", ev.episodes, "Evaluation episodes (>= 1)");
  evaluate->add_option("--policy", ev.policies,
                       "NAME=CHECKPOINT, repeatable; default: policy_final.ckpt and policy_bc.ckpt under --out");
  evaluate->add_flag("--raw", ev.raw, "Include per-step errors and exceedances in the report");

  BenchArgs be;
  auto* bench = app.add_subcommand("bench", "Per-call timing of the expert and the policy");
  bench->add_option("--horizons", be.horizons, "Comma-separated horizons")->delimiter(',')->capture_default_str();
  bench->add_option("--policy", be.policy, "Checkpoint (default: policy_final.ckpt under --out)");
  bench->add_option("--states", be.states, "Probe states")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*simulate) return cmd_simulate(common, sim, out);
    if (*train) return cmd_train(common, tr, out, err);
    if (*evaluate) return cmd_evaluate(common, ev, out);
    if (*bench) return cmd_bench(common, be, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace dcharge
