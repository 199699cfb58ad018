// Acceptance suite: one PASS/FAIL line per criterion.
//   acceptance [--out DIR] [--only 1,4,8] [--jobs N] [--reuse]

#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "dcharge/config.hpp"
#include "dcharge/dagger.hpp"
#include "dcharge/errors.hpp"
#include "dcharge/evaluation.hpp"

using namespace dcharge;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

struct Options {
  fs::path out = "acceptance_out";
  int jobs = 1;
  bool reuse = false;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

// 1. Simulator oracles.
Outcome simulator_oracles(const Options&) {
  Outcome o;
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst_soc = 0.0;
  for (int n = 0; n < 200; ++n) {
    BatteryParams p;
    p.capacity_ah = 5.5 + 2.5 * u(rng);
    const double i = -10.0 + 20.0 * u(rng);
    BatteryState s{u(rng), 300.0, 300.0, 0.0, false};
    BatteryState x = s;
    const int k = 1 + static_cast<int>(40 * u(rng));
    for (int j = 0; j < k; ++j) x = step(x, p, i, 10.0, SocLimit::free);
    const double expected = s.soc + k * i * 10.0 / (3600.0 * p.capacity_ah);
    worst_soc = std::max(worst_soc, std::abs(x.soc - expected) / std::max(std::abs(expected), 1e-300));
  }
  o.pass &= worst_soc <= 1e-12;

  BatteryParams p;
  const double i = 7.0;
  BatteryState s{0.5, p.t_env, p.t_env, 0.0, false};
  const double q = heat_generation(s, p, i);
  for (int k = 0; k < 3000; ++k) s = step(s, p, i, 10.0);
  const double ts_inf = p.t_env + q * p.r_surf_env;
  const double tc_inf = ts_inf + q * p.r_core_surf;
  const double dev = std::max(std::abs(s.t_surf - ts_inf), std::abs(s.t_core - tc_inf));
  o.pass &= dev <= 0.01;

  BatteryState rest{0.4, p.t_env, p.t_env, 0.0, false}, r = rest;
  for (int k = 0; k < 1000; ++k) r = step(r, p, 0.0, 10.0);
  const bool fixed = r.soc == rest.soc && r.t_core == rest.t_core && r.t_surf == rest.t_surf;
  o.pass &= fixed;
  o.detail = fmt("soc rel err %.2e (<=1e-12), steady-state dev %.2e K (<=0.01), zero-input fixed point %s",
                 worst_soc, dev, fixed ? "exact" : "drifts");
  return o;
}

// 2. MPC oracle equivalence.
Outcome mpc_oracle(const Options&) {
  Outcome o;
  std::mt19937_64 rng(202);
  std::uniform_real_distribution<double> soc(0.0, 1.0), temp(298.15, 313.15), ref(0.7, 1.0), cap(5.5, 8.0),
      rsei(0.014, 0.019);
  int instances = 0, ok = 0;
  double worst_excess = -1e300;
  for (int h : {1, 2}) {
    ExpertConfig c;
    c.horizon = h;
    for (int n = 0; n < 30; ++n) {
      BatteryParams p;
      p.capacity_ah = cap(rng);
      p.r_sei_ohm = rsei(rng);
      BatteryState s{soc(rng), temp(rng), temp(rng), 0.0, false};
      const double r = ref(rng);
      HorizonSolution smooth = solve_horizon(s, p, r, c);
      HorizonSolution grid = grid_oracle(s, p, r, c, 41);
      double cell = 0.0;
      for (int k = 0; k < h; ++k)
        for (double d : {-0.5, 0.5}) {
          std::vector<double> v = grid.currents;
          v[k] = std::clamp(v[k] + d, c.bounds.i_min, c.bounds.i_max);
          cell = std::max(cell, std::abs(augmented_cost(s, p, r, c, v) - grid.cost));
        }
      ++instances;
      ok += smooth.cost <= grid.cost + cell + 1e-12;
      worst_excess = std::max(worst_excess, smooth.cost - grid.cost - cell);
    }
  }
  o.pass &= instances >= 50 && ok == instances;

  BatteryParams p;
  ExpertConfig c;
  c.horizon = 1;
  const double a = c.ts / (3600.0 * p.capacity_ah);
  const double unconstrained = c.q_soc * a * (0.9 - 0.25) / (c.q_soc * a * a + c.r);
  const double got = solve_horizon(BatteryState{0.25, 298.15, 298.15, 0.0, false}, p, 0.9, c).currents[0];
  o.pass &= std::abs(unconstrained - 228.8) < 0.05 && got == 10.0;

  int interior_ok = 0;
  for (double gap : {0.005, 0.01, -0.01, 0.02}) {
    const double expected = std::clamp(c.q_soc * a * gap / (c.q_soc * a * a + c.r), -10.0, 10.0);
    const double i = solve_horizon(BatteryState{0.6, 298.15, 298.15, 0.0, false}, p, 0.6 + gap, c).currents[0];
    interior_ok += std::abs(i - expected) <= 1e-4 * std::max(1.0, std::abs(expected));
  }
  o.pass &= interior_ok == 4;
  o.detail = fmt("%d/%d instances within one grid cell (worst excess %.2e), H=1 clamp %.1f A -> %.1f A, interior "
                 "closed form %d/4",
                 ok, instances, worst_excess, unconstrained, got, interior_ok);
  return o;
}

// 3. Expert safety.
Outcome expert_safety(const Options& opt) {
  Outcome o;
  ExpertConfig c;
  std::vector<EpisodeSpec> specs;
  std::vector<std::int64_t> ids;
  for (int k = 0; k < 20; ++k) specs.push_back(sample_episode_spec(episode_seed(303, k))), ids.push_back(k);
  EpisodeOptions eo;
  eo.expert = c;
  EpisodeBatch b = run_episodes(specs, ids, expert_policy(), eo, opt.jobs);
  double t_peak = 0.0, v_peak = 0.0;
  for (const auto& ep : b.episodes)
    for (const auto& s : ep.trajectory) {
      t_peak = std::max({t_peak, s.t_core, s.t_core_next, s.t_surf, s.t_surf_next});
      v_peak = std::max({v_peak, s.voltage, s.v_peak});
    }
  o.pass &= t_peak <= c.bounds.t_max + 0.05 && v_peak <= c.bounds.v_max + 0.005;

  std::mt19937_64 rng(304);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int zero = 0;
  const int probes = 200;
  for (int n = 0; n < probes; ++n) {
    BatteryParams p;
    BatteryState s{u(rng), 298.15 + 15.0 * u(rng), 298.15 + 15.0 * u(rng), 0.0, false};
    (n % 2 ? s.t_core : s.t_surf) = c.bounds.t_max + 1e-6 + 2.0 * u(rng);
    zero += expert_action(s, p, 0.7 + 0.3 * u(rng), c).current == 0.0;
  }
  o.pass &= zero == probes;
  o.detail = fmt("peak temperature %.4f K (<=%.2f), peak voltage %.5f V (<=%.3f), zero current on %d/%d hot states",
                 t_peak, c.bounds.t_max + 0.05, v_peak, c.bounds.v_max + 0.005, zero, probes);
  return o;
}

// 4. Network correctness.
Outcome network(const Options& opt) {
  Outcome o;
  Architecture small;
  small.n_w = 4;
  small.lstm_sizes = {6, 4, 3};
  small.dense_sizes = {5, 4};
  double worst = 0.0, worst_abs = 0.0;
  std::size_t n_small = 0, n_checked = 0;
  for (int seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(400 + seed);
    std::uniform_real_distribution<double> v(3.0, 4.2), t(298.0, 313.0), i(-10.0, 10.0), ref(0.7, 1.0);
    Dataset d(small.n_w);
    d.begin_episode(0, 0, "random");
    std::vector<double> w(d.window_size());
    for (int r = 0; r < 5; ++r) {
      for (int k = 0; k <= small.n_w; ++k) w[3 * k] = v(rng), w[3 * k + 1] = t(rng), w[3 * k + 2] = i(rng);
      d.append(w, ref(rng), i(rng));
    }
    PolicyModel m(small, seed);
    std::normal_distribution<double> jitter(0.0, 0.1);
    for (Eigen::Index k = 0; k < m.parameters().size(); ++k) m.parameters()[k] += jitter(rng);
    m.preprocess() = Standardizer::fit(d);
    std::vector<std::size_t> rows{0, 1, 2, 3, 4};
    GradCheckResult g = gradient_check(m, make_batch(d, rows, m.preprocess(), NoiseSpec{}, nullptr));
    worst = std::max(worst, g.max_relative_error);
    worst_abs = std::max(worst_abs, g.max_absolute_error_small);
    n_small += g.small_gradients;
    n_checked += g.parameters_checked;
  }
  o.pass &= worst < 1e-4 && worst_abs < 1e-7;

  Architecture desk = Architecture{}.scaled(0.25);
  PolicyModel m(desk, 4);
  std::mt19937_64 rng(404);
  std::normal_distribution<double> big(0.0, 100.0);
  for (Eigen::Index k = 0; k < m.parameters().size(); ++k) m.parameters()[k] *= 10.0;
  std::vector<double> w(3 * (desk.n_w + 1));
  double max_abs = 0.0;
  for (int n = 0; n < 100000; ++n) {
    for (double& x : w) x = big(rng);
    max_abs = std::max(max_abs, std::abs(m.forward(w, big(rng))));
  }
  o.pass &= max_abs <= 10.0;

  fs::create_directories(opt.out);
  const fs::path ckpt = opt.out / "roundtrip.ckpt";
  m.save(ckpt);
  PolicyModel back = PolicyModel::load(ckpt, desk);
  bool exact = back.parameters() == m.parameters();
  for (int n = 0; n < 100 && exact; ++n) {
    for (double& x : w) x = big(rng);
    const double r = big(rng);
    exact = back.forward(w, r) == m.forward(w, r);
  }
  o.pass &= exact;
  o.detail = fmt("gradient check max rel err %.2e over 20 seeds (<1e-4; %zu/%zu small gradients, abs err %.1e), "
                 "max |I| %.6f A over 1e5 inputs, checkpoint round trip %s",
                 worst, n_small, n_checked, worst_abs, max_abs, exact ? "bit-exact" : "differs");
  return o;
}

// 5. Dataset integrity.
Outcome dataset_integrity(const Options& opt) {
  Outcome o;
  std::vector<EpisodeSpec> specs;
  std::vector<std::int64_t> ids;
  for (int k = 0; k < 3; ++k) specs.push_back(sample_episode_spec(episode_seed(505, k))), ids.push_back(k);
  EpisodeBatch b = run_episodes(specs, ids, expert_policy(), EpisodeOptions{}, opt.jobs, true);
  const bool width = b.rows.row_width() == 65;
  o.pass &= width;

  bool slide = true, rest_ok = true;
  for (const auto& ep : b.episodes) {
    for (std::size_t i = 1; i < ep.rows.size(); ++i) {
      auto x = ep.rows.row(i - 1).window, y = ep.rows.row(i).window;
      slide &= std::equal(x.begin() + 3, x.end(), y.begin());
    }
    // First row: a full window made only of rest observations.
    auto first = ep.rows.row(0).window;
    for (int k = 0; k <= 20; ++k) rest_ok &= first[3 * k + 2] == 0.0;
    rest_ok &= ep.rows.size() == 210;
  }
  EpisodeSpec short_rest = specs[0];
  short_rest.rest_steps = 19;
  bool rejected = false;
  try {
    run_episode(short_rest, expert_policy(), EpisodeOptions{});
  } catch (const ConfigError&) {
    rejected = true;
  }
  rest_ok &= rejected;
  o.pass &= slide && rest_ok;

  Dataset d0 = b.episodes[0].rows;
  Dataset d1 = b.episodes[1].rows;
  Dataset d2 = b.episodes[2].rows;
  Dataset agg1 = aggregate(d0, d1), agg2 = aggregate(agg1, d2);
  const bool additive = agg1.size() == d0.size() + d1.size() && agg2.size() == agg1.size() + d2.size() &&
                        aggregate(agg2, Dataset(20)).size() == agg2.size();
  o.pass &= additive;
  o.detail = fmt("row width %zu, slide-by-one %s, rest prefix %s, aggregation %zu = %zu + %zu %s", b.rows.row_width(),
                 slide ? "holds" : "broken", rest_ok ? "sufficient" : "insufficient", agg2.size(), agg1.size(),
                 d2.size(), additive ? "additive" : "not additive");
  return o;
}

struct DeskRun {
  std::optional<PolicyModel> dagger, bc;
};

DeskRun desk_models(const Options& opt, const RunConfig& cfg) {
  DeskRun r;
  PipelineSetup setup;
  setup.sampling = cfg.sampling;
  setup.expert = cfg.expert;
  setup.architecture = cfg.policy;
  setup.train = cfg.train;
  setup.jobs = opt.jobs;
  setup.log = [](const std::string& m) { std::fprintf(stderr, "  %s\n", m.c_str()); };
  const fs::path dagger_dir = opt.out / "desk_dagger", bc_dir = opt.out / "desk_bc";
  if (opt.reuse && fs::exists(dagger_dir / "policy_final.ckpt"))
    r.dagger = PolicyModel::load(dagger_dir / "policy_final.ckpt", cfg.policy);
  else {
    fs::remove_all(dagger_dir);
    setup.out_dir = dagger_dir;
    r.dagger = run_dagger(cfg.dagger, setup).model;
  }
  if (opt.reuse && fs::exists(bc_dir / "policy_bc.ckpt"))
    r.bc = PolicyModel::load(bc_dir / "policy_bc.ckpt", cfg.policy);
  else {
    fs::remove_all(bc_dir);
    setup.out_dir = bc_dir;
    r.bc = run_behavioral_cloning(cfg.effective_bc_episodes(), cfg.dagger.seed, setup).model;
  }
  return r;
}

RunConfig desk_config() {
  RunConfig cfg;
  apply_scale(cfg, 0.05);
  cfg.validate();
  return cfg;
}

// 6. DAGGER vs behavioural cloning at desk scale.
Outcome dagger_vs_bc(const Options& opt, DeskRun& models) {
  Outcome o;
  const RunConfig cfg = desk_config();
  models = desk_models(opt, cfg);
  EvalSetup es;
  es.sampling = cfg.sampling;
  es.expert = cfg.expert;
  es.n_w = cfg.policy.n_w;
  es.jobs = opt.jobs;
  const int episodes = cfg.evaluation.episodes;
  EvalReport rep = evaluate_policies({{"expert", nullptr}, {"dagger", &*models.dagger}, {"bc", &*models.bc}}, es,
                                     episodes, cfg.evaluation.seed);
  std::ofstream(opt.out / "desk_eval_report.json") << eval_report_to_json(rep) << '\n';
  const PolicyEvaluation& d = rep.policies[1];
  const PolicyEvaluation& b = rep.policies[2];
  const bool a = d.temp_core.count <= b.temp_core.count;
  const bool bb = d.temp_core.mean <= 0.6 * b.temp_core.mean;
  const bool c = std::abs(d.current_error.mean) < std::abs(b.current_error.mean);
  o.pass = episodes >= 20 && a && bb && c;
  o.detail = fmt("%d held-out episodes; Tc-violating steps dagger %zu vs bc %zu (%s); mean exceedance %.4f K vs "
                 "%.4f K, ratio %.3f (<=0.6: %s); mean current error %+.3f A vs %+.3f A (%s)",
                 episodes, d.temp_core.count, b.temp_core.count, a ? "ok" : "FAIL", d.temp_core.mean,
                 b.temp_core.mean, b.temp_core.mean > 0 ? d.temp_core.mean / b.temp_core.mean : 0.0,
                 bb ? "ok" : "FAIL", d.current_error.mean, b.current_error.mean, c ? "ok" : "FAIL");
  return o;
}

// 7. Timing scaling.
Outcome timing(const Options&, const DeskRun& models) {
  Outcome o;
  const RunConfig cfg = desk_config();
  PolicyModel policy = models.dagger ? *models.dagger : PolicyModel(cfg.policy, 7);
  EvalSetup es;
  es.sampling = cfg.sampling;
  es.expert = cfg.expert;
  es.n_w = cfg.policy.n_w;
  auto rows = bench_timing({1, 2, 4, 8, 16}, policy, 40, 707, es);
  std::vector<double> expert, pol;
  for (const auto& r : rows) (r.method == "expert" ? expert : pol).push_back(r.mean_s);
  bool increasing = true;
  for (std::size_t k = 1; k < expert.size(); ++k) increasing &= expert[k] > expert[k - 1];
  const double spread = *std::max_element(pol.begin(), pol.end()) / *std::min_element(pol.begin(), pol.end());
  const bool faster = *std::max_element(pol.begin(), pol.end()) < expert.back();
  o.pass = rows.size() == 10 && increasing && spread < 2.0 && faster;
  std::ostringstream ms;
  for (double e : expert) ms << fmt("%.3g ", e * 1e3);
  o.detail = fmt("expert mean ms over H=1,2,4,8,16: %s(%s); policy spread %.2fx (<2), policy %.3g ms vs H=16 "
                 "expert %.3g ms",
                 ms.str().c_str(), increasing ? "strictly increasing" : "NOT increasing", spread,
                 *std::max_element(pol.begin(), pol.end()) * 1e3, expert.back() * 1e3);
  return o;
}

// 8. Mixed-policy statistics.
Outcome mixed_policy_stats(const Options&) {
  Outcome o;
  std::mt19937_64 rng(808);
  int expert = 0;
  for (int n = 0; n < 100000; ++n)
    expert += mixed_policy_action(0.5, [] { return 1.0; }, [] { return -1.0; }, rng).from_expert;
  const double frac = expert / 1e5;
  DaggerConfig c;
  bool exact = true;
  for (int i = 0; i <= c.n_iterations; ++i) exact &= c.beta(i) == std::ldexp(1.0, -i);
  o.pass = frac >= 0.49 && frac <= 0.51 && exact;
  o.detail = fmt("expert-branch fraction %.4f in [0.49, 0.51], beta_i == 0.5^i for i=0..%d: %s", frac,
                 c.n_iterations, exact ? "exact" : "differs");
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  Options opt;
  std::string out = opt.out.string();
  std::vector<int> only;
  app.add_option("--out", out, "Scratch directory");
  app.add_option("--only", only, "Criteria to run")->delimiter(',');
  app.add_option("--jobs", opt.jobs, "Worker threads");
  app.add_flag("--reuse", opt.reuse, "Reuse desk-scale checkpoints from a previous run");
  CLI11_PARSE(app, argc, argv);
  opt.out = out;
  fs::create_directories(opt.out);
  std::set<int> wanted(only.begin(), only.end());
  auto want = [&](int k) { return wanted.empty() || wanted.count(k); };

  DeskRun models;
  struct Criterion {
    int id;
    const char* name;
    double budget_s;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {1, "simulator oracles", 10, [&] { return simulator_oracles(opt); }},
      {2, "MPC oracle equivalence", 120, [&] { return mpc_oracle(opt); }},
      {3, "expert safety", 600, [&] { return expert_safety(opt); }},
      {4, "network correctness", 300, [&] { return network(opt); }},
      {5, "dataset integrity", 60, [&] { return dataset_integrity(opt); }},
      {6, "DAGGER vs BC at desk scale", 3600, [&] { return dagger_vs_bc(opt, models); }},
      {7, "timing scaling", 300, [&] { return timing(opt, models); }},
      {8, "mixed-policy statistics", 60, [&] { return mixed_policy_stats(opt); }},
  };

  int failed = 0;
  for (const auto& c : criteria) {
    if (!want(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs < c.budget_s;
    const bool pass = o.pass && in_time;
    failed += !pass;
    std::printf("[%s] criterion %d %s: %s; %.1f s (budget %.0f s)\n", pass ? "PASS" : "FAIL", c.id, c.name,
                o.detail.c_str(), secs, c.budget_s);
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
