#include "dcharge/evaluation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include "json.hpp"

#include "dcharge/dagger.hpp"
#include "dcharge/errors.hpp"

namespace dcharge {

namespace {

using json = nlohmann::json;

struct Moments {
  double mean = 0.0, variance = 0.0;
};

Moments moments(const std::vector<double>& xs) {
  Moments m;
  if (xs.empty()) return m;
  double sum = 0.0;
  for (double x : xs) sum += x;
  m.mean = sum / static_cast<double>(xs.size());
  double sq = 0.0;
  for (double x : xs) sq += (x - m.mean) * (x - m.mean);
  m.variance = sq / static_cast<double>(xs.size());
  return m;
}

double median(std::vector<double> xs) {
  if (xs.empty()) return 0.0;
  const std::size_t mid = xs.size() / 2;
  std::nth_element(xs.begin(), xs.begin() + static_cast<std::ptrdiff_t>(mid), xs.end());
  double m = xs[mid];
  if (xs.size() % 2 == 0) m = 0.5 * (m + *std::max_element(xs.begin(), xs.begin() + static_cast<std::ptrdiff_t>(mid)));
  return m;
}

void check_compatible(const PolicyModel& model, const EvalSetup& setup, const std::string& name) {
  const Architecture& a = model.architecture();
  if (a.n_w != setup.n_w)
    throw ConfigError("evaluate: policy '" + name + "' uses n_w=" + std::to_string(a.n_w) +
                      " but the setup uses n_w=" + std::to_string(setup.n_w));
  if (a.i_min != setup.expert.bounds.i_min || a.i_max != setup.expert.bounds.i_max)
    throw ConfigError("evaluate: policy '" + name + "' current bounds differ from the expert's");
}

EpisodeOptions options_for(const EvalSetup& setup, const std::string& tag) {
  EpisodeOptions opt;
  opt.n_w = setup.n_w;
  opt.expert = setup.expert;
  opt.policy_tag = tag;
  opt.iteration = -1;
  return opt;
}

json violation_json(const ViolationStats& v) {
  return {{"count", v.count}, {"mean", v.mean}, {"std", v.stddev}, {"max", v.max}};
}

}  // namespace

ViolationStats violation_stats(const std::vector<double>& exceedances) {
  ViolationStats v;
  v.count = exceedances.size();
  const Moments m = moments(exceedances);
  v.mean = m.mean;
  v.stddev = std::sqrt(m.variance);
  for (double e : exceedances) v.max = std::max(v.max, e);
  return v;
}

ErrorStats error_stats(const std::vector<double>& errors, double bin_width, double range) {
  ErrorStats s;
  s.count = errors.size();
  const Moments m = moments(errors);
  s.mean = m.mean;
  s.variance = m.variance;
  s.stddev = std::sqrt(m.variance);
  const int bins = static_cast<int>(std::ceil(2.0 * range / bin_width));
  for (int k = 0; k < bins; ++k) s.histogram.push_back({-range + k * bin_width, -range + (k + 1) * bin_width, 0});
  for (double e : errors) {
    int k = static_cast<int>(std::floor((e + range) / bin_width));
    k = std::clamp(k, 0, bins - 1);  // outliers land in the edge bins
    ++s.histogram[k].count;
  }
  return s;
}

EvalReport evaluate_policies(const std::vector<NamedPolicy>& policies, const EvalSetup& setup,
                             int n_episodes, std::uint64_t seed) {
  if (n_episodes < 1) throw ConfigError("evaluate: n_episodes must be >= 1");
  setup.expert.validate();
  setup.sampling.validate();
  for (const auto& p : policies)
    if (p.model) check_compatible(*p.model, setup, p.name);

  std::vector<EpisodeSpec> specs;
  std::vector<std::int64_t> ids;
  for (int k = 0; k < n_episodes; ++k) {
    ids.push_back(k);
    specs.push_back(sample_episode_spec(episode_seed(seed, static_cast<std::uint64_t>(k)), setup.sampling));
  }

  EvalReport report;
  report.seed = seed;
  report.episodes = n_episodes;
  const Bounds& b = setup.expert.bounds;
  for (const auto& p : policies) {
    const ActingPolicy acting = p.model ? learner_policy(*p.model) : expert_policy();
    const EpisodeBatch batch = run_episodes(specs, ids, acting, options_for(setup, p.name), setup.jobs);
    PolicyEvaluation ev;
    ev.name = p.name;
    std::vector<double> surf;
    for (const auto& ep : batch.episodes) {
      for (const auto& s : ep.trajectory) {
        if (s.rest) continue;
        ++ev.steps;
        ev.errors.push_back(s.current - s.expert_current);
        if (s.t_core_next > b.t_max) ev.temp_core_exceedances.push_back(s.t_core_next - b.t_max);
        if (s.t_surf_next > b.t_max) surf.push_back(s.t_surf_next - b.t_max);
        if (s.v_peak > b.v_max) ev.voltage_exceedances.push_back(s.v_peak - b.v_max);
      }
      ev.terminal_soc_error.push_back(std::abs(ep.final_state.soc - ep.spec.soc_ref));
    }
    ev.current_error = error_stats(ev.errors);
    ev.temp_core = violation_stats(ev.temp_core_exceedances);
    ev.temp_surf = violation_stats(surf);
    ev.voltage = violation_stats(ev.voltage_exceedances);
    report.policies.push_back(std::move(ev));
  }
  return report;
}

std::string eval_report_to_json(const EvalReport& report, bool include_raw) {
  json j;
  j["seed"] = report.seed;
  j["episodes"] = report.episodes;
  json pols = json::array();
  for (const auto& p : report.policies) {
    json e;
    e["name"] = p.name;
    e["steps"] = p.steps;
    e["current_error"] = {{"count", p.current_error.count},
                          {"mean", p.current_error.mean},
                          {"std", p.current_error.stddev},
                          {"variance", p.current_error.variance}};
    e["temp_violations"] = violation_json(p.temp_core);
    e["temp_surface_violations"] = violation_json(p.temp_surf);
    e["volt_violations"] = violation_json(p.voltage);
    const Moments soc = moments(p.terminal_soc_error);
    e["soc_tracking"] = {{"terminal_abs_error_mean", soc.mean},
                         {"terminal_abs_error", p.terminal_soc_error}};
    if (include_raw) {
      e["raw"] = {{"current_error", p.errors},
                  {"temp_core_exceedance", p.temp_core_exceedances},
                  {"voltage_exceedance", p.voltage_exceedances}};
    }
    pols.push_back(std::move(e));
  }
  j["policies"] = std::move(pols);
  return j.dump(2);
}

void write_histogram_csv(const std::filesystem::path& path, const ErrorStats& stats) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::FILE* f = std::fopen(path.string().c_str(), "w");
  if (!f) throw std::runtime_error("cannot write " + path.string());
  std::fprintf(f, "bin_lo,bin_hi,count\n");
  for (const auto& bin : stats.histogram) std::fprintf(f, "%.17g,%.17g,%zu\n", bin.lo, bin.hi, bin.count);
  std::fclose(f);
}

EpisodeSpec showcase_scenario(const BatteryParams& base) {
  EpisodeSpec spec;
  spec.n_steps = 400;
  spec.rest_steps = 30;
  spec.ts = 10.0;
  spec.soc0 = 0.25;
  spec.soc_ref = 0.90;
  spec.t_core0 = 302.5;
  spec.t_surf0 = 302.5;
  spec.params = base;
  spec.params.r_sei_ohm = 0.0165;
  spec.params.capacity_ah = 6.75;
  spec.seed = 0;
  return spec;
}

ScenarioTrace single_scenario_trace(const PolicyModel* policy, const EpisodeSpec& scenario,
                                    const EvalSetup& setup) {
  if (policy) check_compatible(*policy, setup, "scenario policy");
  ScenarioTrace trace;
  const ActingPolicy acting = policy ? learner_policy(*policy) : expert_policy();
  trace.policy = run_episode(scenario, acting, options_for(setup, policy ? "policy" : "expert"));
  trace.expert = run_episode(scenario, expert_policy(), options_for(setup, "expert"));
  return trace;
}

void write_trace_csv(const std::filesystem::path& path, const EpisodeResult& episode, double ts) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::FILE* f = std::fopen(path.string().c_str(), "w");
  if (!f) throw std::runtime_error("cannot write " + path.string());
  std::fprintf(f, "step,time_s,soc,t_core,t_surf,voltage,current\n");
  for (const auto& s : episode.trajectory)
    std::fprintf(f, "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", s.step, s.step * ts, s.soc, s.t_core,
                 s.t_surf, s.voltage, s.current);
  std::fclose(f);
}

std::vector<TimingRow> bench_timing(const std::vector<int>& horizons, const PolicyModel& policy,
                                    int n_states, std::uint64_t seed, const EvalSetup& setup, int warmup) {
  if (n_states < 1) throw ConfigError("bench: n_states must be >= 1");
  if (horizons.empty()) throw ConfigError("bench: no horizons given");
  check_compatible(policy, setup, "bench policy");
  using clock = std::chrono::steady_clock;

  struct Probe {
    BatteryState state;
    BatteryParams params;
    double soc_ref;
    std::vector<double> window;
  };
  std::vector<Probe> probes;
  std::mt19937_64 noise_rng(seed);
  for (int k = 0; k < n_states; ++k) {
    const EpisodeSpec spec = sample_episode_spec(episode_seed(seed, static_cast<std::uint64_t>(k)), setup.sampling);
    Probe p{{spec.soc0, spec.t_core0, spec.t_surf0, 0.0, false}, spec.params, spec.soc_ref, {}};
    for (int t = 0; t <= setup.n_w; ++t) {
      const Observation o = observe(p.state, p.params, p.state.last_current, NoiseSpec{}, noise_rng);
      p.window.insert(p.window.end(), {o.voltage, o.t_surf, o.current});
      if (t < setup.n_w) p.state = step(p.state, p.params, 0.0, spec.ts);
    }
    probes.push_back(std::move(p));
  }

  auto summarize = [](std::string method, int horizon, const std::vector<double>& samples) {
    TimingRow row;
    row.method = std::move(method);
    row.horizon = horizon;
    row.samples = samples.size();
    const Moments m = moments(samples);
    row.mean_s = m.mean;
    row.stddev_s = std::sqrt(m.variance);
    row.median_s = median(samples);
    return row;
  };

  std::vector<TimingRow> rows;
  volatile double sink = 0.0;
  for (int h : horizons) {
    ExpertConfig cfg = setup.expert;
    cfg.horizon = h;
    cfg.validate();
    for (int w = 0; w < warmup; ++w) sink = sink + expert_action(probes[0].state, probes[0].params, probes[0].soc_ref, cfg).current;
    std::vector<double> samples;
    for (const auto& p : probes) {
      const auto t0 = clock::now();
      sink = sink + expert_action(p.state, p.params, p.soc_ref, cfg).current;
      samples.push_back(std::chrono::duration<double>(clock::now() - t0).count());
    }
    rows.push_back(summarize("expert", h, samples));

    for (int w = 0; w < warmup; ++w) sink = sink + policy.forward(probes[0].window, probes[0].soc_ref);
    samples.clear();
    for (const auto& p : probes) {
      const auto t0 = clock::now();
      sink = sink + policy.forward(p.window, p.soc_ref);
      samples.push_back(std::chrono::duration<double>(clock::now() - t0).count());
    }
    rows.push_back(summarize("policy", h, samples));
  }
  return rows;
}

std::string timing_to_json(const std::vector<TimingRow>& rows) {
  json j = json::array();
  for (const auto& r : rows)
    j.push_back({{"method", r.method},
                 {"horizon", r.horizon},
                 {"samples", r.samples},
                 {"mean_s", r.mean_s},
                 {"std_s", r.stddev_s},
                 {"median_s", r.median_s}});
  return j.dump(2);
}

void write_timing_csv(const std::filesystem::path& path, const std::vector<TimingRow>& rows) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::FILE* f = std::fopen(path.string().c_str(), "w");
  if (!f) throw std::runtime_error("cannot write " + path.string());
  std::fprintf(f, "method,horizon,samples,mean_s,std_s,median_s\n");
  for (const auto& r : rows)
    std::fprintf(f, "%s,%d,%zu,%.9g,%.9g,%.9g\n", r.method.c_str(), r.horizon, r.samples, r.mean_s,
                 r.stddev_s, r.median_s);
  std::fclose(f);
}

}  // namespace dcharge
