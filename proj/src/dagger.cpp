#include "dcharge/dagger.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include "json.hpp"
#include <sstream>

#include "dcharge/errors.hpp"

namespace dcharge {

namespace {

using json = nlohmann::json;

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

std::uint64_t stage_seed(std::uint64_t base, int iteration, std::uint64_t salt) {
  return base ^ (static_cast<std::uint64_t>(iteration + 1) * kGolden) ^ salt;
}

std::string two_digits(int i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%02d", i);
  return buf;
}

void note(const PipelineSetup& setup, const std::string& msg) {
  if (setup.log) setup.log(msg);
}

std::string policy_tag(int iteration, double beta) {
  if (iteration == 0 && beta >= 1.0) return "expert";
  std::ostringstream os;
  os << "mixed(beta=" << beta << ")";
  return os.str();
}

struct Rollout {
  Dataset rows;
  std::size_t expert_steps = 0, learner_steps = 0, temp_violations = 0, volt_violations = 0;
};

Rollout collect(const PipelineSetup& setup, std::uint64_t seed, std::int64_t first_id, int count,
                int iteration, const ActingPolicy& acting, const std::string& tag) {
  std::vector<EpisodeSpec> specs;
  std::vector<std::int64_t> ids;
  for (int k = 0; k < count; ++k) {
    const std::int64_t id = first_id + k;
    ids.push_back(id);
    specs.push_back(sample_episode_spec(episode_seed(seed, static_cast<std::uint64_t>(id)), setup.sampling));
  }
  EpisodeOptions opt;
  opt.n_w = setup.architecture.n_w;
  opt.expert = setup.expert;
  opt.iteration = iteration;
  opt.policy_tag = tag;
  EpisodeBatch batch = run_episodes(specs, ids, acting, opt, setup.jobs);
  Rollout out{std::move(batch.rows)};
  const Bounds& b = setup.expert.bounds;
  for (const auto& ep : batch.episodes) {
    for (const auto& s : ep.trajectory) {
      if (s.rest) continue;
      (s.from_expert ? out.expert_steps : out.learner_steps) += 1;
      if (s.t_core_next > b.t_max) ++out.temp_violations;
      if (s.v_peak > b.v_max) ++out.volt_violations;
    }
  }
  return out;
}

TrainResult fit(const PipelineSetup& setup, int iteration, const Dataset& data,
                const PolicyModel* previous, bool warm_start, bool refit) {
  TrainConfig tc = setup.train;
  tc.seed = stage_seed(setup.train.seed, iteration, 0x7ull);
  PolicyModel init = (warm_start && previous)
                         ? *previous
                         : PolicyModel(setup.architecture, stage_seed(setup.train.seed, iteration, 0x11ull));
  if (previous && !refit) {
    init.preprocess() = previous->preprocess();
    tc.fit_preprocess = false;
  }
  return train(std::move(init), data, tc);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text << '\n';
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

double DaggerConfig::beta(int iteration) const { return beta0 * std::pow(beta_decay, iteration); }

void DaggerConfig::validate() const {
  if (n_iterations < 0) throw ConfigError("dagger: n_iterations must be >= 0");
  if (!(beta0 >= 0.0 && beta0 <= 1.0)) throw ConfigError("dagger: beta0 must be in [0, 1]");
  if (!(beta_decay >= 0.0 && beta_decay <= 1.0)) throw ConfigError("dagger: beta_decay must be in [0, 1]");
  if (episodes_initial < 1) throw ConfigError("dagger: episodes_initial must be >= 1");
  if (episodes_per_iter < 1) throw ConfigError("dagger: episodes_per_iter must be >= 1");
  if (!(plateau_threshold >= 0.0)) throw ConfigError("dagger: plateau_threshold must be >= 0");
}

PolicyChoice mixed_policy_action(double beta, const std::function<double()>& expert_fn,
                                 const std::function<double()>& learner_fn, std::mt19937_64& rng) {
  if (!(beta >= 0.0 && beta <= 1.0)) throw ConfigError("mixed policy: beta must be in [0, 1]");
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  if (u < beta) return {expert_fn(), true};
  return {learner_fn(), false};
}

ActingPolicy learner_policy(const PolicyModel& model) {
  return [&model](const StepContext& ctx) {
    return PolicyChoice{model.forward(ctx.window, ctx.soc_ref), false};
  };
}

ActingPolicy mixed_policy(double beta, const PolicyModel& learner) {
  return [beta, &learner](const StepContext& ctx) {
    return mixed_policy_action(
        beta, [&ctx] { return ctx.expert_current; },
        [&ctx, &learner] { return learner.forward(ctx.window, ctx.soc_ref); }, ctx.rng);
  };
}

std::string report_to_json(const IterationReport& r) {
  json j;
  j["iteration"] = r.iteration;
  j["beta"] = r.beta;
  j["episodes_new"] = r.episodes_new;
  j["episodes_total"] = r.episodes_total;
  j["rows_new"] = r.rows_new;
  j["rows_total"] = r.rows_total;
  j["expert_steps"] = r.expert_steps;
  j["learner_steps"] = r.learner_steps;
  j["temp_violation_steps"] = r.temp_violation_steps;
  j["volt_violation_steps"] = r.volt_violation_steps;
  j["train_loss"] = r.train_loss;
  j["validation_loss"] = r.validation_loss;
  j["best_epoch"] = r.best_epoch;
  return j.dump(2);
}

IterationReport report_from_json(const std::string& text) {
  const json j = json::parse(text);
  IterationReport r;
  r.iteration = j.at("iteration").get<int>();
  r.beta = j.at("beta").get<double>();
  r.episodes_new = j.at("episodes_new").get<int>();
  r.episodes_total = j.at("episodes_total").get<int>();
  r.rows_new = j.at("rows_new").get<std::size_t>();
  r.rows_total = j.at("rows_total").get<std::size_t>();
  r.expert_steps = j.at("expert_steps").get<std::size_t>();
  r.learner_steps = j.at("learner_steps").get<std::size_t>();
  r.temp_violation_steps = j.at("temp_violation_steps").get<std::size_t>();
  r.volt_violation_steps = j.at("volt_violation_steps").get<std::size_t>();
  r.train_loss = j.at("train_loss").get<std::vector<double>>();
  r.validation_loss = j.at("validation_loss").get<std::vector<double>>();
  r.best_epoch = j.at("best_epoch").get<int>();
  return r;
}

PipelineResult run_dagger(const DaggerConfig& cfg, const PipelineSetup& setup) {
  cfg.validate();
  setup.expert.validate();
  setup.sampling.validate();
  setup.architecture.validate();
  setup.train.validate();
  const auto& out = setup.out_dir;
  auto iter_path = [&out](int i, const char* suffix) { return out / ("iter" + two_digits(i) + suffix); };
  auto data_path = [&out](int i) { return out / ("dataset_iter" + two_digits(i)); };
  if (!out.empty()) std::filesystem::create_directories(out);

  Dataset aggregate_rows(setup.architecture.n_w);
  std::optional<PolicyModel> current;
  std::vector<IterationReport> reports;
  int start = 0;

  if (setup.resume && !out.empty()) {
    int last = -1;
    for (int i = 0; i <= cfg.n_iterations; ++i) {
      const bool complete = std::filesystem::exists(iter_path(i, ".ckpt")) &&
                            std::filesystem::exists(iter_path(i, ".report.json")) &&
                            std::filesystem::exists(data_path(i).string() + ".meta.json");
      if (!complete) break;
      last = i;
    }
    for (int i = 0; i <= last; ++i) {
      aggregate_rows.extend(Dataset::load(data_path(i)));
      reports.push_back(report_from_json(read_text(iter_path(i, ".report.json"))));
    }
    if (last >= 0) {
      current = PolicyModel::load(iter_path(last, ".ckpt"), setup.architecture);
      note(setup, "resuming after iteration " + std::to_string(last));
    }
    start = last + 1;
  }

  for (int i = start; i <= cfg.n_iterations; ++i) {
    try {
      const double beta = cfg.beta(i);
      const int count = i == 0 ? cfg.episodes_initial : cfg.episodes_per_iter;
      const std::int64_t first_id =
          i == 0 ? 0 : cfg.episodes_initial + static_cast<std::int64_t>(i - 1) * cfg.episodes_per_iter;
      const std::string tag = policy_tag(i, beta);
      const ActingPolicy acting =
          (i == 0 || !current) ? expert_policy() : mixed_policy(beta, *current);
      note(setup, "iteration " + std::to_string(i) + ": collecting " + std::to_string(count) +
                      " episodes with " + tag);
      Rollout roll = collect(setup, cfg.seed, first_id, count, i, acting, tag);
      aggregate_rows.extend(roll.rows);

      IterationReport rep;
      rep.iteration = i;
      rep.beta = beta;
      rep.episodes_new = count;
      rep.episodes_total = reports.empty() ? count : reports.back().episodes_total + count;
      rep.rows_new = roll.rows.size();
      rep.rows_total = aggregate_rows.size();
      rep.expert_steps = roll.expert_steps;
      rep.learner_steps = roll.learner_steps;
      rep.temp_violation_steps = roll.temp_violations;
      rep.volt_violation_steps = roll.volt_violations;

      note(setup, "iteration " + std::to_string(i) + ": training on " +
                      std::to_string(aggregate_rows.size()) + " rows");
      TrainResult tr = fit(setup, i, aggregate_rows, current ? &*current : nullptr,
                           cfg.warm_start_training, cfg.refit_preprocess);
      rep.train_loss = tr.train_loss;
      rep.validation_loss = tr.validation_loss;
      rep.best_epoch = tr.best_epoch;
      current = std::move(tr.model);

      if (!out.empty()) {
        roll.rows.save(data_path(i));
        current->save(iter_path(i, ".ckpt"));
        write_text(iter_path(i, ".report.json"), report_to_json(rep));
      }
      reports.push_back(std::move(rep));

      if (cfg.plateau_exit && reports.size() >= 2) {
        auto best_of = [](const IterationReport& r) {
          const auto& v = r.validation_loss.empty() ? r.train_loss : r.validation_loss;
          return v.empty() ? 0.0 : *std::min_element(v.begin(), v.end());
        };
        const double prev = best_of(reports[reports.size() - 2]);
        const double now = best_of(reports.back());
        if (prev > 0.0 && (prev - now) / prev < cfg.plateau_threshold) {
          note(setup, "loss plateau reached, stopping after iteration " + std::to_string(i));
          break;
        }
      }
    } catch (const StageError&) {
      throw;
    } catch (const std::exception& e) {
      throw StageError(i, e.what());
    }
  }

  if (!current) throw StageError(cfg.n_iterations, "no policy was trained");
  if (!out.empty()) current->save(out / "policy_final.ckpt");
  return {std::move(*current), std::move(aggregate_rows), std::move(reports)};
}

PipelineResult run_behavioral_cloning(int episodes, std::uint64_t seed, const PipelineSetup& setup) {
  if (episodes < 1) throw ConfigError("behavioral cloning: episodes must be >= 1");
  setup.expert.validate();
  setup.sampling.validate();
  setup.architecture.validate();
  setup.train.validate();
  try {
    note(setup, "behavioral cloning: collecting " + std::to_string(episodes) + " expert episodes");
    Rollout roll = collect(setup, seed, 0, episodes, 0, expert_policy(), "expert");
    IterationReport rep;
    rep.episodes_new = rep.episodes_total = episodes;
    rep.rows_new = rep.rows_total = roll.rows.size();
    rep.expert_steps = roll.expert_steps;
    rep.temp_violation_steps = roll.temp_violations;
    rep.volt_violation_steps = roll.volt_violations;
    note(setup, "behavioral cloning: training on " + std::to_string(roll.rows.size()) + " rows");
    TrainResult tr = fit(setup, 0, roll.rows, nullptr, false, true);
    rep.train_loss = tr.train_loss;
    rep.validation_loss = tr.validation_loss;
    rep.best_epoch = tr.best_epoch;
    if (!setup.out_dir.empty()) {
      std::filesystem::create_directories(setup.out_dir);
      roll.rows.save(setup.out_dir / "dataset_bc");
      tr.model.save(setup.out_dir / "policy_bc.ckpt");
      write_text(setup.out_dir / "bc.report.json", report_to_json(rep));
    }
    return {std::move(tr.model), std::move(roll.rows), {std::move(rep)}};
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(0, e.what());
  }
}

}  // namespace dcharge
