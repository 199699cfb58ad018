#include "dcharge/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include "json.hpp"

#include "dcharge/errors.hpp"
#include "dcharge/parallel.hpp"

namespace dcharge {

namespace {

using json = nlohmann::json;

std::mt19937_64 seeded(std::uint64_t seed, std::uint32_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), stream};
  return std::mt19937_64(seq);
}

constexpr std::uint32_t kSpecStream = 0x5bec;
constexpr std::uint32_t kRolloutStream = 0x0b5e;

std::filesystem::path with_suffix(const std::filesystem::path& base, const char* suffix) {
  return std::filesystem::path(base.string() + suffix);
}

void write_le_doubles(std::ofstream& out, std::span<const double> values) {
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(values.data()),
              static_cast<std::streamsize>(values.size() * sizeof(double)));
  } else {
    for (double v : values) {
      auto bits = std::bit_cast<std::uint64_t>(v);
      unsigned char bytes[8];
      for (int b = 0; b < 8; ++b) bytes[b] = static_cast<unsigned char>(bits >> (8 * b));
      out.write(reinterpret_cast<const char*>(bytes), 8);
    }
  }
}

void read_le_doubles(std::ifstream& in, std::span<double> values) {
  in.read(reinterpret_cast<char*>(values.data()),
          static_cast<std::streamsize>(values.size() * sizeof(double)));
  if constexpr (std::endian::native != std::endian::little) {
    for (double& v : values) {
      unsigned char bytes[8];
      std::memcpy(bytes, &v, 8);
      std::uint64_t bits = 0;
      for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(bytes[b]) << (8 * b);
      v = std::bit_cast<double>(bits);
    }
  }
}

}  // namespace

void SamplingConfig::validate() const {
  auto range = [](double lo, double hi, const char* what) {
    if (!(lo <= hi)) throw ConfigError(std::string("sampling: empty range for ") + what);
  };
  range(soc0_min, soc0_max, "soc0");
  range(temp_min, temp_max, "initial temperature");
  range(soc_ref_min, soc_ref_max, "soc_ref");
  range(capacity_min, capacity_max, "capacity");
  range(r_sei_min, r_sei_max, "r_sei");
  if (capacity_min <= 0.0) throw ConfigError("sampling: capacity must be > 0");
  if (temp_min <= 0.0) throw ConfigError("sampling: temperatures must be > 0");
  if (n_steps < 0 || rest_steps < 0) throw ConfigError("sampling: step counts must be >= 0");
  if (!(ts > 0.0)) throw ConfigError("sampling: ts must be > 0");
  base.validate();
}

EpisodeSpec sample_episode_spec(std::uint64_t seed, const SamplingConfig& cfg) {
  auto rng = seeded(seed, kSpecStream);
  auto uniform = [&rng](double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
  };
  EpisodeSpec spec;
  spec.n_steps = cfg.n_steps;
  spec.rest_steps = cfg.rest_steps;
  spec.ts = cfg.ts;
  spec.seed = seed;
  spec.soc0 = uniform(cfg.soc0_min, cfg.soc0_max);
  spec.t_core0 = uniform(cfg.temp_min, cfg.temp_max);
  spec.t_surf0 = cfg.couple_temperatures ? spec.t_core0 : uniform(cfg.temp_min, cfg.temp_max);
  spec.soc_ref = uniform(cfg.soc_ref_min, cfg.soc_ref_max);
  spec.params = cfg.base;
  spec.params.capacity_ah = uniform(cfg.capacity_min, cfg.capacity_max);
  spec.params.r_sei_ohm = uniform(cfg.r_sei_min, cfg.r_sei_max);
  return spec;
}

Dataset::Dataset(int n_w) : n_w_(n_w) {
  if (n_w < 0) throw ConfigError("dataset: n_w must be >= 0");
}

void Dataset::begin_episode(int iteration, std::int64_t episode_id, std::string policy) {
  origins_.push_back({iteration, episode_id, std::move(policy), size(), 0});
}

void Dataset::append(std::span<const double> window, double soc_ref, double label_current) {
  if (window.size() != window_size())
    throw ShapeError("dataset: window has " + std::to_string(window.size()) + " values, expected " +
                     std::to_string(window_size()));
  if (origins_.empty()) begin_episode(0, -1, "unknown");
  values_.insert(values_.end(), window.begin(), window.end());
  values_.push_back(soc_ref);
  values_.push_back(label_current);
  ++origins_.back().rows;
}

std::span<const double> Dataset::raw_row(std::size_t i) const {
  if (i >= size()) throw std::out_of_range("dataset: row index out of range");
  return std::span<const double>(values_).subspan(i * row_width(), row_width());
}

DatasetRowView Dataset::row(std::size_t i) const {
  auto r = raw_row(i);
  return {r.first(window_size()), r[window_size()], r[window_size() + 1]};
}

const EpisodeOrigin& Dataset::origin_of(std::size_t row) const {
  auto it = std::upper_bound(origins_.begin(), origins_.end(), row,
                             [](std::size_t r, const EpisodeOrigin& o) { return r < o.first_row; });
  if (it == origins_.begin() || row >= size()) throw std::out_of_range("dataset: row has no origin");
  return *std::prev(it);
}

void Dataset::extend(const Dataset& other) {
  if (other.n_w_ != n_w_)
    throw ShapeError("dataset: cannot combine n_w=" + std::to_string(n_w_) + " with n_w=" +
                     std::to_string(other.n_w_));
  const std::size_t offset = size();
  values_.insert(values_.end(), other.values_.begin(), other.values_.end());
  for (EpisodeOrigin o : other.origins_) {
    o.first_row += offset;
    origins_.push_back(std::move(o));
  }
}

Dataset aggregate(const Dataset& d_prev, const Dataset& d_new) {
  Dataset out = d_prev;
  out.extend(d_new);
  return out;
}

std::vector<std::string> Dataset::csv_columns(int n_w) {
  std::vector<std::string> cols;
  for (int k = 0; k <= n_w; ++k) {
    cols.push_back("v_" + std::to_string(k));
    cols.push_back("t_" + std::to_string(k));
    cols.push_back("i_" + std::to_string(k));
  }
  cols.emplace_back("soc_ref");
  cols.emplace_back("label");
  return cols;
}

void Dataset::save(const std::filesystem::path& base) const {
  if (base.has_parent_path()) std::filesystem::create_directories(base.parent_path());
  {
    std::ofstream bin(with_suffix(base, ".bin"), std::ios::binary | std::ios::trunc);
    if (!bin) throw std::runtime_error("dataset: cannot write " + with_suffix(base, ".bin").string());
    write_le_doubles(bin, values_);
  }
  json meta;
  meta["format"] = "dcharge-dataset";
  meta["version"] = 1;
  meta["n_w"] = n_w_;
  meta["row_width"] = row_width();
  meta["rows"] = size();
  meta["dtype"] = "float64-le";
  json episodes = json::array();
  for (const auto& o : origins_)
    episodes.push_back({{"iteration", o.iteration},
                        {"episode", o.episode_id},
                        {"policy", o.policy},
                        {"first_row", o.first_row},
                        {"rows", o.rows}});
  meta["episodes"] = std::move(episodes);
  std::ofstream out(with_suffix(base, ".meta.json"), std::ios::trunc);
  if (!out) throw std::runtime_error("dataset: cannot write " + with_suffix(base, ".meta.json").string());
  out << meta.dump(1) << '\n';
}

Dataset Dataset::load(const std::filesystem::path& base) {
  std::ifstream meta_in(with_suffix(base, ".meta.json"));
  if (!meta_in) throw ConfigError("dataset: missing " + with_suffix(base, ".meta.json").string());
  json meta;
  try {
    meta = json::parse(meta_in);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("dataset: bad metadata: ") + e.what());
  }
  if (meta.value("format", "") != "dcharge-dataset" || meta.value("version", 0) != 1)
    throw ConfigError("dataset: unsupported metadata format");
  Dataset d(meta.at("n_w").get<int>());
  const auto rows = meta.at("rows").get<std::size_t>();
  if (meta.at("row_width").get<std::size_t>() != d.row_width())
    throw ShapeError("dataset: row_width inconsistent with n_w");
  std::ifstream bin(with_suffix(base, ".bin"), std::ios::binary);
  if (!bin) throw ConfigError("dataset: missing " + with_suffix(base, ".bin").string());
  bin.seekg(0, std::ios::end);
  const auto bytes = static_cast<std::size_t>(bin.tellg());
  if (bytes != rows * d.row_width() * sizeof(double))
    throw ShapeError("dataset: binary size does not match metadata row count");
  bin.seekg(0);
  d.values_.resize(rows * d.row_width());
  read_le_doubles(bin, d.values_);
  for (const auto& e : meta.at("episodes"))
    d.origins_.push_back({e.at("iteration").get<int>(), e.at("episode").get<std::int64_t>(),
                          e.at("policy").get<std::string>(), e.at("first_row").get<std::size_t>(),
                          e.at("rows").get<std::size_t>()});
  return d;
}

void Dataset::export_csv(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::FILE* f = std::fopen(path.string().c_str(), "w");
  if (!f) throw std::runtime_error("dataset: cannot write " + path.string());
  const auto cols = csv_columns(n_w_);
  for (std::size_t c = 0; c < cols.size(); ++c) std::fprintf(f, c ? ",%s" : "%s", cols[c].c_str());
  std::fputc('\n', f);
  for (std::size_t i = 0; i < size(); ++i) {
    auto r = raw_row(i);
    for (std::size_t c = 0; c < r.size(); ++c) std::fprintf(f, c ? ",%.17g" : "%.17g", r[c]);
    std::fputc('\n', f);
  }
  std::fclose(f);
}

ActingPolicy expert_policy() {
  return [](const StepContext& ctx) { return PolicyChoice{ctx.expert_current, true}; };
}

EpisodeResult run_episode(const EpisodeSpec& spec, const ActingPolicy& acting,
                          const EpisodeOptions& options) {
  if (spec.rest_steps < options.n_w)
    throw ConfigError("episode: rest_steps (" + std::to_string(spec.rest_steps) +
                      ") must be >= n_w (" + std::to_string(options.n_w) + ")");
  if (spec.n_steps < 0) throw ConfigError("episode: n_steps must be >= 0");

  EpisodeResult result{spec, {}, {}, Dataset(options.n_w)};
  try {
    auto rng = seeded(spec.seed, kRolloutStream);
    const BatteryParams& params = spec.params;
    const ExpertConfig& cfg = options.expert;
    const int total = spec.rest_steps + spec.n_steps;
    const std::size_t window_len = result.rows.window_size();

    BatteryState state{spec.soc0, spec.t_core0, spec.t_surf0, 0.0, false};
    std::vector<double> history;
    history.reserve(3 * static_cast<std::size_t>(total));
    WarmStart warm;
    result.rows.begin_episode(options.iteration, options.episode_id, options.policy_tag);
    result.trajectory.reserve(total);

    for (int k = 0; k < total; ++k) {
      const Observation obs =
          observe(state, params, state.last_current, options.observation_noise, rng);
      history.insert(history.end(), {obs.voltage, obs.t_surf, obs.current});

      const bool rest = k < spec.rest_steps;
      const bool labeled = k >= options.n_w && (!rest || options.label_rest);
      std::span<const double> window;
      if (k >= options.n_w)
        window = std::span<const double>(history).subspan(3 * static_cast<std::size_t>(k - options.n_w),
                                                          window_len);

      TrajectoryStep rec;
      rec.step = k;
      rec.rest = rest;
      rec.soc = state.soc;
      rec.t_core = state.t_core;
      rec.t_surf = state.t_surf;
      rec.expert_current = std::numeric_limits<double>::quiet_NaN();
      rec.labeled = labeled;

      if (labeled || !rest) {
        const ExpertDecision d = expert_action(state, params, spec.soc_ref, cfg, &warm);
        rec.expert_current = d.current;
        rec.safety_override = d.safety_override;
      }

      PolicyChoice choice{0.0, true};
      if (!rest) {
        choice = acting(StepContext{state, params, spec.soc_ref, window, rec.expert_current, k, rng});
        choice.current = std::clamp(choice.current, cfg.bounds.i_min, cfg.bounds.i_max);
      }
      if (labeled) result.rows.append(window, spec.soc_ref, rec.expert_current);

      const BatteryState next = step(state, params, choice.current, spec.ts);
      rec.current = choice.current;
      rec.from_expert = choice.from_expert;
      rec.voltage = terminal_voltage(state, params, choice.current);
      rec.v_peak = std::max(rec.voltage, terminal_voltage(next, params, choice.current));
      rec.soc_next = next.soc;
      rec.t_core_next = next.t_core;
      rec.t_surf_next = next.t_surf;
      result.trajectory.push_back(rec);
      state = next;
    }
    result.final_state = state;
  } catch (const EpisodeError&) {
    throw;
  } catch (const std::exception& e) {
    throw EpisodeError(options.episode_id, e.what());
  }
  return result;
}

EpisodeBatch run_episodes(const std::vector<EpisodeSpec>& specs,
                          const std::vector<std::int64_t>& episode_ids, const ActingPolicy& acting,
                          const EpisodeOptions& options, int jobs, bool keep_rows_per_episode) {
  if (specs.size() != episode_ids.size())
    throw std::invalid_argument("run_episodes: specs and episode ids differ in length");
  std::vector<EpisodeResult> results(specs.size());
  parallel_for(specs.size(), jobs, [&](std::size_t i) {
    EpisodeOptions opt = options;
    opt.episode_id = episode_ids[i];
    results[i] = run_episode(specs[i], acting, opt);
  });
  EpisodeBatch batch{Dataset(options.n_w), {}};
  for (auto& r : results) {
    batch.rows.extend(r.rows);
    if (!keep_rows_per_episode) r.rows = Dataset(options.n_w);
  }
  batch.episodes = std::move(results);
  return batch;
}

}  // namespace dcharge
