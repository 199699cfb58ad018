#include "dcharge/policy.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>
#include <string>

#include "dcharge/errors.hpp"

namespace dcharge {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::RowVectorXd;
using Eigen::VectorXd;
using ConstMap = Eigen::Map<const MatrixXd>;
using MutMap = Eigen::Map<MatrixXd>;

struct LstmBlock {
  Index w, u, b;
  int in, hidden;
};

struct DenseBlock {
  Index w, b;
  int in, out;
};

struct Layout {
  std::vector<LstmBlock> lstm;
  std::vector<DenseBlock> dense;  // hidden layers followed by the scalar head
  Index total = 0;
};

Layout make_layout(const Architecture& arch) {
  Layout l;
  Index offset = 0;
  int in = Architecture::kInputChannels;
  for (int h : arch.lstm_sizes) {
    LstmBlock blk{offset, offset + 4 * h * in, offset + 4 * h * in + 4 * h * h, in, h};
    offset = blk.b + 4 * h;
    l.lstm.push_back(blk);
    in = h;
  }
  in += 1;  // soc_ref
  auto add_dense = [&](int out) {
    DenseBlock blk{offset, offset + static_cast<Index>(out) * in, in, out};
    offset = blk.b + out;
    l.dense.push_back(blk);
    in = out;
  };
  for (int d : arch.dense_sizes) add_dense(d);
  add_dense(1);
  l.total = offset;
  return l;
}

MatrixXd sigmoid(const MatrixXd& a) { return (1.0 + (-a.array()).exp()).inverse().matrix(); }

// Little-endian scalar IO for checkpoints.
template <typename T>
void put(std::ofstream& out, T value) {
  static_assert(sizeof(T) == 4 || sizeof(T) == 8);
  using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  const U bits = std::bit_cast<U>(value);
  unsigned char bytes[sizeof(T)];
  for (std::size_t b = 0; b < sizeof(T); ++b) bytes[b] = static_cast<unsigned char>(bits >> (8 * b));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get(std::ifstream& in) {
  using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  unsigned char bytes[sizeof(T)];
  in.read(reinterpret_cast<char*>(bytes), sizeof(T));
  if (!in) throw ConfigError("checkpoint: truncated file");
  U bits = 0;
  for (std::size_t b = 0; b < sizeof(T); ++b) bits |= static_cast<U>(bytes[b]) << (8 * b);
  return std::bit_cast<T>(bits);
}

constexpr char kMagic[8] = {'D', 'C', 'H', 'G', 'P', 'O', 'L', 'Y'};
constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace

std::size_t Architecture::parameter_count() const {
  return static_cast<std::size_t>(make_layout(*this).total);
}

Architecture Architecture::scaled(double factor) const {
  if (!(factor > 0.0)) throw ConfigError("architecture: scale factor must be > 0");
  Architecture a = *this;
  auto scale = [factor](int v) { return std::max(1, static_cast<int>(std::ceil(v * factor - 1e-9))); };
  for (int& h : a.lstm_sizes) h = scale(h);
  for (int& d : a.dense_sizes) d = scale(d);
  return a;
}

void Architecture::validate() const {
  if (n_w < 0) throw ConfigError("architecture: n_w must be >= 0");
  if (lstm_sizes.empty()) throw ConfigError("architecture: at least one recurrent layer required");
  for (int h : lstm_sizes)
    if (h < 1) throw ConfigError("architecture: recurrent sizes must be >= 1");
  for (int d : dense_sizes)
    if (d < 1) throw ConfigError("architecture: dense sizes must be >= 1");
  if (!(i_min < i_max)) throw ConfigError("architecture: i_min must be < i_max");
}

Standardizer Standardizer::fit(const Dataset& data) {
  if (data.empty()) throw ConfigError("standardizer: empty dataset");
  std::array<double, 4> sum{}, sq{};
  std::array<double, 4> count{};
  const std::size_t wlen = data.window_size();
  // Two passes for numerical stability of the variance.
  for (std::size_t i = 0; i < data.size(); ++i) {
    auto r = data.row(i);
    for (std::size_t j = 0; j < wlen; ++j) {
      sum[j % 3] += r.window[j];
      count[j % 3] += 1.0;
    }
    sum[soc_ref] += r.soc_ref;
    count[soc_ref] += 1.0;
  }
  Standardizer s;
  for (int c = 0; c < 4; ++c) s.mean[c] = sum[c] / count[c];
  for (std::size_t i = 0; i < data.size(); ++i) {
    auto r = data.row(i);
    for (std::size_t j = 0; j < wlen; ++j) {
      const double d = r.window[j] - s.mean[j % 3];
      sq[j % 3] += d * d;
    }
    const double d = r.soc_ref - s.mean[soc_ref];
    sq[soc_ref] += d * d;
  }
  for (int c = 0; c < 4; ++c) s.stddev[c] = std::max(kStdFloor, std::sqrt(sq[c] / count[c]));
  return s;
}

Batch make_batch(const Dataset& data, std::span<const std::size_t> rows, const Standardizer& prep,
                 const NoiseSpec& noise, std::mt19937_64* rng) {
  const int steps = data.n_w() + 1;
  const auto b = static_cast<Index>(rows.size());
  Batch batch;
  batch.steps.assign(steps, MatrixXd(Architecture::kInputChannels, b));
  batch.soc_ref.resize(b);
  batch.labels.resize(b);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const std::array<double, 3> sigma{noise.sigma_v, noise.sigma_t, noise.sigma_i};
  for (Index col = 0; col < b; ++col) {
    auto r = data.row(rows[col]);
    for (int t = 0; t < steps; ++t) {
      for (int c = 0; c < 3; ++c) {
        double x = r.window[3 * t + c];
        if (rng) x += sigma[c] * gauss(*rng);
        batch.steps[t](c, col) = prep.apply(c, x);
      }
    }
    batch.soc_ref(col) = prep.apply(Standardizer::soc_ref, r.soc_ref);
    batch.labels(col) = r.label_current;
  }
  return batch;
}

struct PolicyModel::Workspace {
  // [layer][t]
  std::vector<std::vector<MatrixXd>> gates, cell, tanh_cell, hidden;
  std::vector<MatrixXd> dense_in, dense_pre;
  RowVectorXd head_tanh, out;
};

PolicyModel::PolicyModel(Architecture arch, std::uint64_t init_seed) : arch_(std::move(arch)) {
  arch_.validate();
  const Layout layout = make_layout(arch_);
  params_ = VectorXd::Zero(layout.total);
  std::seed_seq seq{static_cast<std::uint32_t>(init_seed), static_cast<std::uint32_t>(init_seed >> 32),
                    0x1a17u};
  std::mt19937_64 rng(seq);
  auto xavier = [&](Index offset, Index fan_out, Index fan_in) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> u(-limit, limit);
    for (Index k = 0; k < fan_out * fan_in; ++k) params_[offset + k] = u(rng);
  };
  for (const auto& blk : layout.lstm) {
    xavier(blk.w, 4 * blk.hidden, blk.in);
    xavier(blk.u, 4 * blk.hidden, blk.hidden);
    params_.segment(blk.b + blk.hidden, blk.hidden).setOnes();  // forget gate
  }
  for (const auto& blk : layout.dense) xavier(blk.w, blk.out, blk.in);
}

double PolicyModel::run(const Batch& batch, Workspace& ws, Eigen::VectorXd* grad) const {
  const Layout layout = make_layout(arch_);
  const int steps = arch_.n_w + 1;
  if (static_cast<int>(batch.steps.size()) != steps)
    throw ShapeError("policy: batch has " + std::to_string(batch.steps.size()) +
                     " time steps, architecture expects " + std::to_string(steps));
  const Index b = batch.steps.front().cols();
  if (batch.soc_ref.size() != b) throw ShapeError("policy: soc_ref length differs from batch size");
  const double* theta = params_.data();
  const std::size_t n_layers = layout.lstm.size();

  ws.gates.assign(n_layers, {});
  ws.cell.assign(n_layers, {});
  ws.tanh_cell.assign(n_layers, {});
  ws.hidden.assign(n_layers, {});

  for (std::size_t l = 0; l < n_layers; ++l) {
    const LstmBlock& blk = layout.lstm[l];
    const int h = blk.hidden;
    ConstMap w(theta + blk.w, 4 * h, blk.in);
    ConstMap u(theta + blk.u, 4 * h, h);
    Eigen::Map<const VectorXd> bias(theta + blk.b, 4 * h);
    const auto& inputs = l == 0 ? batch.steps : ws.hidden[l - 1];
    auto& gates = ws.gates[l];
    auto& cell = ws.cell[l];
    auto& tcell = ws.tanh_cell[l];
    auto& hidden = ws.hidden[l];
    gates.resize(steps);
    cell.resize(steps);
    tcell.resize(steps);
    hidden.resize(steps);
    for (int t = 0; t < steps; ++t) {
      if (inputs[t].rows() != blk.in || inputs[t].cols() != b) 
        throw ShapeError("policy: input at step " + std::to_string(t) + " is " +
                         std::to_string(inputs[t].rows()) + "x" + std::to_string(inputs[t].cols()) +
                         ", expected " + std::to_string(blk.in) + "x" + std::to_string(b));
      MatrixXd a = w * inputs[t];
      if (t > 0) a.noalias() += u * hidden[t - 1];
      a.colwise() += bias;
      MatrixXd& g = gates[t];
      g.resize(4 * h, b);
      g.topRows(2 * h) = sigmoid(a.topRows(2 * h));
      g.middleRows(2 * h, h) = a.middleRows(2 * h, h).array().tanh().matrix();
      g.bottomRows(h) = sigmoid(a.bottomRows(h));
      cell[t] = g.topRows(h).cwiseProduct(g.middleRows(2 * h, h));
      if (t > 0) cell[t] += g.middleRows(h, h).cwiseProduct(cell[t - 1]);
      tcell[t] = cell[t].array().tanh().matrix();
      hidden[t] = g.bottomRows(h).cwiseProduct(tcell[t]);
    }
  }

  const std::size_t n_dense = layout.dense.size();
  ws.dense_in.assign(n_dense, {});
  ws.dense_pre.assign(n_dense, {});
  const int top = layout.lstm.back().hidden;
  MatrixXd act(top + 1, b);
  act.topRows(top) = ws.hidden.back().back();
  act.bottomRows(1) = batch.soc_ref;
  for (std::size_t k = 0; k < n_dense; ++k) {
    const DenseBlock& blk = layout.dense[k];
    ConstMap w(theta + blk.w, blk.out, blk.in);
    Eigen::Map<const VectorXd> bias(theta + blk.b, blk.out);
    ws.dense_in[k] = act;
    MatrixXd z = w * act;
    z.colwise() += bias;
    ws.dense_pre[k] = z;
    if (k + 1 < n_dense) act = z.cwiseMax(0.0);
  }
  const double mid = 0.5 * (arch_.i_min + arch_.i_max);
  const double half = 0.5 * (arch_.i_max - arch_.i_min);
  ws.head_tanh = ws.dense_pre.back().row(0).array().tanh().matrix();
  ws.out = ((mid + half * ws.head_tanh.array()).cwiseMax(arch_.i_min).cwiseMin(arch_.i_max)).matrix();

  double loss = 0.0;
  if (grad && batch.labels.size() != b) throw ShapeError("policy: labels length differs from batch size");
  if (batch.labels.size() == b && b > 0) loss = (ws.out - batch.labels).squaredNorm() / static_cast<double>(b);
  if (!grad) return loss;

  grad->setZero(params_.size());
  double* gtheta = grad->data();

  // Head and dense stack.
  MatrixXd delta = (2.0 / static_cast<double>(b)) * (ws.out - batch.labels).array() * half *
                   (1.0 - ws.head_tanh.array().square());
  for (std::size_t k = n_dense; k-- > 0;) {
    const DenseBlock& blk = layout.dense[k];
    ConstMap w(theta + blk.w, blk.out, blk.in);
    if (k + 1 < n_dense) delta = delta.cwiseProduct((ws.dense_pre[k].array() > 0.0).cast<double>().matrix());
    MutMap(gtheta + blk.w, blk.out, blk.in).noalias() += delta * ws.dense_in[k].transpose();
    Eigen::Map<VectorXd>(gtheta + blk.b, blk.out) += delta.rowwise().sum();
    delta = w.transpose() * delta;
  }

  // Recurrent stack, top layer first; d_ext[t] is dLoss/dh_t from above.
  std::vector<MatrixXd> d_ext(steps);
  for (int t = 0; t < steps; ++t) d_ext[t] = MatrixXd::Zero(top, b);
  d_ext[steps - 1] = delta.topRows(top);
  for (std::size_t l = n_layers; l-- > 0;) {
    const LstmBlock& blk = layout.lstm[l];
    const int h = blk.hidden;
    ConstMap w(theta + blk.w, 4 * h, blk.in);
    ConstMap u(theta + blk.u, 4 * h, h);
    MutMap gw(gtheta + blk.w, 4 * h, blk.in);
    MutMap gu(gtheta + blk.u, 4 * h, h);
    Eigen::Map<VectorXd> gb(gtheta + blk.b, 4 * h);
    const auto& inputs = l == 0 ? batch.steps : ws.hidden[l - 1];
    const auto& gates = ws.gates[l];
    const auto& cell = ws.cell[l];
    const auto& tcell = ws.tanh_cell[l];
    const auto& hidden = ws.hidden[l];
    std::vector<MatrixXd> d_below(l > 0 ? steps : 0);

    MatrixXd dh_next = MatrixXd::Zero(h, b);
    MatrixXd dc_next = MatrixXd::Zero(h, b);
    MatrixXd da(4 * h, b);
    for (int t = steps; t-- > 0;) {
      const auto gi = gates[t].topRows(h).array();
      const auto gf = gates[t].middleRows(h, h).array();
      const auto gg = gates[t].middleRows(2 * h, h).array();
      const auto go = gates[t].bottomRows(h).array();
      const MatrixXd dh = d_ext[t] + dh_next;
      const MatrixXd dc =
          (dc_next.array() + dh.array() * go * (1.0 - tcell[t].array().square())).matrix();
      da.topRows(h) = (dc.array() * gg * gi * (1.0 - gi)).matrix();
      if (t > 0)
        da.middleRows(h, h) = (dc.array() * cell[t - 1].array() * gf * (1.0 - gf)).matrix();
      else
        da.middleRows(h, h).setZero();
      da.middleRows(2 * h, h) = (dc.array() * gi * (1.0 - gg.square())).matrix();
      da.bottomRows(h) = (dh.array() * tcell[t].array() * go * (1.0 - go)).matrix();
      dc_next = (dc.array() * gf).matrix();

      gw.noalias() += da * inputs[t].transpose();
      if (t > 0) gu.noalias() += da * hidden[t - 1].transpose();
      gb += da.rowwise().sum();
      dh_next.noalias() = u.transpose() * da;
      if (l > 0) d_below[t].noalias() = w.transpose() * da;
    }
    if (l > 0) d_ext = std::move(d_below);
  }
  return loss;
}

Eigen::RowVectorXd PolicyModel::forward(const Batch& batch) const {
  Workspace ws;
  run(batch, ws, nullptr);
  return ws.out;
}

double PolicyModel::forward(std::span<const double> window, double soc_ref) const {
  const std::size_t expected = 3 * static_cast<std::size_t>(arch_.n_w + 1);
  if (window.size() != expected)
    throw ShapeError("policy: window has " + std::to_string(window.size()) + " values, expected " +
                     std::to_string(expected));
  Batch batch;
  const int steps = arch_.n_w + 1;
  batch.steps.assign(steps, MatrixXd(3, 1));
  for (int t = 0; t < steps; ++t)
    for (int c = 0; c < 3; ++c) batch.steps[t](c, 0) = prep_.apply(c, window[3 * t + c]);
  batch.soc_ref = RowVectorXd::Constant(1, prep_.apply(Standardizer::soc_ref, soc_ref));
  Workspace ws;
  run(batch, ws, nullptr);
  return ws.out(0);
}

double PolicyModel::loss(const Batch& batch, Eigen::VectorXd* grad) const {
  Workspace ws;
  return run(batch, ws, grad);
}

void PolicyModel::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("checkpoint: cannot write " + path.string());
  out.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::int32_t>(out, arch_.n_w);
  put<std::int32_t>(out, static_cast<std::int32_t>(arch_.lstm_sizes.size()));
  for (int h : arch_.lstm_sizes) put<std::int32_t>(out, h);
  put<std::int32_t>(out, static_cast<std::int32_t>(arch_.dense_sizes.size()));
  for (int d : arch_.dense_sizes) put<std::int32_t>(out, d);
  put<double>(out, arch_.i_min);
  put<double>(out, arch_.i_max);
  for (double m : prep_.mean) put<double>(out, m);
  for (double s : prep_.stddev) put<double>(out, s);
  put<double>(out, noise_.sigma_v);
  put<double>(out, noise_.sigma_t);
  put<double>(out, noise_.sigma_i);
  put<std::uint64_t>(out, static_cast<std::uint64_t>(params_.size()));
  for (Index k = 0; k < params_.size(); ++k) put<double>(out, params_[k]);
  if (!out) throw std::runtime_error("checkpoint: write failed for " + path.string());
}

PolicyModel PolicyModel::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("checkpoint: cannot open " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw ConfigError("checkpoint: " + path.string() + " is not a policy checkpoint");
  if (get<std::uint32_t>(in) != kCheckpointVersion) throw ConfigError("checkpoint: unsupported version");
  Architecture arch;
  arch.n_w = get<std::int32_t>(in);
  auto read_sizes = [&in]() {
    const auto n = get<std::int32_t>(in);
    if (n < 0 || n > 64) throw ConfigError("checkpoint: corrupt layer count");
    std::vector<int> sizes(n);
    for (int& s : sizes) s = get<std::int32_t>(in);
    return sizes;
  };
  arch.lstm_sizes = read_sizes();
  arch.dense_sizes = read_sizes();
  arch.i_min = get<double>(in);
  arch.i_max = get<double>(in);
  PolicyModel model(arch, 0);
  for (double& m : model.prep_.mean) m = get<double>(in);
  for (double& s : model.prep_.stddev) s = get<double>(in);
  model.noise_.sigma_v = get<double>(in);
  model.noise_.sigma_t = get<double>(in);
  model.noise_.sigma_i = get<double>(in);
  const auto count = get<std::uint64_t>(in);
  if (count != static_cast<std::uint64_t>(model.params_.size()))
    throw ConfigError("checkpoint: parameter count does not match its architecture header");
  for (Index k = 0; k < model.params_.size(); ++k) model.params_[k] = get<double>(in);
  return model;
}

PolicyModel PolicyModel::load(const std::filesystem::path& path, const Architecture& expected) {
  PolicyModel model = load(path);
  if (!(model.arch_ == expected))
    throw ConfigError("checkpoint: " + path.string() + " has a different architecture than expected");
  return model;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("train: learning_rate must be > 0");
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (patience < 0) throw ConfigError("train: patience must be >= 0");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0))
    throw ConfigError("train: validation_fraction must be in [0, 1)");
  if (noise.sigma_v < 0.0 || noise.sigma_t < 0.0 || noise.sigma_i < 0.0)
    throw ConfigError("train: noise standard deviations must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0 && epsilon > 0.0))
    throw ConfigError("train: invalid Adam coefficients");
}

TrainResult train(PolicyModel model, const Dataset& data, const TrainConfig& cfg) {
  cfg.validate();
  if (data.empty()) throw ConfigError("train: empty dataset");
  if (data.n_w() != model.architecture().n_w)
    throw ShapeError("train: dataset n_w does not match the model architecture");
  if (cfg.fit_preprocess) model.preprocess() = Standardizer::fit(data);
  model.noise_spec() = cfg.noise;

  std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                    0x7a41u};
  std::mt19937_64 rng(seq);

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_val = static_cast<std::size_t>(std::floor(cfg.validation_fraction * data.size()));
  std::vector<std::size_t> val_rows(order.end() - n_val, order.end());
  std::vector<std::size_t> train_rows(order.begin(), order.end() - n_val);
  std::sort(val_rows.begin(), val_rows.end());
  std::optional<Batch> val_batch;
  if (!val_rows.empty())
    val_batch = make_batch(data, val_rows, model.preprocess(), NoiseSpec{}, nullptr);

  const Index n_params = model.parameters().size();
  VectorXd grad(n_params), m = VectorXd::Zero(n_params), v = VectorXd::Zero(n_params);
  double beta1_pow = 1.0, beta2_pow = 1.0;

  TrainResult result{model, {}, {}, 0};
  double best = std::numeric_limits<double>::infinity();
  int since_best = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(train_rows.begin(), train_rows.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < train_rows.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(train_rows.size(), start + cfg.batch_size);
      const std::span<const std::size_t> rows(train_rows.data() + start, stop - start);
      const Batch batch = make_batch(data, rows, model.preprocess(), model.noise_spec(), &rng);
      const double l = model.loss(batch, &grad);
      if (!std::isfinite(l) || !grad.allFinite())
        throw TrainingError("train: non-finite loss at epoch " + std::to_string(epoch) + ", rows " +
                            std::to_string(start) + ".." + std::to_string(stop) +
                            " (learning_rate=" + std::to_string(cfg.learning_rate) +
                            "); check learning rate and initialisation");
      epoch_loss += l * static_cast<double>(rows.size());
      beta1_pow *= cfg.beta1;
      beta2_pow *= cfg.beta2;
      m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad;
      v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad.cwiseAbs2();
      const double step = cfg.learning_rate * std::sqrt(1.0 - beta2_pow) / (1.0 - beta1_pow);
      model.parameters().array() -= step * m.array() / (v.array().sqrt() + cfg.epsilon);
    }
    result.train_loss.push_back(epoch_loss / static_cast<double>(train_rows.size()));

    const double monitored = val_batch ? model.loss(*val_batch) : result.train_loss.back();
    if (val_batch) result.validation_loss.push_back(monitored);
    if (monitored < best) {
      best = monitored;
      result.best_epoch = epoch;
      result.model = model;
      since_best = 0;
    } else if (cfg.patience > 0 && ++since_best >= cfg.patience) {
      break;
    }
  }
  return result;
}

GradCheckResult gradient_check(const PolicyModel& model, const Batch& batch, double h,
                               double small_threshold) {
  VectorXd analytic;
  const double base = model.loss(batch, &analytic);
  PolicyModel probe = model;
  GradCheckResult out;
  out.noise_floor = std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(base)) / h;
  const double cutoff = std::max(small_threshold, 1e4 * out.noise_floor);
  std::vector<double> relative;
  for (Index k = 0; k < probe.parameters().size(); ++k) {
    const double saved = probe.parameters()[k];
    probe.parameters()[k] = saved + h;
    const double up = probe.loss(batch);
    probe.parameters()[k] = saved - h;
    const double down = probe.loss(batch);
    probe.parameters()[k] = saved;
    const double numeric = (up - down) / (2.0 * h);
    const double scale = std::max(std::abs(numeric), std::abs(analytic[k]));
    const double diff = std::abs(numeric - analytic[k]);
    if (scale < cutoff) {
      out.max_absolute_error_small = std::max(out.max_absolute_error_small, diff);
      ++out.small_gradients;
    } else {
      out.max_relative_error = std::max(out.max_relative_error, diff / scale);
      relative.push_back(diff / scale);
    }
    ++out.parameters_checked;
  }
  if (!relative.empty()) {
    auto mid = relative.begin() + static_cast<std::ptrdiff_t>(relative.size() / 2);
    std::nth_element(relative.begin(), mid, relative.end());
    out.median_relative_error = *mid;
  }
  return out;
}

}  // namespace dcharge
