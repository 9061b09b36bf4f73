#include "alpde/surrogate.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <numeric>

#include "alpde/parallel.hpp"
#include "alpde/random.hpp"
#include "json.hpp"

namespace alpde {
namespace detail {
void gelu_with_derivative(const double* x, double* y, double* dy,
                          std::size_t n);
}
namespace {

using nlohmann::json;
using RowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

constexpr int kLayers = SurrogateArch::kLayers;
// Samples per gradient chunk; fixed so the summation order never depends on
// the worker count.
constexpr std::size_t kChunk = 8;
constexpr double kInvSqrt2 = 0.70710678118654752440;

// Rows are (sample, x); each patch row holds the kernel window of the input
// channels, wrapped periodically within its sample.
void im2col(const double* in, int batch, int n, int cin, int kernel,
            double* patches) {
  const int half = kernel / 2;
  const std::size_t width = static_cast<std::size_t>(kernel) * cin;
  for (int b = 0; b < batch; ++b) {
    const double* src = in + static_cast<std::size_t>(b) * n * cin;
    for (int x = 0; x < n; ++x) {
      double* row = patches + (static_cast<std::size_t>(b) * n + x) * width;
      for (int k = 0; k < kernel; ++k) {
        int xx = x + k - half;
        xx = xx < 0 ? xx + n : (xx >= n ? xx - n : xx);
        std::memcpy(row + static_cast<std::size_t>(k) * cin,
                    src + static_cast<std::size_t>(xx) * cin,
                    sizeof(double) * cin);
      }
    }
  }
}

void col2im_add(const double* dpatches, int batch, int n, int cin, int kernel,
                double* din) {
  const int half = kernel / 2;
  const std::size_t width = static_cast<std::size_t>(kernel) * cin;
  for (int b = 0; b < batch; ++b) {
    double* dst = din + static_cast<std::size_t>(b) * n * cin;
    for (int x = 0; x < n; ++x) {
      const double* row =
          dpatches + (static_cast<std::size_t>(b) * n + x) * width;
      for (int k = 0; k < kernel; ++k) {
        int xx = x + k - half;
        xx = xx < 0 ? xx + n : (xx >= n ? xx - n : xx);
        double* d = dst + static_cast<std::size_t>(xx) * cin;
        const double* s = row + static_cast<std::size_t>(k) * cin;
        for (int i = 0; i < cin; ++i) d[i] += s[i];
      }
    }
  }
}

// Activations of one forward step over a batch.
struct StepTape {
  int batch = 0, n = 0;
  std::vector<double> input;  // (batch * n, cin0)
  std::array<std::vector<double>, kLayers> patches;
  std::array<std::vector<double>, kLayers - 1> pre;
  std::array<std::vector<double>, kLayers - 1> post;
  std::array<std::vector<double>, kLayers - 1> dpost;  // GELU'(pre)
  std::vector<double> out;  // (batch * n, n_c), before scaling
};

}  // namespace

double gelu(double x) {
  return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2));
}

double gelu_derivative(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
  const double pdf =
      std::exp(-0.5 * x * x) * (0.5 * std::numbers::inv_sqrtpi *
                                std::numbers::sqrt2);
  return cdf + x * pdf;
}

void validate(const TrainConfig& cfg) {
  if (cfg.epochs < 0) throw std::invalid_argument("train.epochs must be >= 0");
  if (cfg.batch_size < 1) {
    throw std::invalid_argument("train.batch_size must be >= 1");
  }
  if (cfg.sub_trajectory_length < 1) {
    throw std::invalid_argument("train.sub_trajectory_length must be >= 1");
  }
  if (cfg.windows_per_trajectory < 1) {
    throw std::invalid_argument("train.windows_per_trajectory must be >= 1");
  }
  if (!(cfg.lr_max > 0.0) || !(cfg.lr_min >= 0.0) ||
      cfg.lr_min > cfg.lr_max) {
    throw std::invalid_argument("train learning rates must satisfy "
                                "0 <= lr_min <= lr_max, lr_max > 0");
  }
  if (!(cfg.clip_factor > 0.0) || cfg.clip_warmup_epochs < 0 ||
      !(cfg.clip_ema_decay >= 0.0 && cfg.clip_ema_decay < 1.0)) {
    throw std::invalid_argument("train gradient clipping settings invalid");
  }
}

NormStats fit_norm_stats(const TrajectoryBatch& dataset,
                         const ParamSpec& params) {
  const int nc = dataset.n_c();
  std::vector<double> sum(nc, 0.0);
  std::vector<long> count(nc, 0);
  auto each = [&](auto&& fn) {
    for (int i = 0; i < dataset.n_traj(); ++i) {
      if (dataset.failed(i)) continue;
      auto traj = dataset.trajectory(i);
      for (std::size_t j = 0; j < traj.size(); ++j) fn(j % nc, traj[j]);
    }
  };
  each([&](std::size_t c, double v) {
    sum[c] += v;
    ++count[c];
  });
  NormStats stats;
  stats.params = params;
  stats.channel_std.assign(nc, 0.0);
  if (count[0] == 0) throw std::invalid_argument("fit_norm_stats: no data");
  std::vector<double> mean(nc);
  for (int c = 0; c < nc; ++c) mean[c] = sum[c] / count[c];
  std::vector<double> sq(nc, 0.0);
  each([&](std::size_t c, double v) { sq[c] += (v - mean[c]) * (v - mean[c]); });
  for (int c = 0; c < nc; ++c) {
    stats.channel_std[c] = std::sqrt(sq[c] / count[c]);
    if (!(stats.channel_std[c] > 0.0)) {
      throw std::invalid_argument("fit_norm_stats: channel " +
                                  std::to_string(c) + " has zero variance");
    }
  }
  return stats;
}

// ------------------------------------------------------------ SurrogateModel

SurrogateModel::SurrogateModel(const SurrogateArch& arch, NormStats stats,
                               std::uint64_t init_seed)
    : arch_(arch), stats_(std::move(stats)), init_seed_(init_seed) {
  if (arch.hidden < 1 || arch.kernel < 1 || arch.kernel % 2 == 0 ||
      arch.n_channels < 1 || arch.n_params < 0) {
    throw std::invalid_argument("invalid surrogate architecture");
  }
  if (static_cast<int>(stats_.channel_std.size()) != arch.n_channels ||
      static_cast<int>(stats_.params.size()) != arch.n_params) {
    throw std::invalid_argument("norm stats do not match the architecture");
  }
  std::size_t off = 0;
  for (int l = 0; l < kLayers; ++l) {
    weight_off_.push_back(off);
    off += weight_count(l);
    bias_off_.push_back(off);
    off += arch.out_channels(l);
  }
  params_.assign(off, 0.0);
  // Kaiming-uniform with a = sqrt(5): U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
  Rng rng(derive_seed({init_seed, 0x696e6974}));
  for (int l = 0; l < kLayers; ++l) {
    const double bound =
        1.0 / std::sqrt(static_cast<double>(arch.in_channels(l) * arch.kernel));
    for (std::size_t j = weight_off_[l]; j < bias_off_[l]; ++j) {
      params_[j] = rng.uniform(-bound, bound);
    }
    for (int o = 0; o < arch.out_channels(l); ++o) {
      params_[bias_off_[l] + o] = rng.uniform(-bound, bound);
    }
  }
}

std::size_t SurrogateModel::weight_count(int layer) const {
  return static_cast<std::size_t>(arch_.kernel) * arch_.in_channels(layer) *
         arch_.out_channels(layer);
}

std::vector<double> SurrogateModel::conditioning(const PDEParams& pde) const {
  if (static_cast<int>(pde.values.size()) != arch_.n_params) {
    throw std::invalid_argument("PDE parameter count does not match model");
  }
  return normalize_param_values(stats_.params, pde.values);
}

namespace {

// Runs one step for `batch` stacked states; cond holds n_params values per
// sample. Non-finite outputs are left in `next` for the caller to detect.
void step_forward(const SurrogateModel& m, const double* state,
                  const double* cond, int batch, int n, StepTape& tape,
                  std::vector<double>& next) {
  const SurrogateArch& a = m.arch();
  const auto& sigma = m.norm_stats().channel_std;
  const int nc = a.n_channels;
  const int cin0 = a.in_channels(0);
  const auto p = m.parameters();
  const std::size_t rows = static_cast<std::size_t>(batch) * n;
  tape.batch = batch;
  tape.n = n;
  tape.input.resize(rows * cin0);
  for (std::size_t r = 0; r < rows; ++r) {
    double* row = tape.input.data() + r * cin0;
    const double* c = cond + (r / n) * a.n_params;
    for (int ch = 0; ch < nc; ++ch) row[ch] = state[r * nc + ch] / sigma[ch];
    for (int q = 0; q < a.n_params; ++q) row[nc + q] = c[q];
  }
  const double* layer_in = tape.input.data();
  for (int l = 0; l < kLayers; ++l) {
    const int cin = a.in_channels(l);
    const int cout = a.out_channels(l);
    const int width = a.kernel * cin;
    auto& patches = tape.patches[l];
    patches.resize(rows * width);
    im2col(layer_in, batch, n, cin, a.kernel, patches.data());
    std::vector<double>& dst = l < kLayers - 1 ? tape.pre[l] : tape.out;
    dst.resize(rows * cout);
    MapMat y(dst.data(), rows, cout);
    y.noalias() = ConstMapMat(patches.data(), rows, width) *
                  ConstMapMat(p.data() + m.weight_offset(l), width, cout);
    y.rowwise() +=
        Eigen::Map<const Eigen::RowVectorXd>(p.data() + m.bias_offset(l), cout);
    if (l < kLayers - 1) {
      auto& post = tape.post[l];
      post.resize(dst.size());
      tape.dpost[l].resize(dst.size());
      detail::gelu_with_derivative(dst.data(), post.data(),
                                   tape.dpost[l].data(), dst.size());
      layer_in = post.data();
    }
  }
  next.resize(rows * nc);
  for (std::size_t r = 0; r < rows; ++r) {
    for (int c = 0; c < nc; ++c) {
      const std::size_t j = r * nc + c;
      next[j] = state[j] + a.residual_scale * sigma[c] * tape.out[j];
    }
  }
}

bool all_finite(const double* v, std::size_t n) {
  for (std::size_t j = 0; j < n; ++j) {
    if (!std::isfinite(v[j])) return false;
  }
  return true;
}

// Backpropagates d(loss)/d(out) through the layers of one step, accumulating
// parameter gradients. Returns d(loss)/d(input) in `dinput` when requested.
void step_backward(const SurrogateModel& m, const StepTape& tape,
                   std::vector<double> dout, std::span<double> grad,
                   std::vector<double>* dinput) {
  const SurrogateArch& a = m.arch();
  const auto p = m.parameters();
  const std::size_t rows = static_cast<std::size_t>(tape.batch) * tape.n;
  std::vector<double> dpatch, dprev;
  for (int l = kLayers - 1; l >= 0; --l) {
    const int cin = a.in_channels(l), cout = a.out_channels(l);
    const int width = a.kernel * cin;
    ConstMapMat dy(dout.data(), rows, cout);
    ConstMapMat patches(tape.patches[l].data(), rows, width);
    MapMat(grad.data() + m.weight_offset(l), width, cout).noalias() +=
        patches.transpose() * dy;
    double* db = grad.data() + m.bias_offset(l);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* g = dout.data() + r * cout;
      for (int o = 0; o < cout; ++o) db[o] += g[o];
    }
    if (l == 0 && dinput == nullptr) break;
    dpatch.resize(rows * width);
    MapMat(dpatch.data(), rows, width).noalias() =
        dy * ConstMapMat(p.data() + m.weight_offset(l), width, cout)
                 .transpose();
    dprev.assign(rows * cin, 0.0);
    col2im_add(dpatch.data(), tape.batch, tape.n, cin, a.kernel, dprev.data());
    if (l == 0) {
      *dinput = std::move(dprev);
      break;
    }
    const auto& dact = tape.dpost[l - 1];
    for (std::size_t j = 0; j < dprev.size(); ++j) dprev[j] *= dact[j];
    dout.swap(dprev);
  }
}

void check_batch(const SurrogateArch& a, std::span<const TrainSample> batch,
                 int& n, int& steps) {
  if (batch.empty()) throw std::invalid_argument("empty training batch");
  n = batch[0].n_x;
  const std::size_t frame = static_cast<std::size_t>(n) * a.n_channels;
  steps = static_cast<int>(batch[0].frames.size() / frame) - 1;
  if (n < 1 || steps < 1) throw std::invalid_argument("invalid train sample");
  for (const TrainSample& s : batch) {
    if (s.n_x != n || s.frames.size() != frame * (steps + 1) ||
        static_cast<int>(s.conditioning.size()) != a.n_params) {
      throw std::invalid_argument("inconsistent train samples in batch");
    }
  }
}

}  // namespace

StepOutput SurrogateModel::forward(std::span<const double> state,
                                   const PDEParams& pde,
                                   FeatureLayer capture) const {
  const auto cond = conditioning(pde);
  return forward_conditioned(state, cond, capture);
}

StepOutput SurrogateModel::forward_conditioned(
    std::span<const double> state, std::span<const double> conditioning,
    FeatureLayer capture) const {
  const int n = static_cast<int>(state.size()) / arch_.n_channels;
  StepTape tape;
  StepOutput out;
  step_forward(*this, state.data(), conditioning.data(), 1, n, tape, out.next);
  if (!all_finite(out.next.data(), out.next.size())) {
    for (int l = 0; l < kLayers - 1; ++l) {
      if (!all_finite(tape.post[l].data(), tape.post[l].size())) {
        throw std::runtime_error("surrogate produced non-finite activations "
                                 "in layer " + std::to_string(l + 1));
      }
    }
    throw std::runtime_error(
        "surrogate produced a non-finite state (final layer output)");
  }
  if (capture == FeatureLayer::kLast) out.features = tape.post[kLayers - 2];
  if (capture == FeatureLayer::kMid) out.features = tape.post[1];
  return out;
}

double SurrogateModel::loss(const TrainSample& sample) const {
  int n = 0, steps = 0;
  check_batch(arch_, {&sample, 1}, n, steps);
  const int nc = arch_.n_channels;
  const std::size_t frame = static_cast<std::size_t>(n) * nc;
  StepTape tape;
  std::vector<double> state(sample.frames.begin(),
                            sample.frames.begin() + frame);
  std::vector<double> next;
  double sq = 0.0;
  for (int k = 1; k <= steps; ++k) {
    step_forward(*this, state.data(), sample.conditioning.data(), 1, n, tape,
                 next);
    const double* target = sample.frames.data() + k * frame;
    for (std::size_t j = 0; j < frame; ++j) {
      const double e = (next[j] - target[j]) / stats_.channel_std[j % nc];
      sq += e * e;
    }
    state.swap(next);
  }
  return std::sqrt(sq / (static_cast<double>(steps) * frame));
}

double SurrogateModel::loss_and_gradient(const TrainSample& sample,
                                         std::span<double> grad) const {
  return loss_and_gradient(std::span<const TrainSample>(&sample, 1), grad);
}

double SurrogateModel::loss_and_gradient(std::span<const TrainSample> batch,
                                         std::span<double> grad) const {
  int n = 0, steps = 0;
  check_batch(arch_, batch, n, steps);
  const int nc = arch_.n_channels;
  const int nb = static_cast<int>(batch.size());
  const std::size_t frame = static_cast<std::size_t>(n) * nc;
  const std::size_t total = frame * nb;
  const auto& sigma = stats_.channel_std;

  std::vector<double> cond;
  for (const TrainSample& s : batch) {
    cond.insert(cond.end(), s.conditioning.begin(), s.conditioning.end());
  }
  // states[k] and targets[k]: (nb, n, nc)
  auto target = [&](int k, int b) {
    return batch[b].frames.data() + k * frame;
  };
  std::vector<StepTape> tapes(steps);
  std::vector<std::vector<double>> states(steps + 1);
  states[0].resize(total);
  for (int b = 0; b < nb; ++b) {
    std::copy_n(target(0, b), frame, states[0].data() + b * frame);
  }
  std::vector<double> sq(nb, 0.0);
  for (int k = 1; k <= steps; ++k) {
    step_forward(*this, states[k - 1].data(), cond.data(), nb, n,
                 tapes[k - 1], states[k]);
    for (int b = 0; b < nb; ++b) {
      const double* t = target(k, b);
      const double* s = states[k].data() + b * frame;
      for (std::size_t j = 0; j < frame; ++j) {
        const double e = (s[j] - t[j]) / sigma[j % nc];
        sq[b] += e * e;
      }
    }
  }
  const double count = static_cast<double>(steps) * frame;
  double loss_sum = 0.0;
  std::vector<double> scale(nb, 0.0);  // d loss_b / d (sum of squares)
  for (int b = 0; b < nb; ++b) {
    const double l = std::sqrt(sq[b] / count);
    loss_sum += l;
    // Zero loss has a zero subgradient.
    if (l > 0.0) scale[b] = 0.5 / (l * count);
  }

  const int cin0 = arch_.in_channels(0);
  std::vector<double> carry(total, 0.0);  // dL/ds_k from later steps
  std::vector<double> ds(total), dout(total), dinput;
  for (int k = steps; k >= 1; --k) {
    for (int b = 0; b < nb; ++b) {
      const double* t = target(k, b);
      for (std::size_t j = 0; j < frame; ++j) {
        const std::size_t g = b * frame + j;
        const double s = sigma[j % nc];
        ds[g] = carry[g] + scale[b] * 2.0 * (states[k][g] - t[j]) / (s * s);
      }
    }
    // s_k = s_{k-1} + rho * sigma * out
    for (std::size_t g = 0; g < total; ++g) {
      dout[g] = arch_.residual_scale * sigma[g % nc] * ds[g];
    }
    step_backward(*this, tapes[k - 1], dout, grad, k > 1 ? &dinput : nullptr);
    if (k > 1) {
      for (std::size_t r = 0; r < total / nc; ++r) {
        for (int c = 0; c < nc; ++c) {
          carry[r * nc + c] = ds[r * nc + c] + dinput[r * cin0 + c] / sigma[c];
        }
      }
    }
  }
  return loss_sum;
}

// ------------------------------------------------------------------ ensemble

Ensemble make_ensemble(const SurrogateArch& arch, const NormStats& stats,
                       int n_members, std::uint64_t seed,
                       bool identical_seeds) {
  if (n_members < 1) throw std::invalid_argument("ensemble needs >= 1 member");
  Ensemble e;
  for (int m = 0; m < n_members; ++m) {
    const std::uint64_t member = identical_seeds ? 0 : m;
    e.members.emplace_back(arch, stats, derive_seed({seed, member, 0x6d}));
  }
  return e;
}

double cosine_learning_rate(const TrainConfig& cfg, long step, long total) {
  if (total <= 1) return cfg.lr_max;
  const double progress =
      static_cast<double>(step) / static_cast<double>(total - 1);
  return cfg.lr_min + 0.5 * (cfg.lr_max - cfg.lr_min) *
                          (1.0 + std::cos(std::numbers::pi * progress));
}

TrainReport train(SurrogateModel& model, const Dataset& data,
                  const TrainConfig& cfg) {
  validate(cfg);
  TrainReport report;
  if (cfg.epochs == 0) return report;
  const TrajectoryBatch& traj = *data.trajectories;
  const int window = cfg.sub_trajectory_length;
  if (traj.n_t() < window + 1) {
    throw std::invalid_argument("trajectories shorter than the train window");
  }
  std::vector<int> valid;
  for (int i = 0; i < traj.n_traj(); ++i) {
    if (!traj.failed(i)) valid.push_back(i);
  }
  if (valid.empty()) throw std::invalid_argument("train: empty dataset");
  if (data.params.size() != static_cast<std::size_t>(traj.n_traj())) {
    throw std::invalid_argument("train: parameters do not match trajectories");
  }
  std::vector<std::vector<double>> cond(traj.n_traj());
  for (int i : valid) cond[i] = model.conditioning(data.params[i]);

  const std::size_t n_windows = valid.size() * cfg.windows_per_trajectory;
  const long steps_per_epoch =
      static_cast<long>((n_windows + cfg.batch_size - 1) / cfg.batch_size);
  const long total_steps = steps_per_epoch * cfg.epochs;
  const std::size_t n_params = model.n_parameters();
  std::vector<double> adam_m(n_params, 0.0), adam_v(n_params, 0.0);
  std::vector<double> grad(n_params);
  const std::size_t frame = traj.frame_size();

  double max_warmup_norm = 0.0;
  double threshold = 0.0;
  double first_loss = 0.0;
  long step = 0;
  std::vector<std::pair<int, int>> windows(n_windows);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng rng(derive_seed({cfg.seed, static_cast<std::uint64_t>(epoch),
                         0x7472}));
    std::size_t w = 0;
    for (int i : valid) {
      for (int r = 0; r < cfg.windows_per_trajectory; ++r) {
        windows[w++] = {i, static_cast<int>(rng.below(traj.n_t() - window))};
      }
    }
    for (std::size_t j = n_windows; j > 1; --j) {
      std::swap(windows[j - 1], windows[rng.below(j)]);
    }
    if (epoch == cfg.clip_warmup_epochs) {
      threshold = cfg.clip_factor * max_warmup_norm;
    }
    double epoch_loss = 0.0;
    for (std::size_t begin = 0; begin < n_windows; begin += cfg.batch_size) {
      const std::size_t end = std::min(n_windows, begin + cfg.batch_size);
      const std::size_t n_chunks = (end - begin + kChunk - 1) / kChunk;
      std::vector<std::vector<double>> chunk_grad(n_chunks);
      std::vector<double> chunk_loss(n_chunks, 0.0);
      parallel_for(n_chunks, [&](std::size_t c) {
        chunk_grad[c].assign(n_params, 0.0);
        const std::size_t lo = begin + c * kChunk;
        const std::size_t hi = std::min(end, lo + kChunk);
        std::vector<TrainSample> samples;
        for (std::size_t s = lo; s < hi; ++s) {
          const auto [i, start] = windows[s];
          samples.push_back({traj.trajectory(i).subspan(start * frame,
                                                        (window + 1) * frame),
                             cond[i], traj.n_x()});
        }
        chunk_loss[c] = model.loss_and_gradient(samples, chunk_grad[c]);
      });
      std::fill(grad.begin(), grad.end(), 0.0);
      double batch_loss = 0.0;
      for (std::size_t c = 0; c < n_chunks; ++c) {
        batch_loss += chunk_loss[c];
        for (std::size_t j = 0; j < n_params; ++j) grad[j] += chunk_grad[c][j];
      }
      const double inv = 1.0 / static_cast<double>(end - begin);
      double norm_sq = 0.0;
      for (double& g : grad) {
        g *= inv;
        norm_sq += g * g;
      }
      const double norm = std::sqrt(norm_sq);
      epoch_loss += batch_loss;
      if (epoch < cfg.clip_warmup_epochs) {
        max_warmup_norm = std::max(max_warmup_norm, norm);
      } else if (threshold > 0.0) {
        const double used = std::min(norm, threshold);
        if (norm > threshold) {
          const double scale = threshold / norm;
          for (double& g : grad) g *= scale;
        }
        threshold = cfg.clip_ema_decay * threshold +
                    (1.0 - cfg.clip_ema_decay) * cfg.clip_factor * used;
      }
      // Adam
      ++step;
      const double lr = cosine_learning_rate(cfg, step - 1, total_steps);
      const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
      const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
      auto params = model.parameters();
      for (std::size_t j = 0; j < n_params; ++j) {
        adam_m[j] = cfg.beta1 * adam_m[j] + (1.0 - cfg.beta1) * grad[j];
        adam_v[j] = cfg.beta2 * adam_v[j] + (1.0 - cfg.beta2) * grad[j] * grad[j];
        const double mh = adam_m[j] / bc1;
        const double vh = adam_v[j] / bc2;
        params[j] -= lr * mh / (std::sqrt(vh) + cfg.adam_eps);
      }
    }
    epoch_loss /= static_cast<double>(n_windows);
    report.epoch_loss.push_back(epoch_loss);
    report.clip_threshold.push_back(threshold);
    if (epoch == 0) first_loss = epoch_loss;
    if (!std::isfinite(epoch_loss) ||
        epoch_loss > cfg.divergence_factor * first_loss) {
      throw DivergenceError("training diverged at epoch " +
                            std::to_string(epoch) + ": loss " +
                            std::to_string(epoch_loss) + " vs initial " +
                            std::to_string(first_loss));
    }
  }
  report.steps = step;
  model.set_epochs_trained(model.epochs_trained() + cfg.epochs);
  return report;
}

std::vector<TrainReport> train_ensemble(Ensemble& ensemble, const Dataset& data,
                                        const TrainConfig& cfg,
                                        bool identical_seeds) {
  std::vector<TrainReport> reports(ensemble.members.size());
  parallel_for(ensemble.members.size(), [&](std::size_t m) {
    TrainConfig member_cfg = cfg;
    member_cfg.seed = derive_seed({cfg.seed, identical_seeds ? 0 : m, 0x74});
    reports[m] = train(ensemble.members[m], data, member_cfg);
  });
  return reports;
}

// ------------------------------------------------------------------ rollout

BatchRollout rollout_batch(const SurrogateModel& model,
                           std::span<const double> ics,
                           std::span<const PDEParams> pdes, int n_steps,
                           FeatureLayer capture, bool spatial_mean_features) {
  const SurrogateArch& a = model.arch();
  const int nb = static_cast<int>(pdes.size());
  BatchRollout r;
  r.n_batch = nb;
  r.n_steps = n_steps;
  r.completed_steps.assign(nb, 0);
  r.failure.assign(nb, "");
  if (nb == 0) return r;
  if (n_steps < 0) throw std::invalid_argument("rollout: negative step count");
  if (ics.size() % (static_cast<std::size_t>(nb) * a.n_channels) != 0) {
    throw std::invalid_argument("rollout: initial states do not match batch");
  }
  const std::size_t frame = ics.size() / nb;
  const int n = static_cast<int>(frame) / a.n_channels;
  std::vector<double> cond;
  for (const PDEParams& p : pdes) {
    const auto c = model.conditioning(p);
    cond.insert(cond.end(), c.begin(), c.end());
  }
  const std::size_t traj = frame * (n_steps + 1);
  r.states.assign(traj * nb, 0.0);
  for (int b = 0; b < nb; ++b) {
    std::copy_n(ics.data() + b * frame, frame, r.states.data() + b * traj);
  }
  const int h = a.hidden;
  const std::size_t feat_step =
      capture == FeatureLayer::kNone
          ? 0
          : static_cast<std::size_t>(spatial_mean_features ? 1 : n) * h;
  r.features.assign(feat_step * n_steps * nb, 0.0);

  StepTape tape;
  std::vector<double> state(ics.begin(), ics.end());
  std::vector<double> next;
  std::vector<char> alive(nb, 1);
  for (int k = 0; k < n_steps; ++k) {
    step_forward(model, state.data(), cond.data(), nb, n, tape, next);
    const std::vector<double>* feats =
        capture == FeatureLayer::kLast ? &tape.post[kLayers - 2]
        : capture == FeatureLayer::kMid ? &tape.post[1]
                                         : nullptr;
    for (int b = 0; b < nb; ++b) {
      if (!alive[b]) continue;
      const double* nx = next.data() + b * frame;
      if (!all_finite(nx, frame)) {
        alive[b] = 0;
        r.failure[b] =
            "non-finite state at rollout step " + std::to_string(k + 1);
        continue;
      }
      std::copy_n(nx, frame, r.states.data() + b * traj + (k + 1) * frame);
      r.completed_steps[b] = k + 1;
      if (feats != nullptr) {
        const double* f = feats->data() + static_cast<std::size_t>(b) * n * h;
        double* dst = r.features.data() + (b * n_steps + k) * feat_step;
        if (spatial_mean_features) {
          for (int x = 0; x < n; ++x) {
            for (int c = 0; c < h; ++c) dst[c] += f[x * h + c];
          }
          for (int c = 0; c < h; ++c) dst[c] /= n;
        } else {
          std::copy_n(f, feat_step, dst);
        }
      }
    }
    state.swap(next);
  }
  return r;
}

RolloutResult rollout(const SurrogateModel& model, std::span<const double> ic,
                      const PDEParams& pde, int n_steps,
                      FeatureLayer capture) {
  BatchRollout b = rollout_batch(model, ic, {&pde, 1}, n_steps, capture);
  RolloutResult r;
  r.completed_steps = b.completed_steps[0];
  r.failure = b.failure[0];
  const std::size_t frame = ic.size();
  b.states.resize(frame * (r.completed_steps + 1));
  r.states = std::move(b.states);
  if (capture != FeatureLayer::kNone) {
    b.features.resize(b.features.size() / std::max(n_steps, 1) *
                      r.completed_steps);
    r.features = std::move(b.features);
  }
  return r;
}

// --------------------------------------------------------------- grad check

double grad_check(SurrogateModel& model, const TrainSample& sample,
                  int n_weights, double h, std::uint64_t seed, int order) {
  if (order != 2 && order != 4) {
    throw std::invalid_argument("grad_check: order must be 2 or 4");
  }
  std::vector<double> grad(model.n_parameters(), 0.0);
  model.loss_and_gradient(sample, grad);
  auto params = model.parameters();
  std::vector<std::size_t> idx(params.size());
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  for (std::size_t j = idx.size(); j > 1; --j) {
    std::swap(idx[j - 1], idx[rng.below(j)]);
  }
  // Every bias is checked in addition to the random weights.
  std::vector<std::size_t> chosen(
      idx.begin(), idx.begin() + std::min<std::size_t>(n_weights, idx.size()));
  for (int l = 0; l < SurrogateArch::kLayers; ++l) {
    for (int o = 0; o < model.arch().out_channels(l); ++o) {
      chosen.push_back(model.bias_offset(l) + o);
    }
  }
  double worst = 0.0;
  for (std::size_t j : chosen) {
    const double saved = params[j];
    auto at = [&](double d) {
      params[j] = saved + d;
      const double v = model.loss(sample);
      params[j] = saved;
      return v;
    };
    const double fd =
        order == 2 ? (at(h) - at(-h)) / (2.0 * h)
                   : (8.0 * (at(h) - at(-h)) - (at(2 * h) - at(-2 * h))) /
                         (12.0 * h);
    // Absolute floor keeps round-off of vanishing gradients from dominating.
    const double scale = std::max({std::abs(fd), std::abs(grad[j]), 1e-6});
    worst = std::max(worst, std::abs(fd - grad[j]) / scale);
  }
  return worst;
}

// --------------------------------------------------------------- checkpoint

namespace {

constexpr char kCheckpointMagic[8] = {'A', 'L', 'P', 'D', 'E', 'C', 'K', 'P'};

void write_u64_le(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t read_u64_le(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  if (!is) throw std::runtime_error("checkpoint truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

std::uint64_t double_bits(double d) {
  std::uint64_t u;
  std::memcpy(&u, &d, sizeof u);
  return u;
}

double bits_double(std::uint64_t u) {
  double d;
  std::memcpy(&d, &u, sizeof d);
  return d;
}

}  // namespace

void save_checkpoint(const SurrogateModel& model,
                     const std::filesystem::path& path) {
  const SurrogateArch& a = model.arch();
  json params = json::array();
  for (const ParamDim& d : model.norm_stats().params.dims) {
    params.push_back({{"name", d.name},
                      {"lo", d.lo},
                      {"hi", d.hi},
                      {"scale", d.scale == Scale::kLog ? "log" : "uniform"}});
  }
  json header = {
      {"format", "alpde-checkpoint"},
      {"version", 1},
      {"arch",
       {{"n_channels", a.n_channels},
        {"n_params", a.n_params},
        {"hidden", a.hidden},
        {"kernel", a.kernel},
        {"layers", SurrogateArch::kLayers},
        {"residual_scale", a.residual_scale}}},
      {"norm_stats",
       {{"channel_std", model.norm_stats().channel_std}, {"params", params}}},
      {"seed", model.init_seed()},
      {"epoch", model.epochs_trained()},
      {"n_parameters", model.n_parameters()},
  };
  const std::string text = header.dump();
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write " + tmp);
    os.write(kCheckpointMagic, sizeof kCheckpointMagic);
    write_u64_le(os, text.size());
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (double w : model.parameters()) write_u64_le(os, double_bits(w));
    if (!os) throw std::runtime_error("failed writing " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

SurrogateModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kCheckpointMagic, 8) != 0) {
    throw std::runtime_error(path.string() + " is not a checkpoint");
  }
  const std::uint64_t len = read_u64_le(is);
  std::string text(len, '\0');
  is.read(text.data(), static_cast<std::streamsize>(len));
  if (!is) throw std::runtime_error("checkpoint header truncated");
  const json header = json::parse(text);
  if (header.at("version").get<int>() != 1) {
    throw std::runtime_error("unsupported checkpoint version");
  }
  const json& ja = header.at("arch");
  SurrogateArch arch;
  arch.n_channels = ja.at("n_channels");
  arch.n_params = ja.at("n_params");
  arch.hidden = ja.at("hidden");
  arch.kernel = ja.at("kernel");
  arch.residual_scale = ja.at("residual_scale");
  NormStats stats;
  stats.channel_std =
      header.at("norm_stats").at("channel_std").get<std::vector<double>>();
  for (const json& p : header.at("norm_stats").at("params")) {
    stats.params.dims.push_back(
        {p.at("name"), p.at("lo"), p.at("hi"),
         p.at("scale") == "log" ? Scale::kLog : Scale::kUniform});
  }
  SurrogateModel model(arch, stats, header.at("seed").get<std::uint64_t>());
  if (header.at("n_parameters").get<std::size_t>() != model.n_parameters()) {
    throw std::runtime_error("checkpoint parameter count mismatch");
  }
  for (double& w : model.parameters()) w = bits_double(read_u64_le(is));
  model.set_epochs_trained(header.at("epoch"));
  return model;
}

}  // namespace alpde
