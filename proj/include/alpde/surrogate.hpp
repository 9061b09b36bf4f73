#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "alpde/core.hpp"
#include "alpde/generators.hpp"

namespace alpde {

// Four circular 1D convolutions (kernel 5), GELU after the first three.
// Inputs are the normalized state channels followed by one constant channel
// per PDE parameter; the output is a residual update scaled by
// residual_scale and the channel standard deviation.
struct SurrogateArch {
  int n_channels = 1;
  int n_params = 0;
  int hidden = 32;
  int kernel = 5;
  double residual_scale = 0.3;

  static constexpr int kLayers = 4;
  int in_channels(int layer) const {
    return layer == 0 ? n_channels + n_params : hidden;
  }
  int out_channels(int layer) const {
    return layer == kLayers - 1 ? n_channels : hidden;
  }
  bool operator==(const SurrogateArch&) const = default;
};

struct TrainConfig {
  int epochs = 500;
  int batch_size = 512;
  double lr_max = 1e-3;
  double lr_min = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int sub_trajectory_length = 2;
  // Random sub-trajectory windows drawn per trajectory and epoch.
  int windows_per_trajectory = 1;
  double clip_factor = 5.0;
  int clip_warmup_epochs = 5;
  double clip_ema_decay = 0.99;
  double divergence_factor = 1e3;
  std::uint64_t seed = 0;
};

void validate(const TrainConfig& cfg);

// Channel standard deviations of the state, plus the parameter ranges used to
// map PDE parameters to unit-range conditioning channels.
struct NormStats {
  std::vector<double> channel_std;
  ParamSpec params;
};

NormStats fit_norm_stats(const TrajectoryBatch& dataset,
                         const ParamSpec& params);

enum class FeatureLayer { kNone, kLast, kMid };

struct StepOutput {
  std::vector<double> next;      // (n_x, n_c)
  std::vector<double> features;  // (n_x, hidden); empty for kNone
};

// One 2-step (or sub_trajectory_length-step) training window.
struct TrainSample {
  std::span<const double> frames;  // (length + 1, n_x, n_c), first is input
  std::span<const double> conditioning;
  int n_x = 0;
};

struct TrainReport {
  std::vector<double> epoch_loss;  // mean minibatch RMSE (normalized units)
  std::vector<double> clip_threshold;
  long steps = 0;
};

class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SurrogateModel {
 public:
  SurrogateModel(const SurrogateArch& arch, NormStats stats,
                 std::uint64_t init_seed);

  const SurrogateArch& arch() const { return arch_; }
  const NormStats& norm_stats() const { return stats_; }
  std::uint64_t init_seed() const { return init_seed_; }
  int epochs_trained() const { return epochs_trained_; }
  void set_epochs_trained(int epochs) { epochs_trained_ = epochs; }

  std::span<double> parameters() { return params_; }
  std::span<const double> parameters() const { return params_; }
  std::size_t n_parameters() const { return params_.size(); }

  // Offsets of layer weights (kernel, c_in, c_out) and biases (c_out).
  std::size_t weight_offset(int layer) const { return weight_off_[layer]; }
  std::size_t bias_offset(int layer) const { return bias_off_[layer]; }
  std::size_t weight_count(int layer) const;

  // Unit-range conditioning values for a parameter vector.
  std::vector<double> conditioning(const PDEParams& pde) const;

  // next = state + residual_scale * sigma * net(state / sigma, lambda).
  // Throws std::runtime_error when the output is not finite.
  StepOutput forward(std::span<const double> state, const PDEParams& pde,
                     FeatureLayer capture = FeatureLayer::kLast) const;
  StepOutput forward_conditioned(std::span<const double> state,
                                 std::span<const double> conditioning,
                                 FeatureLayer capture) const;

  // RMSE (normalized units) of a rollout over the sample window; adds the
  // gradient with respect to the parameters into `grad`.
  double loss_and_gradient(const TrainSample& sample,
                           std::span<double> grad) const;
  double loss(const TrainSample& sample) const;
  // Sum of per-sample losses over samples sharing one window length and n_x.
  double loss_and_gradient(std::span<const TrainSample> batch,
                           std::span<double> grad) const;

 private:
  SurrogateArch arch_;
  NormStats stats_;
  std::uint64_t init_seed_ = 0;
  int epochs_trained_ = 0;
  std::vector<double> params_;
  std::vector<std::size_t> weight_off_, bias_off_;
};

struct Ensemble {
  std::vector<SurrogateModel> members;  // members[0] is the evaluation model
  const SurrogateModel& evaluation_model() const { return members.at(0); }
  int size() const { return static_cast<int>(members.size()); }
};

// Members differ only in their initialization and training seeds, both
// derived from (seed, member index) unless identical_seeds is set.
Ensemble make_ensemble(const SurrogateArch& arch, const NormStats& stats,
                       int n_members, std::uint64_t seed,
                       bool identical_seeds = false);

// Training dataset: trajectories plus aligned PDE parameters. Failed
// trajectories are skipped.
struct Dataset {
  const TrajectoryBatch* trajectories = nullptr;
  std::span<const PDEParams> params;
};

TrainReport train(SurrogateModel& model, const Dataset& data,
                  const TrainConfig& cfg);
std::vector<TrainReport> train_ensemble(Ensemble& ensemble, const Dataset& data,
                                        const TrainConfig& cfg,
                                        bool identical_seeds = false);

double cosine_learning_rate(const TrainConfig& cfg, long step, long total);

struct RolloutResult {
  std::vector<double> states;    // (completed_steps + 1, n_x, n_c)
  std::vector<double> features;  // (completed_steps, n_x, hidden)
  int completed_steps = 0;
  std::string failure;           // non-empty when truncated
  bool truncated() const { return !failure.empty(); }
};

RolloutResult rollout(const SurrogateModel& model, std::span<const double> ic,
                      const PDEParams& pde, int n_steps,
                      FeatureLayer capture = FeatureLayer::kNone);

// Rollouts of several candidates at once. A candidate whose state turns
// non-finite is flagged; the others are unaffected.
struct BatchRollout {
  int n_batch = 0, n_steps = 0;
  std::vector<double> states;    // (n_batch, n_steps + 1, n_x, n_c)
  std::vector<double> features;  // (n_batch, n_steps, n_x or 1, hidden)
  std::vector<int> completed_steps;
  std::vector<std::string> failure;
};

BatchRollout rollout_batch(const SurrogateModel& model,
                           std::span<const double> ics,
                           std::span<const PDEParams> pdes, int n_steps,
                           FeatureLayer capture = FeatureLayer::kNone,
                           bool spatial_mean_features = false);

// Exact GELU x * Phi(x) and its derivative.
double gelu(double x);
double gelu_derivative(double x);

// Maximum relative error between the analytic gradient of the sample loss
// and central differences (step h, 2- or 4-point stencil for order 2 or 4)
// over `n_weights` random weights plus every bias.
double grad_check(SurrogateModel& model, const TrainSample& sample,
                  int n_weights = 200, double h = 1e-5,
                  std::uint64_t seed = 0, int order = 2);

// Versioned binary checkpoint: 8-byte magic, little-endian u64 header length,
// JSON header (arch, norm stats, seed, epoch), little-endian f64 weights.
void save_checkpoint(const SurrogateModel& model,
                     const std::filesystem::path& path);
SurrogateModel load_checkpoint(const std::filesystem::path& path);

}  // namespace alpde
