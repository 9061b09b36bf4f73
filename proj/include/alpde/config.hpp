#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "alpde/acquisition.hpp"
#include "alpde/core.hpp"
#include "alpde/selection.hpp"
#include "alpde/simulators.hpp"
#include "alpde/surrogate.hpp"

namespace alpde {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct StrategyConfig {
  Strategy name = Strategy::kRandom;
  double m = 1.0;  // SBAL sharpness
  int p_prime = 128;
  double reg_lambda = 0.0;  // BAIT; <= 0 selects the data-dependent default
  UncertaintyMetric metric = UncertaintyMetric::kVariance;
  FeatureAggregation aggregation = FeatureAggregation::kSpatialMean;
};

struct ScheduleConfig {
  int n_initial = 64;
  int n_iterations = 3;
  std::string growth = "exponential";  // or "fixed"
  std::vector<int> batch_sizes;        // fixed growth: one per iteration
};

struct ModelConfig {
  int hidden = 32;
  int ensemble_size = 2;
  double residual_scale = 0.3;
  // Every member gets the same seeds (zero-disagreement ensemble).
  bool identical_members = false;
};

struct SeedConfig {
  std::uint64_t pool = 1;
  std::uint64_t test = 2;
  std::uint64_t train = 0;
  std::uint64_t sketch = 0;
};

// Optional extra model trained after every round on the accumulated data.
struct TraineeConfig {
  bool enabled = false;
  int hidden = 48;
  std::uint64_t seed = 1000;
};

struct ExperimentConfig {
  Task task = Task::kBurgers;
  StrategyConfig strategy;
  ScheduleConfig schedule;
  ModelConfig model;
  TrainConfig train = desk_train_config();
  SolverConfig solver;
  int pool_size = 8192;
  int test_size = 512;
  int prediction_chunk = 200;
  SeedConfig seeds;
  TraineeConfig trainee;
  std::string output_dir = "runs/default";
  // Solved test set shared between runs; empty keeps it in output_dir.
  std::string test_cache;

  static TrainConfig desk_train_config();
};

// Throws ConfigError naming the offending field.
void validate(const ExperimentConfig& cfg);

ExperimentConfig config_from_json_text(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);
// Materialized JSON with every field present.
std::string config_to_json_text(const ExperimentConfig& cfg, int indent = 2);

// Directory under which relative output directories are resolved
// (ALPDE_OUTPUT_ROOT, else the current directory).
std::filesystem::path output_root();
std::filesystem::path resolve_output_dir(const ExperimentConfig& cfg);

}  // namespace alpde
