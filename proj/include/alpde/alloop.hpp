#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "alpde/config.hpp"
#include "alpde/io.hpp"
#include "alpde/metrics.hpp"
#include "alpde/surrogate.hpp"

namespace alpde {

struct RunOptions {
  // Continue from the last completed iteration found in the output directory.
  bool resume = false;
  // Stop after this many iterations in this invocation (negative: no limit).
  int max_iterations = -1;
  std::function<void(const std::string&)> log;
};

// Pool-based AL: random initial batch, then per iteration retrain the
// ensemble from scratch, evaluate member 0, score/select from the pool,
// simulate and augment. Iteration records are appended to
// <output_dir>/report.json as they complete; state for --resume lives next
// to it. The last record is the final evaluation (no selection).
RunReport run_al(const ExperimentConfig& cfg, const RunOptions& options = {});

// run_al with a trainee model retrained on the accumulated data each round.
RunReport reuse_experiment(ExperimentConfig selector,
                           const TraineeConfig& trainee,
                           const RunOptions& options = {});

// Full rollouts from the test initial frames; failed test trajectories are
// skipped. Truncated rollouts hold their last finite state. With an ensemble
// of at least two members, per-trajectory QbC uncertainty is correlated with
// per-trajectory RMSE and returned through `uncertainty`.
MetricsReport evaluate(const SurrogateModel& model,
                       const TrajectoryBatch& test,
                       std::span<const SimInput> test_inputs,
                       const Ensemble* ensemble = nullptr,
                       UncertaintyMetric metric = UncertaintyMetric::kVariance,
                       int chunk = 200,
                       std::vector<double>* uncertainty = nullptr);

// Surrogate predictions for every test trajectory (failed ones left zero).
TrajectoryBatch predict(const SurrogateModel& model,
                        const TrajectoryBatch& test,
                        std::span<const PDEParams> pdes, int chunk = 200,
                        int* n_truncated = nullptr);

}  // namespace alpde
