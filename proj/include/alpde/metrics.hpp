#pragma once

#include <optional>
#include <span>
#include <vector>

#include "alpde/core.hpp"

namespace alpde {

struct ErrorVector {
  double mean = 0.0;               // mean of per-trajectory values
  std::vector<double> per_trajectory;
};

// Per trajectory sqrt(mean over (t, x, c) of squared deviation).
ErrorVector rmse(const TrajectoryBatch& pred, const TrajectoryBatch& truth);
ErrorVector mae(const TrajectoryBatch& pred, const TrajectoryBatch& truth);

// Linear interpolation between order statistics at position q * (n - 1).
double quantile(std::span<const double> values, double q);

// Ranks starting at 1, ties share their average rank.
std::vector<double> average_ranks(std::span<const double> values);

struct Correlation {
  std::optional<double> pearson;   // empty when a variance is zero
  std::optional<double> spearman;
};

Correlation correlation(std::span<const double> a, std::span<const double> b);

struct MetricsReport {
  double rmse = 0.0;
  double mae = 0.0;
  std::vector<double> rmse_per_trajectory;
  std::vector<double> mae_per_trajectory;
  double q50 = 0.0, q95 = 0.0, q99 = 0.0;
  std::optional<double> pearson, spearman;
  int n_trajectories = 0;
  int n_truncated = 0;  // rollouts that went non-finite
};

// Fills rmse, mae and the rmse quantiles; correlations are left empty.
MetricsReport compute_metrics(const TrajectoryBatch& pred,
                              const TrajectoryBatch& truth);

}  // namespace alpde
