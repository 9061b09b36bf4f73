#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "alpde/core.hpp"
#include "alpde/surrogate.hpp"

namespace alpde {

enum class UncertaintyMetric { kVariance, kAbsDifference };
enum class FeatureAggregation { kSpatialMean, kFull, kMidLayer, kMidLayerMean };

std::string metric_name(UncertaintyMetric m);
UncertaintyMetric parse_metric(const std::string& s);
std::string aggregation_name(FeatureAggregation a);
FeatureAggregation parse_aggregation(const std::string& s);

struct AcquisitionScores {
  std::vector<double> score;  // 0 for masked candidates
  std::vector<char> valid;    // 0 when any member's rollout failed
  UncertaintyMetric metric = UncertaintyMetric::kVariance;
};

// Row-major (rows, cols).
struct FeatureMatrix {
  int rows = 0, cols = 0;
  std::vector<double> data;
  std::vector<char> valid;
  std::uint64_t sketch_seed = 0;
  std::string provenance;

  std::span<const double> row(int i) const {
    return {data.data() + static_cast<std::size_t>(i) * cols,
            static_cast<std::size_t>(cols)};
  }
};

// Member disagreement of one candidate. `members` holds N_m predictions of
// identical size; frame 0 (the shared initial state) is excluded. Variance:
// mean over entries of mean over members of the squared deviation from the
// member mean. Absolute difference uses the absolute deviation instead.
double qbc_score(std::span<const std::span<const double>> members,
                 std::size_t frame_size, UncertaintyMetric metric);

double qbc_uncertainty(const Ensemble& ensemble, const SimInput& candidate,
                       int rollout_steps,
                       UncertaintyMetric metric = UncertaintyMetric::kVariance);

AcquisitionScores qbc_uncertainty(
    const Ensemble& ensemble, std::span<const SimInput> candidates,
    int rollout_steps, UncertaintyMetric metric = UncertaintyMetric::kVariance,
    int chunk = 200);

// Raw rollout features of one model: per step the last-layer (or mid-layer)
// activations, either averaged over x or flattened, concatenated over steps.
int feature_dimension(const SurrogateArch& arch, int n_x, int rollout_steps,
                      FeatureAggregation aggregation);

FeatureMatrix extract_features(const SurrogateModel& model,
                               std::span<const SimInput> candidates,
                               int rollout_steps,
                               FeatureAggregation aggregation, int chunk = 200);

// Gaussian sketch U phi / sqrt(p'). Row r of U is drawn from its own stream
// of `seed`, so U depends only on (seed, p, p').
FeatureMatrix sketch(const FeatureMatrix& raw, int p_prime, std::uint64_t seed);
// Explicit (p', p) row-major projection, without the 1/sqrt(p') factor.
FeatureMatrix sketch_with_matrix(const FeatureMatrix& raw,
                                 std::span<const double> u, int p_prime);
std::vector<double> gaussian_sketch_matrix(int p, int p_prime,
                                           std::uint64_t seed);

// Everything one AL round needs from the pool in a single pass: QbC scores
// from all members and member-0 features sketched chunk by chunk.
struct PoolScoringOptions {
  int rollout_steps = 0;
  bool scores = true;
  UncertaintyMetric metric = UncertaintyMetric::kVariance;
  bool features = false;
  FeatureAggregation aggregation = FeatureAggregation::kSpatialMean;
  int p_prime = 128;  // 0 keeps the raw features
  std::uint64_t sketch_seed = 0;
  int chunk = 200;
};

struct PoolScoring {
  AcquisitionScores scores;
  FeatureMatrix features;
};

PoolScoring score_pool(const Ensemble& ensemble,
                       std::span<const SimInput> candidates,
                       const PoolScoringOptions& options);

}  // namespace alpde
