#include "alpde/acquisition.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "alpde/parallel.hpp"
#include "alpde/random.hpp"

namespace alpde {
namespace {

using RowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

FeatureLayer layer_of(FeatureAggregation a) {
  return a == FeatureAggregation::kSpatialMean || a == FeatureAggregation::kFull
             ? FeatureLayer::kLast
             : FeatureLayer::kMid;
}

bool is_mean(FeatureAggregation a) {
  return a == FeatureAggregation::kSpatialMean ||
         a == FeatureAggregation::kMidLayerMean;
}

}  // namespace

std::string metric_name(UncertaintyMetric m) {
  return m == UncertaintyMetric::kVariance ? "variance" : "absolute_difference";
}

UncertaintyMetric parse_metric(const std::string& s) {
  if (s == "variance") return UncertaintyMetric::kVariance;
  if (s == "absolute_difference") return UncertaintyMetric::kAbsDifference;
  throw std::invalid_argument("unknown uncertainty metric '" + s + "'");
}

std::string aggregation_name(FeatureAggregation a) {
  switch (a) {
    case FeatureAggregation::kSpatialMean: return "spatial_mean";
    case FeatureAggregation::kFull: return "full";
    case FeatureAggregation::kMidLayer: return "mid_layer";
    case FeatureAggregation::kMidLayerMean: return "mid_layer_mean";
  }
  return "";
}

FeatureAggregation parse_aggregation(const std::string& s) {
  for (auto a : {FeatureAggregation::kSpatialMean, FeatureAggregation::kFull,
                 FeatureAggregation::kMidLayer,
                 FeatureAggregation::kMidLayerMean}) {
    if (aggregation_name(a) == s) return a;
  }
  throw std::invalid_argument("unknown feature aggregation '" + s + "'");
}

double qbc_score(std::span<const std::span<const double>> members,
                 std::size_t frame_size, UncertaintyMetric metric) {
  const std::size_t n_m = members.size();
  if (n_m < 2) throw std::invalid_argument("QbC needs at least 2 members");
  const std::size_t size = members[0].size();
  if (size <= frame_size) return 0.0;
  // Member values are summed in sorted order, so the score does not depend
  // on the order of the members.
  std::vector<double> v(n_m);
  double total = 0.0;
  for (std::size_t j = frame_size; j < size; ++j) {
    for (std::size_t m = 0; m < n_m; ++m) v[m] = members[m][j];
    if (n_m > 2) std::sort(v.begin(), v.end());
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(n_m);
    double dev = 0.0;
    if (metric == UncertaintyMetric::kVariance) {
      for (double x : v) dev += (x - mean) * (x - mean);
    } else {
      for (double x : v) dev += std::abs(x - mean);
    }
    total += dev / static_cast<double>(n_m);
  }
  return total / static_cast<double>(size - frame_size);
}

int feature_dimension(const SurrogateArch& arch, int n_x, int rollout_steps,
                      FeatureAggregation aggregation) {
  return (is_mean(aggregation) ? 1 : n_x) * arch.hidden * rollout_steps;
}

std::vector<double> gaussian_sketch_matrix(int p, int p_prime,
                                           std::uint64_t seed) {
  if (p < 1 || p_prime < 1) throw std::invalid_argument("sketch sizes < 1");
  std::vector<double> u(static_cast<std::size_t>(p) * p_prime);
  for (int r = 0; r < p_prime; ++r) {
    Rng rng(derive_seed({seed, static_cast<std::uint64_t>(r)}));
    for (int c = 0; c < p; ++c) {
      u[static_cast<std::size_t>(r) * p + c] = rng.normal();
    }
  }
  return u;
}

namespace {

// out (rows, p') = raw (rows, p) * U^T * scale
void project(const double* raw, int rows, int p, const std::vector<double>& u,
             int p_prime, double scale, double* out) {
  Eigen::Map<const RowMat> x(raw, rows, p);
  Eigen::Map<const RowMat> um(u.data(), p_prime, p);
  Eigen::Map<RowMat> y(out, rows, p_prime);
  y.noalias() = x * um.transpose();
  y *= scale;
}

FeatureMatrix apply_sketch(const FeatureMatrix& raw,
                           const std::vector<double>& u, int p_prime,
                           double scale) {
  FeatureMatrix s;
  s.rows = raw.rows;
  s.cols = p_prime;
  s.valid = raw.valid;
  s.provenance = raw.provenance;
  s.data.assign(static_cast<std::size_t>(raw.rows) * p_prime, 0.0);
  if (raw.rows > 0) {
    project(raw.data.data(), raw.rows, raw.cols, u, p_prime, scale,
            s.data.data());
  }
  return s;
}

}  // namespace

FeatureMatrix sketch(const FeatureMatrix& raw, int p_prime,
                     std::uint64_t seed) {
  const auto u = gaussian_sketch_matrix(raw.cols, p_prime, seed);
  FeatureMatrix s = apply_sketch(raw, u, p_prime, 1.0 / std::sqrt(p_prime));
  s.sketch_seed = seed;
  return s;
}

FeatureMatrix sketch_with_matrix(const FeatureMatrix& raw,
                                 std::span<const double> u, int p_prime) {
  if (u.size() != static_cast<std::size_t>(raw.cols) * p_prime) {
    throw std::invalid_argument("sketch matrix has the wrong size");
  }
  return apply_sketch(raw, std::vector<double>(u.begin(), u.end()), p_prime,
                      1.0);
}

PoolScoring score_pool(const Ensemble& ensemble,
                       std::span<const SimInput> candidates,
                       const PoolScoringOptions& opt) {
  if (opt.chunk < 1) throw std::invalid_argument("prediction chunk < 1");
  if (opt.scores && ensemble.size() < 2) {
    throw std::invalid_argument("QbC needs at least 2 ensemble members");
  }
  const SurrogateModel& model0 = ensemble.evaluation_model();
  const SurrogateArch& arch = model0.arch();
  const int n = static_cast<int>(candidates.size());
  const int steps = opt.rollout_steps;
  PoolScoring out;
  out.scores.metric = opt.metric;
  out.scores.score.assign(n, 0.0);
  out.scores.valid.assign(n, 1);
  if (n == 0) return out;
  const std::size_t frame = candidates[0].initial_field.size();
  const int n_x = static_cast<int>(frame) / arch.n_channels;
  const int p = opt.features
                    ? feature_dimension(arch, n_x, steps, opt.aggregation)
                    : 0;
  const bool sketched = opt.features && opt.p_prime > 0;
  const int cols = sketched ? opt.p_prime : p;
  std::vector<double> u;
  if (sketched) u = gaussian_sketch_matrix(p, opt.p_prime, opt.sketch_seed);
  FeatureMatrix& f = out.features;
  if (opt.features) {
    f.rows = n;
    f.cols = cols;
    f.data.assign(static_cast<std::size_t>(n) * cols, 0.0);
    f.sketch_seed = opt.sketch_seed;
    f.provenance = "member 0, " + aggregation_name(opt.aggregation) +
                   (sketched ? ", sketch p'=" + std::to_string(cols) : "");
  }
  const FeatureLayer capture =
      opt.features ? layer_of(opt.aggregation) : FeatureLayer::kNone;
  const std::size_t n_chunks = (n + opt.chunk - 1) / opt.chunk;
  const int n_members = opt.scores ? ensemble.size() : 1;

  parallel_for(n_chunks, [&](std::size_t c) {
    const int lo = static_cast<int>(c) * opt.chunk;
    const int hi = std::min(n, lo + opt.chunk);
    std::vector<double> ics;
    std::vector<PDEParams> pdes;
    for (int i = lo; i < hi; ++i) {
      if (candidates[i].initial_field.size() != frame) {
        throw std::invalid_argument("candidates have different grid sizes");
      }
      ics.insert(ics.end(), candidates[i].initial_field.begin(),
                 candidates[i].initial_field.end());
      pdes.push_back(candidates[i].pde);
    }
    std::vector<BatchRollout> r;
    for (int m = 0; m < n_members; ++m) {
      r.push_back(rollout_batch(ensemble.members[m], ics, pdes, steps,
                                m == 0 ? capture : FeatureLayer::kNone,
                                is_mean(opt.aggregation)));
    }
    const std::size_t traj = frame * (steps + 1);
    for (int i = lo; i < hi; ++i) {
      const int b = i - lo;
      bool ok = true;
      for (const auto& rm : r) ok = ok && rm.completed_steps[b] == steps;
      out.scores.valid[i] = ok ? 1 : 0;
      if (!ok || !opt.scores) continue;
      std::vector<std::span<const double>> members;
      for (const auto& rm : r) {
        members.emplace_back(rm.states.data() + b * traj, traj);
      }
      out.scores.score[i] = qbc_score(members, frame, opt.metric);
    }
    if (opt.features) {
      const double* raw = r[0].features.data();
      double* dst = f.data.data() + static_cast<std::size_t>(lo) * cols;
      if (sketched) {
        project(raw, hi - lo, p, u, opt.p_prime, 1.0 / std::sqrt(opt.p_prime),
                dst);
      } else {
        std::copy_n(raw, static_cast<std::size_t>(hi - lo) * p, dst);
      }
      for (int i = lo; i < hi; ++i) {
        if (r[0].completed_steps[i - lo] != steps) {
          std::fill_n(f.data.data() + static_cast<std::size_t>(i) * cols, cols,
                      0.0);
        }
      }
    }
  });
  if (opt.features) f.valid = out.scores.valid;
  return out;
}

AcquisitionScores qbc_uncertainty(const Ensemble& ensemble,
                                  std::span<const SimInput> candidates,
                                  int rollout_steps, UncertaintyMetric metric,
                                  int chunk) {
  PoolScoringOptions opt;
  opt.rollout_steps = rollout_steps;
  opt.metric = metric;
  opt.chunk = chunk;
  return score_pool(ensemble, candidates, opt).scores;
}

double qbc_uncertainty(const Ensemble& ensemble, const SimInput& candidate,
                       int rollout_steps, UncertaintyMetric metric) {
  return qbc_uncertainty(ensemble, {&candidate, 1}, rollout_steps, metric)
      .score[0];
}

FeatureMatrix extract_features(const SurrogateModel& model,
                               std::span<const SimInput> candidates,
                               int rollout_steps,
                               FeatureAggregation aggregation, int chunk) {
  Ensemble single{{model}};
  PoolScoringOptions opt;
  opt.rollout_steps = rollout_steps;
  opt.scores = false;
  opt.features = true;
  opt.aggregation = aggregation;
  opt.p_prime = 0;
  opt.chunk = chunk;
  return score_pool(single, candidates, opt).features;
}

}  // namespace alpde
