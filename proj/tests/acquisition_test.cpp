#include "alpde/acquisition.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "alpde/generators.hpp"
#include "alpde/oracles.hpp"
#include "alpde/random.hpp"

namespace alpde {
namespace {

struct Fixture {
  TaskSpec spec = task_spec(Task::kCE);
  SurrogateArch arch;
  NormStats stats;
  std::vector<SimInput> inputs;

  explicit Fixture(int n_candidates = 5) {
    arch.n_channels = 1;
    arch.n_params = spec.n_params();
    arch.hidden = 8;
    stats.channel_std = {0.3};
    stats.params = spec.params;
    inputs = sample_inputs(spec, n_candidates, 3, StreamTag::kPool);
  }
};

using Tensor = std::vector<std::vector<std::vector<std::vector<double>>>>;

Tensor dense_predictions(const Ensemble& e, const SimInput& in, int steps) {
  Tensor u;
  for (const auto& m : e.members) {
    const RolloutResult r = rollout(m, in.initial_field, in.pde, steps);
    const int n_x = static_cast<int>(in.initial_field.size());
    std::vector<std::vector<std::vector<double>>> traj(steps + 1);
    for (int t = 0; t <= steps; ++t) {
      traj[t].resize(n_x);
      for (int x = 0; x < n_x; ++x) traj[t][x] = {r.states[t * n_x + x]};
    }
    u.push_back(std::move(traj));
  }
  return u;
}

TEST(QbcTest, IdenticalMembersScoreZero) {
  Fixture f;
  const Ensemble e = make_ensemble(f.arch, f.stats, 2, 7, true);
  const AcquisitionScores s = qbc_uncertainty(e, f.inputs, 10);
  for (double v : s.score) EXPECT_EQ(v, 0.0);
}

TEST(QbcTest, MatchesDenseReference) {
  Fixture f(6);
  const Ensemble e = make_ensemble(f.arch, f.stats, 3, 8);
  for (auto metric :
       {UncertaintyMetric::kVariance, UncertaintyMetric::kAbsDifference}) {
    const AcquisitionScores s = qbc_uncertainty(e, f.inputs, 12, metric, 4);
    for (std::size_t i = 0; i < f.inputs.size(); ++i) {
      const double ref = oracles::dense_qbc(
          dense_predictions(e, f.inputs[i], 12),
          metric == UncertaintyMetric::kAbsDifference);
      EXPECT_GT(ref, 0.0);
      EXPECT_NEAR(s.score[i], ref, 1e-12 * ref);
    }
  }
}

TEST(QbcTest, TwoMemberQuarterIdentity) {
  Fixture f(4);
  const Ensemble e = make_ensemble(f.arch, f.stats, 2, 9);
  const AcquisitionScores s = qbc_uncertainty(e, f.inputs, 8);
  for (std::size_t i = 0; i < f.inputs.size(); ++i) {
    const auto& in = f.inputs[i];
    const RolloutResult a = rollout(e.members[0], in.initial_field, in.pde, 8);
    const RolloutResult b = rollout(e.members[1], in.initial_field, in.pde, 8);
    const std::size_t n_x = in.initial_field.size();
    double sq = 0.0;
    for (std::size_t j = n_x; j < a.states.size(); ++j) {
      sq += (a.states[j] - b.states[j]) * (a.states[j] - b.states[j]);
    }
    const double quarter = 0.25 * sq / static_cast<double>(8 * n_x);
    EXPECT_NEAR(s.score[i], quarter, 1e-12 * quarter);
  }
}

TEST(QbcTest, ShiftAndMemberOrderInvariance) {
  Fixture f(3);
  Ensemble e = make_ensemble(f.arch, f.stats, 3, 10);
  const auto base = qbc_uncertainty(e, f.inputs, 10).score;
  std::vector<SimInput> shifted = f.inputs;
  for (auto& in : shifted) {
    in.initial_field = shift_frame(in.initial_field,
                                   static_cast<int>(in.initial_field.size()), 1,
                                   11);
  }
  const auto moved = qbc_uncertainty(e, shifted, 10).score;
  for (std::size_t i = 0; i < base.size(); ++i) {
    EXPECT_NEAR(moved[i], base[i], 1e-8);
  }
  std::swap(e.members[0], e.members[2]);
  std::swap(e.members[1], e.members[2]);
  EXPECT_EQ(qbc_uncertainty(e, f.inputs, 10).score, base);
}

TEST(QbcTest, FailedRolloutsAreMasked) {
  Fixture f(3);
  const Ensemble e = make_ensemble(f.arch, f.stats, 2, 11);
  f.inputs[1].initial_field[4] = std::numeric_limits<double>::quiet_NaN();
  const AcquisitionScores s = qbc_uncertainty(e, f.inputs, 5);
  EXPECT_EQ(s.valid, (std::vector<char>{1, 0, 1}));
  EXPECT_EQ(s.score[1], 0.0);
  EXPECT_GT(s.score[0], 0.0);
}

TEST(FeaturesTest, ShapesAndShiftInvariance) {
  Fixture f(3);
  const SurrogateModel model(f.arch, f.stats, 12);
  const int steps = 6, n_x = f.spec.train_nx;
  const FeatureMatrix full =
      extract_features(model, f.inputs, steps, FeatureAggregation::kFull);
  EXPECT_EQ(full.cols, n_x * 8 * steps);
  EXPECT_EQ(full.cols,
            feature_dimension(f.arch, n_x, steps, FeatureAggregation::kFull));
  std::vector<SimInput> shifted = f.inputs;
  for (auto& in : shifted) in.initial_field = shift_frame(in.initial_field, n_x, 1, 5);
  for (auto agg : {FeatureAggregation::kSpatialMean,
                   FeatureAggregation::kMidLayerMean}) {
    const FeatureMatrix a = extract_features(model, f.inputs, steps, agg);
    const FeatureMatrix b = extract_features(model, shifted, steps, agg);
    EXPECT_EQ(a.cols, 8 * steps);
    for (std::size_t j = 0; j < a.data.size(); ++j) {
      EXPECT_NEAR(a.data[j], b.data[j], 1e-8);
    }
  }
  const FeatureMatrix fs =
      extract_features(model, shifted, steps, FeatureAggregation::kFull);
  double diff = 0.0;
  for (std::size_t j = 0; j < full.data.size(); ++j) {
    diff = std::max(diff, std::abs(full.data[j] - fs.data[j]));
  }
  EXPECT_GT(diff, 1e-3);
}

TEST(FeaturesTest, ConstantUnderIdentityModel) {
  Fixture f(1);
  SurrogateModel model(f.arch, f.stats, 13);
  const int last = SurrogateArch::kLayers - 1;
  for (std::size_t j = model.weight_offset(last); j < model.n_parameters(); ++j) {
    model.parameters()[j] = 0.0;
  }
  f.inputs[0].initial_field.assign(f.inputs[0].initial_field.size(), 0.2);
  const FeatureMatrix m = extract_features(model, f.inputs, 4,
                                           FeatureAggregation::kMidLayer);
  const int per_step = m.cols / 4;
  for (int k = 1; k < 4; ++k) {
    for (int j = 0; j < per_step; ++j) {
      EXPECT_EQ(m.data[k * per_step + j], m.data[j]);
    }
  }
}

FeatureMatrix random_features(int rows, int cols, std::uint64_t seed) {
  FeatureMatrix f;
  f.rows = rows;
  f.cols = cols;
  f.valid.assign(rows, 1);
  Rng rng(seed);
  for (int i = 0; i < rows * cols; ++i) f.data.push_back(rng.normal());
  return f;
}

TEST(SketchTest, ZeroIdentityAndLinearity) {
  FeatureMatrix zero = random_features(3, 20, 1);
  std::fill(zero.data.begin(), zero.data.end(), 0.0);
  for (double v : sketch(zero, 8, 4).data) EXPECT_EQ(v, 0.0);

  const FeatureMatrix x = random_features(4, 6, 2);
  std::vector<double> eye(36, 0.0);
  for (int i = 0; i < 6; ++i) eye[i * 6 + i] = 1.0;
  EXPECT_EQ(sketch_with_matrix(x, eye, 6).data, x.data);

  const FeatureMatrix a = random_features(1, 50, 3), b = random_features(1, 50, 4);
  FeatureMatrix mix = a;
  for (int j = 0; j < 50; ++j) mix.data[j] = 2.5 * a.data[j] - 0.5 * b.data[j];
  const auto sa = sketch(a, 16, 9).data, sb = sketch(b, 16, 9).data;
  const auto sm = sketch(mix, 16, 9).data;
  for (int j = 0; j < 16; ++j) {
    EXPECT_NEAR(sm[j], 2.5 * sa[j] - 0.5 * sb[j], 1e-12);
  }
  EXPECT_EQ(sketch(a, 16, 9).data, sa);
  EXPECT_NE(sketch(a, 16, 10).data, sa);
}

TEST(SketchTest, JohnsonLindenstrauss) {
  // Each row is the difference of one random pair.
  const FeatureMatrix diff = random_features(1000, 4096, 5);
  const FeatureMatrix s = sketch(diff, 256, 6);
  int inside = 0;
  for (int i = 0; i < 1000; ++i) {
    double before = 0.0, after = 0.0;
    for (double v : diff.row(i)) before += v * v;
    for (double v : s.row(i)) after += v * v;
    const double ratio = after / before;
    inside += ratio >= 0.7 && ratio <= 1.3;
  }
  EXPECT_GE(inside, 990);
}

TEST(ScorePoolTest, SinglePassMatchesSeparateCalls) {
  Fixture f(7);
  const Ensemble e = make_ensemble(f.arch, f.stats, 2, 14);
  PoolScoringOptions opt;
  opt.rollout_steps = 5;
  opt.features = true;
  opt.p_prime = 0;
  opt.chunk = 3;
  const PoolScoring ps = score_pool(e, f.inputs, opt);
  const auto scores = qbc_uncertainty(e, f.inputs, 5).score;
  const FeatureMatrix feats = extract_features(
      e.members[0], f.inputs, 5, FeatureAggregation::kSpatialMean);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    EXPECT_NEAR(ps.scores.score[i], scores[i], 1e-12 * scores[i]);
  }
  for (std::size_t j = 0; j < feats.data.size(); ++j) {
    EXPECT_NEAR(ps.features.data[j], feats.data[j], 1e-12);
  }
  opt.p_prime = 4;
  opt.sketch_seed = 5;
  const PoolScoring sk = score_pool(e, f.inputs, opt);
  const FeatureMatrix ref = sketch(feats, 4, 5);
  for (std::size_t j = 0; j < ref.data.size(); ++j) {
    EXPECT_NEAR(sk.features.data[j], ref.data[j], 1e-10);
  }
}

TEST(NamesTest, RoundTrip) {
  for (auto a : {FeatureAggregation::kSpatialMean, FeatureAggregation::kFull,
                 FeatureAggregation::kMidLayer,
                 FeatureAggregation::kMidLayerMean}) {
    EXPECT_EQ(parse_aggregation(aggregation_name(a)), a);
  }
  EXPECT_EQ(parse_metric("absolute_difference"),
            UncertaintyMetric::kAbsDifference);
  EXPECT_THROW(parse_metric("l2"), std::invalid_argument);
}

}  // namespace
}  // namespace alpde
