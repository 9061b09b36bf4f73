#include "alpde/metrics.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "alpde/random.hpp"

namespace alpde {
namespace {

TrajectoryBatch random_batch(int n_traj, int n_t, int n_x, int n_c,
                             std::uint64_t seed) {
  TrajectoryBatch b(n_traj, make_grid(8, 1.0), make_time_axis(n_t, 1.0), n_c);
  (void)n_x;
  Rng rng(seed);
  for (double& v : b.data()) v = rng.uniform(-2.0, 2.0);
  return b;
}

TEST(MetricsTest, TrivialCases) {
  const TrajectoryBatch a = random_batch(3, 4, 8, 1, 1);
  EXPECT_EQ(rmse(a, a).mean, 0.0);
  EXPECT_EQ(mae(a, a).mean, 0.0);
  TrajectoryBatch zero = a, c = a;
  for (double& v : zero.data()) v = 0.0;
  for (double& v : c.data()) v = -0.75;
  for (double e : rmse(c, zero).per_trajectory) EXPECT_DOUBLE_EQ(e, 0.75);
  for (double e : mae(c, zero).per_trajectory) EXPECT_DOUBLE_EQ(e, 0.75);
}

TEST(MetricsTest, MatchesDenseLoops) {
  TrajectoryBatch p(2, make_grid(8, 1.0), make_time_axis(3, 1.0), 2);
  TrajectoryBatch t = p;
  Rng rng(4);
  for (double& v : p.data()) v = rng.uniform(-1.0, 1.0);
  for (double& v : t.data()) v = rng.uniform(-1.0, 1.0);
  const ErrorVector r = rmse(p, t), a = mae(p, t);
  double mean_r = 0.0, mean_a = 0.0;
  for (int i = 0; i < 2; ++i) {
    double s = 0.0, l1 = 0.0;
    for (int k = 0; k < 3; ++k) {
      for (int x = 0; x < 8; ++x) {
        for (int c = 0; c < 2; ++c) {
          const double d = p.at(i, k, x, c) - t.at(i, k, x, c);
          s += d * d;
          l1 += std::abs(d);
        }
      }
    }
    const double ri = std::sqrt(s / 48.0), ai = l1 / 48.0;
    EXPECT_NEAR(r.per_trajectory[i], ri, 1e-14);
    EXPECT_NEAR(a.per_trajectory[i], ai, 1e-14);
    EXPECT_GE(r.per_trajectory[i], a.per_trajectory[i]);
    mean_r += ri / 2;
    mean_a += ai / 2;
  }
  EXPECT_NEAR(r.mean, mean_r, 1e-14);
  EXPECT_NEAR(a.mean, mean_a, 1e-14);
}

TEST(MetricsTest, PermutationAndScaling) {
  const TrajectoryBatch p = random_batch(5, 3, 8, 1, 7);
  const TrajectoryBatch t = random_batch(5, 3, 8, 1, 8);
  const std::vector<int> perm = {3, 0, 4, 1, 2};
  EXPECT_NEAR(rmse(p.select(perm), t.select(perm)).mean, rmse(p, t).mean,
              1e-14);
  TrajectoryBatch p3 = p, t3 = t;
  for (double& v : p3.data()) v *= -3.0;
  for (double& v : t3.data()) v *= -3.0;
  EXPECT_NEAR(rmse(p3, t3).mean, 3.0 * rmse(p, t).mean, 1e-13);
  EXPECT_NEAR(mae(p3, t3).mean, 3.0 * mae(p, t).mean, 1e-13);
  EXPECT_THROW(rmse(p, random_batch(4, 3, 8, 1, 1)), std::invalid_argument);
}

TEST(QuantileTest, LinearInterpolation) {
  const std::vector<double> v = {5, 1, 4, 2, 3};
  EXPECT_EQ(quantile(v, 0.5), 3.0);
  EXPECT_EQ(quantile(v, 0.0), 1.0);
  EXPECT_EQ(quantile(v, 1.0), 5.0);
  EXPECT_DOUBLE_EQ(quantile(v, 0.95), 4.8);
  const std::vector<double> c(7, 2.5);
  for (double q : {0.5, 0.95, 0.99}) EXPECT_EQ(quantile(c, q), 2.5);
  EXPECT_THROW(quantile(std::vector<double>{}, 0.5), std::invalid_argument);
  Rng rng(5);
  std::vector<double> u(10000);
  for (double& x : u) x = rng.uniform();
  EXPECT_NEAR(quantile(u, 0.95), 0.95, 0.01);
}

TEST(CorrelationTest, Examples) {
  std::vector<double> u(100), cube(100), neg(100);
  Rng rng(6);
  for (int i = 0; i < 100; ++i) {
    u[i] = rng.uniform(-1.0, 1.0);
    cube[i] = u[i] * u[i] * u[i];
    neg[i] = -u[i];
  }
  Correlation c = correlation(u, u);
  EXPECT_NEAR(*c.pearson, 1.0, 1e-15);
  EXPECT_NEAR(*c.spearman, 1.0, 1e-15);
  c = correlation(u, neg);
  EXPECT_NEAR(*c.pearson, -1.0, 1e-15);
  EXPECT_NEAR(*c.spearman, -1.0, 1e-15);
  c = correlation(u, cube);
  EXPECT_EQ(*c.spearman, 1.0);
  EXPECT_LT(*c.pearson, 1.0);
  const std::vector<double> flat(5, 1.0), x = {1, 2, 3, 4, 5};
  EXPECT_FALSE(correlation(flat, x).pearson.has_value());
  EXPECT_THROW(correlation(std::vector<double>{1, 2}, std::vector<double>{1, 2}),
               std::invalid_argument);
}

TEST(CorrelationTest, AverageRanksForTies) {
  const std::vector<double> v = {10, 20, 10, 30};
  EXPECT_EQ(average_ranks(v), (std::vector<double>{1.5, 3, 1.5, 4}));
}

TEST(MetricsReportTest, QuantilesOrdered) {
  const TrajectoryBatch p = random_batch(50, 3, 8, 1, 9);
  const TrajectoryBatch t = random_batch(50, 3, 8, 1, 10);
  const MetricsReport m = compute_metrics(p, t);
  EXPECT_LE(m.q50, m.q95);
  EXPECT_LE(m.q95, m.q99);
  EXPECT_EQ(m.n_trajectories, 50);
}

}  // namespace
}  // namespace alpde
