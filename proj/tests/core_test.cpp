#include "alpde/core.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <stdexcept>

#include "alpde/random.hpp"

namespace alpde {
namespace {

TrajectoryBatch random_batch(int n_traj, int n_t, int n_x, std::uint64_t seed) {
  TrajectoryBatch b(n_traj, make_grid(n_x, 1.0), make_time_axis(n_t, 2.0));
  Rng rng(seed);
  for (double& v : b.data()) v = rng.uniform(-1.0, 1.0);
  return b;
}

TEST(GridTest, SpacingIsLengthOverPoints) {
  EXPECT_DOUBLE_EQ(make_grid(256, 1.0).dx, 1.0 / 256);
  EXPECT_EQ(make_grid(64, 16.0).dx, 0.25);
  EXPECT_EQ(make_grid(512, 100.0).dx, 0.1953125);
  const Grid g = make_grid(48, 3.7);
  EXPECT_NEAR(g.dx * g.n_x, g.length, 1e-12 * g.length);
}

TEST(GridTest, RejectsInvalidShapes) {
  EXPECT_THROW(make_grid(7, 1.0), std::invalid_argument);
  EXPECT_THROW(make_grid(64, 0.0), std::invalid_argument);
  EXPECT_THROW(make_grid(64, -2.0), std::invalid_argument);
  EXPECT_THROW(make_time_axis(1, 1.0), std::invalid_argument);
}

TEST(DownsampleTest, BurgersResolutionStrides) {
  const TrajectoryBatch src = random_batch(2, 201, 1024, 1);
  const TrajectoryBatch dst = downsample(src, 41, 256);
  ASSERT_EQ(dst.n_t(), 41);
  ASSERT_EQ(dst.n_x(), 256);
  EXPECT_EQ(dst.grid().length, 1.0);
  for (int i = 0; i < 2; ++i) {
    for (int t = 0; t < 41; ++t) {
      for (int x = 0; x < 256; ++x) {
        ASSERT_EQ(dst.at(i, t, x), src.at(i, 5 * t, 4 * x));
      }
    }
    EXPECT_EQ(dst.at(i, 40, 3), src.at(i, 200, 12));  // last step kept
  }
}

TEST(DownsampleTest, IdentityAndConstants) {
  const TrajectoryBatch src = random_batch(3, 11, 16, 2);
  const TrajectoryBatch same = downsample(src, 11, 16);
  EXPECT_EQ(same.data(), src.data());

  TrajectoryBatch c(1, make_grid(32, 1.0), make_time_axis(9, 1.0));
  for (double& v : c.data()) v = 0.75;
  const TrajectoryBatch coarse = downsample(c, 3, 8);
  for (double v : coarse.data()) EXPECT_EQ(v, 0.75);
}

TEST(DownsampleTest, CompositionEqualsSingleStride) {
  const TrajectoryBatch src = random_batch(2, 33, 64, 3);
  const TrajectoryBatch twice = downsample(downsample(src, 17, 32), 5, 8);
  const TrajectoryBatch once = downsample(src, 5, 8);
  EXPECT_EQ(twice.data(), once.data());
}

TEST(DownsampleTest, RejectsNonDivisibleTargets) {
  const TrajectoryBatch src = random_batch(1, 11, 16, 4);
  EXPECT_THROW(downsample(src, 4, 16), std::invalid_argument);
  EXPECT_THROW(downsample(src, 11, 12), std::invalid_argument);
}

TEST(DownsampleTest, KeepsFailureFlags) {
  TrajectoryBatch src = random_batch(2, 5, 16, 5);
  src.mark_failed(1, "nan");
  const TrajectoryBatch dst = downsample(src, 3, 8);
  EXPECT_FALSE(dst.failed(0));
  EXPECT_EQ(dst.failure(1), "nan");
}

TEST(TrajectoryBatchTest, SelectAppendAndRounding) {
  const TrajectoryBatch src = random_batch(4, 3, 8, 6);
  const std::vector<int> order = {3, 1};
  TrajectoryBatch sub = src.select(order);
  ASSERT_EQ(sub.n_traj(), 2);
  EXPECT_EQ(sub.at(0, 2, 5), src.at(3, 2, 5));
  sub.append(src.select(std::vector<int>{0}));
  EXPECT_EQ(sub.n_traj(), 3);
  EXPECT_EQ(sub.at(2, 1, 1), src.at(0, 1, 1));

  sub.round_to_float();
  for (double v : sub.data()) EXPECT_EQ(v, static_cast<float>(v));
}

TEST(ShiftTest, CircularShiftMovesPoints) {
  std::vector<double> f = {0, 1, 2, 3, 4, 5, 6, 7};
  const auto s = shift_frame(f, 8, 1, 3);
  EXPECT_EQ(s[3], 0);
  EXPECT_EQ(s[0], 5);
  EXPECT_EQ(shift_frame(s, 8, 1, -3), f);
}

TEST(TaskTest, NamesRoundTrip) {
  for (Task t : {Task::kBurgers, Task::kKS, Task::kCE}) {
    EXPECT_EQ(parse_task(task_name(t)), t);
  }
  EXPECT_THROW(parse_task("cns"), std::invalid_argument);
}

}  // namespace
}  // namespace alpde
