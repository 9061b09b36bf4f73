#include "alpde/simulators.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace alpde {
namespace {

constexpr double kPi = std::numbers::pi;

std::vector<double> sine(int n, double amp, int k, double phase = 0.0) {
  std::vector<double> u(n);
  for (int j = 0; j < n; ++j) {
    u[j] = amp * std::sin(2 * kPi * k * j / n + phase);
  }
  return u;
}

std::vector<double> last_frame(const SolveOutcome& r, int n) {
  return {r.trajectory.end() - n, r.trajectory.end()};
}

std::vector<double> frame_at(const SolveOutcome& r, int t, int n) {
  return {r.trajectory.begin() + t * n, r.trajectory.begin() + (t + 1) * n};
}

double rel_l2(std::span<const double> a, std::span<const double> b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return std::sqrt(num / den);
}

// Every `stride`-th point of a finer field.
std::vector<double> coarsen(std::span<const double> fine, int stride) {
  std::vector<double> out;
  for (std::size_t j = 0; j < fine.size(); j += stride) out.push_back(fine[j]);
  return out;
}

double mean(std::span<const double> u) {
  double s = 0.0;
  for (double v : u) s += v;
  return s / u.size();
}

double energy(std::span<const double> u) {
  const double m = mean(u);
  double e = 0.0;
  for (double v : u) e += (v - m) * (v - m);
  return e / u.size();
}

// Random multi-mode IC.
std::vector<double> mixed_ic(int n, double scale, int modes) {
  std::vector<double> u(n, 0.0);
  for (int k = 1; k <= modes; ++k) {
    const auto w = sine(n, scale / k, k, 0.7 * k);
    for (int j = 0; j < n; ++j) u[j] += w[j];
  }
  return u;
}

// ------------------------------------------------------------- Burgers

TEST(BurgersTest, ConstantStaysConstant) {
  const Grid g = make_grid(256, 1.0);
  const TimeAxis t = make_time_axis(11, 2.0);
  for (double nu : {0.001, 0.3, 0.99}) {
    std::vector<double> u0(256, 0.5);
    const auto r = solve_burgers_field(u0, nu, g, t, {});
    ASSERT_TRUE(r.failure.empty());
    for (double v : r.trajectory) EXPECT_NEAR(v, 0.5, 1e-13);
  }
}

TEST(BurgersTest, SmallAmplitudeFollowsLinearHeatDecay) {
  const Grid g = make_grid(1024, 1.0);
  const TimeAxis t = make_time_axis(11, 0.1);
  const double nu = 0.9;
  const auto u0 = sine(1024, 0.1, 1);
  const auto r = solve_burgers_field(u0, nu, g, t, {});
  ASSERT_TRUE(r.failure.empty());
  const double decay = std::exp(-(nu / kPi) * 4 * kPi * kPi * 0.1);
  std::vector<double> expect(u0);
  for (double& v : expect) v *= decay;
  EXPECT_LE(rel_l2(last_frame(r, 1024), expect), 5e-3);
}

TEST(BurgersTest, SteepFrontMatchesRefinedReference) {
  const TimeAxis t = make_time_axis(21, 2.0);
  const double nu = 0.005;
  const auto coarse = solve_burgers_field(sine(1024, 1.0, 1), nu,
                                          make_grid(1024, 1.0), t, {});
  SolverConfig fine_cfg;
  fine_cfg.cfl_safety = 0.2;
  const auto fine = solve_burgers_field(sine(2048, 1.0, 1), nu,
                                        make_grid(2048, 1.0), t, fine_cfg);
  ASSERT_TRUE(coarse.failure.empty());
  ASSERT_TRUE(fine.failure.empty());
  EXPECT_LE(rel_l2(last_frame(coarse, 1024), coarsen(last_frame(fine, 2048), 2)),
            1e-2);
}

TEST(BurgersTest, SelfConvergenceUnderRefinement) {
  // Errors of N and 2N against a 4N reference (4x substeps per doubling).
  const TimeAxis t = make_time_axis(5, 0.4);
  const double nu = 0.05;
  auto run = [&](int n, double cfl) {
    SolverConfig cfg;
    cfg.cfl_safety = cfl;
    auto r = solve_burgers_field(sine(n, 1.0, 1, 0.3), nu, make_grid(n, 1.0),
                                 t, cfg);
    EXPECT_TRUE(r.failure.empty());
    return last_frame(r, n);
  };
  const auto u1 = run(128, 0.4);
  const auto u2 = run(256, 0.2);
  const auto ref = run(512, 0.1);
  const double e1 = rel_l2(u1, coarsen(ref, 4));
  const double e2 = rel_l2(u2, coarsen(ref, 2));
  EXPECT_GE(e1 / e2, 3.0) << "e1=" << e1 << " e2=" << e2;
}

TEST(BurgersTest, MeanConservedAndShiftEquivariant) {
  const int n = 256;
  const Grid g = make_grid(n, 1.0);
  const TimeAxis t = make_time_axis(11, 1.0);
  auto u0 = mixed_ic(n, 0.8, 4);
  for (double& v : u0) v += 0.2;
  const auto r = solve_burgers_field(u0, 0.01, g, t, {});
  ASSERT_TRUE(r.failure.empty());
  const double m0 = mean(u0);
  for (int k = 0; k < t.n_t; ++k) {
    EXPECT_NEAR(mean(frame_at(r, k, n)), m0, 1e-8 * (1 + std::abs(m0)));
  }
  const int s = 37;
  const auto shifted = solve_burgers_field(shift_frame(u0, n, 1, s), 0.01, g,
                                           t, {});
  const auto expect = shift_frame(last_frame(r, n), n, 1, s);
  EXPECT_LE(rel_l2(last_frame(shifted, n), expect), 1e-10);
}

TEST(BurgersTest, SubstepBudgetFlagsFailure) {
  SolverConfig cfg;
  cfg.max_substeps = 10;
  const auto r = solve_burgers_field(sine(256, 1.0, 1), 0.001,
                                     make_grid(256, 1.0),
                                     make_time_axis(11, 2.0), cfg);
  EXPECT_FALSE(r.failure.empty());
}

TEST(BurgersTest, NonFiniteInitialConditionFlagsFailure) {
  std::vector<double> u0(64, 0.0);
  u0[3] = std::nan("");
  const auto r = solve_burgers_field(u0, 0.1, make_grid(64, 1.0),
                                     make_time_axis(3, 1.0), {});
  EXPECT_FALSE(r.failure.empty());
}

// ------------------------------------------------------------------ KS

TEST(KsTest, ConstantStaysConstant) {
  std::vector<double> u0(512, -0.4);
  const auto r = solve_ks_field(u0, 1.0, 30.0, make_grid(512, 1.0),
                                make_time_axis(41, 40.0), {});
  ASSERT_TRUE(r.failure.empty());
  for (double v : r.trajectory) EXPECT_NEAR(v, -0.4, 1e-12);
}

TEST(KsTest, MeanConservedOverLongChaoticRun) {
  const int n = 512;
  auto u0 = mixed_ic(n, 1.0, 9);
  for (double& v : u0) v += 0.3;
  const TimeAxis t = make_time_axis(801, 40.0);
  const auto r = solve_ks_field(u0, 0.5, 90.0, make_grid(n, 1.0), t, {});
  ASSERT_TRUE(r.failure.empty()) << r.failure;
  const double m0 = mean(u0);
  for (int k = 0; k < t.n_t; ++k) {
    ASSERT_NEAR(mean(frame_at(r, k, n)), m0, 1e-8 * (1 + std::abs(m0)));
  }
}

TEST(KsTest, SmallDomainDecaysToMean) {
  // Growth rates (2 pi k / L)^2 - nu (2 pi k / L)^4 < 0 for every k >= 1.
  const int n = 512;
  const double length = 0.5, nu = 4.0;
  for (int k = 1; k < n / 2; ++k) {
    const double q = 2 * kPi * k / length;
    ASSERT_LT(q * q - nu * q * q * q * q, 0.0);
  }
  auto u0 = mixed_ic(n, 1.0, 9);
  const auto r = solve_ks_field(u0, nu, length, make_grid(n, 1.0),
                                make_time_axis(801, 40.0), {});
  ASSERT_TRUE(r.failure.empty()) << r.failure;
  EXPECT_LT(energy(last_frame(r, n)), energy(u0));
  EXPECT_LT(energy(last_frame(r, n)), 1e-20);
}

TEST(KsTest, ShiftEquivariant) {
  const int n = 512;
  const auto u0 = mixed_ic(n, 1.0, 6);
  const TimeAxis t = make_time_axis(21, 5.0);
  const Grid g = make_grid(n, 1.0);
  const auto r = solve_ks_field(u0, 1.0, 40.0, g, t, {});
  const auto s = solve_ks_field(shift_frame(u0, n, 1, 101), 1.0, 40.0, g, t,
                                {});
  EXPECT_LE(rel_l2(last_frame(s, n), shift_frame(last_frame(r, n), n, 1, 101)),
            1e-10);
}

TEST(KsTest, FourthOrderInTime) {
  // Halving the substep reduces the error against a fine-step reference by
  // nearly 16x; at least 8x is required.
  const int n = 256;
  const auto u0 = mixed_ic(n, 1.0, 5);
  const Grid g = make_grid(n, 1.0);
  const TimeAxis t = make_time_axis(5, 2.0);
  auto run = [&](double cfl) {
    SolverConfig cfg;
    cfg.cfl_safety = cfl;
    auto r = solve_ks_field(u0, 1.0, 30.0, g, t, cfg);
    EXPECT_TRUE(r.failure.empty());
    EXPECT_GT(r.substeps, 0);
    return last_frame(r, n);
  };
  const auto a = run(1.0);
  const auto b = run(0.5);
  const auto ref = run(1.0 / 64);
  const double ea = rel_l2(a, ref);
  const double eb = rel_l2(b, ref);
  EXPECT_GE(ea / eb, 8.0) << "ea=" << ea << " eb=" << eb;
}

// ------------------------------------------------------------------ CE

TEST(CeTest, HeatModeMatchesAnalyticDecay) {
  const Grid g = make_grid(64, 16.0);
  const TimeAxis t = make_time_axis(501, 4.0);
  for (int k : {1, 2, 3}) {
    const double amp = 0.35, phase = 0.4;
    const auto u0 = sine(64, amp, k, phase);
    const auto r = solve_ce_field(u0, 0.0, 1.0, 0.0, g, t, {});
    ASSERT_TRUE(r.failure.empty());
    const double q = 2 * kPi * k / 16.0;
    std::vector<double> expect(u0);
    for (double& v : expect) v *= std::exp(-q * q * 4.0);
    EXPECT_LE(rel_l2(last_frame(r, 64), expect), 1e-6) << "k=" << k;
  }
}

TEST(CeTest, ZeroCoefficientsFreezeTheState) {
  const auto u0 = mixed_ic(64, 0.4, 3);
  const auto r = solve_ce_field(u0, 0.0, 0.0, 0.0, make_grid(64, 16.0),
                                make_time_axis(51, 4.0), {});
  for (int k = 0; k < 51; ++k) {
    const auto f = frame_at(r, k, 64);
    for (int j = 0; j < 64; ++j) EXPECT_NEAR(f[j], u0[j], 1e-14);
  }
}

TEST(CeTest, KdvRegimeConservesMass) {
  // Localized bump; conservative form keeps the integral fixed.
  const Grid g = make_grid(64, 16.0);
  std::vector<double> u0(64);
  for (int j = 0; j < 64; ++j) {
    const double x = g.x(j) - 8.0;
    u0[j] = 0.5 / std::pow(std::cosh(x), 2);
  }
  const TimeAxis t = make_time_axis(501, 4.0);
  const auto r = solve_ce_field(u0, 3.0, 0.0, 1.0, g, t, {});
  ASSERT_TRUE(r.failure.empty()) << r.failure;
  const double m0 = mean(u0) * 16.0;
  for (int k = 0; k < t.n_t; k += 10) {
    EXPECT_NEAR(mean(frame_at(r, k, 64)) * 16.0, m0, 1e-8 * std::abs(m0));
  }
}

TEST(CeTest, ShiftEquivariant) {
  const Grid g = make_grid(64, 16.0);
  const TimeAxis t = make_time_axis(51, 4.0);
  const auto u0 = mixed_ic(64, 0.4, 2);
  const auto r = solve_ce_field(u0, 1.5, 0.2, 0.5, g, t, {});
  const auto s = solve_ce_field(shift_frame(u0, 64, 1, 9), 1.5, 0.2, 0.5, g, t,
                                {});
  EXPECT_LE(rel_l2(last_frame(s, 64), shift_frame(last_frame(r, 64), 64, 1, 9)),
            1e-10);
}

// --------------------------------------------------------------- batch

SimInput field_input(std::vector<double> u0, std::vector<double> params) {
  SimInput in;
  in.initial_field = std::move(u0);
  in.pde.values = std::move(params);
  return in;
}

TEST(SolveBatchTest, BurgersConstantsAtTrainingResolution) {
  const TaskSpec spec = task_spec(Task::kBurgers);
  std::vector<SimInput> inputs = {
      field_input(std::vector<double>(1024, 0.3), {0.01}),
      field_input(std::vector<double>(1024, -0.2), {0.5})};
  const auto batch = solve_batch(spec, inputs, {});
  ASSERT_EQ(batch.n_traj(), 2);
  EXPECT_EQ(batch.n_t(), 41);
  EXPECT_EQ(batch.n_x(), 256);
  for (int t = 0; t < 41; ++t) {
    for (int x = 0; x < 256; ++x) {
      EXPECT_NEAR(batch.at(0, t, x), 0.3, 1e-13);
      EXPECT_NEAR(batch.at(1, t, x), -0.2, 1e-13);
    }
  }
}

TEST(SolveBatchTest, CeMixesHeatAndFrozenRegimes) {
  const TaskSpec spec = task_spec(Task::kCE);
  const auto mode = sine(64, 0.3, 2);
  std::vector<SimInput> inputs = {field_input(mode, {0.0, 1.0, 0.0}),
                                  field_input(mode, {0.0, 0.0, 0.0})};
  const auto batch = solve_batch(spec, inputs, {});
  ASSERT_EQ(batch.n_t(), 51);
  const double q = 2 * kPi * 2 / 16.0;
  for (int t = 0; t < 51; ++t) {
    const double decay = std::exp(-q * q * spec.train_time().t(t));
    for (int x = 0; x < 64; ++x) {
      EXPECT_NEAR(batch.at(0, t, x), mode[x] * decay, 1e-7);
      EXPECT_NEAR(batch.at(1, t, x), mode[x], 1e-14);
    }
  }
}

TEST(SolveBatchTest, EmptyBatch) {
  const TaskSpec spec = task_spec(Task::kCE);
  const auto batch = solve_batch(spec, std::vector<SimInput>{}, {});
  EXPECT_EQ(batch.n_traj(), 0);
  EXPECT_EQ(batch.n_t(), 51);
}

TEST(SolveBatchTest, OrderIndependentAndDeterministic) {
  const TaskSpec spec = task_spec(Task::kCE);
  auto inputs = sample_inputs(spec, 6, 17, StreamTag::kPool);
  const auto a = solve_batch(spec, inputs, {});
  std::reverse(inputs.begin(), inputs.end());
  const auto b = solve_batch(spec, inputs, {});
  for (int i = 0; i < 6; ++i) {
    const auto ta = a.trajectory(i);
    const auto tb = b.trajectory(5 - i);
    ASSERT_TRUE(std::equal(ta.begin(), ta.end(), tb.begin()));
  }
}

TEST(SolveBatchTest, SampledKsAndBurgersInputsSolve) {
  for (Task task : {Task::kBurgers, Task::kKS}) {
    const TaskSpec spec = task_spec(task);
    auto inputs = sample_inputs(spec, 2, 5, StreamTag::kPool);
    const auto batch = solve_batch(spec, inputs, {});
    EXPECT_EQ(batch.n_failed(), 0);
    EXPECT_EQ(batch.n_x(), spec.train_nx);
    for (int x = 0; x < spec.train_nx; ++x) {
      EXPECT_EQ(batch.at(1, 0, x), inputs[1].initial_field[x]);
    }
  }
}

TEST(SolveBatchTest, AllFailedBatchThrows) {
  const TaskSpec spec = task_spec(Task::kCE);
  std::vector<double> bad(64, 0.0);
  bad[0] = INFINITY;
  std::vector<SimInput> inputs = {field_input(bad, {1.0, 0.1, 0.1})};
  EXPECT_THROW(solve_batch(spec, inputs, {}), std::runtime_error);
}

TEST(SolverConfigTest, Validation) {
  SolverConfig cfg;
  cfg.cfl_safety = 0.0;
  EXPECT_THROW(validate(cfg), std::invalid_argument);
  cfg = {};
  cfg.contour_points = 8;
  EXPECT_THROW(validate(cfg), std::invalid_argument);
}

}  // namespace
}  // namespace alpde
