#include "alpde/alloop.hpp"

#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <set>
#include <unistd.h>

#include "alpde/generators.hpp"
#include "alpde/oracles.hpp"
#include "alpde/selection.hpp"

namespace alpde {
namespace {

namespace fs = std::filesystem;

fs::path scratch_root() {
  static const fs::path root = [] {
    const fs::path p = fs::temp_directory_path() /
                       ("alpde_alloop_test_" + std::to_string(::getpid()));
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return root;
}

ExperimentConfig tiny(Strategy s, const std::string& name) {
  ExperimentConfig c;
  c.task = Task::kCE;
  c.strategy.name = s;
  c.strategy.p_prime = 16;
  c.schedule.n_initial = 8;
  c.schedule.n_iterations = 2;
  c.model.hidden = 8;
  c.train.epochs = 3;
  c.train.batch_size = 8;
  c.train.windows_per_trajectory = 1;
  c.pool_size = 64;
  c.test_size = 8;
  c.output_dir = (scratch_root() / name).string();
  c.test_cache = (scratch_root() / "test_cache.alds").string();
  return c;
}

std::vector<int> sizes(const RunReport& r) {
  std::vector<int> out;
  for (const auto& it : r.iterations) out.push_back(it.train_size);
  return out;
}

TEST(AlLoopTest, ExponentialScheduleDoubles) {
  const RunReport r = run_al(tiny(Strategy::kRandom, "schedule"));
  EXPECT_EQ(r.status, "completed");
  EXPECT_EQ(sizes(r), (std::vector<int>{8, 16, 32}));
  ASSERT_EQ(r.iterations.size(), 3u);
  EXPECT_TRUE(r.iterations[0].selection.has_value());
  EXPECT_FALSE(r.iterations[2].selection.has_value());
  for (const auto& it : r.iterations) {
    EXPECT_EQ(it.metrics.n_trajectories, 8);
    EXPECT_GT(it.metrics.rmse, 0.0);
    EXPECT_EQ(it.final_train_loss.size(), 2u);
    EXPECT_TRUE(it.metrics.spearman.has_value());
  }
  const RunReport on_disk =
      load_report(fs::path(r.config.output_dir) / "report.json");
  EXPECT_EQ(report_to_json_text(on_disk), report_to_json_text(r));
}

TEST(AlLoopTest, FixedScheduleAndExclusivity) {
  ExperimentConfig c = tiny(Strategy::kSbal, "fixed");
  c.schedule.growth = "fixed";
  c.schedule.batch_sizes = {5, 3};
  const RunReport r = run_al(c);
  EXPECT_EQ(sizes(r), (std::vector<int>{8, 13, 16}));
  std::set<std::uint64_t> seen(r.initial_uids.begin(), r.initial_uids.end());
  std::size_t total = r.initial_uids.size();
  for (const auto& it : r.iterations) {
    if (!it.selection) continue;
    seen.insert(it.selection->uids.begin(), it.selection->uids.end());
    total += it.selection->uids.size();
    EXPECT_EQ(it.selection->pde_normed.size(), it.selection->uids.size());
  }
  EXPECT_EQ(seen.size(), total);
  const TaskSpec spec = task_spec(Task::kCE);
  for (const SimInput& t :
       sample_inputs(spec, c.test_size, c.seeds.test, StreamTag::kTest)) {
    EXPECT_EQ(seen.count(t.uid), 0u);
  }
}

TEST(AlLoopTest, IdenticalConfigGivesIdenticalReport) {
  const RunReport a = run_al(tiny(Strategy::kLcmd, "det_a"));
  const RunReport b = run_al(tiny(Strategy::kLcmd, "det_b"));
  RunReport b2 = b;
  b2.config.output_dir = a.config.output_dir;
  EXPECT_EQ(report_to_json_text(a, false), report_to_json_text(b2, false));
}

TEST(AlLoopTest, ResumeMatchesUninterruptedRun) {
  const RunReport full = run_al(tiny(Strategy::kBait, "resume_full"));
  ExperimentConfig c = tiny(Strategy::kBait, "resume_part");
  RunOptions first;
  first.max_iterations = 1;
  const RunReport part = run_al(c, first);
  EXPECT_EQ(part.iterations.size(), 1u);
  EXPECT_EQ(part.status, "running");
  RunOptions again;
  again.resume = true;
  RunReport resumed = run_al(c, again);
  EXPECT_EQ(resumed.status, "completed");
  resumed.config.output_dir = full.config.output_dir;
  EXPECT_EQ(report_to_json_text(resumed, false),
            report_to_json_text(full, false));

  ExperimentConfig changed = c;
  changed.train.epochs = 4;
  EXPECT_THROW(run_al(changed, again), std::runtime_error);
}

TEST(AlLoopTest, ZeroDisagreementSbalUsesDeferralOrder) {
  ExperimentConfig c = tiny(Strategy::kSbal, "zero_var");
  c.model.identical_members = true;
  c.schedule.n_iterations = 1;
  const RunReport r = run_al(c);
  const SelectionRecord& s = *r.iterations[0].selection;
  EXPECT_EQ(s.n_unscored, 0);
  // Every score is exactly zero, so the selection is the uniform deferral
  // draw over the remaining candidates.
  const TaskSpec spec = task_spec(Task::kCE);
  const auto pool =
      sample_inputs(spec, c.pool_size, c.seeds.pool, StreamTag::kPool);
  std::set<std::uint64_t> initial(r.initial_uids.begin(),
                                  r.initial_uids.end());
  std::vector<int> remaining;
  for (int i = 0; i < c.pool_size; ++i) {
    if (!initial.count(pool[i].uid)) remaining.push_back(i);
  }
  const std::vector<double> zeros(remaining.size(), 0.0);
  const SelectionResult expect = select_sbal(zeros, 8, c.strategy.m, s.seed);
  ASSERT_EQ(s.uids.size(), expect.indices.size());
  for (std::size_t j = 0; j < s.uids.size(); ++j) {
    EXPECT_EQ(s.uids[j], pool[remaining[expect.indices[j]]].uid);
  }
}

TEST(AlLoopTest, EveryStrategyRuns) {
  for (Strategy s : {Strategy::kLhs, Strategy::kTopK, Strategy::kCoreSet}) {
    ExperimentConfig c = tiny(s, "strategy_" + strategy_name(s));
    c.schedule.n_iterations = 1;
    const RunReport r = run_al(c);
    EXPECT_EQ(sizes(r), (std::vector<int>{8, 16})) << strategy_name(s);
    EXPECT_EQ(r.iterations[0].selection->uids.size(), 8u);
  }
}

TEST(AlLoopTest, TraineeWithSelectorSettingsReproducesMemberZero) {
  ExperimentConfig c = tiny(Strategy::kRandom, "trainee");
  c.schedule.n_iterations = 1;
  TraineeConfig t;
  t.hidden = c.model.hidden;
  t.seed = c.seeds.train;
  const RunReport r = reuse_experiment(c, t);
  for (const auto& it : r.iterations) {
    ASSERT_TRUE(it.trainee.has_value());
    EXPECT_EQ(it.trainee->rmse, it.metrics.rmse);
    EXPECT_EQ(it.trainee->rmse_per_trajectory, it.metrics.rmse_per_trajectory);
  }
}

SurrogateModel identity_model(int n_params) {
  SurrogateArch arch;
  arch.n_params = n_params;
  arch.hidden = 4;
  NormStats stats;
  stats.channel_std = {1.0};
  stats.params = task_spec(Task::kCE).params;
  SurrogateModel m(arch, stats, 1);
  const int last = SurrogateArch::kLayers - 1;
  auto p = m.parameters();
  std::fill(p.begin() + m.weight_offset(last), p.end(), 0.0);
  return m;
}

TEST(EvaluateTest, IdentityModelOnConstantData) {
  const TaskSpec spec = task_spec(Task::kCE);
  const auto inputs = sample_inputs(spec, 3, 1, StreamTag::kTest);
  TrajectoryBatch test(3, spec.train_grid(), spec.train_time(), 1);
  for (int i = 0; i < 3; ++i) {
    for (double& v : test.trajectory(i)) v = 0.25 * (i + 1);
  }
  const MetricsReport m = evaluate(identity_model(3), test, inputs);
  EXPECT_EQ(m.rmse, 0.0);
  EXPECT_EQ(m.mae, 0.0);
  EXPECT_EQ(m.n_truncated, 0);
}

TEST(EvaluateTest, IdentityModelOnHeatModeMatchesClosedForm) {
  const TaskSpec spec = task_spec(Task::kCE);
  const Grid g = spec.train_grid();
  const TimeAxis time = spec.train_time();
  const auto inputs = sample_inputs(spec, 2, 1, StreamTag::kTest);
  TrajectoryBatch test(2, g, time, 1);
  const double beta[2] = {0.05, 0.2};
  const int mode[2] = {1, 2};
  double expect_mean = 0.0;
  for (int i = 0; i < 2; ++i) {
    const auto u0 = oracles::heat_mode(g.n_x, g.length, mode[i], beta[i], 0.0);
    double sq = 0.0;
    for (int t = 0; t < time.n_t; ++t) {
      const auto u =
          oracles::heat_mode(g.n_x, g.length, mode[i], beta[i], time.t(t));
      for (int x = 0; x < g.n_x; ++x) {
        test.at(i, t, x) = u[x];
        sq += (u[x] - u0[x]) * (u[x] - u0[x]);
      }
    }
    expect_mean += std::sqrt(sq / (time.n_t * g.n_x)) / 2.0;
  }
  const MetricsReport m = evaluate(identity_model(3), test, inputs);
  EXPECT_NEAR(m.rmse, expect_mean, 1e-14);
}

TEST(EvaluateTest, FailedTestTrajectoriesAreSkipped) {
  const TaskSpec spec = task_spec(Task::kCE);
  const auto inputs = sample_inputs(spec, 3, 1, StreamTag::kTest);
  TrajectoryBatch test(3, spec.train_grid(), spec.train_time(), 1);
  for (double& v : test.data()) v = 0.5;
  test.mark_failed(1, "diverged");
  const MetricsReport m = evaluate(identity_model(3), test, inputs);
  EXPECT_EQ(m.n_trajectories, 2);
  EXPECT_EQ(m.rmse, 0.0);
}

}  // namespace
}  // namespace alpde
