#include "alpde/alloop.hpp"

#include <algorithm>
#include <chrono>
#include <unordered_map>
#include <unordered_set>

#include "alpde/acquisition.hpp"
#include "alpde/generators.hpp"
#include "alpde/random.hpp"
#include "alpde/selection.hpp"
#include "alpde/simulators.hpp"
#include "json.hpp"

namespace alpde {
namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Accumulated training set T: trajectories and the inputs that produced them.
struct TrainSet {
  TrajectoryBatch batch;
  std::vector<SimInput> inputs;

  void add(const TrajectoryBatch& solved, std::span<const SimInput> in) {
    std::vector<int> ok;
    for (int i = 0; i < solved.n_traj(); ++i) {
      if (!solved.failed(i)) ok.push_back(i);
    }
    TrajectoryBatch kept = solved.select(ok);
    kept.round_to_float();
    if (batch.n_traj() == 0 && batch.n_t() == 0) {
      batch = std::move(kept);
    } else {
      batch.append(kept);
    }
    for (int i : ok) inputs.push_back(in[i]);
  }

  std::vector<PDEParams> params() const {
    std::vector<PDEParams> p;
    for (const SimInput& in : inputs) p.push_back(in.pde);
    return p;
  }
};

class Runner {
 public:
  Runner(const ExperimentConfig& cfg, const RunOptions& opt)
      : cfg_(cfg), opt_(opt), spec_(task_spec(cfg.task)),
        out_(resolve_output_dir(cfg)) {}

  RunReport run();

 private:
  void log(const std::string& msg) const {
    if (opt_.log) opt_.log(msg);
  }
  void prepare_test_set();
  bool try_resume();
  void start_fresh();
  void save_state();
  void run_iteration(int iteration);
  SelectionRecord select_and_simulate(int iteration, const Ensemble& ens,
                                      PhaseTimes& times);
  Ensemble train_models(int hidden, int n_members, std::uint64_t seed,
                        bool identical, const NormStats& stats,
                        std::vector<double>* final_loss);

  const ExperimentConfig& cfg_;
  const RunOptions& opt_;
  TaskSpec spec_;
  fs::path out_;
  RunReport report_;
  std::vector<SimInput> pool_;
  std::vector<char> available_;
  TrajectoryBatch test_;
  std::vector<SimInput> test_inputs_;
  TrainSet train_;
};

void Runner::prepare_test_set() {
  test_inputs_ = sample_inputs(spec_, cfg_.test_size, cfg_.seeds.test,
                               StreamTag::kTest);
  std::unordered_set<std::uint64_t> pool_uids;
  for (const SimInput& in : pool_) pool_uids.insert(in.uid);
  for (const SimInput& in : test_inputs_) {
    if (pool_uids.count(in.uid)) {
      throw std::logic_error("test and pool candidates share uid " +
                             std::to_string(in.uid));
    }
  }
  fs::path path = cfg_.test_cache.empty() ? out_ / "test.alds"
                                          : fs::path(cfg_.test_cache);
  if (path.is_relative() && !cfg_.test_cache.empty()) {
    path = output_root() / path;
  }
  if (fs::exists(path)) {
    LoadedDataset d = load_dataset(path);
    bool match = d.task == cfg_.task &&
                 d.inputs.size() == test_inputs_.size();
    for (std::size_t i = 0; match && i < d.inputs.size(); ++i) {
      match = d.inputs[i].uid == test_inputs_[i].uid;
    }
    if (match) {
      log("test set loaded from " + path.string());
      test_ = std::move(d.batch);
      return;
    }
    log("test cache " + path.string() + " does not match; re-solving");
  }
  log("solving " + std::to_string(test_inputs_.size()) + " test inputs");
  test_ = solve_batch(spec_, test_inputs_, cfg_.solver);
  test_.round_to_float();
  save_dataset(path, cfg_.task, test_, test_inputs_);
}

void Runner::start_fresh() {
  report_ = RunReport{};
  report_.config = cfg_;
  const SelectionResult init =
      select_random(cfg_.pool_size, cfg_.schedule.n_initial,
                    derive_seed({cfg_.seeds.train, 0x696e6974}), available_);
  std::vector<SimInput> chosen;
  for (int i : init.indices) {
    chosen.push_back(pool_[i]);
    available_[i] = 0;
    report_.initial_uids.push_back(pool_[i].uid);
  }
  const auto t0 = Clock::now();
  const TrajectoryBatch solved = solve_batch(spec_, chosen, cfg_.solver);
  report_.setup_wall_clock.simulate += seconds_since(t0);
  report_.initial_failed = solved.n_failed();
  train_ = TrainSet{};
  train_.add(solved, chosen);
}

bool Runner::try_resume() {
  const fs::path state_path = out_ / "state.json";
  if (!fs::exists(state_path)) return false;
  const nlohmann::json state = nlohmann::json::parse(read_file(state_path));
  RunReport saved = report_from_json_text(state.at("report").dump());
  if (config_to_json_text(saved.config) != config_to_json_text(cfg_)) {
    throw std::runtime_error(
        "cannot resume: configuration differs from the saved run in " +
        out_.string());
  }
  LoadedDataset d =
      load_dataset(out_ / state.at("train_file").get<std::string>());
  train_ = TrainSet{std::move(d.batch), std::move(d.inputs)};
  std::unordered_map<std::uint64_t, int> index;
  for (int i = 0; i < static_cast<int>(pool_.size()); ++i) {
    index.emplace(pool_[i].uid, i);
  }
  auto consume = [&](std::uint64_t uid) {
    auto it = index.find(uid);
    if (it != index.end()) available_[it->second] = 0;
  };
  for (std::uint64_t u : saved.initial_uids) consume(u);
  for (const IterationRecord& it : saved.iterations) {
    if (it.selection) {
      for (std::uint64_t u : it.selection->uids) consume(u);
    }
  }
  report_ = std::move(saved);
  report_.status = "running";
  report_.error.clear();
  log("resuming after " + std::to_string(report_.iterations.size()) +
      " completed iteration(s)");
  return true;
}

void Runner::save_state() {
  const int n_done = static_cast<int>(report_.iterations.size());
  const std::string train_file = "train_" + std::to_string(n_done) + ".alds";
  save_dataset(out_ / train_file, cfg_.task, train_.batch, train_.inputs);
  nlohmann::json state = {
      {"train_file", train_file},
      {"report", nlohmann::json::parse(report_to_json_text(report_))}};
  write_file_atomic(out_ / "state.json", state.dump(1));
  write_file_atomic(out_ / "report.json", report_to_json_text(report_));
  for (const auto& entry : fs::directory_iterator(out_)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind("train_", 0) == 0 && name != train_file &&
        entry.path().extension() == ".alds") {
      fs::remove(entry.path());
    }
  }
}

Ensemble Runner::train_models(int hidden, int n_members, std::uint64_t seed,
                              bool identical, const NormStats& stats,
                              std::vector<double>* final_loss) {
  SurrogateArch arch;
  arch.n_channels = train_.batch.n_c();
  arch.n_params = spec_.n_params();
  arch.hidden = hidden;
  arch.residual_scale = cfg_.model.residual_scale;
  Ensemble ens = make_ensemble(arch, stats, n_members, seed, identical);
  TrainConfig tc = cfg_.train;
  tc.seed = derive_seed({seed, 0x7472});
  const std::vector<PDEParams> params = train_.params();
  const auto reports =
      train_ensemble(ens, Dataset{&train_.batch, params}, tc, identical);
  if (final_loss != nullptr) {
    for (const TrainReport& r : reports) {
      final_loss->push_back(r.epoch_loss.empty() ? 0.0 : r.epoch_loss.back());
    }
  }
  return ens;
}

SelectionRecord Runner::select_and_simulate(int iteration, const Ensemble& ens,
                                            PhaseTimes& times) {
  const StrategyConfig& sc = cfg_.strategy;
  const int current = train_.batch.n_traj();
  const int k = cfg_.schedule.growth == "fixed"
                    ? cfg_.schedule.batch_sizes[iteration]
                    : current;
  const std::uint64_t sel_seed =
      derive_seed({cfg_.seeds.train, static_cast<std::uint64_t>(iteration),
                   0x73656c});
  auto t0 = Clock::now();

  // Candidates still in the pool, in pool order.
  std::vector<int> cand;
  for (int i = 0; i < static_cast<int>(pool_.size()); ++i) {
    if (available_[i]) cand.push_back(i);
  }
  std::vector<SimInput> cand_inputs;
  cand_inputs.reserve(cand.size());
  for (int i : cand) cand_inputs.push_back(pool_[i]);

  SelectionResult sel;
  SelectionRecord rec;
  const int steps = spec_.train_nt - 1;
  std::vector<char> usable(cand.size(), 1);
  PoolScoringOptions po;
  po.rollout_steps = steps;
  po.metric = sc.metric;
  po.aggregation = sc.aggregation;
  po.p_prime = sc.p_prime;
  po.sketch_seed = derive_seed({cfg_.seeds.sketch,
                                static_cast<std::uint64_t>(iteration)});
  po.chunk = cfg_.prediction_chunk;

  switch (sc.name) {
    case Strategy::kRandom:
      sel = select_random(static_cast<int>(cand.size()), k, sel_seed);
      break;
    case Strategy::kLhs:
      sel = select_lhs(k, spec_, sel_seed);
      break;
    case Strategy::kTopK:
    case Strategy::kSbal: {
      po.scores = true;
      po.features = false;
      const PoolScoring ps = score_pool(ens, cand_inputs, po);
      for (std::size_t i = 0; i < cand.size(); ++i) {
        usable[i] = ps.scores.valid[i];
        rec.n_unscored += !usable[i];
      }
      sel = sc.name == Strategy::kTopK
                ? select_topk(ps.scores.score, k, usable)
                : select_sbal(ps.scores.score, k, sc.m, sel_seed, usable);
      break;
    }
    case Strategy::kCoreSet:
    case Strategy::kLcmd:
    case Strategy::kBait: {
      po.scores = false;
      po.features = true;
      const PoolScoring ps = score_pool(ens, cand_inputs, po);
      const PoolScoring anchors = score_pool(ens, train_.inputs, po);
      for (std::size_t i = 0; i < cand.size(); ++i) {
        usable[i] = ps.features.valid[i];
        rec.n_unscored += !usable[i];
      }
      if (sc.name == Strategy::kCoreSet) {
        sel = select_coreset(ps.features, anchors.features, k, usable);
      } else if (sc.name == Strategy::kLcmd) {
        sel = select_lcmd(ps.features, anchors.features, k, usable);
      } else {
        sel = select_bait(ps.features, anchors.features, k, sc.reg_lambda,
                          usable);
      }
      break;
    }
  }
  times.select += seconds_since(t0);

  std::vector<SimInput> chosen;
  if (sc.name == Strategy::kLhs) {
    chosen = sel.generated;
  } else {
    for (int& i : sel.indices) {
      i = cand[i];
      chosen.push_back(pool_[i]);
      available_[i] = 0;
    }
  }
  rec.strategy = strategy_name(sc.name);
  rec.seed = sel_seed;
  rec.trace = sel.trace;
  rec.exhausted = sel.exhausted;
  for (const SimInput& in : chosen) {
    rec.uids.push_back(in.uid);
    rec.pde_normed.push_back(in.pde.normed);
  }

  t0 = Clock::now();
  const TrajectoryBatch solved = solve_batch(spec_, chosen, cfg_.solver);
  times.simulate += seconds_since(t0);
  rec.n_failed = solved.n_failed();
  train_.add(solved, chosen);
  return rec;
}

void Runner::run_iteration(int iteration) {
  IterationRecord rec;
  rec.iteration = iteration;
  rec.train_size = train_.batch.n_traj();
  log("iteration " + std::to_string(iteration) + ": training on " +
      std::to_string(rec.train_size) + " trajectories");

  auto t0 = Clock::now();
  const NormStats stats = fit_norm_stats(train_.batch, spec_.params);
  const Ensemble ens = train_models(
      cfg_.model.hidden, cfg_.model.ensemble_size,
      derive_seed({cfg_.seeds.train, static_cast<std::uint64_t>(iteration)}),
      cfg_.model.identical_members, stats, &rec.final_train_loss);
  rec.wall_clock.train += seconds_since(t0);
  save_checkpoint(ens.evaluation_model(),
                  out_ / ("model_" + std::to_string(iteration) + ".ckpt"));

  t0 = Clock::now();
  rec.metrics = evaluate(ens.evaluation_model(), test_, test_inputs_, &ens,
                         cfg_.strategy.metric, cfg_.prediction_chunk,
                         &rec.test_uncertainty);
  rec.wall_clock.evaluate += seconds_since(t0);
  log("  test rmse " + std::to_string(rec.metrics.rmse));

  if (cfg_.trainee.enabled) {
    t0 = Clock::now();
    const Ensemble trainee = train_models(
        cfg_.trainee.hidden, 1,
        derive_seed({cfg_.trainee.seed, static_cast<std::uint64_t>(iteration)}),
        false, stats, nullptr);
    rec.wall_clock.train += seconds_since(t0);
    t0 = Clock::now();
    rec.trainee = evaluate(trainee.evaluation_model(), test_, test_inputs_,
                           nullptr, cfg_.strategy.metric,
                           cfg_.prediction_chunk);
    rec.wall_clock.evaluate += seconds_since(t0);
    log("  trainee rmse " + std::to_string(rec.trainee->rmse));
  }

  if (iteration < cfg_.schedule.n_iterations) {
    rec.selection = select_and_simulate(iteration, ens, rec.wall_clock);
    log("  selected " + std::to_string(rec.selection->uids.size()) + " (" +
        std::to_string(rec.selection->n_failed) + " failed to simulate)");
  }
  report_.iterations.push_back(std::move(rec));
}

RunReport Runner::run() {
  validate(cfg_);
  fs::create_directories(out_);
  auto t0 = Clock::now();
  pool_ = sample_inputs(spec_, cfg_.pool_size, cfg_.seeds.pool,
                        StreamTag::kPool);
  available_.assign(pool_.size(), 1);
  prepare_test_set();
  const double setup = seconds_since(t0);
  if (!(opt_.resume && try_resume())) {
    start_fresh();
    report_.setup_wall_clock.evaluate += setup;
    save_state();
  }
  try {
    int budget = opt_.max_iterations;
    for (int it = static_cast<int>(report_.iterations.size());
         it <= cfg_.schedule.n_iterations; ++it) {
      if (budget-- == 0) return report_;
      run_iteration(it);
      save_state();
    }
  } catch (const std::exception& e) {
    report_.status = "failed";
    report_.error = e.what();
    write_file_atomic(out_ / "report.json", report_to_json_text(report_));
    throw;
  }
  report_.status = "completed";
  write_file_atomic(out_ / "report.json", report_to_json_text(report_));
  return report_;
}

}  // namespace

TrajectoryBatch predict(const SurrogateModel& model,
                        const TrajectoryBatch& test,
                        std::span<const PDEParams> pdes, int chunk,
                        int* n_truncated) {
  TrajectoryBatch pred(test.n_traj(), test.grid(), test.time(), test.n_c());
  const std::size_t frame = test.frame_size();
  const int steps = test.n_t() - 1;
  std::vector<int> idx;
  for (int i = 0; i < test.n_traj(); ++i) {
    if (!test.failed(i)) idx.push_back(i);
  }
  int truncated = 0;
  for (std::size_t c0 = 0; c0 < idx.size(); c0 += chunk) {
    const std::size_t c1 = std::min(idx.size(), c0 + chunk);
    std::vector<double> ics;
    std::vector<PDEParams> p;
    for (std::size_t j = c0; j < c1; ++j) {
      const auto f = test.frame(idx[j], 0);
      ics.insert(ics.end(), f.begin(), f.end());
      p.push_back(pdes[idx[j]]);
    }
    const BatchRollout r = rollout_batch(model, ics, p, steps);
    for (std::size_t j = c0; j < c1; ++j) {
      const int b = static_cast<int>(j - c0);
      const double* src = r.states.data() + b * frame * (steps + 1);
      const int done = r.completed_steps[b];
      truncated += done < steps;
      auto out = pred.trajectory(idx[j]);
      for (int t = 0; t <= steps; ++t) {
        std::copy_n(src + std::min(t, done) * frame, frame,
                    out.data() + t * frame);
      }
    }
  }
  if (n_truncated != nullptr) *n_truncated = truncated;
  return pred;
}

MetricsReport evaluate(const SurrogateModel& model, const TrajectoryBatch& test,
                       std::span<const SimInput> test_inputs,
                       const Ensemble* ensemble, UncertaintyMetric metric,
                       int chunk, std::vector<double>* uncertainty) {
  if (static_cast<int>(test_inputs.size()) != test.n_traj()) {
    throw std::invalid_argument("evaluate: one input per test trajectory");
  }
  std::vector<int> valid;
  std::vector<PDEParams> pdes;
  std::vector<SimInput> valid_inputs;
  for (int i = 0; i < test.n_traj(); ++i) {
    pdes.push_back(test_inputs[i].pde);
    if (!test.failed(i)) {
      valid.push_back(i);
      valid_inputs.push_back(test_inputs[i]);
    }
  }
  int truncated = 0;
  const TrajectoryBatch pred = predict(model, test, pdes, chunk, &truncated);
  MetricsReport m = compute_metrics(pred.select(valid), test.select(valid));
  m.n_truncated = truncated;
  if (ensemble != nullptr && ensemble->size() >= 2 && !valid.empty()) {
    const AcquisitionScores s = qbc_uncertainty(
        *ensemble, valid_inputs, test.n_t() - 1, metric, chunk);
    if (valid.size() >= 3) {
      const Correlation c = correlation(s.score, m.rmse_per_trajectory);
      m.pearson = c.pearson;
      m.spearman = c.spearman;
    }
    if (uncertainty != nullptr) *uncertainty = s.score;
  }
  return m;
}

RunReport run_al(const ExperimentConfig& cfg, const RunOptions& options) {
  return Runner(cfg, options).run();
}

RunReport reuse_experiment(ExperimentConfig selector,
                           const TraineeConfig& trainee,
                           const RunOptions& options) {
  selector.trainee = trainee;
  selector.trainee.enabled = true;
  return run_al(selector, options);
}

}  // namespace alpde
