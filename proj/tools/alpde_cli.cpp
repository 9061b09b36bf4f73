// alpde: simulate, al-run, evaluate, export-csv, selftest.
#include <cstdio>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "alpde/alloop.hpp"
#include "alpde/config.hpp"
#include "alpde/generators.hpp"
#include "alpde/io.hpp"
#include "alpde/oracles.hpp"
#include "alpde/parallel.hpp"
#include "alpde/selection.hpp"
#include "alpde/simulators.hpp"
#include "json.hpp"

namespace {

using namespace alpde;

ExperimentConfig read_config(const std::string& path,
                             std::optional<std::uint64_t> seed,
                             const std::string& output) {
  ExperimentConfig cfg = path.empty() ? ExperimentConfig{} : load_config(path);
  if (seed) {
    cfg.seeds.train = *seed;
    cfg.seeds.sketch = *seed;
  }
  if (!output.empty()) cfg.output_dir = output;
  validate(cfg);
  return cfg;
}

nlohmann::json metrics_json(const MetricsReport& m) {
  nlohmann::json j = {{"rmse", m.rmse},
                      {"mae", m.mae},
                      {"q50", m.q50},
                      {"q95", m.q95},
                      {"q99", m.q99},
                      {"n_trajectories", m.n_trajectories},
                      {"n_truncated", m.n_truncated}};
  if (m.pearson) j["pearson"] = *m.pearson;
  if (m.spearman) j["spearman"] = *m.spearman;
  return j;
}

int cmd_simulate(const std::string& config, const std::string& split, int n,
                 std::optional<std::uint64_t> seed, const std::string& out) {
  const ExperimentConfig cfg = read_config(config, std::nullopt, "");
  const TaskSpec spec = task_spec(cfg.task);
  const bool test = split == "test";
  if (n < 0) n = test ? cfg.test_size : cfg.pool_size;
  const std::uint64_t s = seed.value_or(test ? cfg.seeds.test : cfg.seeds.pool);
  const auto inputs =
      sample_inputs(spec, n, s, test ? StreamTag::kTest : StreamTag::kPool);
  const TrajectoryBatch batch = solve_batch(spec, inputs, cfg.solver);
  save_dataset(out, cfg.task, batch, inputs);
  std::cout << "wrote " << batch.n_traj() << " trajectories (" << batch.n_failed()
            << " failed) to " << out << "\n";
  return 0;
}

int cmd_al_run(const std::string& config, std::optional<std::uint64_t> seed,
               const std::string& output, bool resume, bool quiet) {
  const ExperimentConfig cfg = read_config(config, seed, output);
  RunOptions opt;
  opt.resume = resume;
  if (!quiet) opt.log = [](const std::string& s) { std::cerr << s << "\n"; };
  const RunReport r = run_al(cfg, opt);
  const auto path = resolve_output_dir(cfg) / "report.json";
  std::cout << "report: " << path.string() << "\n";
  for (const IterationRecord& it : r.iterations) {
    std::printf("iteration %d  train %d  rmse %.6g  q99 %.6g\n", it.iteration,
                it.train_size, it.metrics.rmse, it.metrics.q99);
  }
  return 0;
}

int cmd_evaluate(const std::string& checkpoint, const std::string& dataset,
                 int chunk) {
  const SurrogateModel model = load_checkpoint(checkpoint);
  const LoadedDataset d = load_dataset(dataset);
  const MetricsReport m = evaluate(model, d.batch, d.inputs, nullptr,
                                   UncertaintyMetric::kVariance, chunk);
  std::cout << metrics_json(m).dump(2) << "\n";
  return 0;
}

int cmd_export_csv(const std::string& report, const std::string& out) {
  const std::string csv = report_to_csv(load_report(report));
  if (out.empty() || out == "-") {
    std::cout << csv;
  } else {
    write_file_atomic(out, csv);
  }
  return 0;
}

int cmd_selftest(std::uint64_t seed, bool mutate_lcmd) {
  if (mutate_lcmd) {
    detail::lcmd_off_by_one = true;
    const oracles::OracleOutcome o = oracles::check_lcmd_equivalence(seed);
    detail::lcmd_off_by_one = false;
    std::printf("%s  %s  measured %g of %g (mutated LCMD)\n",
                o.pass ? "PASS" : "FAIL", o.name.c_str(), o.measured,
                o.tolerance);
    // The mutant must be caught.
    std::printf("mutation %s\n", o.pass ? "survived" : "detected");
    return o.pass ? 1 : 0;
  }
  int failures = 0;
  for (const oracles::OracleOutcome& o : oracles::run_all(seed)) {
    failures += !o.pass;
    std::printf("%s  %-36s measured %-12.6g tolerance %-10.3g n=%ld %s\n",
                o.pass ? "PASS" : "FAIL", o.name.c_str(), o.measured,
                o.tolerance, o.sample_size, o.detail.c_str());
  }
  std::printf("%d failure(s)\n", failures);
  return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Active learning for autoregressive neural PDE surrogates"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "Worker threads (default: all cores)");

  std::string config, output, out, split = "test", checkpoint, dataset, report;
  std::optional<std::uint64_t> seed;
  bool resume = false, quiet = false, mutate = false;
  int n = -1, chunk = 200;
  std::uint64_t selftest_seed = 0;

  auto* sim = app.add_subcommand("simulate", "Generate and solve a dataset");
  sim->add_option("-c,--config", config, "Experiment config (JSON)");
  sim->add_option("--split", split, "test or pool input stream")
      ->check(CLI::IsMember({"test", "pool"}));
  sim->add_option("-n,--count", n, "Number of inputs");
  sim->add_option("--seed", seed, "Stream seed");
  sim->add_option("-o,--out", out, "Output dataset file")->required();

  auto* al = app.add_subcommand("al-run", "Run active learning");
  al->add_option("-c,--config", config, "Experiment config (JSON)");
  al->add_option("--seed", seed, "Training and sketch seed");
  al->add_option("--output", output, "Override output_dir");
  al->add_flag("--resume", resume, "Continue an interrupted run");
  al->add_flag("-q,--quiet", quiet, "No progress log");

  auto* ev = app.add_subcommand("evaluate", "Metrics of a checkpoint");
  ev->add_option("--checkpoint", checkpoint)->required();
  ev->add_option("--dataset", dataset)->required();
  ev->add_option("--chunk", chunk);

  auto* csv = app.add_subcommand("export-csv", "RunReport to long CSV");
  csv->add_option("report", report)->required();
  csv->add_option("-o,--out", out, "Output file (default stdout)");

  auto* st = app.add_subcommand("selftest", "Run the oracle suite");
  st->add_option("--seed", selftest_seed);
  st->add_flag("--mutate-lcmd", mutate,
               "Check that a broken LCMD is caught by its oracle");

  CLI11_PARSE(app, argc, argv);
  if (threads > 0) set_thread_count(threads);
  try {
    if (*sim) return cmd_simulate(config, split, n, seed, out);
    if (*al) return cmd_al_run(config, seed, output, resume, quiet);
    if (*ev) return cmd_evaluate(checkpoint, dataset, chunk);
    if (*csv) return cmd_export_csv(report, out);
    if (*st) return cmd_selftest(selftest_seed, mutate);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
