#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "alpde/config.hpp"
#include "alpde/core.hpp"
#include "alpde/metrics.hpp"

namespace alpde {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::uint64_t fnv1a64(const void* data, std::size_t size,
                      std::uint64_t h = 0xcbf29ce484222325ULL);

// Writes to a sibling temporary file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path,
                       const std::string& bytes);
std::string read_file(const std::filesystem::path& path);

// Dataset file: 8-byte magic, little-endian u64 header length, JSON header,
// then the (traj, t, x, c) tensor as little-endian f32. Values are narrowed
// to f32 on save; loading returns exactly the stored values.
inline constexpr int kDatasetSchemaVersion = 1;

struct LoadedDataset {
  Task task = Task::kBurgers;
  TrajectoryBatch batch;
  std::vector<SimInput> inputs;
};

void save_dataset(const std::filesystem::path& path, Task task,
                  const TrajectoryBatch& batch,
                  std::span<const SimInput> inputs);
LoadedDataset load_dataset(const std::filesystem::path& path);

struct PhaseTimes {
  double train = 0.0;
  double select = 0.0;
  double simulate = 0.0;
  double evaluate = 0.0;
};

struct SelectionRecord {
  std::string strategy;
  std::uint64_t seed = 0;
  std::vector<std::uint64_t> uids;
  std::vector<std::vector<double>> pde_normed;
  std::vector<double> trace;
  bool exhausted = false;
  int n_failed = 0;       // selected inputs whose simulation failed
  int n_unscored = 0;     // pool candidates masked by failed rollouts
};

struct IterationRecord {
  int iteration = 0;
  int train_size = 0;
  MetricsReport metrics;
  std::vector<double> test_uncertainty;  // per test trajectory; may be empty
  std::optional<MetricsReport> trainee;
  std::vector<double> final_train_loss;  // one per ensemble member
  std::optional<SelectionRecord> selection;
  PhaseTimes wall_clock;
};

struct RunReport {
  ExperimentConfig config;
  std::vector<std::uint64_t> initial_uids;
  int initial_failed = 0;
  std::vector<IterationRecord> iterations;
  PhaseTimes setup_wall_clock;  // pool, test set and initial batch
  std::string status = "running";  // running | completed | failed
  std::string error;
};

// Wall-clock fields are omitted when `wall_clock` is false, which gives the
// deterministic part of the report.
std::string report_to_json_text(const RunReport& report,
                                bool wall_clock = true);
RunReport report_from_json_text(const std::string& text);
RunReport load_report(const std::filesystem::path& path);

// Long format "iteration,strategy,seed,metric,value", ordered by iteration
// then metric name.
std::string report_to_csv(const RunReport& report);

}  // namespace alpde
