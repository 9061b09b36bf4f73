#include "alpde/io.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "alpde/generators.hpp"
#include "json.hpp"

namespace alpde {
namespace {

using nlohmann::json;

constexpr char kDatasetMagic[8] = {'A', 'L', 'P', 'D', 'E', 'D', 'S', '1'};

void put_u64_le(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>(v >> (8 * i)));
}

std::uint64_t get_u64_le(const char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  }
  return v;
}

std::uint32_t to_le(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::little) return v;
  return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) |
         (v >> 24);
}

json ic_to_json(const ICParams& ic) {
  return {{"amplitudes", ic.amplitudes}, {"wave_numbers", ic.wave_numbers},
          {"phases", ic.phases},         {"window", ic.window},
          {"x_left", ic.x_left},         {"x_right", ic.x_right},
          {"sign_flip", ic.sign_flip},   {"normed", ic.normed}};
}

ICParams ic_from_json(const json& j) {
  ICParams ic;
  j.at("amplitudes").get_to(ic.amplitudes);
  j.at("wave_numbers").get_to(ic.wave_numbers);
  j.at("phases").get_to(ic.phases);
  j.at("window").get_to(ic.window);
  j.at("x_left").get_to(ic.x_left);
  j.at("x_right").get_to(ic.x_right);
  j.at("sign_flip").get_to(ic.sign_flip);
  j.at("normed").get_to(ic.normed);
  return ic;
}

std::uint64_t header_hash(json header) {
  header.erase("header_hash");
  const std::string s = header.dump();
  return fnv1a64(s.data(), s.size());
}

json opt_json(const std::optional<double>& v) {
  return v ? json(*v) : json(nullptr);
}

std::optional<double> opt_from(const json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

json metrics_to_json(const MetricsReport& m) {
  return {{"rmse", m.rmse},
          {"mae", m.mae},
          {"q50", m.q50},
          {"q95", m.q95},
          {"q99", m.q99},
          {"pearson", opt_json(m.pearson)},
          {"spearman", opt_json(m.spearman)},
          {"n_trajectories", m.n_trajectories},
          {"n_truncated", m.n_truncated},
          {"rmse_per_trajectory", m.rmse_per_trajectory},
          {"mae_per_trajectory", m.mae_per_trajectory}};
}

MetricsReport metrics_from_json(const json& j) {
  MetricsReport m;
  j.at("rmse").get_to(m.rmse);
  j.at("mae").get_to(m.mae);
  j.at("q50").get_to(m.q50);
  j.at("q95").get_to(m.q95);
  j.at("q99").get_to(m.q99);
  m.pearson = opt_from(j.at("pearson"));
  m.spearman = opt_from(j.at("spearman"));
  j.at("n_trajectories").get_to(m.n_trajectories);
  j.at("n_truncated").get_to(m.n_truncated);
  j.at("rmse_per_trajectory").get_to(m.rmse_per_trajectory);
  j.at("mae_per_trajectory").get_to(m.mae_per_trajectory);
  return m;
}

json times_to_json(const PhaseTimes& t) {
  return {{"train", t.train},
          {"select", t.select},
          {"simulate", t.simulate},
          {"evaluate", t.evaluate}};
}

PhaseTimes times_from_json(const json& j) {
  PhaseTimes t;
  if (j.is_null()) return t;
  j.at("train").get_to(t.train);
  j.at("select").get_to(t.select);
  j.at("simulate").get_to(t.simulate);
  j.at("evaluate").get_to(t.evaluate);
  return t;
}

}  // namespace

std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t h) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

void write_file_atomic(const std::filesystem::path& path,
                       const std::string& bytes) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::filesystem::path tmp = path;
  tmp += ".tmp" + std::to_string(::getpid());
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write " + tmp.string());
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    os.flush();
    if (!os) throw std::runtime_error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void save_dataset(const std::filesystem::path& path, Task task,
                  const TrajectoryBatch& batch,
                  std::span<const SimInput> inputs) {
  if (static_cast<int>(inputs.size()) != batch.n_traj()) {
    throw std::invalid_argument("save_dataset: one input per trajectory");
  }
  const std::size_t n = batch.data().size();
  std::string payload(n * 4, '\0');
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint32_t bits =
        to_le(std::bit_cast<std::uint32_t>(static_cast<float>(batch.data()[i])));
    std::memcpy(payload.data() + 4 * i, &bits, 4);
  }
  json candidates = json::array();
  for (const SimInput& in : inputs) {
    candidates.push_back({{"uid", in.uid},
                          {"ic", ic_to_json(in.ic)},
                          {"pde",
                           {{"values", in.pde.values},
                            {"normed", in.pde.normed}}}});
  }
  json failures = json::array();
  for (int i = 0; i < batch.n_traj(); ++i) {
    if (batch.failed(i)) failures.push_back({{"index", i}, {"reason", batch.failure(i)}});
  }
  json header = {
      {"schema_version", kDatasetSchemaVersion},
      {"task", std::string(task_name(task))},
      {"grid", {{"n_x", batch.n_x()}, {"length", batch.grid().length}}},
      {"time", {{"n_t", batch.n_t()}, {"t_final", batch.time().t_final}}},
      {"n_traj", batch.n_traj()},
      {"n_c", batch.n_c()},
      {"dtype", "f32"},
      {"endianness", "little"},
      {"failures", failures},
      {"candidates", candidates},
      {"payload_bytes", payload.size()},
      {"payload_hash", fnv1a64(payload.data(), payload.size())},
  };
  header["header_hash"] = header_hash(header);
  const std::string h = header.dump();
  std::string bytes(kDatasetMagic, 8);
  put_u64_le(bytes, h.size());
  bytes += h;
  bytes += payload;
  write_file_atomic(path, bytes);
}

LoadedDataset load_dataset(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  const std::string name = path.string();
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kDatasetMagic, 8) != 0) {
    throw FormatError(name + ": not a dataset file");
  }
  const std::uint64_t hlen = get_u64_le(bytes.data() + 8);
  if (hlen > bytes.size() - 16) throw FormatError(name + ": truncated header");
  json header;
  try {
    header = json::parse(bytes.begin() + 16, bytes.begin() + 16 + hlen);
  } catch (const json::parse_error&) {
    throw FormatError(name + ": corrupt header");
  }
  try {
    if (header.at("header_hash").get<std::uint64_t>() != header_hash(header)) {
      throw FormatError(name + ": header hash mismatch");
    }
    if (header.at("schema_version").get<int>() != kDatasetSchemaVersion) {
      throw FormatError(name + ": unsupported schema version");
    }
    if (header.at("dtype") != "f32" || header.at("endianness") != "little") {
      throw FormatError(name + ": unsupported dtype");
    }
    LoadedDataset out;
    out.task = parse_task(header.at("task").get<std::string>());
    const Grid grid = make_grid(header.at("grid").at("n_x").get<int>(),
                                header.at("grid").at("length").get<double>());
    const TimeAxis time =
        make_time_axis(header.at("time").at("n_t").get<int>(),
                       header.at("time").at("t_final").get<double>());
    const int n_traj = header.at("n_traj").get<int>();
    out.batch = TrajectoryBatch(n_traj, grid, time, header.at("n_c").get<int>());
    const std::size_t n = out.batch.data().size();
    const std::size_t payload_size = bytes.size() - 16 - hlen;
    if (payload_size != 4 * n ||
        header.at("payload_bytes").get<std::size_t>() != 4 * n) {
      throw FormatError(name + ": payload size mismatch (truncated?)");
    }
    const char* payload = bytes.data() + 16 + hlen;
    if (fnv1a64(payload, payload_size) !=
        header.at("payload_hash").get<std::uint64_t>()) {
      throw FormatError(name + ": payload hash mismatch");
    }
    for (std::size_t i = 0; i < n; ++i) {
      std::uint32_t bits;
      std::memcpy(&bits, payload + 4 * i, 4);
      out.batch.data()[i] = std::bit_cast<float>(to_le(bits));
    }
    for (const json& f : header.at("failures")) {
      out.batch.mark_failed(f.at("index").get<int>(),
                            f.at("reason").get<std::string>());
    }
    const TaskSpec spec = task_spec(out.task);
    const json& cands = header.at("candidates");
    if (static_cast<int>(cands.size()) != n_traj) {
      throw FormatError(name + ": candidate count mismatch");
    }
    for (const json& c : cands) {
      PDEParams pde;
      c.at("pde").at("values").get_to(pde.values);
      c.at("pde").at("normed").get_to(pde.normed);
      out.inputs.push_back(make_input(spec, ic_from_json(c.at("ic")), pde,
                                      c.at("uid").get<std::uint64_t>()));
    }
    return out;
  } catch (const json::exception& e) {
    throw FormatError(name + ": malformed header (" + e.what() + ")");
  }
}

std::string report_to_json_text(const RunReport& r, bool wall_clock) {
  const ExperimentConfig& c = r.config;
  json iterations = json::array();
  for (const IterationRecord& it : r.iterations) {
    json j = {{"iteration", it.iteration},
              {"train_size", it.train_size},
              {"metrics", metrics_to_json(it.metrics)},
              {"test_uncertainty", it.test_uncertainty},
              {"final_train_loss", it.final_train_loss}};
    j["trainee_metrics"] =
        it.trainee ? metrics_to_json(*it.trainee) : json(nullptr);
    if (it.selection) {
      const SelectionRecord& s = *it.selection;
      j["selection"] = {{"strategy", s.strategy},
                        {"seed", s.seed},
                        {"uids", s.uids},
                        {"pde_normed", s.pde_normed},
                        {"trace", s.trace},
                        {"exhausted", s.exhausted},
                        {"n_failed", s.n_failed},
                        {"n_unscored", s.n_unscored}};
    } else {
      j["selection"] = nullptr;
    }
    if (wall_clock) j["wall_clock"] = times_to_json(it.wall_clock);
    iterations.push_back(std::move(j));
  }
  json j = {
      {"config", json::parse(config_to_json_text(c))},
      {"provenance",
       {{"task", std::string(task_name(c.task))},
        {"strategy", strategy_name(c.strategy.name)},
        {"seeds",
         {{"pool", c.seeds.pool},
          {"test", c.seeds.test},
          {"train", c.seeds.train},
          {"sketch", c.seeds.sketch},
          {"trainee", c.trainee.seed}}}}},
      {"initial_uids", r.initial_uids},
      {"initial_failed", r.initial_failed},
      {"iterations", iterations},
      {"status", r.status},
      {"error", r.error},
  };
  if (wall_clock) j["setup_wall_clock"] = times_to_json(r.setup_wall_clock);
  return j.dump(1);
}

RunReport report_from_json_text(const std::string& text) {
  RunReport r;
  try {
    const json j = json::parse(text);
    r.config = config_from_json_text(j.at("config").dump());
    j.at("initial_uids").get_to(r.initial_uids);
    j.at("initial_failed").get_to(r.initial_failed);
    j.at("status").get_to(r.status);
    j.at("error").get_to(r.error);
    r.setup_wall_clock = times_from_json(j.value("setup_wall_clock", json()));
    for (const json& ij : j.at("iterations")) {
      IterationRecord it;
      ij.at("iteration").get_to(it.iteration);
      ij.at("train_size").get_to(it.train_size);
      it.metrics = metrics_from_json(ij.at("metrics"));
      ij.at("test_uncertainty").get_to(it.test_uncertainty);
      ij.at("final_train_loss").get_to(it.final_train_loss);
      if (!ij.at("trainee_metrics").is_null()) {
        it.trainee = metrics_from_json(ij.at("trainee_metrics"));
      }
      const json& sj = ij.at("selection");
      if (!sj.is_null()) {
        SelectionRecord s;
        sj.at("strategy").get_to(s.strategy);
        sj.at("seed").get_to(s.seed);
        sj.at("uids").get_to(s.uids);
        sj.at("pde_normed").get_to(s.pde_normed);
        sj.at("trace").get_to(s.trace);
        sj.at("exhausted").get_to(s.exhausted);
        sj.at("n_failed").get_to(s.n_failed);
        sj.at("n_unscored").get_to(s.n_unscored);
        it.selection = std::move(s);
      }
      it.wall_clock = times_from_json(ij.value("wall_clock", json()));
      r.iterations.push_back(std::move(it));
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed run report: ") + e.what());
  }
  return r;
}

RunReport load_report(const std::filesystem::path& path) {
  return report_from_json_text(read_file(path));
}

std::string report_to_csv(const RunReport& r) {
  const std::string strategy = strategy_name(r.config.strategy.name);
  const std::string seed = std::to_string(r.config.seeds.train);
  std::ostringstream os;
  os.precision(17);
  os << "iteration,strategy,seed,metric,value\n";
  for (const IterationRecord& it : r.iterations) {
    std::vector<std::pair<std::string, double>> rows;
    auto add_metrics = [&](const std::string& prefix, const MetricsReport& m) {
      rows.emplace_back(prefix + "mae", m.mae);
      rows.emplace_back(prefix + "n_truncated", m.n_truncated);
      if (m.pearson) rows.emplace_back(prefix + "pearson", *m.pearson);
      rows.emplace_back(prefix + "q50", m.q50);
      rows.emplace_back(prefix + "q95", m.q95);
      rows.emplace_back(prefix + "q99", m.q99);
      rows.emplace_back(prefix + "rmse", m.rmse);
      if (m.spearman) rows.emplace_back(prefix + "spearman", *m.spearman);
    };
    add_metrics("", it.metrics);
    if (it.trainee) add_metrics("trainee_", *it.trainee);
    rows.emplace_back("train_size", it.train_size);
    std::sort(rows.begin(), rows.end());
    for (const auto& [name, value] : rows) {
      os << it.iteration << ',' << strategy << ',' << seed << ',' << name
         << ',' << value << '\n';
    }
  }
  return os.str();
}

}  // namespace alpde
