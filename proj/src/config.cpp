#include "alpde/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace alpde {
namespace {

using nlohmann::json;

// Reads the keys of one JSON object, remembering which were consumed so that
// anything left over is reported as unknown.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where("") + ": expected an object");
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(where(key) + ": wrong type (" + j_.at(key).dump() + ")");
    }
  }

  // Parses a string field through `parse`, naming the field on failure.
  template <typename T, typename Parse>
  void get_enum(const std::string& key, T& out, Parse&& parse) {
    std::string s;
    bool present = j_.contains(key);
    get(key, s);
    if (!present) return;
    try {
      out = parse(s);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(where(key) + ": " + e.what());
    }
  }

  Reader sub(const std::string& key) {
    seen_.insert(key);
    static const json empty = json::object();
    return Reader(j_.contains(key) ? j_.at(key) : empty, where(key));
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) throw ConfigError("unknown key '" + where(k) + "'");
    }
  }

 private:
  std::string where(const std::string& key) const {
    if (key.empty()) return path_.empty() ? "<root>" : path_;
    return path_.empty() ? key : path_ + "." + key;
  }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void require(bool ok, const std::string& field, const std::string& what) {
  if (!ok) throw ConfigError(field + ": " + what);
}

}  // namespace

TrainConfig ExperimentConfig::desk_train_config() {
  TrainConfig t;
  t.epochs = 250;
  t.batch_size = 32;
  t.windows_per_trajectory = 1;
  return t;
}

void validate(const ExperimentConfig& c) {
  const StrategyConfig& s = c.strategy;
  require(s.m >= 0.0 && std::isfinite(s.m), "strategy.m", "must be >= 0");
  require(s.p_prime >= 0, "strategy.p_prime", "must be >= 0 (0 = no sketch)");
  require(std::isfinite(s.reg_lambda), "strategy.reg_lambda", "must be finite");
  require(c.schedule.n_initial >= 1, "schedule.n_initial", "must be >= 1");
  require(c.schedule.n_iterations >= 0, "schedule.n_iterations",
          "must be >= 0");
  require(c.schedule.growth == "exponential" || c.schedule.growth == "fixed",
          "schedule.growth", "must be 'exponential' or 'fixed'");
  if (c.schedule.growth == "fixed") {
    require(static_cast<int>(c.schedule.batch_sizes.size()) ==
                c.schedule.n_iterations,
            "schedule.batch_sizes", "needs one entry per iteration");
    for (int b : c.schedule.batch_sizes) {
      require(b >= 1, "schedule.batch_sizes", "entries must be >= 1");
    }
  }
  require(c.model.hidden >= 1, "model.hidden", "must be >= 1");
  require(c.model.ensemble_size >= 1, "model.ensemble_size", "must be >= 1");
  if (uses_scores(s.name)) {
    require(c.model.ensemble_size >= 2, "model.ensemble_size",
            "QbC strategies need at least 2 members");
  }
  require(c.model.residual_scale > 0.0, "model.residual_scale", "must be > 0");
  try {
    validate(c.train);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("train: ") + e.what());
  }
  require(c.train.epochs >= 1, "train.epochs", "must be >= 1");
  try {
    validate(c.solver);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("solver: ") + e.what());
  }
  require(c.pool_size >= 1, "pool_size", "must be >= 1");
  require(c.test_size >= 0, "test_size", "must be >= 0");
  require(c.prediction_chunk >= 1, "prediction_chunk", "must be >= 1");
  require(c.trainee.hidden >= 1, "trainee.hidden", "must be >= 1");
  require(!c.output_dir.empty(), "output_dir", "must not be empty");
  if (s.name != Strategy::kLhs) {
    long total = c.schedule.n_initial;
    long size = total;
    for (int i = 0; i < c.schedule.n_iterations; ++i) {
      const long add = c.schedule.growth == "fixed" ? c.schedule.batch_sizes[i]
                                                    : size;
      total += add;
      size += add;
    }
    require(total <= c.pool_size, "pool_size",
            "smaller than the total number of selections (" +
                std::to_string(total) + ")");
  } else {
    require(c.schedule.n_initial <= c.pool_size, "pool_size",
            "smaller than schedule.n_initial");
  }
}

ExperimentConfig config_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  ExperimentConfig c;
  Reader root(j, "");
  root.get_enum("task", c.task, parse_task);
  {
    Reader r = root.sub("strategy");
    r.get_enum("name", c.strategy.name, parse_strategy);
    r.get("m", c.strategy.m);
    r.get("p_prime", c.strategy.p_prime);
    r.get("reg_lambda", c.strategy.reg_lambda);
    r.get_enum("metric", c.strategy.metric, parse_metric);
    r.get_enum("aggregation", c.strategy.aggregation, parse_aggregation);
    r.finish();
  }
  {
    Reader r = root.sub("schedule");
    r.get("n_initial", c.schedule.n_initial);
    r.get("n_iterations", c.schedule.n_iterations);
    r.get("growth", c.schedule.growth);
    r.get("batch_sizes", c.schedule.batch_sizes);
    r.finish();
  }
  {
    Reader r = root.sub("model");
    r.get("hidden", c.model.hidden);
    r.get("ensemble_size", c.model.ensemble_size);
    r.get("residual_scale", c.model.residual_scale);
    r.get("identical_members", c.model.identical_members);
    r.finish();
  }
  {
    Reader r = root.sub("train");
    TrainConfig& t = c.train;
    r.get("epochs", t.epochs);
    r.get("batch_size", t.batch_size);
    r.get("lr_max", t.lr_max);
    r.get("lr_min", t.lr_min);
    r.get("beta1", t.beta1);
    r.get("beta2", t.beta2);
    r.get("adam_eps", t.adam_eps);
    r.get("sub_trajectory_length", t.sub_trajectory_length);
    r.get("windows_per_trajectory", t.windows_per_trajectory);
    r.get("clip_factor", t.clip_factor);
    r.get("clip_warmup_epochs", t.clip_warmup_epochs);
    r.get("clip_ema_decay", t.clip_ema_decay);
    r.get("divergence_factor", t.divergence_factor);
    r.finish();
  }
  {
    Reader r = root.sub("solver");
    r.get("cfl_safety", c.solver.cfl_safety);
    r.get("max_substeps", c.solver.max_substeps);
    r.get("contour_points", c.solver.contour_points);
    r.get("dealias", c.solver.dealias);
    r.finish();
  }
  root.get("pool_size", c.pool_size);
  root.get("test_size", c.test_size);
  root.get("prediction_chunk", c.prediction_chunk);
  {
    Reader r = root.sub("seeds");
    r.get("pool", c.seeds.pool);
    r.get("test", c.seeds.test);
    r.get("train", c.seeds.train);
    r.get("sketch", c.seeds.sketch);
    r.finish();
  }
  {
    Reader r = root.sub("trainee");
    r.get("enabled", c.trainee.enabled);
    r.get("hidden", c.trainee.hidden);
    r.get("seed", c.trainee.seed);
    r.finish();
  }
  root.get("output_dir", c.output_dir);
  root.get("test_cache", c.test_cache);
  root.finish();
  validate(c);
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return config_from_json_text(ss.str());
}

std::string config_to_json_text(const ExperimentConfig& c, int indent) {
  const TrainConfig& t = c.train;
  json j = {
      {"task", std::string(task_name(c.task))},
      {"strategy",
       {{"name", strategy_name(c.strategy.name)},
        {"m", c.strategy.m},
        {"p_prime", c.strategy.p_prime},
        {"reg_lambda", c.strategy.reg_lambda},
        {"metric", metric_name(c.strategy.metric)},
        {"aggregation", aggregation_name(c.strategy.aggregation)}}},
      {"schedule",
       {{"n_initial", c.schedule.n_initial},
        {"n_iterations", c.schedule.n_iterations},
        {"growth", c.schedule.growth},
        {"batch_sizes", c.schedule.batch_sizes}}},
      {"model",
       {{"hidden", c.model.hidden},
        {"ensemble_size", c.model.ensemble_size},
        {"residual_scale", c.model.residual_scale},
        {"identical_members", c.model.identical_members}}},
      {"train",
       {{"epochs", t.epochs},
        {"batch_size", t.batch_size},
        {"lr_max", t.lr_max},
        {"lr_min", t.lr_min},
        {"beta1", t.beta1},
        {"beta2", t.beta2},
        {"adam_eps", t.adam_eps},
        {"sub_trajectory_length", t.sub_trajectory_length},
        {"windows_per_trajectory", t.windows_per_trajectory},
        {"clip_factor", t.clip_factor},
        {"clip_warmup_epochs", t.clip_warmup_epochs},
        {"clip_ema_decay", t.clip_ema_decay},
        {"divergence_factor", t.divergence_factor}}},
      {"solver",
       {{"cfl_safety", c.solver.cfl_safety},
        {"max_substeps", c.solver.max_substeps},
        {"contour_points", c.solver.contour_points},
        {"dealias", c.solver.dealias}}},
      {"pool_size", c.pool_size},
      {"test_size", c.test_size},
      {"prediction_chunk", c.prediction_chunk},
      {"seeds",
       {{"pool", c.seeds.pool},
        {"test", c.seeds.test},
        {"train", c.seeds.train},
        {"sketch", c.seeds.sketch}}},
      {"trainee",
       {{"enabled", c.trainee.enabled},
        {"hidden", c.trainee.hidden},
        {"seed", c.trainee.seed}}},
      {"output_dir", c.output_dir},
      {"test_cache", c.test_cache},
  };
  return j.dump(indent);
}

std::filesystem::path output_root() {
  const char* env = std::getenv("ALPDE_OUTPUT_ROOT");
  if (env != nullptr && *env != '\0') return env;
  return std::filesystem::current_path();
}

std::filesystem::path resolve_output_dir(const ExperimentConfig& cfg) {
  const std::filesystem::path p(cfg.output_dir);
  return p.is_absolute() ? p : output_root() / p;
}

}  // namespace alpde
