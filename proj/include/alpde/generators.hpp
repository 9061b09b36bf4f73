#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "alpde/core.hpp"
#include "alpde/random.hpp"

namespace alpde {

enum class Scale { kUniform, kLog };

struct ParamDim {
  std::string name;
  double lo = 0.0;
  double hi = 1.0;
  Scale scale = Scale::kUniform;
};

// Per-dimension intervals [lo, hi) of the PDE parameters.
struct ParamSpec {
  std::vector<ParamDim> dims;
  std::size_t size() const { return dims.size(); }
};

// Sinusoid superposition u0(x) = sum_i A_i sin(2 pi k_i x / L + phi_i),
// optionally windowed to [x_L, x_R] (fractions of L) and sign-flipped.
struct ICSpec {
  int n_waves = 2;
  int k_lo = 1;  // k in [k_lo, k_hi), integers
  int k_hi = 5;
  double amp_lo = 0.0;
  double amp_hi = 1.0;
  double window_prob = 0.0;
  double sign_flip_prob = 0.0;
  double xl_lo = 0.1, xl_hi = 0.45;
  double xr_lo = 0.55, xr_hi = 0.9;

  // Length of ICParams::normed: three blocks of n_waves plus four scalars.
  int normed_size() const { return 3 * n_waves + 4; }
};

// Discretizations and input distribution of one task. KS trajectories are
// stored on the unit grid; the physical length L is the second PDE
// parameter and only enters the solver's wavenumbers.
struct TaskSpec {
  Task task = Task::kBurgers;
  ParamSpec params;
  ICSpec ic;
  double t_final = 1.0;
  double domain_length = 1.0;
  int sim_nt = 0, sim_nx = 0;
  int train_nt = 0, train_nx = 0;

  Grid sim_grid() const { return make_grid(sim_nx, domain_length); }
  Grid train_grid() const { return make_grid(train_nx, domain_length); }
  TimeAxis sim_time() const { return make_time_axis(sim_nt, t_final); }
  TimeAxis train_time() const { return make_time_axis(train_nt, t_final); }
  int n_params() const { return static_cast<int>(params.size()); }
};

TaskSpec task_spec(Task task);

// lambda = a * exp(log(b / a) * normed); requires 0 < a < b.
double transform_log(double normed, double a, double b);
double inverse_transform_log(double value, double a, double b);

// Maps unit-cube coordinates to parameter values and back.
PDEParams pde_params_from_normed(const ParamSpec& spec,
                                 std::span<const double> normed);
std::vector<double> normalize_param_values(const ParamSpec& spec,
                                           std::span<const double> values);
ICParams ic_params_from_normed(const ICSpec& spec,
                               std::span<const double> normed);

PDEParams draw_pde_params(const ParamSpec& spec, Rng& rng);
ICParams draw_ic_params(const ICSpec& spec, Rng& rng);

// Candidate i draws from its own stream derived from (seed, i).
std::vector<PDEParams> sample_pde_params(int n, const ParamSpec& spec,
                                         std::uint64_t seed);
std::vector<ICParams> sample_ic_params(int n, const ICSpec& spec,
                                       std::uint64_t seed);

std::vector<double> realize_ic(const ICParams& ic, const Grid& grid);

SimInput make_input(const TaskSpec& spec, ICParams ic, PDEParams pde,
                    std::uint64_t uid);

// Streams are keyed on (tag, seed): pool and test sets use distinct tags.
enum class StreamTag : std::uint64_t {
  kPool = 0x706f6f6c,
  kTest = 0x74657374,
  kLhs = 0x6c6873,
};

std::uint64_t candidate_uid(StreamTag tag, std::uint64_t seed,
                            std::uint64_t index);

// n inputs drawn i.i.d. from the task's input distribution.
std::vector<SimInput> sample_inputs(const TaskSpec& spec, int n,
                                    std::uint64_t seed, StreamTag tag);

}  // namespace alpde
