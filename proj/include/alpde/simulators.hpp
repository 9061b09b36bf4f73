#pragma once

#include <span>
#include <string>
#include <vector>

#include "alpde/core.hpp"
#include "alpde/generators.hpp"

namespace alpde {

struct SolverConfig {
  double cfl_safety = 0.4;
  long max_substeps = 1'000'000;
  int contour_points = 32;
  bool dealias = true;
};

void validate(const SolverConfig& cfg);

// Trajectory of one solve; `failure` is empty on success.
struct SolveOutcome {
  std::vector<double> trajectory;  // (n_t, n_x)
  std::string failure;
  long substeps = 0;
};

// Burgers: u_t + (u^2/2)_x = (nu/pi) u_xx on a periodic grid.
// Advection: MUSCL (monotonized-central limiter) with the local
// Lax-Friedrichs flux, SSP-RK2 substeps limited by the advective CFL.
// Diffusion: the second-order central-difference Laplacian, propagated
// exactly in Fourier space and Strang-split around the advection step.
SolveOutcome solve_burgers_field(std::span<const double> u0, double nu,
                                 const Grid& grid, const TimeAxis& time,
                                 const SolverConfig& cfg);

// KS: u_t + u u_x + u_xx + nu u_xxxx = 0 on [0, L); `grid` is the unit grid
// and L only scales the wavenumbers.
SolveOutcome solve_ks_field(std::span<const double> u0, double nu,
                            double length, const Grid& grid,
                            const TimeAxis& time, const SolverConfig& cfg);

// CE: u_t + (alpha u^2 - beta u_x + gamma u_xx)_x = 0 on [0, grid.length).
SolveOutcome solve_ce_field(std::span<const double> u0, double alpha,
                            double beta, double gamma, const Grid& grid,
                            const TimeAxis& time, const SolverConfig& cfg);

// Batched solvers. Each input's `initial_field` must live on `grid`.
TrajectoryBatch solve_burgers(std::span<const SimInput> inputs,
                              const Grid& grid, const TimeAxis& time,
                              const SolverConfig& cfg);
TrajectoryBatch solve_ks(std::span<const SimInput> inputs, const Grid& grid,
                         const TimeAxis& time, const SolverConfig& cfg);
TrajectoryBatch solve_ce(std::span<const SimInput> inputs, const Grid& grid,
                         const TimeAxis& time, const SolverConfig& cfg);

// Initial field on the simulation grid: `initial_field` when it already has
// the simulation resolution, otherwise realized from the IC parameters.
std::vector<double> simulation_initial_field(const TaskSpec& spec,
                                             const SimInput& input);

// Solves at simulation resolution and downsamples to training resolution.
// Throws if every trajectory of a non-empty batch fails.
TrajectoryBatch solve_batch(const TaskSpec& spec,
                            std::span<const SimInput> inputs,
                            const SolverConfig& cfg);

}  // namespace alpde
