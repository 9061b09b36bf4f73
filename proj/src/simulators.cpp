#include "alpde/simulators.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <map>
#include <mutex>
#include <numbers>
#include <stdexcept>

#include "alpde/parallel.hpp"

namespace alpde {
namespace {

using cplx = std::complex<double>;

constexpr double kBlowup = 1e8;

// Real-to-complex transform of size n with plans shared across threads.
// Plan creation is serialized; fftw_execute_dft_* on private buffers is
// thread-safe.
class RealFft {
 public:
  explicit RealFft(int n) : n_(n) {
    real_ = fftw_alloc_real(n);
    spec_ = fftw_alloc_complex(n / 2 + 1);
    std::tie(forward_, backward_) = plans(n);
  }
  ~RealFft() {
    fftw_free(real_);
    fftw_free(spec_);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  int modes() const { return n_ / 2 + 1; }

  void forward(std::span<const double> in, std::span<cplx> out) {
    std::copy(in.begin(), in.end(), real_);
    fftw_execute_dft_r2c(forward_, real_, spec_);
    auto* s = reinterpret_cast<cplx*>(spec_);
    std::copy(s, s + modes(), out.begin());
  }

  // Normalized inverse.
  void backward(std::span<const cplx> in, std::span<double> out) {
    std::copy(in.begin(), in.end(), reinterpret_cast<cplx*>(spec_));
    fftw_execute_dft_c2r(backward_, spec_, real_);
    const double scale = 1.0 / n_;
    for (int j = 0; j < n_; ++j) out[j] = real_[j] * scale;
  }

 private:
  static std::pair<fftw_plan, fftw_plan> plans(int n) {
    static std::mutex mutex;
    static std::map<int, std::pair<fftw_plan, fftw_plan>> cache;
    std::lock_guard lock(mutex);
    auto it = cache.find(n);
    if (it != cache.end()) return it->second;
    double* r = fftw_alloc_real(n);
    fftw_complex* c = fftw_alloc_complex(n / 2 + 1);
    fftw_plan f = fftw_plan_dft_r2c_1d(n, r, c, FFTW_ESTIMATE);
    fftw_plan b = fftw_plan_dft_c2r_1d(n, c, r, FFTW_ESTIMATE);
    fftw_free(r);
    fftw_free(c);
    cache.emplace(n, std::make_pair(f, b));
    return {f, b};
  }

  int n_;
  double* real_ = nullptr;
  fftw_complex* spec_ = nullptr;
  fftw_plan forward_ = nullptr;
  fftw_plan backward_ = nullptr;
};

double max_abs(std::span<const double> u) {
  double m = 0.0;
  for (double v : u) m = std::max(m, std::abs(v));
  return m;
}

bool all_finite(std::span<const double> u) {
  return std::all_of(u.begin(), u.end(),
                     [](double v) { return std::isfinite(v); });
}

// ---------------------------------------------------------------- Burgers

double minmod3(double a, double b, double c) {
  if (a > 0 && b > 0 && c > 0) return std::min({a, b, c});
  if (a < 0 && b < 0 && c < 0) return std::max({a, b, c});
  return 0.0;
}

class BurgersStepper {
 public:
  BurgersStepper(int n, double dx, double diffusivity)
      : n_(n),
        dx_(dx),
        diffusivity_(diffusivity),
        fft_(n),
        slope_(n),
        flux_(n),
        stage_(n),
        rhs_(n),
        spec_(n / 2 + 1),
        symbol_(n / 2 + 1),
        factor_(n / 2 + 1) {
    for (int m = 0; m < n / 2 + 1; ++m) {
      const double s = std::sin(std::numbers::pi * m / n);
      symbol_[m] = -4.0 * s * s / (dx * dx);
    }
  }

  void step(std::vector<double>& u, double h) {
    diffuse(u, 0.5 * h);
    advect(u, h);
    diffuse(u, 0.5 * h);
  }

 private:
  void diffuse(std::vector<double>& u, double tau) {
    if (diffusivity_ == 0.0) return;
    if (tau != cached_tau_) {
      for (std::size_t m = 0; m < factor_.size(); ++m) {
        factor_[m] = std::exp(diffusivity_ * symbol_[m] * tau);
      }
      cached_tau_ = tau;
    }
    fft_.forward(u, spec_);
    for (std::size_t m = 0; m < spec_.size(); ++m) spec_[m] *= factor_[m];
    fft_.backward(spec_, u);
  }

  // rhs = -(F_{j+1/2} - F_{j-1/2}) / dx with MUSCL-MC states and the local
  // Lax-Friedrichs flux of f(u) = u^2 / 2.
  void advection_rhs(const std::vector<double>& u) {
    const int n = n_;
    for (int j = 0; j < n; ++j) {
      const double um = u[(j + n - 1) % n];
      const double up = u[(j + 1) % n];
      slope_[j] = minmod3(0.5 * (up - um), 2.0 * (u[j] - um),
                          2.0 * (up - u[j]));
    }
    for (int j = 0; j < n; ++j) {
      const int jp = (j + 1) % n;
      const double ul = u[j] + 0.5 * slope_[j];
      const double ur = u[jp] - 0.5 * slope_[jp];
      const double a = std::max(std::abs(ul), std::abs(ur));
      flux_[j] = 0.25 * (ul * ul + ur * ur) - 0.5 * a * (ur - ul);
    }
    const double inv_dx = 1.0 / dx_;
    for (int j = 0; j < n; ++j) {
      rhs_[j] = -(flux_[j] - flux_[(j + n - 1) % n]) * inv_dx;
    }
  }

  void advect(std::vector<double>& u, double h) {
    advection_rhs(u);
    for (int j = 0; j < n_; ++j) stage_[j] = u[j] + h * rhs_[j];
    advection_rhs(stage_);
    for (int j = 0; j < n_; ++j) {
      u[j] = 0.5 * u[j] + 0.5 * (stage_[j] + h * rhs_[j]);
    }
  }

  int n_;
  double dx_;
  double diffusivity_;
  RealFft fft_;
  std::vector<double> slope_, flux_, stage_, rhs_;
  std::vector<cplx> spec_;
  std::vector<double> symbol_, factor_;
  double cached_tau_ = -1.0;
};

// ---------------------------------------------------------------- ETDRK4

// u_t = L u + N(u) with diagonal L (per Fourier mode) and
// N(u) = -nonlinear_coeff * i k * FFT(u^2).
struct SpectralProblem {
  std::vector<cplx> linear;      // L_m
  std::vector<double> wavenum;   // k_m
  double nonlinear_coeff = 0.0;  // 1/2 for KS, alpha for CE
  double advective_speed = 0.0;  // multiplies max|u| in the CFL limit
  double dx_physical = 1.0;
};

struct EtdCoefficients {
  std::vector<cplx> e, e2, q, f1, f2, f3;
};

EtdCoefficients etd_coefficients(const std::vector<cplx>& linear, double h,
                                 int contour_points) {
  const std::size_t modes = linear.size();
  EtdCoefficients c;
  c.e.resize(modes);
  c.e2.resize(modes);
  c.q.resize(modes);
  c.f1.resize(modes);
  c.f2.resize(modes);
  c.f3.resize(modes);
  std::vector<cplx> roots(contour_points);
  for (int j = 0; j < contour_points; ++j) {
    const double theta = 2.0 * std::numbers::pi * (j + 0.5) / contour_points;
    roots[j] = std::polar(1.0, theta);
  }
  for (std::size_t m = 0; m < modes; ++m) {
    const cplx z = h * linear[m];
    c.e[m] = std::exp(z);
    c.e2[m] = std::exp(0.5 * z);
    cplx q{}, f1{}, f2{}, f3{};
    for (const cplx& root : roots) {
      const cplx r = z + root;
      const cplx er = std::exp(r);
      const cplx r3 = r * r * r;
      q += (std::exp(0.5 * r) - 1.0) / r;
      f1 += (-4.0 - r + er * (4.0 - 3.0 * r + r * r)) / r3;
      f2 += (2.0 + r + er * (r - 2.0)) / r3;
      f3 += (-4.0 - 3.0 * r - r * r + er * (4.0 - r)) / r3;
    }
    const double w = h / contour_points;
    c.q[m] = w * q;
    c.f1[m] = w * f1;
    c.f2[m] = w * f2;
    c.f3[m] = w * f3;
  }
  return c;
}

class SpectralStepper {
 public:
  SpectralStepper(const SpectralProblem& problem, int n,
                  const SolverConfig& cfg)
      : problem_(problem),
        n_(n),
        cfg_(cfg),
        fft_(n),
        modes_(n / 2 + 1),
        phys_(n),
        nv_(modes_), na_(modes_), nb_(modes_), nc_(modes_),
        a_(modes_), b_(modes_), c_(modes_), tmp_(modes_),
        deriv_(modes_) {
    const int cutoff = cfg.dealias ? n / 3 : n / 2;
    for (int m = 0; m < modes_; ++m) {
      // The Nyquist mode of an odd derivative is dropped.
      const bool keep = m <= cutoff && !(2 * m == n);
      deriv_[m] = keep ? cplx(0.0, -problem.nonlinear_coeff *
                                       problem.wavenum[m])
                       : cplx(0.0, 0.0);
    }
  }

  // Advances the spectrum over one output interval of length dt; returns the
  // number of substeps taken.
  long advance(std::vector<cplx>& v, double dt, double umax) {
    int level = 0;
    const double speed = problem_.advective_speed * umax;
    if (speed > 0.0) {
      const double h_cfl = cfg_.cfl_safety * problem_.dx_physical / speed;
      while (dt / static_cast<double>(1L << level) > h_cfl && level < 40) {
        ++level;
      }
    }
    const long substeps = 1L << level;
    if (substeps > cfg_.max_substeps) return substeps;
    auto it = coeffs_.find(level);
    if (it == coeffs_.end()) {
      it = coeffs_
               .emplace(level, etd_coefficients(problem_.linear,
                                                dt / substeps,
                                                cfg_.contour_points))
               .first;
    }
    const EtdCoefficients& k = it->second;
    for (long s = 0; s < substeps; ++s) step(v, k);
    return substeps;
  }

 private:
  void nonlinear(const std::vector<cplx>& v, std::vector<cplx>& out) {
    fft_.backward(v, phys_);
    for (double& x : phys_) x = x * x;
    fft_.forward(phys_, out);
    for (int m = 0; m < modes_; ++m) out[m] *= deriv_[m];
  }

  void step(std::vector<cplx>& v, const EtdCoefficients& k) {
    nonlinear(v, nv_);
    for (int m = 0; m < modes_; ++m) a_[m] = k.e2[m] * v[m] + k.q[m] * nv_[m];
    nonlinear(a_, na_);
    for (int m = 0; m < modes_; ++m) b_[m] = k.e2[m] * v[m] + k.q[m] * na_[m];
    nonlinear(b_, nb_);
    for (int m = 0; m < modes_; ++m) {
      c_[m] = k.e2[m] * a_[m] + k.q[m] * (2.0 * nb_[m] - nv_[m]);
    }
    nonlinear(c_, nc_);
    for (int m = 0; m < modes_; ++m) {
      v[m] = k.e[m] * v[m] + k.f1[m] * nv_[m] +
             2.0 * k.f2[m] * (na_[m] + nb_[m]) + k.f3[m] * nc_[m];
    }
  }

  const SpectralProblem& problem_;
  int n_;
  SolverConfig cfg_;
  RealFft fft_;
  int modes_;
  std::vector<double> phys_;
  std::vector<cplx> nv_, na_, nb_, nc_, a_, b_, c_, tmp_;
  std::vector<cplx> deriv_;
  std::map<int, EtdCoefficients> coeffs_;
};

SolveOutcome integrate_spectral(std::span<const double> u0,
                                const SpectralProblem& problem,
                                const Grid& grid, const TimeAxis& time,
                                const SolverConfig& cfg) {
  const int n = grid.n_x;
  SolveOutcome out;
  out.trajectory.assign(static_cast<std::size_t>(time.n_t) * n, 0.0);
  std::copy(u0.begin(), u0.end(), out.trajectory.begin());
  if (!all_finite(u0)) {
    out.failure = "non-finite initial condition";
    return out;
  }
  SpectralStepper stepper(problem, n, cfg);
  RealFft fft(n);
  std::vector<cplx> v(n / 2 + 1);
  std::vector<double> u(u0.begin(), u0.end());
  fft.forward(u, v);
  const double dt = time.dt_out();
  for (int t = 1; t < time.n_t; ++t) {
    out.substeps += stepper.advance(v, dt, max_abs(u));
    if (out.substeps > cfg.max_substeps) {
      out.failure = "substep budget exceeded at snapshot " + std::to_string(t);
      return out;
    }
    fft.backward(v, u);
    if (!all_finite(u) || max_abs(u) > kBlowup) {
      out.failure = "non-finite or diverging state at t=" +
                    std::to_string(time.t(t));
      return out;
    }
    std::copy(u.begin(), u.end(), out.trajectory.begin() + t * n);
  }
  return out;
}

template <typename Solve>
TrajectoryBatch solve_each(std::span<const SimInput> inputs, const Grid& grid,
                           const TimeAxis& time, Solve&& solve) {
  const int n = static_cast<int>(inputs.size());
  TrajectoryBatch batch(n, grid, time, 1);
  parallel_for(inputs.size(), [&](std::size_t i) {
    const SimInput& in = inputs[i];
    if (static_cast<int>(in.initial_field.size()) != grid.n_x) {
      throw std::invalid_argument(
          "initial field does not match the simulation grid");
    }
    SolveOutcome res = solve(in);
    auto dst = batch.trajectory(static_cast<int>(i));
    std::copy(res.trajectory.begin(), res.trajectory.end(), dst.begin());
    if (!res.failure.empty()) batch.mark_failed(static_cast<int>(i),
                                                res.failure);
  });
  return batch;
}

}  // namespace

void validate(const SolverConfig& cfg) {
  if (!(cfg.cfl_safety > 0.0 && cfg.cfl_safety <= 1.0)) {
    throw std::invalid_argument("solver.cfl_safety must be in (0, 1]");
  }
  if (cfg.max_substeps < 1) {
    throw std::invalid_argument("solver.max_substeps must be >= 1");
  }
  if (cfg.contour_points < 16) {
    throw std::invalid_argument("solver.contour_points must be >= 16");
  }
}

SolveOutcome solve_burgers_field(std::span<const double> u0, double nu,
                                 const Grid& grid, const TimeAxis& time,
                                 const SolverConfig& cfg) {
  validate(cfg);
  const int n = grid.n_x;
  SolveOutcome out;
  out.trajectory.assign(static_cast<std::size_t>(time.n_t) * n, 0.0);
  std::copy(u0.begin(), u0.end(), out.trajectory.begin());
  if (!all_finite(u0)) {
    out.failure = "non-finite initial condition";
    return out;
  }
  BurgersStepper stepper(n, grid.dx, nu / std::numbers::pi);
  std::vector<double> u(u0.begin(), u0.end());
  const double dt = time.dt_out();
  for (int t = 1; t < time.n_t; ++t) {
    const double umax = max_abs(u);
    long substeps = 1;
    if (umax > 0.0) {
      const double h_cfl = cfg.cfl_safety * grid.dx / umax;
      substeps = std::max(1L, static_cast<long>(std::ceil(dt / h_cfl)));
    }
    out.substeps += substeps;
    if (out.substeps > cfg.max_substeps) {
      out.failure = "substep budget exceeded at snapshot " + std::to_string(t);
      return out;
    }
    const double h = dt / substeps;
    for (long s = 0; s < substeps; ++s) stepper.step(u, h);
    if (!all_finite(u) || max_abs(u) > kBlowup) {
      out.failure = "non-finite or diverging state at t=" +
                    std::to_string(time.t(t));
      return out;
    }
    std::copy(u.begin(), u.end(), out.trajectory.begin() + t * n);
  }
  return out;
}

SolveOutcome solve_ks_field(std::span<const double> u0, double nu,
                            double length, const Grid& grid,
                            const TimeAxis& time, const SolverConfig& cfg) {
  validate(cfg);
  const int n = grid.n_x;
  SpectralProblem p;
  p.linear.resize(n / 2 + 1);
  p.wavenum.resize(n / 2 + 1);
  for (int m = 0; m <= n / 2; ++m) {
    const double k = 2.0 * std::numbers::pi * m / length;
    p.wavenum[m] = k;
    p.linear[m] = k * k - nu * k * k * k * k;
  }
  p.nonlinear_coeff = 0.5;
  p.advective_speed = 1.0;
  p.dx_physical = length / n;
  return integrate_spectral(u0, p, grid, time, cfg);
}

SolveOutcome solve_ce_field(std::span<const double> u0, double alpha,
                            double beta, double gamma, const Grid& grid,
                            const TimeAxis& time, const SolverConfig& cfg) {
  validate(cfg);
  const int n = grid.n_x;
  SpectralProblem p;
  p.linear.resize(n / 2 + 1);
  p.wavenum.resize(n / 2 + 1);
  for (int m = 0; m <= n / 2; ++m) {
    const double k = 2.0 * std::numbers::pi * m / grid.length;
    p.wavenum[m] = k;
    // -beta u_xx moved to the right: -beta k^2; gamma u_xxx: +i gamma k^3.
    p.linear[m] = cplx(-beta * k * k, gamma * k * k * k);
  }
  p.nonlinear_coeff = alpha;
  p.advective_speed = 2.0 * alpha;
  p.dx_physical = grid.dx;
  return integrate_spectral(u0, p, grid, time, cfg);
}

TrajectoryBatch solve_burgers(std::span<const SimInput> inputs,
                              const Grid& grid, const TimeAxis& time,
                              const SolverConfig& cfg) {
  validate(cfg);
  return solve_each(inputs, grid, time, [&](const SimInput& in) {
    return solve_burgers_field(in.initial_field, in.pde.values.at(0), grid,
                               time, cfg);
  });
}

TrajectoryBatch solve_ks(std::span<const SimInput> inputs, const Grid& grid,
                         const TimeAxis& time, const SolverConfig& cfg) {
  validate(cfg);
  return solve_each(inputs, grid, time, [&](const SimInput& in) {
    return solve_ks_field(in.initial_field, in.pde.values.at(0),
                          in.pde.values.at(1), grid, time, cfg);
  });
}

TrajectoryBatch solve_ce(std::span<const SimInput> inputs, const Grid& grid,
                         const TimeAxis& time, const SolverConfig& cfg) {
  validate(cfg);
  return solve_each(inputs, grid, time, [&](const SimInput& in) {
    return solve_ce_field(in.initial_field, in.pde.values.at(0),
                          in.pde.values.at(1), in.pde.values.at(2), grid,
                          time, cfg);
  });
}

std::vector<double> simulation_initial_field(const TaskSpec& spec,
                                             const SimInput& input) {
  if (static_cast<int>(input.initial_field.size()) == spec.sim_nx) {
    return input.initial_field;
  }
  return realize_ic(input.ic, spec.sim_grid());
}

TrajectoryBatch solve_batch(const TaskSpec& spec,
                            std::span<const SimInput> inputs,
                            const SolverConfig& cfg) {
  const Grid sim_grid = spec.sim_grid();
  const TimeAxis sim_time = spec.sim_time();
  if (inputs.empty()) {
    return TrajectoryBatch(0, spec.train_grid(), spec.train_time(), 1);
  }
  std::vector<SimInput> sim_inputs(inputs.begin(), inputs.end());
  for (SimInput& in : sim_inputs) {
    in.initial_field = simulation_initial_field(spec, in);
  }
  TrajectoryBatch full;
  switch (spec.task) {
    case Task::kBurgers:
      full = solve_burgers(sim_inputs, sim_grid, sim_time, cfg);
      break;
    case Task::kKS:
      full = solve_ks(sim_inputs, sim_grid, sim_time, cfg);
      break;
    case Task::kCE:
      full = solve_ce(sim_inputs, sim_grid, sim_time, cfg);
      break;
  }
  if (full.n_failed() == full.n_traj()) {
    throw std::runtime_error("every trajectory of the batch failed: " +
                             full.failure(0));
  }
  return downsample(full, spec.train_nt, spec.train_nx);
}

}  // namespace alpde
