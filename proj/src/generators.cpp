#include "alpde/generators.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace alpde {
namespace {

constexpr std::uint64_t kPdeStream = 0x70646531;
constexpr std::uint64_t kIcStream = 0x69633031;

}  // namespace

TaskSpec task_spec(Task task) {
  TaskSpec spec;
  spec.task = task;
  switch (task) {
    case Task::kBurgers:
      spec.params.dims = {{"nu", 0.001, 1.0, Scale::kLog}};
      spec.ic = ICSpec{};  // defaults are the Burgers generator
      spec.ic.window_prob = 0.1;
      spec.ic.sign_flip_prob = 0.1;
      spec.t_final = 2.0;
      spec.domain_length = 1.0;
      spec.sim_nt = 201;
      spec.sim_nx = 1024;
      spec.train_nt = 41;
      spec.train_nx = 256;
      break;
    case Task::kKS:
      spec.params.dims = {{"nu", 0.5, 4.0, Scale::kUniform},
                          {"L", 0.1, 100.0, Scale::kUniform}};
      spec.ic.n_waves = 10;
      spec.ic.k_lo = 1;
      spec.ic.k_hi = 10;
      spec.ic.amp_lo = -1.0;
      spec.ic.amp_hi = 1.0;
      spec.t_final = 40.0;
      spec.domain_length = 1.0;
      spec.sim_nt = 801;
      spec.sim_nx = 512;
      spec.train_nt = 41;
      spec.train_nx = 256;
      break;
    case Task::kCE:
      spec.params.dims = {{"alpha", 0.0, 3.0, Scale::kUniform},
                          {"beta", 0.0, 0.4, Scale::kUniform},
                          {"gamma", 0.0, 1.0, Scale::kUniform}};
      spec.ic.n_waves = 5;
      spec.ic.k_lo = 1;
      spec.ic.k_hi = 3;
      spec.ic.amp_lo = -0.4;
      spec.ic.amp_hi = 0.4;
      spec.t_final = 4.0;
      spec.domain_length = 16.0;
      spec.sim_nt = 501;
      spec.sim_nx = 64;
      spec.train_nt = 51;
      spec.train_nx = 64;
      break;
  }
  return spec;
}

double transform_log(double normed, double a, double b) {
  if (!(a > 0.0) || !(b > a)) {
    throw std::invalid_argument("transform_log requires 0 < a < b");
  }
  return a * std::exp(std::log(b / a) * normed);
}

double inverse_transform_log(double value, double a, double b) {
  if (!(a > 0.0) || !(b > a) || !(value > 0.0)) {
    throw std::invalid_argument("inverse_transform_log requires 0 < a < b");
  }
  return std::log(value / a) / std::log(b / a);
}

PDEParams pde_params_from_normed(const ParamSpec& spec,
                                 std::span<const double> normed) {
  if (normed.size() != spec.size()) {
    throw std::invalid_argument("normed parameter vector has wrong length");
  }
  PDEParams out;
  out.normed.assign(normed.begin(), normed.end());
  out.values.reserve(spec.size());
  for (std::size_t i = 0; i < spec.size(); ++i) {
    const ParamDim& d = spec.dims[i];
    out.values.push_back(d.scale == Scale::kLog
                             ? transform_log(normed[i], d.lo, d.hi)
                             : d.lo + (d.hi - d.lo) * normed[i]);
  }
  return out;
}

std::vector<double> normalize_param_values(const ParamSpec& spec,
                                           std::span<const double> values) {
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const ParamDim& d = spec.dims[i];
    out[i] = d.scale == Scale::kLog
                 ? inverse_transform_log(values[i], d.lo, d.hi)
                 : (values[i] - d.lo) / (d.hi - d.lo);
  }
  return out;
}

ICParams ic_params_from_normed(const ICSpec& spec,
                               std::span<const double> normed) {
  const int nw = spec.n_waves;
  if (static_cast<int>(normed.size()) != spec.normed_size()) {
    throw std::invalid_argument("normed IC vector has wrong length");
  }
  ICParams ic;
  ic.normed.assign(normed.begin(), normed.end());
  const int k_span = spec.k_hi - spec.k_lo;
  for (int i = 0; i < nw; ++i) {
    ic.amplitudes.push_back(spec.amp_lo +
                            (spec.amp_hi - spec.amp_lo) * normed[i]);
    const int k = spec.k_lo + static_cast<int>(std::floor(normed[nw + i] *
                                                          k_span));
    ic.wave_numbers.push_back(std::clamp(k, spec.k_lo, spec.k_hi - 1));
    ic.phases.push_back(2.0 * std::numbers::pi * normed[2 * nw + i]);
  }
  const double* tail = normed.data() + 3 * nw;
  ic.window = tail[0] < spec.window_prob;
  ic.x_left = spec.xl_lo + (spec.xl_hi - spec.xl_lo) * tail[1];
  ic.x_right = spec.xr_lo + (spec.xr_hi - spec.xr_lo) * tail[2];
  ic.sign_flip = tail[3] < spec.sign_flip_prob;
  return ic;
}

PDEParams draw_pde_params(const ParamSpec& spec, Rng& rng) {
  std::vector<double> normed(spec.size());
  for (double& u : normed) u = rng.uniform();
  return pde_params_from_normed(spec, normed);
}

ICParams draw_ic_params(const ICSpec& spec, Rng& rng) {
  std::vector<double> normed(spec.normed_size());
  for (double& u : normed) u = rng.uniform();
  return ic_params_from_normed(spec, normed);
}

std::vector<PDEParams> sample_pde_params(int n, const ParamSpec& spec,
                                         std::uint64_t seed) {
  std::vector<PDEParams> out;
  out.reserve(std::max(n, 0));
  for (int i = 0; i < n; ++i) {
    Rng rng(derive_seed({seed, static_cast<std::uint64_t>(i), kPdeStream}));
    out.push_back(draw_pde_params(spec, rng));
  }
  return out;
}

std::vector<ICParams> sample_ic_params(int n, const ICSpec& spec,
                                       std::uint64_t seed) {
  std::vector<ICParams> out;
  out.reserve(std::max(n, 0));
  for (int i = 0; i < n; ++i) {
    Rng rng(derive_seed({seed, static_cast<std::uint64_t>(i), kIcStream}));
    out.push_back(draw_ic_params(spec, rng));
  }
  return out;
}

std::vector<double> realize_ic(const ICParams& ic, const Grid& grid) {
  std::vector<double> u(grid.n_x, 0.0);
  const double two_pi = 2.0 * std::numbers::pi;
  for (int j = 0; j < grid.n_x; ++j) {
    const double frac = grid.fraction(j);
    double v = 0.0;
    for (std::size_t i = 0; i < ic.amplitudes.size(); ++i) {
      v += ic.amplitudes[i] *
           std::sin(two_pi * ic.wave_numbers[i] * frac + ic.phases[i]);
    }
    if (ic.window && (frac < ic.x_left || frac > ic.x_right)) v = 0.0;
    u[j] = ic.sign_flip ? -v : v;
  }
  return u;
}

SimInput make_input(const TaskSpec& spec, ICParams ic, PDEParams pde,
                    std::uint64_t uid) {
  SimInput in;
  in.initial_field = realize_ic(ic, spec.train_grid());
  in.ic = std::move(ic);
  in.pde = std::move(pde);
  in.uid = uid;
  return in;
}

std::uint64_t candidate_uid(StreamTag tag, std::uint64_t seed,
                            std::uint64_t index) {
  return derive_seed({static_cast<std::uint64_t>(tag), seed, index});
}

std::vector<SimInput> sample_inputs(const TaskSpec& spec, int n,
                                    std::uint64_t seed, StreamTag tag) {
  std::vector<SimInput> out;
  out.reserve(std::max(n, 0));
  for (int i = 0; i < n; ++i) {
    const std::uint64_t uid =
        candidate_uid(tag, seed, static_cast<std::uint64_t>(i));
    Rng pde_rng(derive_seed({uid, kPdeStream}));
    Rng ic_rng(derive_seed({uid, kIcStream}));
    PDEParams pde = draw_pde_params(spec.params, pde_rng);
    ICParams ic = draw_ic_params(spec.ic, ic_rng);
    out.push_back(make_input(spec, std::move(ic), std::move(pde), uid));
  }
  return out;
}

}  // namespace alpde
