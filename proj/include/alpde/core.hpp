#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace alpde {

enum class Task { kBurgers, kKS, kCE };

std::string_view task_name(Task task);
Task parse_task(std::string_view name);

// Uniform periodic grid on [0, length): x_j = j * dx, no duplicated endpoint.
struct Grid {
  int n_x = 0;
  double length = 0.0;
  double dx = 0.0;

  // Coordinate of point j as a fraction of the domain length.
  double fraction(int j) const { return static_cast<double>(j) / n_x; }
  double x(int j) const { return length * fraction(j); }
  bool operator==(const Grid&) const = default;
};

Grid make_grid(int n_x, double length);

// n_t stored snapshots including t = 0.
struct TimeAxis {
  int n_t = 0;
  double t_final = 0.0;

  double dt_out() const { return t_final / (n_t - 1); }
  double t(int k) const { return t_final * k / (n_t - 1); }
  bool operator==(const TimeAxis&) const = default;
};

TimeAxis make_time_axis(int n_t, double t_final);

// Dense (n_traj, n_t, n_x, n_c) tensor, row-major, plus a per-trajectory
// failure message (empty when the trajectory is valid).
class TrajectoryBatch {
 public:
  TrajectoryBatch() = default;
  TrajectoryBatch(int n_traj, Grid grid, TimeAxis time, int n_c = 1);

  int n_traj() const { return n_traj_; }
  int n_t() const { return time_.n_t; }
  int n_x() const { return grid_.n_x; }
  int n_c() const { return n_c_; }
  const Grid& grid() const { return grid_; }
  const TimeAxis& time() const { return time_; }

  std::size_t frame_size() const {
    return static_cast<std::size_t>(grid_.n_x) * n_c_;
  }
  std::size_t trajectory_size() const { return frame_size() * time_.n_t; }

  double& at(int traj, int t, int x, int c = 0) {
    return data_[index(traj, t, x, c)];
  }
  double at(int traj, int t, int x, int c = 0) const {
    return data_[index(traj, t, x, c)];
  }

  std::span<double> trajectory(int traj);
  std::span<const double> trajectory(int traj) const;
  std::span<double> frame(int traj, int t);
  std::span<const double> frame(int traj, int t) const;

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool failed(int traj) const { return !failures_[traj].empty(); }
  const std::string& failure(int traj) const { return failures_[traj]; }
  void mark_failed(int traj, std::string reason);
  int n_failed() const;

  // Copies trajectory `src_traj` of `src` (same shape) into slot `dst_traj`.
  void copy_trajectory(int dst_traj, const TrajectoryBatch& src,
                       int src_traj);

  // Subset of trajectories, in the given order.
  TrajectoryBatch select(std::span<const int> trajs) const;

  // Concatenation along the trajectory axis; shapes must agree.
  void append(const TrajectoryBatch& other);

  // Rounds every entry to the nearest binary32 value.
  void round_to_float();

 private:
  std::size_t index(int traj, int t, int x, int c) const {
    return ((static_cast<std::size_t>(traj) * time_.n_t + t) * grid_.n_x +
            x) * n_c_ + c;
  }

  int n_traj_ = 0;
  int n_c_ = 1;
  Grid grid_{};
  TimeAxis time_{};
  std::vector<double> data_;
  std::vector<std::string> failures_;
};

// lambda = (lambda_1, ..., lambda_l) plus the unit-cube coordinates that
// produced it.
struct PDEParams {
  std::vector<double> values;
  std::vector<double> normed;
  bool operator==(const PDEParams&) const = default;
};

// Sinusoid-superposition initial condition. `normed` holds the unit-cube
// draws the parameters were mapped from, laid out as
// [A_1..A_Nw, k_1..k_Nw, phi_1..phi_Nw, window, x_L, x_R, sign_flip].
struct ICParams {
  std::vector<double> amplitudes;
  std::vector<int> wave_numbers;
  std::vector<double> phases;
  bool window = false;
  double x_left = 0.0;
  double x_right = 1.0;
  bool sign_flip = false;
  std::vector<double> normed;
  bool operator==(const ICParams&) const = default;
};

// psi = (u0, lambda). `initial_field` is u0 on the training grid.
struct SimInput {
  ICParams ic;
  PDEParams pde;
  std::vector<double> initial_field;
  std::uint64_t uid = 0;
};

// Strided subsampling: every (n_t-1)/(target_nt-1)-th snapshot and every
// n_x/target_nx-th grid point. Endpoints in time are kept.
TrajectoryBatch downsample(const TrajectoryBatch& traj, int target_nt,
                           int target_nx);

// Circular shift of a (n_x, n_c) frame by s points: out[x] = in[x - s].
std::vector<double> shift_frame(std::span<const double> frame, int n_x,
                                int n_c, int s);

}  // namespace alpde
