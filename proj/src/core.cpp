#include "alpde/core.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace alpde {

std::string_view task_name(Task task) {
  switch (task) {
    case Task::kBurgers:
      return "burgers";
    case Task::kKS:
      return "ks";
    case Task::kCE:
      return "ce";
  }
  return "unknown";
}

Task parse_task(std::string_view name) {
  if (name == "burgers") return Task::kBurgers;
  if (name == "ks") return Task::kKS;
  if (name == "ce") return Task::kCE;
  throw std::invalid_argument("unknown task '" + std::string(name) + "'");
}

Grid make_grid(int n_x, double length) {
  if (n_x < 8) throw std::invalid_argument("grid needs n_x >= 8");
  if (!(length > 0.0) || !std::isfinite(length)) {
    throw std::invalid_argument("grid length must be positive");
  }
  return Grid{n_x, length, length / n_x};
}

TimeAxis make_time_axis(int n_t, double t_final) {
  if (n_t < 2) throw std::invalid_argument("time axis needs n_t >= 2");
  if (!(t_final > 0.0)) throw std::invalid_argument("t_final must be > 0");
  return TimeAxis{n_t, t_final};
}

TrajectoryBatch::TrajectoryBatch(int n_traj, Grid grid, TimeAxis time,
                                 int n_c)
    : n_traj_(n_traj), n_c_(n_c), grid_(grid), time_(time) {
  if (n_traj < 0 || n_c < 1) {
    throw std::invalid_argument("invalid trajectory batch shape");
  }
  data_.assign(static_cast<std::size_t>(n_traj) * trajectory_size(), 0.0);
  failures_.assign(n_traj, std::string{});
}

std::span<double> TrajectoryBatch::trajectory(int traj) {
  return {data_.data() + traj * trajectory_size(), trajectory_size()};
}
std::span<const double> TrajectoryBatch::trajectory(int traj) const {
  return {data_.data() + traj * trajectory_size(), trajectory_size()};
}
std::span<double> TrajectoryBatch::frame(int traj, int t) {
  return {data_.data() + index(traj, t, 0, 0), frame_size()};
}
std::span<const double> TrajectoryBatch::frame(int traj, int t) const {
  return {data_.data() + index(traj, t, 0, 0), frame_size()};
}

void TrajectoryBatch::mark_failed(int traj, std::string reason) {
  failures_[traj] = reason.empty() ? "failed" : std::move(reason);
}

int TrajectoryBatch::n_failed() const {
  return static_cast<int>(std::count_if(
      failures_.begin(), failures_.end(),
      [](const std::string& f) { return !f.empty(); }));
}

void TrajectoryBatch::copy_trajectory(int dst_traj, const TrajectoryBatch& src,
                                      int src_traj) {
  if (src.trajectory_size() != trajectory_size()) {
    throw std::invalid_argument("copy_trajectory: shape mismatch");
  }
  auto from = src.trajectory(src_traj);
  std::copy(from.begin(), from.end(), trajectory(dst_traj).begin());
  failures_[dst_traj] = src.failures_[src_traj];
}

TrajectoryBatch TrajectoryBatch::select(std::span<const int> trajs) const {
  TrajectoryBatch out(static_cast<int>(trajs.size()), grid_, time_, n_c_);
  for (std::size_t i = 0; i < trajs.size(); ++i) {
    out.copy_trajectory(static_cast<int>(i), *this, trajs[i]);
  }
  return out;
}

void TrajectoryBatch::append(const TrajectoryBatch& other) {
  if (n_traj_ == 0 && data_.empty()) {
    *this = other;
    return;
  }
  if (other.n_traj_ == 0) return;
  if (other.n_t() != n_t() || other.n_x() != n_x() || other.n_c_ != n_c_) {
    throw std::invalid_argument("append: shape mismatch");
  }
  data_.insert(data_.end(), other.data_.begin(), other.data_.end());
  failures_.insert(failures_.end(), other.failures_.begin(),
                   other.failures_.end());
  n_traj_ += other.n_traj_;
}

void TrajectoryBatch::round_to_float() {
  for (double& v : data_) v = static_cast<double>(static_cast<float>(v));
}

TrajectoryBatch downsample(const TrajectoryBatch& traj, int target_nt,
                           int target_nx) {
  const int src_nt = traj.n_t();
  const int src_nx = traj.n_x();
  if (target_nt < 2 || target_nx < 1 || (src_nt - 1) % (target_nt - 1) != 0 ||
      src_nx % target_nx != 0) {
    throw std::invalid_argument(
        "downsample: target resolution must divide the source resolution");
  }
  const int t_stride = (src_nt - 1) / (target_nt - 1);
  const int x_stride = src_nx / target_nx;
  const Grid grid = make_grid(target_nx, traj.grid().length);
  TrajectoryBatch out(traj.n_traj(), grid,
                      TimeAxis{target_nt, traj.time().t_final}, traj.n_c());
  for (int i = 0; i < traj.n_traj(); ++i) {
    for (int t = 0; t < target_nt; ++t) {
      for (int x = 0; x < target_nx; ++x) {
        for (int c = 0; c < traj.n_c(); ++c) {
          out.at(i, t, x, c) = traj.at(i, t * t_stride, x * x_stride, c);
        }
      }
    }
    if (traj.failed(i)) out.mark_failed(i, traj.failure(i));
  }
  return out;
}

std::vector<double> shift_frame(std::span<const double> frame, int n_x,
                                int n_c, int s) {
  std::vector<double> out(frame.size());
  const int shift = ((s % n_x) + n_x) % n_x;
  for (int x = 0; x < n_x; ++x) {
    const int dst = (x + shift) % n_x;
    for (int c = 0; c < n_c; ++c) out[dst * n_c + c] = frame[x * n_c + c];
  }
  return out;
}

}  // namespace alpde
