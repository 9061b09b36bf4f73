#include "alpde/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace alpde {
namespace {

void check_shapes(const TrajectoryBatch& a, const TrajectoryBatch& b) {
  if (a.n_traj() != b.n_traj() || a.n_t() != b.n_t() || a.n_x() != b.n_x() ||
      a.n_c() != b.n_c()) {
    throw std::invalid_argument("metrics: prediction and truth shapes differ");
  }
}

template <typename Fn>
ErrorVector per_trajectory(const TrajectoryBatch& pred,
                           const TrajectoryBatch& truth, Fn&& finish) {
  check_shapes(pred, truth);
  ErrorVector e;
  e.per_trajectory.resize(pred.n_traj());
  for (int i = 0; i < pred.n_traj(); ++i) {
    e.per_trajectory[i] = finish(pred.trajectory(i), truth.trajectory(i));
  }
  if (!e.per_trajectory.empty()) {
    e.mean = std::accumulate(e.per_trajectory.begin(), e.per_trajectory.end(),
                             0.0) /
             static_cast<double>(e.per_trajectory.size());
  }
  return e;
}

}  // namespace

ErrorVector rmse(const TrajectoryBatch& pred, const TrajectoryBatch& truth) {
  return per_trajectory(pred, truth, [](auto p, auto t) {
    double s = 0.0;
    for (std::size_t j = 0; j < p.size(); ++j) s += (p[j] - t[j]) * (p[j] - t[j]);
    return std::sqrt(s / static_cast<double>(p.size()));
  });
}

ErrorVector mae(const TrajectoryBatch& pred, const TrajectoryBatch& truth) {
  return per_trajectory(pred, truth, [](auto p, auto t) {
    double s = 0.0;
    for (std::size_t j = 0; j < p.size(); ++j) s += std::abs(p[j] - t[j]);
    return s / static_cast<double>(p.size());
  });
}

double quantile(std::span<const double> values, double q) {
  if (values.empty()) throw std::invalid_argument("quantile of empty vector");
  if (!(q >= 0.0 && q <= 1.0)) throw std::invalid_argument("q outside [0,1]");
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return v[lo] + frac * (v[hi] - v[lo]);
}

std::vector<double> average_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return values[a] < values[b];
  });
  std::vector<double> ranks(values.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

namespace {

std::optional<double> pearson(std::span<const double> a,
                              std::span<const double> b) {
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (!(saa > 0.0) || !(sbb > 0.0)) return std::nullopt;
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

}  // namespace

Correlation correlation(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 3) {
    throw std::invalid_argument("correlation needs equal lengths >= 3");
  }
  Correlation c;
  c.pearson = pearson(a, b);
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  c.spearman = pearson(ra, rb);
  return c;
}

MetricsReport compute_metrics(const TrajectoryBatch& pred,
                              const TrajectoryBatch& truth) {
  MetricsReport m;
  ErrorVector r = rmse(pred, truth);
  ErrorVector a = mae(pred, truth);
  m.rmse = r.mean;
  m.mae = a.mean;
  m.rmse_per_trajectory = std::move(r.per_trajectory);
  m.mae_per_trajectory = std::move(a.per_trajectory);
  m.n_trajectories = pred.n_traj();
  if (!m.rmse_per_trajectory.empty()) {
    m.q50 = quantile(m.rmse_per_trajectory, 0.5);
    m.q95 = quantile(m.rmse_per_trajectory, 0.95);
    m.q99 = quantile(m.rmse_per_trajectory, 0.99);
  }
  return m;
}

}  // namespace alpde
