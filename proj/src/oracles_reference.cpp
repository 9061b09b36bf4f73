#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include "alpde/oracles.hpp"

namespace alpde::oracles {
namespace {

bool allowed_at(const std::vector<char>& allowed, std::size_t i) {
  return allowed.empty() || allowed[i];
}

double dist2(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double d = a[j] - b[j];
    s += d * d;
  }
  return s;
}

}  // namespace

double dense_qbc(
    const std::vector<std::vector<std::vector<std::vector<double>>>>& u,
    bool absolute) {
  const std::size_t n_m = u.size();
  const std::size_t n_t = u[0].size();
  const std::size_t n_x = u[0][0].size();
  const std::size_t n_c = u[0][0][0].size();
  double sum = 0.0;
  for (std::size_t t = 1; t < n_t; ++t) {
    for (std::size_t x = 0; x < n_x; ++x) {
      for (std::size_t c = 0; c < n_c; ++c) {
        double mean = 0.0;
        for (std::size_t m = 0; m < n_m; ++m) mean += u[m][t][x][c];
        mean /= static_cast<double>(n_m);
        double acc = 0.0;
        for (std::size_t m = 0; m < n_m; ++m) {
          const double d = u[m][t][x][c] - mean;
          acc += absolute ? std::abs(d) : d * d;
        }
        sum += acc / static_cast<double>(n_m);
      }
    }
  }
  return sum / static_cast<double>((n_t - 1) * n_x * n_c);
}

std::vector<int> topk_bruteforce(const std::vector<double>& scores, int k,
                                 const std::vector<char>& allowed) {
  std::vector<std::pair<double, int>> v;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (allowed_at(allowed, i)) v.emplace_back(-scores[i], static_cast<int>(i));
  }
  std::sort(v.begin(), v.end());
  std::vector<int> out;
  for (int i = 0; i < k && i < static_cast<int>(v.size()); ++i) {
    out.push_back(v[i].second);
  }
  return out;
}

std::vector<int> coreset_bruteforce(const Rows& pool, const Rows& anchors,
                                    int k, const std::vector<char>& allowed) {
  std::vector<int> chosen;
  Rows centers = anchors;
  for (int s = 0; s < k; ++s) {
    int best = -1;
    double best_d = -1.0;
    for (std::size_t i = 0; i < pool.size(); ++i) {
      if (!allowed_at(allowed, i) ||
          std::find(chosen.begin(), chosen.end(), static_cast<int>(i)) !=
              chosen.end()) {
        continue;
      }
      double d = std::numeric_limits<double>::infinity();
      for (const auto& c : centers) d = std::min(d, dist2(pool[i], c));
      if (d > best_d) {
        best_d = d;
        best = static_cast<int>(i);
      }
    }
    if (best < 0) break;
    chosen.push_back(best);
    centers.push_back(pool[best]);
  }
  return chosen;
}

std::vector<int> lcmd_bruteforce(const Rows& pool, const Rows& anchors, int k,
                                 const std::vector<char>& allowed) {
  std::vector<int> chosen;
  Rows centers = anchors;
  for (int s = 0; s < k; ++s) {
    std::vector<int> remaining;
    for (std::size_t i = 0; i < pool.size(); ++i) {
      if (allowed_at(allowed, i) &&
          std::find(chosen.begin(), chosen.end(), static_cast<int>(i)) ==
              chosen.end()) {
        remaining.push_back(static_cast<int>(i));
      }
    }
    if (remaining.empty()) break;
    std::vector<int> owner(remaining.size());
    std::vector<double> d(remaining.size());
    for (std::size_t r = 0; r < remaining.size(); ++r) {
      double best = std::numeric_limits<double>::infinity();
      int who = 0;
      for (std::size_t c = 0; c < centers.size(); ++c) {
        const double dc = dist2(pool[remaining[r]], centers[c]);
        if (dc < best) {
          best = dc;
          who = static_cast<int>(c);
        }
      }
      owner[r] = who;
      d[r] = best;
    }
    int heavy = -1;
    double heavy_mass = -1.0;
    for (std::size_t c = 0; c < centers.size(); ++c) {
      double mass = 0.0;
      bool any = false;
      for (std::size_t r = 0; r < remaining.size(); ++r) {
        if (owner[r] == static_cast<int>(c)) {
          mass += d[r];
          any = true;
        }
      }
      if (any && mass > heavy_mass) {
        heavy_mass = mass;
        heavy = static_cast<int>(c);
      }
    }
    int pick = -1;
    double far = -1.0;
    for (std::size_t r = 0; r < remaining.size(); ++r) {
      if (owner[r] == heavy && d[r] > far) {
        far = d[r];
        pick = remaining[r];
      }
    }
    chosen.push_back(pick);
    centers.push_back(pool[pick]);
  }
  return chosen;
}

double bait_objective_dense(const Rows& pool, const Rows& train,
                            const std::vector<int>& chosen, double lambda,
                            const std::vector<char>& allowed) {
  const int p = static_cast<int>(pool[0].size());
  Eigen::MatrixXd a = Eigen::MatrixXd::Identity(p, p) * lambda;
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(p, p);
  auto outer = [&](Eigen::MatrixXd& m, const std::vector<double>& v) {
    for (int i = 0; i < p; ++i) {
      for (int j = 0; j < p; ++j) m(i, j) += v[i] * v[j];
    }
  };
  for (const auto& t : train) outer(a, t);
  for (int c : chosen) outer(a, pool[c]);
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (allowed_at(allowed, i)) outer(b, pool[i]);
  }
  const Eigen::MatrixXd inv = a.fullPivLu().inverse();
  return (inv * b).trace();
}

std::vector<int> bait_bruteforce(const Rows& pool, const Rows& train, int k,
                                 double lambda,
                                 const std::vector<char>& allowed) {
  std::vector<int> chosen;
  for (int s = 0; s < k; ++s) {
    int best = -1;
    double best_obj = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < pool.size(); ++i) {
      if (!allowed_at(allowed, i) ||
          std::find(chosen.begin(), chosen.end(), static_cast<int>(i)) !=
              chosen.end()) {
        continue;
      }
      std::vector<int> trial = chosen;
      trial.push_back(static_cast<int>(i));
      const double obj = bait_objective_dense(pool, train, trial, lambda, allowed);
      if (obj < best_obj) {
        best_obj = obj;
        best = static_cast<int>(i);
      }
    }
    if (best < 0) break;
    chosen.push_back(best);
  }
  return chosen;
}

std::vector<double> heat_mode(int n_x, double length, int mode, double beta,
                              double t) {
  const double k = 2.0 * std::numbers::pi * mode / length;
  std::vector<double> u(n_x);
  for (int j = 0; j < n_x; ++j) {
    u[j] = std::sin(k * length * j / n_x) * std::exp(-beta * k * k * t);
  }
  return u;
}

}  // namespace alpde::oracles
