#include "alpde/selection.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "alpde/random.hpp"

namespace alpde {
namespace {

using RowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

std::vector<int> candidates_of(int pool_size, std::span<const char> available) {
  if (!available.empty() &&
      available.size() != static_cast<std::size_t>(pool_size)) {
    throw std::invalid_argument("availability mask does not match the pool");
  }
  std::vector<int> c;
  c.reserve(pool_size);
  for (int i = 0; i < pool_size; ++i) {
    if (available.empty() || available[i]) c.push_back(i);
  }
  return c;
}

void check_k(int k) {
  if (k < 0) throw std::invalid_argument("selection size k must be >= 0");
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) s += (a[j] - b[j]) * (a[j] - b[j]);
  return s;
}

void check_features(const FeatureMatrix& pool, const FeatureMatrix& anchors) {
  if (anchors.rows < 1) {
    throw std::invalid_argument("selection needs a non-empty anchor set");
  }
  if (pool.cols != anchors.cols) {
    throw std::invalid_argument("pool and anchor feature dimensions differ");
  }
}

}  // namespace

std::string strategy_name(Strategy s) {
  switch (s) {
    case Strategy::kRandom: return "random";
    case Strategy::kLhs: return "lhs";
    case Strategy::kTopK: return "topk";
    case Strategy::kSbal: return "sbal";
    case Strategy::kCoreSet: return "coreset";
    case Strategy::kLcmd: return "lcmd";
    case Strategy::kBait: return "bait";
  }
  return "";
}

Strategy parse_strategy(const std::string& s) {
  for (auto v : {Strategy::kRandom, Strategy::kLhs, Strategy::kTopK,
                 Strategy::kSbal, Strategy::kCoreSet, Strategy::kLcmd,
                 Strategy::kBait}) {
    if (strategy_name(v) == s) return v;
  }
  throw std::invalid_argument("unknown strategy '" + s + "'");
}

bool uses_scores(Strategy s) {
  return s == Strategy::kTopK || s == Strategy::kSbal;
}

bool uses_features(Strategy s) {
  return s == Strategy::kCoreSet || s == Strategy::kLcmd ||
         s == Strategy::kBait;
}

SelectionResult select_random(int pool_size, int k, std::uint64_t seed,
                              std::span<const char> available) {
  check_k(k);
  std::vector<int> c = candidates_of(pool_size, available);
  if (available.empty() && k > pool_size) {
    throw std::invalid_argument("k exceeds the pool size");
  }
  SelectionResult r;
  r.strategy = "random";
  r.seed = seed;
  r.exhausted = k > static_cast<int>(c.size());
  const int take = std::min<int>(k, c.size());
  Rng rng(seed);
  for (int i = 0; i < take; ++i) {
    const std::size_t j = i + rng.below(c.size() - i);
    std::swap(c[i], c[j]);
    r.indices.push_back(c[i]);
  }
  return r;
}

std::vector<double> latin_hypercube(int n, int dims, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("LHS needs n >= 1");
  std::vector<double> design(static_cast<std::size_t>(n) * dims);
  for (int d = 0; d < dims; ++d) {
    Rng rng(derive_seed({seed, static_cast<std::uint64_t>(d)}));
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    for (int i = n - 1; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);
    for (int i = 0; i < n; ++i) {
      design[static_cast<std::size_t>(i) * dims + d] =
          (perm[i] + rng.uniform()) / n;
    }
  }
  return design;
}

SelectionResult select_lhs(int n, const TaskSpec& spec, std::uint64_t seed) {
  const int n_pde = spec.n_params();
  const int dims = n_pde + spec.ic.normed_size();
  const auto design = latin_hypercube(n, dims, seed);
  SelectionResult r;
  r.strategy = "lhs";
  r.seed = seed;
  for (int i = 0; i < n; ++i) {
    std::span<const double> row(design.data() + static_cast<std::size_t>(i) * dims,
                                dims);
    PDEParams pde = pde_params_from_normed(spec.params, row.first(n_pde));
    ICParams ic = ic_params_from_normed(spec.ic, row.subspan(n_pde));
    r.generated.push_back(make_input(spec, std::move(ic), std::move(pde),
                                     candidate_uid(StreamTag::kLhs, seed, i)));
  }
  return r;
}

SelectionResult select_topk(std::span<const double> scores, int k,
                            std::span<const char> available) {
  check_k(k);
  std::vector<int> c =
      candidates_of(static_cast<int>(scores.size()), available);
  if (k > static_cast<int>(c.size())) {
    throw std::invalid_argument("k exceeds the number of selectable scores");
  }
  std::partial_sort(c.begin(), c.begin() + k, c.end(), [&](int a, int b) {
    return scores[a] > scores[b] || (scores[a] == scores[b] && a < b);
  });
  SelectionResult r;
  r.strategy = "topk";
  r.indices.assign(c.begin(), c.begin() + k);
  for (int i : r.indices) r.trace.push_back(scores[i]);
  return r;
}

SelectionResult select_sbal(std::span<const double> scores, int k, double m,
                            std::uint64_t seed,
                            std::span<const char> available) {
  check_k(k);
  if (!(m >= 0.0)) throw std::invalid_argument("strategy.m must be >= 0");
  const int n = static_cast<int>(scores.size());
  std::vector<int> c = candidates_of(n, available);
  for (int i : c) {
    if (!(scores[i] >= 0.0) || !std::isfinite(scores[i])) {
      throw std::invalid_argument("SBAL scores must be finite and >= 0");
    }
  }
  SelectionResult r;
  r.strategy = "sbal";
  r.seed = seed;
  r.exhausted = k > static_cast<int>(c.size());
  const int take = std::min<int>(k, c.size());
  std::vector<int> positive, zero;
  for (int i : c) (m > 0.0 && scores[i] == 0.0 ? zero : positive).push_back(i);

  Rng rng(seed);
  if (m >= kSbalTopKLimit) {
    const int from_pos = std::min<int>(take, positive.size());
    std::vector<char> mask(n, 0);
    for (int i : positive) mask[i] = 1;
    r.indices = select_topk(scores, from_pos, mask).indices;
  } else {
    std::vector<double> w(positive.size());
    std::vector<char> taken(positive.size(), 0);
    double total = 0.0;
    // Weights relative to the largest remaining score keep a^m representable.
    auto reweight = [&] {
      double top = 0.0;
      for (std::size_t j = 0; j < w.size(); ++j) {
        if (!taken[j]) top = std::max(top, scores[positive[j]]);
      }
      total = 0.0;
      for (std::size_t j = 0; j < w.size(); ++j) {
        w[j] = taken[j] ? 0.0
               : m == 0.0 ? 1.0
                          : std::pow(scores[positive[j]] / top, m);
        total += w[j];
      }
    };
    reweight();
    const int from_pos = std::min<int>(take, positive.size());
    for (int d = 0; d < from_pos; ++d) {
      // Underflowed or cancelled remaining mass is recomputed.
      if (!(total > 0.0)) reweight();
      const double u = rng.uniform() * total;
      double acc = 0.0;
      std::size_t pick = w.size(), last = w.size();
      for (std::size_t j = 0; j < w.size(); ++j) {
        if (taken[j] || w[j] == 0.0) continue;
        last = j;
        acc += w[j];
        if (u < acc) {
          pick = j;
          break;
        }
      }
      if (pick == w.size()) pick = last;  // rounding at the upper end
      taken[pick] = 1;
      r.trace.push_back(w[pick]);
      r.indices.push_back(positive[pick]);
      const double removed = w[pick];
      w[pick] = 0.0;
      total -= removed;
      if (total < 1e-9 * removed) reweight();
    }
  }
  for (std::size_t i = r.indices.size(), z = 0;
       static_cast<int>(i) < take; ++i, ++z) {
    const std::size_t j = z + rng.below(zero.size() - z);
    std::swap(zero[z], zero[j]);
    r.indices.push_back(zero[z]);
    r.trace.push_back(0.0);
  }
  return r;
}

SelectionResult select_coreset(const FeatureMatrix& pool,
                               const FeatureMatrix& anchors, int k,
                               std::span<const char> available) {
  check_k(k);
  check_features(pool, anchors);
  std::vector<int> c = candidates_of(pool.rows, available);
  SelectionResult r;
  r.strategy = "coreset";
  r.exhausted = k > static_cast<int>(c.size());
  std::vector<double> dmin(c.size(), std::numeric_limits<double>::infinity());
  for (std::size_t j = 0; j < c.size(); ++j) {
    for (int a = 0; a < anchors.rows; ++a) {
      dmin[j] = std::min(dmin[j], squared_distance(pool.row(c[j]), anchors.row(a)));
    }
  }
  std::vector<char> chosen(c.size(), 0);
  const int take = std::min<int>(k, c.size());
  for (int s = 0; s < take; ++s) {
    std::size_t best = c.size();
    for (std::size_t j = 0; j < c.size(); ++j) {
      if (!chosen[j] && (best == c.size() || dmin[j] > dmin[best])) best = j;
    }
    chosen[best] = 1;
    r.indices.push_back(c[best]);
    r.trace.push_back(std::sqrt(dmin[best]));
    for (std::size_t j = 0; j < c.size(); ++j) {
      if (!chosen[j]) {
        dmin[j] = std::min(dmin[j], squared_distance(pool.row(c[j]),
                                                     pool.row(c[best])));
      }
    }
  }
  return r;
}

SelectionResult select_lcmd(const FeatureMatrix& pool,
                            const FeatureMatrix& anchors, int k,
                            std::span<const char> available) {
  check_k(k);
  check_features(pool, anchors);
  std::vector<int> c = candidates_of(pool.rows, available);
  SelectionResult r;
  r.strategy = "lcmd";
  r.exhausted = k > static_cast<int>(c.size());
  // Nearest center (index into anchors, then selected points) per candidate.
  std::vector<int> center(c.size(), 0);
  std::vector<double> dist(c.size(), std::numeric_limits<double>::infinity());
  for (std::size_t j = 0; j < c.size(); ++j) {
    for (int a = 0; a < anchors.rows; ++a) {
      const double d = squared_distance(pool.row(c[j]), anchors.row(a));
      if (d < dist[j]) {
        dist[j] = d;
        center[j] = a;
      }
    }
  }
  std::vector<char> chosen(c.size(), 0);
  const int take = std::min<int>(k, c.size());
  for (int s = 0; s < take; ++s) {
    const int n_centers = anchors.rows + s;
    std::vector<double> mass(n_centers, 0.0);
    std::vector<int> members(n_centers, 0);
    for (std::size_t j = 0; j < c.size(); ++j) {
      if (chosen[j]) continue;
      mass[center[j]] += dist[j];
      ++members[center[j]];
    }
    int heaviest = -1;
    for (int q = 0; q < n_centers; ++q) {
      if (members[q] > 0 && (heaviest < 0 || mass[q] > mass[heaviest])) {
        heaviest = q;
      }
    }
    std::size_t best = c.size();
    for (std::size_t j = 0; j < c.size(); ++j) {
      if (chosen[j] || center[j] != heaviest) continue;
      if (best == c.size() || dist[j] > dist[best]) best = j;
    }
    chosen[best] = 1;
    r.indices.push_back(c[best]);
    r.trace.push_back(mass[heaviest]);
    const int new_center = n_centers - (detail::lcmd_off_by_one ? 1 : 0);
    for (std::size_t j = 0; j < c.size(); ++j) {
      if (chosen[j]) continue;
      const double d = squared_distance(pool.row(c[j]), pool.row(c[best]));
      if (d < dist[j]) {
        dist[j] = d;
        center[j] = new_center;
      }
    }
  }
  return r;
}

double bait_default_lambda(const FeatureMatrix& pool,
                           std::span<const char> available) {
  const std::vector<int> c = candidates_of(pool.rows, available);
  if (c.empty() || pool.cols == 0) return 1.0;
  double trace = 0.0;
  for (int i : c) {
    for (double v : pool.row(i)) trace += v * v;
  }
  const double lambda =
      1e-2 * trace / (static_cast<double>(pool.cols) * c.size());
  return lambda > 0.0 ? lambda : 1.0;
}

SelectionResult select_bait(const FeatureMatrix& pool,
                            const FeatureMatrix& train, int k,
                            double reg_lambda,
                            std::span<const char> available) {
  check_k(k);
  if (train.rows > 0 && train.cols != pool.cols) {
    throw std::invalid_argument("pool and train feature dimensions differ");
  }
  std::vector<int> c = candidates_of(pool.rows, available);
  const double lambda =
      reg_lambda > 0.0 ? reg_lambda : bait_default_lambda(pool, available);
  const int p = pool.cols;
  const int n = static_cast<int>(c.size());
  RowMat x(n, p);
  for (int j = 0; j < n; ++j) {
    x.row(j) = Eigen::Map<const Eigen::RowVectorXd>(pool.row(c[j]).data(), p);
  }
  const RowMat b = x.transpose() * x;
  RowMat a = RowMat::Identity(p, p) * lambda;
  if (train.rows > 0) {
    Eigen::Map<const RowMat> t(train.data.data(), train.rows, p);
    a.noalias() += t.transpose() * t;
  }
  Eigen::LLT<RowMat> llt(a);
  if (llt.info() != Eigen::Success) {
    throw std::runtime_error("BAIT: regularized design matrix is not positive "
                             "definite");
  }
  RowMat pinv = llt.solve(RowMat::Identity(p, p));
  pinv = 0.5 * (pinv + pinv.transpose());

  SelectionResult r;
  r.strategy = "bait";
  r.exhausted = k > n;
  // q_x = x^T P x, r_x = x^T P B P x
  const RowMat xp = x * pinv;
  const RowMat pbp = pinv * b * pinv;
  Eigen::VectorXd q = (xp.array() * x.array()).rowwise().sum();
  Eigen::VectorXd rr = ((x * pbp).array() * x.array()).rowwise().sum();
  double objective = (pinv * b).trace();
  std::vector<char> chosen(n, 0);
  const int take = std::min(k, n);
  for (int s = 0; s < take; ++s) {
    int best = -1;
    double best_gain = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < n; ++j) {
      if (chosen[j]) continue;
      const double gain = rr[j] / (1.0 + q[j]);
      if (gain > best_gain) {
        best_gain = gain;
        best = j;
      }
    }
    chosen[best] = 1;
    r.indices.push_back(c[best]);
    const double cq = q[best];
    const Eigen::VectorXd g = pinv * x.row(best).transpose();
    const Eigen::VectorXd h = pinv * (b * g);
    const double gbg = g.dot(b * g);
    objective -= gbg / (1.0 + cq);
    r.trace.push_back(objective);
    const Eigen::VectorXd gx = x * g;
    const Eigen::VectorXd hx = x * h;
    const double inv = 1.0 / (1.0 + cq);
    for (int j = 0; j < n; ++j) {
      q[j] -= gx[j] * gx[j] * inv;
      rr[j] += -2.0 * gx[j] * hx[j] * inv + gx[j] * gx[j] * gbg * inv * inv;
    }
    pinv -= g * g.transpose() * inv;
  }
  return r;
}

}  // namespace alpde
