#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "alpde/acquisition.hpp"
#include "alpde/core.hpp"
#include "alpde/generators.hpp"

namespace alpde {

enum class Strategy { kRandom, kLhs, kTopK, kSbal, kCoreSet, kLcmd, kBait };

std::string strategy_name(Strategy s);
Strategy parse_strategy(const std::string& s);
bool uses_scores(Strategy s);
bool uses_features(Strategy s);

struct SelectionResult {
  std::vector<int> indices;          // pool indices in pick order
  std::vector<SimInput> generated;   // LHS only
  std::vector<double> trace;         // per pick: min distance, mass, objective
  std::string strategy;
  std::uint64_t seed = 0;
  bool exhausted = false;            // fewer than k candidates were available
};

// `available` masks candidates (1 = selectable); empty means all. Every
// selector breaks ties by the lowest pool index.

SelectionResult select_random(int pool_size, int k, std::uint64_t seed,
                              std::span<const char> available = {});

// One stratum per sample in each dimension of the concatenated unit vector
// (PDE dims, then IC dims); strata permuted independently per dimension.
SelectionResult select_lhs(int n, const TaskSpec& spec, std::uint64_t seed);
// The unit-cube design itself: (n, dims) row-major.
std::vector<double> latin_hypercube(int n, int dims, std::uint64_t seed);

SelectionResult select_topk(std::span<const double> scores, int k,
                            std::span<const char> available = {});

// Sequential sampling without replacement with probability proportional to
// score^m. For m > 0, zero scores are drawn (uniformly) only after every
// positive score is taken. m >= kSbalTopKLimit is evaluated as its limit,
// Top-K.
inline constexpr double kSbalTopKLimit = 1e3;
SelectionResult select_sbal(std::span<const double> scores, int k, double m,
                            std::uint64_t seed,
                            std::span<const char> available = {});

// Greedy max-min distance to anchors; chosen points join the anchors.
SelectionResult select_coreset(const FeatureMatrix& pool,
                               const FeatureMatrix& anchors, int k,
                               std::span<const char> available = {});

// Largest cluster, maximum distance: centers are the anchors followed by the
// points selected so far.
SelectionResult select_lcmd(const FeatureMatrix& pool,
                            const FeatureMatrix& anchors, int k,
                            std::span<const char> available = {});

// Forward greedy minimization of Tr[(lambda I + sum phi phi^T)^-1 B] with
// B = sum over available pool rows of phi phi^T. reg_lambda <= 0 selects
// 1e-2 * trace(B) / (p * n_pool).
SelectionResult select_bait(const FeatureMatrix& pool,
                            const FeatureMatrix& train, int k,
                            double reg_lambda,
                            std::span<const char> available = {});
namespace detail {
// Mutation hook for the oracle self-check: assigns points captured by a new
// LCMD center to the previous center instead.
inline bool lcmd_off_by_one = false;
}  // namespace detail

double bait_default_lambda(const FeatureMatrix& pool,
                           std::span<const char> available = {});

}  // namespace alpde
