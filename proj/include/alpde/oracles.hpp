#pragma once

// Independent reference computations used to check the implementation:
// dense loops, closed forms, brute-force greedy searches and statistical
// tests. Nothing here calls the routine it checks beyond its public entry
// point.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace alpde::oracles {

struct OracleOutcome {
  std::string name;
  bool pass = false;
  double measured = 0.0;
  double tolerance = 0.0;  // fixed before the measurement
  long sample_size = 0;
  std::string detail;
  int criterion = 0;  // acceptance criterion it backs; 0 = supporting check
};

// ---- statistics

// Kolmogorov-Smirnov distance of the samples to U[0, 1).
double ks_uniform_statistic(std::vector<double> samples);
// Asymptotic critical value sqrt(-ln(alpha / 2) / 2) / sqrt(n).
double ks_critical(std::size_t n, double alpha);
double chi_square_statistic(std::span<const long> counts,
                            std::span<const double> expected);
double chi_square_critical(int dof, double alpha);
// KL(p || q) over matching bins; zero-probability bins of p are skipped.
double kl_divergence(std::span<const double> p, std::span<const double> q);
// 1-Wasserstein distance between two empirical distributions.
double wasserstein1(std::vector<double> a, std::vector<double> b);
double pearson(std::span<const double> a, std::span<const double> b);

// ---- reference implementations

using Rows = std::vector<std::vector<double>>;

// Ensemble disagreement from a dense [member][t][x][c] tensor, t >= 1 only.
double dense_qbc(const std::vector<std::vector<std::vector<std::vector<double>>>>&
                     u,
                 bool absolute = false);

// Indices of the k largest scores among allowed entries, lowest index first
// on ties (full sort).
std::vector<int> topk_bruteforce(const std::vector<double>& scores, int k,
                                 const std::vector<char>& allowed = {});

// Greedy selections recomputing every distance from scratch at each step.
std::vector<int> coreset_bruteforce(const Rows& pool, const Rows& anchors,
                                    int k,
                                    const std::vector<char>& allowed = {});
std::vector<int> lcmd_bruteforce(const Rows& pool, const Rows& anchors, int k,
                                 const std::vector<char>& allowed = {});

// Tr[(lambda I + sum_{train} + sum_{chosen} phi phi^T)^-1 B] by explicit
// inversion, B summed over allowed pool rows.
double bait_objective_dense(const Rows& pool, const Rows& train,
                            const std::vector<int>& chosen, double lambda,
                            const std::vector<char>& allowed = {});
// Greedy search evaluating the dense objective for every candidate.
std::vector<int> bait_bruteforce(const Rows& pool, const Rows& train, int k,
                                 double lambda,
                                 const std::vector<char>& allowed = {});

// Analytic solution of u_t = beta u_xx for u0 = sin(2 pi m x / L).
std::vector<double> heat_mode(int n_x, double length, int mode, double beta,
                              double t);

// ---- suite

// Every oracle check, deterministic given the seed. Scratch files go under
// the system temporary directory and are removed afterwards.
std::vector<OracleOutcome> run_all(std::uint64_t seed);

// Individual checks, also used by the mutation self-test.
OracleOutcome check_lcmd_equivalence(std::uint64_t seed, int trials = 200);

}  // namespace alpde::oracles
