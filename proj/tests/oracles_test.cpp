#include "alpde/oracles.hpp"

#include <gtest/gtest.h>

#include "alpde/selection.hpp"

namespace alpde {
namespace {

void expect_all_pass(std::uint64_t seed) {
  const auto outcomes = oracles::run_all(seed);
  EXPECT_GE(outcomes.size(), 20u);
  for (const auto& o : outcomes) {
    EXPECT_TRUE(o.pass) << o.name << " measured " << o.measured
                        << " tolerance " << o.tolerance << " " << o.detail;
  }
}

TEST(OracleSuiteTest, AllPass) { expect_all_pass(0); }

TEST(OracleSuiteTest, AllPassWithAnotherSeed) { expect_all_pass(12345); }

TEST(OracleSuiteTest, CoversCriteriaOneToEight) {
  const auto outcomes = oracles::run_all(1);
  for (int c = 1; c <= 8; ++c) {
    int n = 0;
    for (const auto& o : outcomes) n += o.criterion == c;
    EXPECT_GT(n, 0) << "criterion " << c;
  }
}

TEST(OracleSuiteTest, LcmdMutationIsCaught) {
  EXPECT_TRUE(oracles::check_lcmd_equivalence(3).pass);
  detail::lcmd_off_by_one = true;
  const auto mutated = oracles::check_lcmd_equivalence(3);
  detail::lcmd_off_by_one = false;
  EXPECT_FALSE(mutated.pass);
  EXPECT_LT(mutated.measured, mutated.tolerance);
}

}  // namespace
}  // namespace alpde
