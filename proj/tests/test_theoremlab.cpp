#include <cmath>

#include <gtest/gtest.h>

#include "goal/errors.hpp"
#include "goal/objectives.hpp"
#include "goal/theoremlab.hpp"

namespace goal {
namespace {

constexpr double kSqrt2 = 1.4142135623730951;

const Witness* find_witness(const TrialReport& r, const std::string& prefix) {
  for (const auto& w : r.witnesses) {
    if (w.name.rfind(prefix, 0) == 0) return &w;
  }
  return nullptr;
}

TEST(TrialSeed, DeterministicAndSpread) {
  EXPECT_EQ(trial_seed(3, 7), trial_seed(3, 7));
  EXPECT_NE(trial_seed(3, 7), trial_seed(3, 8));
  EXPECT_NE(trial_seed(3, 7), trial_seed(4, 7));
}

TEST(RandomBallMatrix, SpectralNormInsideBall) {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 200; ++t) {
    const Mat m = random_ball_matrix(4, 6, 2.0, rng);
    const double s = spectral_norm(m);
    EXPECT_GE(s, 0.4 - 1e-12);
    EXPECT_LE(s, 2.0 + 1e-12);
  }
}

TEST(RankBounds, WitnessesAndRandomTrials) {
  const TrialReport r = verify_rank_bounds(500, RankDims{}, 0);
  EXPECT_EQ(r.violations, 0u);
  EXPECT_EQ(r.trials, 500u);
  const Witness* disjoint = find_witness(r, "disjoint");
  ASSERT_NE(disjoint, nullptr);
  EXPECT_EQ(disjoint->value, 4.0);
  const Witness* nested = find_witness(r, "nested");
  ASSERT_NE(nested, nullptr);
  EXPECT_EQ(nested->value, 3.0);
  EXPECT_TRUE(r.passed());
}

TEST(Theorem1, EqualityWitnessAttainsTheBound) {
  const TrialReport r = verify_theorem1(200, 1.0, 2, 5);
  EXPECT_EQ(r.violations, 0u);
  const Witness* eq = find_witness(r, "A = B");
  ASSERT_NE(eq, nullptr);
  EXPECT_NEAR(eq->value, 4.0 - 2.0 * kSqrt2, 1e-12);
  EXPECT_LE(eq->residual, 1e-6);
  const Witness* orth = find_witness(r, "A orthogonal");
  ASSERT_NE(orth, nullptr);
  EXPECT_NEAR(orth->value, 0.0, 1e-12);
  EXPECT_GE(r.worst_slack, -1e-8);
  EXPECT_TRUE(r.passed());
}

TEST(Theorem1, ForcedViolationIsDetected) {
  const TrialReport r = verify_theorem1(100, 1.0, 3, 5, true);
  EXPECT_TRUE(r.forced);
  EXPECT_GT(r.violations, 0u);
  EXPECT_FALSE(r.passed());
}

TEST(Theorem1, AllDimensions) {
  for (std::size_t d = 1; d <= 6; ++d) {
    const TrialReport r = verify_theorem1(300, 1.5, d, 100 + d);
    EXPECT_EQ(r.violations, 0u) << "d = " << d;
    EXPECT_TRUE(r.passed()) << "d = " << d;
  }
}

TEST(Theorem2, Witnesses) {
  const TrialReport r = verify_theorem2(500, 2);
  EXPECT_EQ(r.violations, 0u);
  const Witness* orth = find_witness(r, "A on e1");
  ASSERT_NE(orth, nullptr);
  EXPECT_NEAR(orth->value, 0.0, 1e-12);
  const Witness* same = find_witness(r, "B = A");
  ASSERT_NE(same, nullptr);
  EXPECT_NEAR(same->value, 2.0 * 2.0 - kSqrt2 * 2.0, 1e-12);
  EXPECT_TRUE(r.passed());
}

TEST(Theorem3, BalanceWitnessAttainsTheBound) {
  const double grid[] = {0.0, 1.0, kBalanceLimit, 5.0};
  const TrialReport r = verify_theorem3(200, 1.0, 2, 2, grid, 3);
  EXPECT_EQ(r.violations, 0u);
  ASSERT_EQ(r.per_lambda.size(), 4u);
  EXPECT_EQ(r.per_lambda[0].regime, "discriminability-only");
  EXPECT_EQ(r.per_lambda[3].regime, "transferability-dominant");
  // λ = 1, α = 1, d = 2: bound (√2 − 2)·2.
  EXPECT_NEAR(r.per_lambda[1].bound, (kSqrt2 - 2.0) * 2.0, 1e-12);
  const Witness* w0 = find_witness(r, "class-private frames, lambda = 0");
  ASSERT_NE(w0, nullptr);
  EXPECT_NEAR(w0->value, 0.0, 1e-9);
  const Witness* w1 = find_witness(r, "class-private frames, lambda = 1");
  ASSERT_NE(w1, nullptr);
  EXPECT_LE(w1->residual, 1e-6);
  for (const auto& lr : r.per_lambda) {
    EXPECT_EQ(lr.violations, 0u);
    EXPECT_GE(lr.worst_slack, -1e-6);
  }
  EXPECT_TRUE(r.passed());
}

TEST(Theorem3, DominantRegimeRandomTrials) {
  const double grid[] = {5.0};
  const TrialReport r = verify_theorem3(2000, 1.0, 4, 3, grid, 11);
  EXPECT_EQ(r.per_lambda.at(0).violations, 0u);
  EXPECT_EQ(r.per_lambda.at(0).trials, 2000u);
}

TEST(Theorem3, RejectsInvalidInput) {
  const double grid[] = {1.0};
  EXPECT_THROW(verify_theorem3(10, 1.0, 2, 3, grid, 0), PreconditionError);
  EXPECT_THROW(verify_theorem3(10, 1.0, 4, 1, grid, 0), PreconditionError);
  const double bad[] = {-1.0};
  EXPECT_THROW(verify_theorem3(10, 1.0, 4, 2, bad, 0), PreconditionError);
}

TEST(Harness, SmallRunIsDeterministicAndClean) {
  HarnessConfig c;
  c.rank_trials = 50;
  c.theorem12_trials = 60;
  c.theorem3_trials = 20;
  c.seeds = {0, 1};
  const auto a = run_harness(c);
  const auto b = run_harness(c);
  ASSERT_EQ(a.size(), b.size());
  ASSERT_EQ(a.size(), 2u * (1 + 6 + 1 + 1));
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].theorem, b[i].theorem);
    EXPECT_EQ(a[i].worst_slack, b[i].worst_slack);
    EXPECT_TRUE(a[i].passed()) << a[i].theorem;
  }
  c.force_violation = true;
  bool any_failed = false;
  for (const auto& r : run_harness(c)) any_failed = any_failed || !r.passed();
  EXPECT_TRUE(any_failed);
  c.k = 1;
  EXPECT_THROW(c.validate(), PreconditionError);
}

}  // namespace
}  // namespace goal
