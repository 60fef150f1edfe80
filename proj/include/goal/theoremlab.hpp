#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "goal/matrix.hpp"

namespace goal {

/// A constructed case where a bound or identity should hold with equality.
struct Witness {
  std::string name;
  double value = 0.0;
  double expected = 0.0;
  double residual = 0.0;  // |value − expected|, or a one-sided defect
};

/// Random-trial statistics for one value of λ in the Theorem 3 sweep.
struct LambdaResult {
  double lambda = 0.0;
  std::string regime;
  double bound = 0.0;
  std::size_t trials = 0;
  std::size_t violations = 0;
  double worst_slack = 0.0;
};

struct TrialReport {
  std::string theorem;  // "rank_bounds", "theorem1", "theorem2", "theorem3"
  std::uint64_t seed = 0;
  std::size_t trials = 0;
  std::size_t violations = 0;
  /// Smallest slack (bound side minus value side) seen over random trials.
  double worst_slack = 0.0;
  double tolerance = 0.0;
  std::vector<Witness> witnesses;
  std::optional<double> alpha;
  std::optional<std::size_t> d;
  std::optional<std::size_t> k;
  std::vector<LambdaResult> per_lambda;
  bool forced = false;  // the self-test checked a deliberately wrong bound

  double worst_residual() const;
  /// No violations and every witness residual within `witness_tol`.
  bool passed(double witness_tol = 1e-6) const;
};

/// Deterministic per-trial seed derived from the master seed.
std::uint64_t trial_seed(std::uint64_t master, std::uint64_t trial);

/// Standard-normal rows × cols matrix rescaled to spectral norm α·u with
/// u ~ uniform(0.2, 1.0).
Mat random_ball_matrix(std::size_t rows, std::size_t cols, double alpha, std::mt19937_64& rng);

struct RankDims {
  std::size_t rows = 8;
  std::size_t max_rank = 4;
  std::size_t max_cols = 8;
};

/// max(r_A, r_B) ≤ rank([A, B]) ≤ r_A + r_B on random low-rank pairs whose
/// column spaces partly overlap, with disjoint and nested witnesses.
TrialReport verify_rank_bounds(std::size_t trials, const RankDims& dims, std::uint64_t seed);

/// ‖A‖_* + ‖B‖_* − ‖[A, B]‖_* ≤ (2 − √2)·α·d for d-row A, B in the spectral
/// ball of radius α. With `force_violation` the check uses half the bound,
/// which the equality witness must break.
TrialReport verify_theorem1(std::size_t trials, double alpha, std::size_t d, std::uint64_t seed,
                            bool force_violation = false);

/// ‖[A, B]‖_* ≤ ‖A‖_* + ‖B‖_*, with equality for orthogonal column spaces.
TrialReport verify_theorem2(std::size_t trials, std::uint64_t seed);

/// L_DB − λ·L_TB ≥ go_lower_bound(λ, α, d, k) over random labeled batches
/// whose domain matrices lie in the α spectral ball, for each λ in the grid.
/// The witness (class-private frames, identical domains) must attain the
/// bound for λ ∈ [0, 1 + √2]; it needs d ≥ k.
TrialReport verify_theorem3(std::size_t trials, double alpha, std::size_t d, std::size_t k,
                            std::span<const double> lambda_grid, std::uint64_t seed);

struct HarnessConfig {
  std::size_t rank_trials = 10000;
  std::size_t theorem12_trials = 100000;  // per seed, split evenly over d for Theorem 1
  std::size_t theorem3_trials = 10000;    // per λ per seed
  double alpha = 1.0;
  std::size_t d_max = 6;
  std::size_t k = 3;
  std::vector<double> lambda_grid = {0.0, 0.25, 0.5, 1.0, 2.0, 2.414213562373095, 5.0, 10.0, 50.0};
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
  bool force_violation = false;

  void validate() const;
};

std::vector<TrialReport> run_harness(const HarnessConfig& cfg);

}  // namespace goal
