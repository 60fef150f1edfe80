#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "goal/data.hpp"
#include "goal/matrix.hpp"
#include "goal/model.hpp"
#include "goal/objectives.hpp"
#include "goal/trainer.hpp"

namespace goal {

/// Subspaces compared by the angle measures keep the left singular vectors
/// with σ_j > rel_tol·σ₀. Learned embeddings are full rank in the numerical
/// sense, so the cutoff is relative to the leading singular value rather than
/// to machine precision.
inline constexpr double kAngleRelTol = 0.1;

/// Basis of the dominant subspace of m under the cutoff above. A zero matrix
/// gives a rows × 0 basis.
Mat dominant_basis(const Mat& m, double rel_tol = kAngleRelTol);

struct LdaMeasures {
  double inter = 0.0;  // tr(S_b) / n
  double intra = 0.0;  // tr(S_w) / n
  double discriminant = 0.0;
};

/// Trace-normalized scatter about class means and the grand mean. Labels
/// must be non-negative; a single class gives inter = 0.
LdaMeasures lda_measures(const Mat& z, std::span<const int> labels);

/// Entry (i, j) is the mean principal-angle cosine between the dominant
/// subspaces of Z_i^s and Z_j^t, or empty when either block has no columns.
using AngleMatrix = std::vector<std::vector<std::optional<double>>>;
AngleMatrix principal_angle_matrix(const PartitionedBatch& batch, double rel_tol = kAngleRelTol);

/// Mean of the present diagonal entries of principal_angle_matrix. Throws
/// PartitionError when no class has both domains.
double classwise_domain_angle(const PartitionedBatch& batch, double rel_tol = kAngleRelTol);

/// Mean principal-angle cosine between the whole source and target blocks.
double domain_angle(const PartitionedBatch& batch, double rel_tol = kAngleRelTol);

struct DominantSimilarity {
  std::optional<double> correct;
  std::optional<double> incorrect;
  std::size_t excluded = 0;  // zero-norm columns left out
};

/// Σ_j (σ_j / Σ_l σ_l) · mean |cos(u_j, x)| over unit-normalized columns x of
/// each group.
DominantSimilarity dominant_direction_similarity(const Mat& z_class,
                                                 const std::vector<bool>& correct_mask);

struct DiagnosticsReport {
  double inter_scatter = 0.0;
  double intra_scatter = 0.0;
  double discriminant = 0.0;
  double mean_p_angle_cos = 0.0;
  double mean_c_angle_cos = 0.0;
  AngleMatrix pairwise_cos_matrix;
  std::vector<DominantSimilarity> dominant_similarity;  // per class
  std::string target_labels;  // "ground_truth" or "predicted"
  double rel_tol = kAngleRelTol;
};

/// Measures on the target embedding. Target classes come from ground truth
/// when the bundle has it, otherwise from predictions; dominant similarity
/// splits each predicted class into correct and incorrect columns and is
/// absent without ground truth.
DiagnosticsReport diagnose(const MlpParams& params, const DatasetBundle& bundle,
                           double rel_tol = kAngleRelTol);

struct SweepRow {
  double lambda = 0.0;
  std::optional<double> target_accuracy;
  double source_accuracy = 0.0;
  double final_l_tb = 0.0;
  double final_l_db = 0.0;
  std::optional<std::string> error;
};

/// One full train + evaluate per grid point with λ_TB = λ·λ_DB, on shared data
/// and seed. Up to `jobs` runs execute concurrently; rows keep grid order and
/// a failing run is reported in its row.
std::vector<SweepRow> lambda_sweep(const DatasetBundle& bundle, const TrainConfig& base,
                                   std::span<const double> grid, std::size_t jobs = 1);

}  // namespace goal
