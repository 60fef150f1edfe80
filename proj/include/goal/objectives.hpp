#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "goal/matrix.hpp"

namespace goal {

enum class Domain : unsigned char { source, target };

/// Marks a column that carries no class label (a target sample whose
/// pseudo-label was not selected).
inline constexpr int kUnlabeled = -1;

/// An embedding matrix whose columns are tagged with a domain and an optional
/// class label, together with the per-(class, domain) column index lists used
/// by every class-wise nuclear-norm term.
class PartitionedBatch {
 public:
  PartitionedBatch(Mat z, std::vector<Domain> domains, std::vector<int> labels, std::size_t k);

  const Mat& z() const noexcept { return z_; }
  std::size_t k() const noexcept { return k_; }
  std::size_t dim() const noexcept { return z_.rows(); }
  std::size_t size() const noexcept { return z_.cols(); }

  std::span<const Domain> domains() const noexcept { return domains_; }
  std::span<const int> labels() const noexcept { return labels_; }

  /// Columns of class i in one domain.
  std::span<const std::size_t> class_domain_cols(std::size_t i, Domain d) const;
  /// Columns of class i across both domains.
  std::span<const std::size_t> class_cols(std::size_t i) const { return class_cols_[i]; }
  std::span<const std::size_t> domain_cols(Domain d) const {
    return d == Domain::source ? source_cols_ : target_cols_;
  }
  std::span<const std::size_t> unlabeled_cols() const noexcept { return unlabeled_cols_; }

  Mat block(std::span<const std::size_t> cols) const { return z_.select_cols(cols); }

  /// Same partition over a different embedding of the same columns.
  PartitionedBatch with_embedding(Mat z) const;

 private:
  Mat z_;
  std::vector<Domain> domains_;
  std::vector<int> labels_;
  std::size_t k_;
  std::vector<std::vector<std::size_t>> class_source_;
  std::vector<std::vector<std::size_t>> class_target_;
  std::vector<std::vector<std::size_t>> class_cols_;
  std::vector<std::size_t> source_cols_;
  std::vector<std::size_t> target_cols_;
  std::vector<std::size_t> unlabeled_cols_;
};

enum class Regime { discriminability_only, balance, transferability_dominant };

const char* to_string(Regime r);

/// The co-regularization threshold separating balance from
/// transferability-dominant behaviour.
inline constexpr double kBalanceLimit = 2.414213562373095048801688724209698;  // 1 + √2

struct GoConfig {
  double lambda_tb = 1.0;
  double lambda_db = 1.0;
  double alpha = 1.0;
  double rel_tol = kDefaultRelTol;

  /// λ = λ_TB / λ_DB; +∞ when only the transferability term is active.
  double lambda() const;
  Regime regime() const;
  void validate() const;
};

Regime regime_of(double lambda);

// Rank criteria ------------------------------------------------------------

/// Σ_i rank(Z_i^s) + rank(Z_i^t) − rank(Z_i).
long rank_tb_criterion(const PartitionedBatch& batch, double rel_tol = kDefaultRelTol);
/// Σ_i rank(Z_i) − rank(Z). Z is every column of the batch, so the value is
/// guaranteed non-negative only when every column is labeled.
long rank_db_criterion(const PartitionedBatch& batch, double rel_tol = kDefaultRelTol);

// Nuclear-norm objectives --------------------------------------------------

/// Classes whose source and target blocks both have at least `min_cols`
/// columns; the transferability term is evaluated only over these.
std::vector<std::size_t> tb_eligible_classes(const PartitionedBatch& batch, std::size_t min_cols);

/// Σ_i ‖Z_i^s‖_* + ‖Z_i^t‖_* − ‖Z_i‖_* over all classes. Throws
/// PartitionError if a class lacks either domain.
double loss_tb(const PartitionedBatch& batch);
double loss_tb(const PartitionedBatch& batch, std::span<const std::size_t> classes);

/// Σ_i ‖Z_i‖_* − ‖Z‖_*. Unlabeled columns enter only through ‖Z‖_*.
double loss_db(const PartitionedBatch& batch);

/// λ_DB·L_DB − λ_TB·L_TB. A term whose weight is zero is not evaluated, so its
/// preconditions do not apply.
double loss_go(const PartitionedBatch& batch, const GoConfig& cfg);
double loss_go(const PartitionedBatch& batch, const GoConfig& cfg,
               std::span<const std::size_t> tb_classes);

/// U_r·V_rᵀ over the singular values above the rank threshold; an element of
/// the nuclear norm's subdifferential at m.
Mat grad_nuclear(const Mat& m, double rel_tol = kDefaultRelTol);

Mat grad_loss_go(const PartitionedBatch& batch, const GoConfig& cfg);
Mat grad_loss_go(const PartitionedBatch& batch, const GoConfig& cfg,
                 std::span<const std::size_t> tb_classes);

/// Values and gradient of the geometric objective from a single set of SVDs.
/// Both values are always evaluated; the gradient carries the λ weights.
/// Unlike loss_db, an empty class block is treated as contributing zero, which
/// is what sampled batches need.
struct GoTerms {
  double l_tb = 0.0;
  double l_db = 0.0;
  double l_go = 0.0;
  Mat grad;  // d × n, aligned with batch.z()
};

GoTerms go_terms(const PartitionedBatch& batch, const GoConfig& cfg,
                 std::span<const std::size_t> tb_classes);

/// go_terms on the batch with each domain block Z^s, Z^t rescaled to spectral
/// norm cfg.alpha, so the bounds' hypothesis holds exactly and the objective
/// cannot grow by inflating the embedding. The gradient is taken through the
/// rescaling Z^d ↦ α·Z^d / ‖Z^d‖_σ and is aligned with the unscaled batch.
/// A domain block with zero spectral norm throws NumericalError.
GoTerms go_terms_in_ball(const PartitionedBatch& batch, const GoConfig& cfg,
                         std::span<const std::size_t> tb_classes);

// Closed-form bounds -------------------------------------------------------

/// (2 − √2)·α·d: the largest value ‖A‖_* + ‖B‖_* − ‖[A, B]‖_* can take when
/// both spectral norms are at most α and d is the row dimension.
double tb_upper_bound(double alpha, std::size_t d);

/// Lower bound on L_GO / λ_DB as a function of λ, for embeddings whose
/// domain matrices lie in the spectral ball of radius α:
///   λ = 0            → 0
///   0 < λ ≤ 1 + √2   → (√2 − 2)·α·λ·d
///   λ > 1 + √2       → [((√2 − 2)·λ + √2)·√k − √2]·α·d
double go_lower_bound(double lambda, double alpha, std::size_t d, std::size_t k);

}  // namespace goal
