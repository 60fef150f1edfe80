#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "goal/matrix.hpp"
#include "goal/objectives.hpp"

namespace goal {

/// Recipe for a multi-domain Gaussian-cluster dataset. The target domain is
/// the source distribution pushed through x ↦ scaling·(R·x) + t, where R is a
/// rotation by `rotation_rad` inside a seeded random 2-plane and t is a
/// seeded random direction of length translation·center_scale.
///
/// With `shift_in_center_span` the rotation plane is drawn inside the span of
/// the class centers, where it moves samples across decision boundaries;
/// otherwise it is drawn from the whole ambient space. The translation
/// direction is always drawn from the whole ambient space, so part of the
/// shift lies outside every class subspace.
struct SyntheticSpec {
  std::size_t k = 3;
  std::size_t ambient_dim = 20;
  std::size_t per_class = 100;  // per class, per domain
  double center_scale = 4.0;
  double noise = 1.0;
  double rotation_rad = 0.5235987755982988;  // 30°
  double translation = 0.5;                  // fraction of center_scale
  double scaling = 1.0;
  bool shift_in_center_span = true;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Read-only slice of a bundle handed to training code. It has no access to
/// target ground truth.
class TrainingView {
 public:
  TrainingView(const Mat& x_source, std::span<const int> y_source, const Mat& x_target,
               std::size_t k)
      : x_source_(&x_source), y_source_(y_source), x_target_(&x_target), k_(k) {}

  const Mat& x_source() const noexcept { return *x_source_; }
  std::span<const int> y_source() const noexcept { return y_source_; }
  const Mat& x_target() const noexcept { return *x_target_; }
  std::size_t k() const noexcept { return k_; }
  std::size_t ambient_dim() const noexcept { return x_source_->rows(); }

 private:
  const Mat* x_source_;
  std::span<const int> y_source_;
  const Mat* x_target_;
  std::size_t k_;
};

struct DatasetBundle {
  Mat x_source;  // D × n_s
  std::vector<int> y_source;
  Mat x_target;  // D × n_t
  std::optional<std::vector<int>> y_target_true;  // evaluation only
  std::size_t k = 0;
  std::optional<SyntheticSpec> spec;  // provenance when generated

  std::size_t ambient_dim() const noexcept { return x_source.rows(); }
  TrainingView training_view() const { return {x_source, y_source, x_target, k}; }

  /// Throws SpecError when labels or shapes are inconsistent.
  void validate() const;
};

DatasetBundle generate_synthetic(const SyntheticSpec& spec);

// On-disk layout (a directory):
//   manifest.json   {"format": "goal-dataset", "version": 1, k, D, n_source,
//                    n_target, has_target_labels, spec?}
//   x_source.csv    header f0,…,f{D-1}; one sample per row
//   y_source.csv    header "label"; one integer per row
//   x_target.csv
//   y_target.csv    optional
inline constexpr int kDatasetVersion = 1;
void save_bundle(const DatasetBundle& bundle, const std::filesystem::path& dir);
DatasetBundle load_bundle(const std::filesystem::path& dir);

/// Reads a feature CSV (header f0,…; one sample per row) into a D × n matrix.
Mat read_feature_csv(const std::filesystem::path& path);
std::vector<int> read_label_csv(const std::filesystem::path& path);

struct BatchSpec {
  enum class Mode { full, sized };
  Mode mode = Mode::full;
  std::size_t per_class = 64;  // sized mode: columns per (class, domain) pool per batch
};

/// Raw features assembled into a partitioned batch, plus where each column
/// came from. Source columns precede target columns.
struct AssembledBatch {
  PartitionedBatch batch;           // z() holds the raw features (D × n)
  std::vector<std::size_t> origin;  // index into x_source or x_target
};

/// Every source column (ground-truth label) and every target column; target
/// columns with mask set carry their pseudo-label, the rest are unlabeled.
AssembledBatch assemble_batch(const TrainingView& view, std::span<const int> pseudo_labels,
                              const std::vector<bool>& selection_mask);

/// One epoch of batches. Full mode returns the single full batch. Sized mode
/// shuffles every (class, domain) pool and the unlabeled target pool, then
/// deals `per_class` columns from each pool into consecutive batches, so each
/// column appears exactly once per epoch.
std::vector<AssembledBatch> assemble_epoch(const TrainingView& view,
                                           std::span<const int> pseudo_labels,
                                           const std::vector<bool>& selection_mask,
                                           const BatchSpec& spec, std::mt19937_64& rng);

}  // namespace goal
