#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "goal/matrix.hpp"

namespace goal {

struct DenseLayer {
  Mat weight;                // out × in
  std::vector<double> bias;  // out

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

/// Transformation g (stack of dense layers, rectifier on hidden layers,
/// identity on the embedding layer) followed by the linear classifier h.
struct MlpParams {
  std::vector<DenseLayer> g_layers;
  Mat h_weight;                // k × d
  std::vector<double> h_bias;  // k

  std::size_t input_dim() const;
  std::size_t embed_dim() const;
  std::size_t classes() const;

  /// Throws DimensionError when the layer chain D → … → d → k is broken and
  /// PreconditionError on non-finite parameters.
  void validate() const;

  /// Zero-valued parameters with the same shapes.
  MlpParams zeros_like() const;

  friend bool operator==(const MlpParams&, const MlpParams&) = default;
};

struct Architecture {
  std::size_t input_dim = 20;
  std::vector<std::size_t> hidden = {32};
  std::size_t embed_dim = 6;
  std::size_t classes = 3;
};

/// Uniform fan-in initialization: every weight and bias of a layer with
/// fan-in m is drawn from U(−1/√m, 1/√m).
MlpParams init_params(const Architecture& arch, std::uint64_t seed);

/// Named views over every parameter buffer, in a fixed order.
struct TensorView {
  std::string name;
  std::vector<std::size_t> shape;
  std::span<double> values;
};
std::vector<TensorView> tensors(MlpParams& p);
std::vector<std::span<const double>> tensor_values(const MlpParams& p);

struct ForwardTrace {
  std::vector<Mat> pre;   // pre-activation of each g layer
  std::vector<Mat> act;   // act[0] = input, act[l+1] = output of g layer l
  Mat logits;             // k × n
  Mat probs;              // k × n, softmax columns

  const Mat& input() const { return act.front(); }
  const Mat& z() const { return act.back(); }
};

ForwardTrace forward(const MlpParams& params, const Mat& x);

/// Embedding only, without building a trace.
Mat embed(const MlpParams& params, const Mat& x);

/// Column-wise softmax with max subtraction.
Mat softmax(const Mat& logits);

/// Which trace columns carry which task term.
struct TaskLayout {
  std::vector<std::size_t> source_cols;
  std::vector<int> source_labels;  // aligned with source_cols
  std::vector<std::size_t> target_cols;
};

/// Lower clamp applied to probabilities inside logarithms.
inline constexpr double kLogFloor = 1e-12;

/// Σ_j −log Ŷ_{y_j, j} over the source columns.
double loss_source_ce(const ForwardTrace& trace, const TaskLayout& layout);
/// Same loss against an explicit one-hot matrix (k × n_s).
double loss_source_ce(const ForwardTrace& trace, const Mat& y_onehot,
                      std::span<const std::size_t> source_cols);
/// Σ_j −Σ_i Ŷ_ij log Ŷ_ij over the target columns.
double loss_target_entropy(const ForwardTrace& trace, std::span<const std::size_t> target_cols);

/// Gradients of L_E^s + λ_t·L_E^t with `go_grad` injected as an extra
/// upstream gradient on the embedding. The classifier receives no part of
/// `go_grad`. An empty `go_grad` means zero.
MlpParams backward(const MlpParams& params, const ForwardTrace& trace, const TaskLayout& layout,
                   const Mat& go_grad, double lambda_t);

struct OptimizerState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t step = 0;
  MlpParams m;
  MlpParams v;
};

OptimizerState make_optimizer(const MlpParams& like, double lr);

/// One bias-corrected Adam update in place.
void adam_step(MlpParams& params, const MlpParams& grads, OptimizerState& state);

/// Index of the largest probability per column, ties to the lowest class.
std::vector<int> predict(const MlpParams& params, const Mat& x);

// Checkpoints: JSON {"format": "goal-mlp", "version": 1, "tensors": [...]}
// with one {"name", "shape", "data"} record per tensor in tensors() order.
inline constexpr int kCheckpointVersion = 1;
void save_checkpoint(const MlpParams& params, const std::filesystem::path& path);
MlpParams load_checkpoint(const std::filesystem::path& path);

}  // namespace goal
