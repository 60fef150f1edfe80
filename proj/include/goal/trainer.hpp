#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "goal/data.hpp"
#include "goal/model.hpp"
#include "goal/objectives.hpp"

namespace goal {

struct TrainConfig {
  std::size_t t_warm = 100;
  std::size_t t_adapt = 2400;
  double lr = 1e-3;
  double lambda_tb = 1.0;
  double lambda_db = 1.0;
  double lambda_t = 0.1;
  double tau = 0.8;
  BatchSpec batch;
  std::size_t refresh_period = 1;
  std::uint64_t seed = 0;
  std::vector<std::size_t> hidden = {32};
  std::size_t embed_dim = 6;
  double rel_tol = kDefaultRelTol;
  /// A class enters the transferability term only when both of its domain
  /// blocks have at least this many columns.
  std::size_t min_tb_cols = 2;
  /// Evaluate the geometric terms on domain blocks rescaled to spectral norm
  /// alpha (go_terms_in_ball). When off, the raw embedding is used.
  bool spectral_ball = true;
  double alpha = 20.0;

  void validate() const;
  GoConfig go() const;
};

struct EpochRecord {
  std::string stage;  // "warmup" or "goal"
  std::size_t epoch = 0;
  double loss_source = 0.0;
  double loss_target = 0.0;
  double loss_tb = 0.0;
  double loss_db = 0.0;
  double loss_go = 0.0;
  double loss_total = 0.0;
  /// Largest spectral norm of the raw domain embedding matrices this epoch.
  double alpha = 0.0;
  /// L_GO/λ_DB minus go_lower_bound (goal stage, λ_DB > 0), at the configured
  /// α with spectral_ball and at the measured α without. Summed over batches
  /// like the losses, so the bound is summed too.
  std::optional<double> bound_slack;
  double selection_rate = 0.0;
  std::size_t tb_classes_skipped = 0;
  std::optional<double> selection_accuracy;
  std::optional<double> target_accuracy;
};

struct RunReport {
  TrainConfig config;
  std::vector<EpochRecord> epochs;
  std::optional<std::string> checkpoint;
  double source_accuracy = 0.0;
  std::optional<double> target_accuracy;
};

struct PseudoLabels {
  std::vector<int> labels;
  std::vector<bool> mask;

  double selection_rate() const;
  std::size_t selected() const;
};

/// Column-wise argmax (ties to the lowest class) and confidence selection
/// max prob > τ.
PseudoLabels assign_pseudo_labels(const Mat& probs, double tau);

struct TrainingState {
  MlpParams params;
  OptimizerState optimizer;
  std::mt19937_64 rng;
  std::size_t epoch = 0;
  std::optional<PseudoLabels> pseudo;  // latest assignment of the goal stage
};

TrainingState init_training(const TrainingView& view, const TrainConfig& cfg);

/// Called after every epoch with the updated parameters, so callers holding
/// ground truth can fill accuracy fields. Training code never sees it.
using EpochObserver =
    std::function<void(const MlpParams&, const PseudoLabels*, EpochRecord&)>;

/// Minimizes L_E^s + λ_DB·L_DB(source only) − λ_TB·L_TB(domain level) for
/// t_warm epochs.
void warm_up_stage(TrainingState& state, const TrainingView& view, const TrainConfig& cfg,
                   RunReport& report, const EpochObserver& observer = {});

/// Minimizes L_E^s + λ_t·L_E^t + λ_DB·L_DB − λ_TB·L_TB over pseudo-labeled
/// class partitions for t_adapt epochs.
void goal_stage(TrainingState& state, const TrainingView& view, const TrainConfig& cfg,
                RunReport& report, const EpochObserver& observer = {});

double evaluate(const MlpParams& params, const Mat& features, std::span<const int> labels);

struct TrainResult {
  MlpParams params;
  RunReport report;
};

/// Warm-up then GOAL stage. Ground-truth target labels, when the bundle has
/// them, are used only to score epochs.
TrainResult train(const DatasetBundle& bundle, const TrainConfig& cfg);

}  // namespace goal
