#include "goal/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "goal/errors.hpp"

namespace goal {

namespace {

TaskLayout layout_of(const PartitionedBatch& batch, std::span<const std::size_t> origin,
                     std::span<const int> y_source) {
  TaskLayout layout;
  for (std::size_t j : batch.domain_cols(Domain::source)) {
    layout.source_cols.push_back(j);
    layout.source_labels.push_back(y_source[origin[j]]);
  }
  const auto t = batch.domain_cols(Domain::target);
  layout.target_cols.assign(t.begin(), t.end());
  return layout;
}

void require_finite(const EpochRecord& r) {
  const double values[] = {r.loss_source, r.loss_target, r.loss_tb, r.loss_db, r.loss_go,
                           r.loss_total};
  if (std::all_of(std::begin(values), std::end(values), [](double v) { return std::isfinite(v); })) {
    return;
  }
  std::ostringstream msg;
  msg << "non-finite loss in " << r.stage << " epoch " << r.epoch << ": L_E^s=" << r.loss_source
      << " L_E^t=" << r.loss_target << " L_TB=" << r.loss_tb << " L_DB=" << r.loss_db
      << " L_GO=" << r.loss_go << " alpha=" << r.alpha;
  throw TrainingAbort(msg.str());
}

// Overflowed parameters show up here before any loss is formed, and the
// SVDs behind the geometric terms reject non-finite input.
void require_finite(const ForwardTrace& t, const char* stage, std::size_t epoch) {
  const auto finite = [](const Mat& m) {
    return std::all_of(m.data().begin(), m.data().end(), [](double v) { return std::isfinite(v); });
  };
  if (finite(t.z()) && finite(t.probs)) return;
  std::ostringstream msg;
  msg << "non-finite embedding or probabilities in " << stage << " epoch " << epoch;
  throw TrainingAbort(msg.str());
}

double domain_alpha(const PartitionedBatch& batch) {
  double a = 0.0;
  for (Domain d : {Domain::source, Domain::target}) {
    const auto cols = batch.domain_cols(d);
    if (!cols.empty()) a = std::max(a, spectral_norm(batch.block(cols)));
  }
  return a;
}

GoTerms geometric_terms(const PartitionedBatch& batch, const GoConfig& go, const TrainConfig& cfg,
                        std::span<const std::size_t> tb_classes) {
  return cfg.spectral_ball ? go_terms_in_ball(batch, go, tb_classes) : go_terms(batch, go, tb_classes);
}

}  // namespace

// ---------------------------------------------------------------------------

void TrainConfig::validate() const {
  if (!(tau > 0.0 && tau < 1.0)) throw SpecError("train config: tau must lie in (0, 1)");
  if (!(lambda_tb >= 0.0) || !(lambda_db >= 0.0) || !(lambda_t >= 0.0)) {
    throw SpecError("train config: lambdas must be non-negative");
  }
  if (!(lr >= 0.0)) throw SpecError("train config: lr must be non-negative");
  if (refresh_period == 0) throw SpecError("train config: refresh_period must be at least 1");
  if (embed_dim == 0) throw SpecError("train config: embed_dim must be at least 1");
  if (!(rel_tol > 0.0)) throw SpecError("train config: rel_tol must be positive");
  if (!(alpha > 0.0)) throw SpecError("train config: alpha must be positive");
  if (batch.mode == BatchSpec::Mode::sized && batch.per_class == 0) {
    throw SpecError("train config: batch per_class must be at least 1");
  }
}

GoConfig TrainConfig::go() const {
  GoConfig g;
  g.lambda_tb = lambda_tb;
  g.lambda_db = lambda_db;
  g.rel_tol = rel_tol;
  g.alpha = alpha;
  return g;
}

double PseudoLabels::selection_rate() const {
  return mask.empty() ? 0.0 : static_cast<double>(selected()) / static_cast<double>(mask.size());
}

std::size_t PseudoLabels::selected() const {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true));
}

PseudoLabels assign_pseudo_labels(const Mat& probs, double tau) {
  PseudoLabels out;
  out.labels.resize(probs.cols());
  out.mask.resize(probs.cols());
  for (std::size_t j = 0; j < probs.cols(); ++j) {
    auto c = probs.col(j);
    const auto best = std::max_element(c.begin(), c.end());
    out.labels[j] = static_cast<int>(best - c.begin());
    out.mask[j] = *best > tau;
  }
  return out;
}

TrainingState init_training(const TrainingView& view, const TrainConfig& cfg) {
  cfg.validate();
  Architecture arch;
  arch.input_dim = view.ambient_dim();
  arch.hidden = cfg.hidden;
  arch.embed_dim = cfg.embed_dim;
  arch.classes = view.k();
  TrainingState s;
  s.params = init_params(arch, cfg.seed);
  s.optimizer = make_optimizer(s.params, cfg.lr);
  // Separate stream for batch sampling so it never perturbs initialization.
  s.rng.seed(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  return s;
}

void warm_up_stage(TrainingState& state, const TrainingView& view, const TrainConfig& cfg,
                   RunReport& report, const EpochObserver& observer) {
  cfg.validate();
  const std::size_t n_t = view.x_target().cols();
  const std::vector<int> no_labels(n_t, kUnlabeled);
  const std::vector<bool> no_mask(n_t, false);
  const GoConfig go = cfg.go();

  GoConfig tb_only = go;
  tb_only.lambda_db = 0.0;
  GoConfig db_only = go;
  db_only.lambda_tb = 0.0;
  const std::size_t global_class[] = {0};

  for (std::size_t e = 0; e < cfg.t_warm; ++e) {
    EpochRecord rec;
    rec.stage = "warmup";
    rec.epoch = state.epoch;
    for (auto& ab : assemble_epoch(view, no_labels, no_mask, cfg.batch, state.rng)) {
      const ForwardTrace trace = forward(state.params, ab.batch.z());
      require_finite(trace, "warmup", state.epoch);
      const TaskLayout layout = layout_of(ab.batch, ab.origin, view.y_source());
      const Mat& z = trace.z();
      Mat go_grad(z.rows(), z.cols());

      // Domain-level transferability: one pseudo-class holding every column.
      const auto src = ab.batch.domain_cols(Domain::source);
      const bool both = !src.empty() && !ab.batch.domain_cols(Domain::target).empty();
      if (both) {
        PartitionedBatch global(z, {ab.batch.domains().begin(), ab.batch.domains().end()},
                                std::vector<int>(z.cols(), 0), 1);
        const GoTerms tb = geometric_terms(global, tb_only, cfg, global_class);
        rec.loss_tb += tb.l_tb;
        go_grad += tb.grad;
      }
      // Discriminability over the labeled source columns only.
      if (view.k() >= 2 && !src.empty()) {
        std::vector<std::size_t> src_cols(src.begin(), src.end());
        PartitionedBatch source(z.select_cols(src_cols),
                                std::vector<Domain>(src_cols.size(), Domain::source),
                                layout.source_labels, view.k());
        const GoTerms db = geometric_terms(source, db_only, cfg, {});
        rec.loss_db += db.l_db;
        scatter_add_cols(go_grad, db.grad, src_cols, 1.0);
      }
      rec.loss_source += loss_source_ce(trace, layout);
      rec.loss_target += loss_target_entropy(trace, layout.target_cols);
      rec.alpha = std::max(rec.alpha, domain_alpha(ab.batch.with_embedding(z)));

      const MlpParams grads = backward(state.params, trace, layout, go_grad, 0.0);
      adam_step(state.params, grads, state.optimizer);
    }
    rec.loss_go = go.lambda_db * rec.loss_db - go.lambda_tb * rec.loss_tb;
    rec.loss_total = rec.loss_source + rec.loss_go;
    require_finite(rec);
    if (observer) observer(state.params, nullptr, rec);
    report.epochs.push_back(rec);
    ++state.epoch;
  }
}

void goal_stage(TrainingState& state, const TrainingView& view, const TrainConfig& cfg,
                RunReport& report, const EpochObserver& observer) {
  cfg.validate();
  const GoConfig go = cfg.go();
  const std::size_t d = cfg.embed_dim;

  for (std::size_t e = 0; e < cfg.t_adapt; ++e) {
    if (e % cfg.refresh_period == 0 || !state.pseudo) {
      const ForwardTrace t = forward(state.params, view.x_target());
      require_finite(t, "goal", state.epoch);
      state.pseudo = assign_pseudo_labels(t.probs, cfg.tau);
    }
    const PseudoLabels& pl = *state.pseudo;
    if (pl.selected() == 0 && (go.lambda_tb != 0.0 || go.lambda_db != 0.0)) {
      std::ostringstream msg;
      msg << "goal epoch " << state.epoch << ": no target sample has confidence above tau = "
          << cfg.tau << "; every class is empty after selection, lower tau";
      throw TrainingAbort(msg.str());
    }

    EpochRecord rec;
    rec.stage = "goal";
    rec.epoch = state.epoch;
    rec.selection_rate = pl.selection_rate();
    const auto batches = assemble_epoch(view, pl.labels, pl.mask, cfg.batch, state.rng);
    for (const auto& ab : batches) {
      const ForwardTrace trace = forward(state.params, ab.batch.z());
      require_finite(trace, "goal", state.epoch);
      const TaskLayout layout = layout_of(ab.batch, ab.origin, view.y_source());
      const PartitionedBatch zb = ab.batch.with_embedding(trace.z());
      const auto tb_classes = tb_eligible_classes(zb, cfg.min_tb_cols);
      rec.tb_classes_skipped = std::max(rec.tb_classes_skipped, view.k() - tb_classes.size());

      const GoTerms terms = geometric_terms(zb, go, cfg, tb_classes);
      rec.loss_tb += terms.l_tb;
      rec.loss_db += terms.l_db;
      rec.loss_source += loss_source_ce(trace, layout);
      rec.loss_target += loss_target_entropy(trace, layout.target_cols);
      rec.alpha = std::max(rec.alpha, domain_alpha(zb));

      const MlpParams grads = backward(state.params, trace, layout, terms.grad, cfg.lambda_t);
      adam_step(state.params, grads, state.optimizer);
    }
    rec.loss_go = go.lambda_db * rec.loss_db - go.lambda_tb * rec.loss_tb;
    rec.loss_total = rec.loss_source + cfg.lambda_t * rec.loss_target + rec.loss_go;
    if (go.lambda_db > 0.0 && rec.alpha > 0.0) {
      const double a = cfg.spectral_ball ? cfg.alpha : rec.alpha;
      rec.bound_slack = rec.loss_go / go.lambda_db -
                        static_cast<double>(batches.size()) * go_lower_bound(go.lambda(), a, d, view.k());
    }
    require_finite(rec);
    if (observer) observer(state.params, &pl, rec);
    report.epochs.push_back(rec);
    ++state.epoch;
  }
}

double evaluate(const MlpParams& params, const Mat& features, std::span<const int> labels) {
  if (labels.size() != features.cols()) {
    throw DimensionError("evaluate: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(features.cols()) + " samples");
  }
  if (labels.empty()) return 0.0;
  const auto pred = predict(params, features);
  std::size_t hit = 0;
  for (std::size_t j = 0; j < pred.size(); ++j) hit += pred[j] == labels[j] ? 1 : 0;
  return static_cast<double>(hit) / static_cast<double>(labels.size());
}

TrainResult train(const DatasetBundle& bundle, const TrainConfig& cfg) {
  bundle.validate();
  cfg.validate();
  const TrainingView view = bundle.training_view();
  TrainingState state = init_training(view, cfg);
  RunReport report;
  report.config = cfg;

  EpochObserver observer;
  if (bundle.y_target_true) {
    const std::vector<int>& truth = *bundle.y_target_true;
    observer = [&](const MlpParams& params, const PseudoLabels* pl, EpochRecord& rec) {
      rec.target_accuracy = evaluate(params, bundle.x_target, truth);
      if (pl != nullptr && pl->selected() > 0) {
        std::size_t hit = 0;
        for (std::size_t j = 0; j < truth.size(); ++j) {
          if (pl->mask[j] && pl->labels[j] == truth[j]) ++hit;
        }
        rec.selection_accuracy = static_cast<double>(hit) / static_cast<double>(pl->selected());
      }
    };
  }

  try {
    warm_up_stage(state, view, cfg, report, observer);
    goal_stage(state, view, cfg, report, observer);
  } catch (const TrainingAbort& e) {
    throw TrainingAbort(std::string("train (seed ") + std::to_string(cfg.seed) + "): " + e.what());
  }

  report.source_accuracy = evaluate(state.params, bundle.x_source, bundle.y_source);
  if (bundle.y_target_true) {
    report.target_accuracy = evaluate(state.params, bundle.x_target, *bundle.y_target_true);
  }
  return {std::move(state.params), std::move(report)};
}

}  // namespace goal
