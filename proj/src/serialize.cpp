#include "goal/serialize.hpp"

#include <algorithm>
#include <charconv>
#include <sstream>
#include <string>

#include "goal/errors.hpp"

namespace goal {

using nlohmann::json;

namespace {

template <class T>
void read_opt(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw SpecError(std::string("key '") + key + "': " + e.what());
  }
}

template <class T>
void put_opt(json& j, const char* key, const std::optional<T>& v) {
  if (v) {
    j[key] = *v;
  } else {
    j[key] = nullptr;
  }
}

std::string num(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

}  // namespace

void require_known_keys(const json& j, std::initializer_list<const char*> allowed,
                        const char* what) {
  if (!j.is_object()) throw SpecError(std::string(what) + ": expected a JSON object");
  for (const auto& [key, value] : j.items()) {
    bool known = false;
    for (const char* a : allowed) known = known || key == a;
    if (!known) throw SpecError(std::string(what) + ": unknown key '" + key + "'");
  }
}

// SyntheticSpec ---------------------------------------------------------------

void to_json(json& j, const SyntheticSpec& s) {
  j = json{{"k", s.k},
           {"ambient_dim", s.ambient_dim},
           {"per_class", s.per_class},
           {"center_scale", s.center_scale},
           {"noise", s.noise},
           {"rotation_rad", s.rotation_rad},
           {"translation", s.translation},
           {"scaling", s.scaling},
           {"shift_in_center_span", s.shift_in_center_span},
           {"seed", s.seed}};
}

void from_json(const json& j, SyntheticSpec& s) {
  require_known_keys(j,
                     {"k", "ambient_dim", "per_class", "center_scale", "noise", "rotation_rad",
                      "translation", "scaling", "shift_in_center_span", "seed"},
                     "synthetic spec");
  read_opt(j, "k", s.k);
  read_opt(j, "ambient_dim", s.ambient_dim);
  read_opt(j, "per_class", s.per_class);
  read_opt(j, "center_scale", s.center_scale);
  read_opt(j, "noise", s.noise);
  read_opt(j, "rotation_rad", s.rotation_rad);
  read_opt(j, "translation", s.translation);
  read_opt(j, "scaling", s.scaling);
  read_opt(j, "shift_in_center_span", s.shift_in_center_span);
  read_opt(j, "seed", s.seed);
}

// BatchSpec -------------------------------------------------------------------

void to_json(json& j, const BatchSpec& s) {
  j = json{{"mode", s.mode == BatchSpec::Mode::full ? "full" : "sized"},
           {"per_class", s.per_class}};
}

void from_json(const json& j, BatchSpec& s) {
  require_known_keys(j, {"mode", "per_class"}, "batch");
  if (j.contains("mode")) {
    const auto mode = j.at("mode").get<std::string>();
    if (mode == "full") {
      s.mode = BatchSpec::Mode::full;
    } else if (mode == "sized") {
      s.mode = BatchSpec::Mode::sized;
    } else {
      throw SpecError("batch: mode must be \"full\" or \"sized\", got \"" + mode + "\"");
    }
  }
  read_opt(j, "per_class", s.per_class);
}

// GoConfig --------------------------------------------------------------------

void to_json(json& j, const GoConfig& c) {
  j = json{{"lambda_tb", c.lambda_tb},
           {"lambda_db", c.lambda_db},
           {"alpha", c.alpha},
           {"rel_tol", c.rel_tol}};
}

void from_json(const json& j, GoConfig& c) {
  require_known_keys(j, {"lambda_tb", "lambda_db", "alpha", "rel_tol"}, "go config");
  read_opt(j, "lambda_tb", c.lambda_tb);
  read_opt(j, "lambda_db", c.lambda_db);
  read_opt(j, "alpha", c.alpha);
  read_opt(j, "rel_tol", c.rel_tol);
}

// TrainConfig -----------------------------------------------------------------

void to_json(json& j, const TrainConfig& c) {
  j = json{{"t_warm", c.t_warm},
           {"t_adapt", c.t_adapt},
           {"lr", c.lr},
           {"lambda_tb", c.lambda_tb},
           {"lambda_db", c.lambda_db},
           {"lambda_t", c.lambda_t},
           {"tau", c.tau},
           {"batch", c.batch},
           {"refresh_period", c.refresh_period},
           {"seed", c.seed},
           {"hidden", c.hidden},
           {"embed_dim", c.embed_dim},
           {"rel_tol", c.rel_tol},
           {"min_tb_cols", c.min_tb_cols},
           {"spectral_ball", c.spectral_ball},
           {"alpha", c.alpha}};
}

void from_json(const json& j, TrainConfig& c) {
  require_known_keys(j,
                     {"t_warm", "t_adapt", "lr", "lambda_tb", "lambda_db", "lambda_t", "tau",
                      "batch", "refresh_period", "seed", "hidden", "embed_dim", "rel_tol",
                      "min_tb_cols", "spectral_ball", "alpha"},
                     "train config");
  read_opt(j, "t_warm", c.t_warm);
  read_opt(j, "t_adapt", c.t_adapt);
  read_opt(j, "lr", c.lr);
  read_opt(j, "lambda_tb", c.lambda_tb);
  read_opt(j, "lambda_db", c.lambda_db);
  read_opt(j, "lambda_t", c.lambda_t);
  read_opt(j, "tau", c.tau);
  if (j.contains("batch")) from_json(j.at("batch"), c.batch);
  read_opt(j, "refresh_period", c.refresh_period);
  read_opt(j, "seed", c.seed);
  read_opt(j, "hidden", c.hidden);
  read_opt(j, "embed_dim", c.embed_dim);
  read_opt(j, "rel_tol", c.rel_tol);
  read_opt(j, "min_tb_cols", c.min_tb_cols);
  read_opt(j, "spectral_ball", c.spectral_ball);
  read_opt(j, "alpha", c.alpha);
}

// Reports ---------------------------------------------------------------------

void to_json(json& j, const EpochRecord& r) {
  j = json{{"stage", r.stage},
           {"epoch", r.epoch},
           {"loss_source", r.loss_source},
           {"loss_target", r.loss_target},
           {"loss_tb", r.loss_tb},
           {"loss_db", r.loss_db},
           {"loss_go", r.loss_go},
           {"loss_total", r.loss_total},
           {"alpha", r.alpha},
           {"selection_rate", r.selection_rate},
           {"tb_classes_skipped", r.tb_classes_skipped}};
  put_opt(j, "bound_slack", r.bound_slack);
  put_opt(j, "selection_accuracy", r.selection_accuracy);
  put_opt(j, "target_accuracy", r.target_accuracy);
}

void to_json(json& j, const RunReport& r) {
  j = json{{"config", r.config}, {"epochs", r.epochs}, {"source_accuracy", r.source_accuracy}};
  put_opt(j, "checkpoint", r.checkpoint);
  put_opt(j, "target_accuracy", r.target_accuracy);
}

// Diagnostics -----------------------------------------------------------------

void to_json(json& j, const DominantSimilarity& d) {
  j = json::object();
  put_opt(j, "correct", d.correct);
  put_opt(j, "incorrect", d.incorrect);
  j["excluded"] = d.excluded;
}

void to_json(json& j, const DiagnosticsReport& r) {
  json matrix = json::array();
  for (const auto& row : r.pairwise_cos_matrix) {
    json out = json::array();
    for (const auto& v : row) out.push_back(v ? json(*v) : json(nullptr));
    matrix.push_back(out);
  }
  j = json{{"inter_scatter", r.inter_scatter},
           {"intra_scatter", r.intra_scatter},
           {"discriminant", r.discriminant},
           {"mean_p_angle_cos", r.mean_p_angle_cos},
           {"mean_c_angle_cos", r.mean_c_angle_cos},
           {"pairwise_cos_matrix", matrix},
           {"dominant_similarity", r.dominant_similarity},
           {"target_labels", r.target_labels},
           {"rel_tol", r.rel_tol}};
}

void to_json(json& j, const SweepRow& r) {
  j = json{{"lambda", r.lambda},
           {"source_accuracy", r.source_accuracy},
           {"final_l_tb", r.final_l_tb},
           {"final_l_db", r.final_l_db}};
  put_opt(j, "target_accuracy", r.target_accuracy);
  put_opt(j, "error", r.error);
}

std::string heatmap_csv(const AngleMatrix& m) {
  std::ostringstream out;
  out << "source_class";
  for (std::size_t j = 0; j < m.size(); ++j) out << ",target_" << j;
  out << '\n';
  for (std::size_t i = 0; i < m.size(); ++i) {
    out << i;
    for (const auto& v : m[i]) {
      out << ',';
      if (v) out << num(*v);
    }
    out << '\n';
  }
  return out.str();
}

std::string sweep_csv(std::span<const SweepRow> rows) {
  std::ostringstream out;
  out << "lambda,target_accuracy,source_accuracy,final_l_tb,final_l_db,error\n";
  for (const auto& r : rows) {
    out << num(r.lambda) << ',';
    if (r.target_accuracy) out << num(*r.target_accuracy);
    out << ',' << num(r.source_accuracy) << ',' << num(r.final_l_tb) << ',' << num(r.final_l_db) << ',';
    if (r.error) {
      std::string e = *r.error;
      std::replace(e.begin(), e.end(), '"', '\'');
      out << '"' << e << '"';
    }
    out << '\n';
  }
  return out.str();
}

// Theorem harness -------------------------------------------------------------

void to_json(json& j, const Witness& w) {
  j = json{{"name", w.name}, {"value", w.value}, {"expected", w.expected}, {"residual", w.residual}};
}

void to_json(json& j, const LambdaResult& r) {
  j = json{{"lambda", r.lambda},     {"regime", r.regime},         {"bound", r.bound},
           {"trials", r.trials},     {"violations", r.violations}, {"worst_slack", r.worst_slack}};
}

void to_json(json& j, const TrialReport& r) {
  j = json{{"theorem", r.theorem},
           {"seed", r.seed},
           {"trials", r.trials},
           {"violations", r.violations},
           {"worst_slack", r.worst_slack},
           {"tolerance", r.tolerance},
           {"witnesses", r.witnesses},
           {"worst_residual", r.worst_residual()},
           {"forced", r.forced}};
  put_opt(j, "alpha", r.alpha);
  put_opt(j, "d", r.d);
  put_opt(j, "k", r.k);
  if (!r.per_lambda.empty()) j["per_lambda"] = r.per_lambda;
}

void to_json(json& j, const HarnessConfig& c) {
  j = json{{"rank_trials", c.rank_trials},
           {"theorem12_trials", c.theorem12_trials},
           {"theorem3_trials", c.theorem3_trials},
           {"alpha", c.alpha},
           {"d_max", c.d_max},
           {"k", c.k},
           {"lambda_grid", c.lambda_grid},
           {"seeds", c.seeds},
           {"force_violation", c.force_violation}};
}

void from_json(const json& j, HarnessConfig& c) {
  require_known_keys(j,
                     {"rank_trials", "theorem12_trials", "theorem3_trials", "alpha", "d_max", "k",
                      "lambda_grid", "seeds", "force_violation"},
                     "harness config");
  read_opt(j, "rank_trials", c.rank_trials);
  read_opt(j, "theorem12_trials", c.theorem12_trials);
  read_opt(j, "theorem3_trials", c.theorem3_trials);
  read_opt(j, "alpha", c.alpha);
  read_opt(j, "d_max", c.d_max);
  read_opt(j, "k", c.k);
  read_opt(j, "lambda_grid", c.lambda_grid);
  read_opt(j, "seeds", c.seeds);
  read_opt(j, "force_violation", c.force_violation);
}

}  // namespace goal
