// goal: command-line driver for data generation, training, sweeps,
// diagnostics and the theorem harness.
//
// Exit codes: 0 success, 1 verification failure, 2 usage or input error,
// 3 numerical abort.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "CLI11.hpp"
#include "goal/data.hpp"
#include "goal/diagnostics.hpp"
#include "goal/errors.hpp"
#include "goal/model.hpp"
#include "goal/serialize.hpp"
#include "goal/theoremlab.hpp"
#include "goal/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitViolation = 1;
constexpr int kExitUsage = 2;
constexpr int kExitNumerical = 3;

/// Sections of a config file. Every field has the default of the
/// corresponding library type.
struct CliConfig {
  goal::SyntheticSpec data;
  goal::TrainConfig train;
  goal::HarnessConfig harness;
  int verbosity = 0;
};

CliConfig read_config(const std::string& path) {
  CliConfig cfg;
  if (path.empty()) return cfg;
  std::ifstream in(path);
  if (!in) throw goal::ParseError("cannot read config " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw goal::ParseError(path + ": " + e.what());
  }
  goal::require_known_keys(j, {"data", "train", "go", "harness", "verbosity"}, "config");
  if (j.contains("data")) goal::from_json(j.at("data"), cfg.data);
  if (j.contains("train")) goal::from_json(j.at("train"), cfg.train);
  if (j.contains("go")) {
    goal::GoConfig go = cfg.train.go();
    goal::from_json(j.at("go"), go);
    cfg.train.lambda_tb = go.lambda_tb;
    cfg.train.lambda_db = go.lambda_db;
    cfg.train.alpha = go.alpha;
    cfg.train.rel_tol = go.rel_tol;
  }
  if (j.contains("harness")) goal::from_json(j.at("harness"), cfg.harness);
  if (j.contains("verbosity")) cfg.verbosity = j.at("verbosity").get<int>();
  return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw goal::ParseError("cannot write " + path.string());
  out << text;
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

std::vector<double> parse_grid(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    while (used < item.size() && std::isspace(static_cast<unsigned char>(item[used]))) ++used;
    if (item.empty() || used != item.size() || !std::isfinite(v) || v < 0.0) {
      throw goal::SpecError("grid entry '" + item + "' is not a finite non-negative number");
    }
    out.push_back(v);
  }
  if (out.empty()) throw goal::SpecError("grid is empty");
  return out;
}

/// Flag overrides shared by train and sweep; unset flags leave the config alone.
struct TrainFlags {
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> t_warm;
  std::optional<std::size_t> t_adapt;
  std::optional<double> lr;
  std::optional<double> lambda_tb;
  std::optional<double> lambda_db;
  std::optional<double> lambda_t;
  std::optional<double> tau;
  std::optional<double> alpha;
  std::optional<std::size_t> batch_per_class;

  void add(CLI::App& app) {
    app.add_option("--seed", seed, "Training seed");
    app.add_option("--t-warm", t_warm, "Warm-up epochs");
    app.add_option("--t-adapt", t_adapt, "GOAL epochs");
    app.add_option("--lr", lr, "Learning rate");
    app.add_option("--lambda-tb", lambda_tb, "Transferability weight");
    app.add_option("--lambda-db", lambda_db, "Discriminability weight");
    app.add_option("--lambda-t", lambda_t, "Target entropy weight");
    app.add_option("--tau", tau, "Pseudo-label confidence threshold");
    app.add_option("--alpha", alpha, "Spectral-ball radius of the geometric terms");
    app.add_option("--batch-per-class", batch_per_class,
                   "Sized batches with this many columns per (class, domain); default full batch");
  }

  void apply(goal::TrainConfig& c) const {
    if (seed) c.seed = *seed;
    if (t_warm) c.t_warm = *t_warm;
    if (t_adapt) c.t_adapt = *t_adapt;
    if (lr) c.lr = *lr;
    if (lambda_tb) c.lambda_tb = *lambda_tb;
    if (lambda_db) c.lambda_db = *lambda_db;
    if (lambda_t) c.lambda_t = *lambda_t;
    if (tau) c.tau = *tau;
    if (alpha) c.alpha = *alpha;
    if (batch_per_class) {
      c.batch.mode = goal::BatchSpec::Mode::sized;
      c.batch.per_class = *batch_per_class;
    }
  }
};

json resolved(const CliConfig& c) {
  return json{{"data", c.data}, {"train", c.train}, {"harness", c.harness}, {"verbosity", c.verbosity}};
}

// ---------------------------------------------------------------------------

struct GenArgs {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> k;
  std::optional<std::size_t> dim;
  std::optional<std::size_t> per_class;
  std::optional<double> center_scale;
  std::optional<double> noise;
  std::optional<double> rotation_deg;
  std::optional<double> translation;
};

int cmd_gen_data(const GenArgs& a) {
  CliConfig cfg = read_config(a.config);
  if (a.seed) cfg.data.seed = *a.seed;
  if (a.k) cfg.data.k = *a.k;
  if (a.dim) cfg.data.ambient_dim = *a.dim;
  if (a.per_class) cfg.data.per_class = *a.per_class;
  if (a.center_scale) cfg.data.center_scale = *a.center_scale;
  if (a.noise) cfg.data.noise = *a.noise;
  if (a.rotation_deg) cfg.data.rotation_rad = *a.rotation_deg * 3.14159265358979323846 / 180.0;
  if (a.translation) cfg.data.translation = *a.translation;
  const goal::DatasetBundle bundle = goal::generate_synthetic(cfg.data);
  goal::save_bundle(bundle, a.out);
  write_json(fs::path(a.out) / "resolved_config.json", resolved(cfg));
  std::printf("wrote %s: k=%zu D=%zu n_source=%zu n_target=%zu seed=%llu\n", a.out.c_str(), bundle.k,
              bundle.ambient_dim(), bundle.x_source.cols(), bundle.x_target.cols(),
              static_cast<unsigned long long>(cfg.data.seed));
  return kExitOk;
}

struct TrainArgs {
  std::string config;
  std::string data;
  std::string out;
  TrainFlags flags;
};

int cmd_train(const TrainArgs& a) {
  CliConfig cfg = read_config(a.config);
  a.flags.apply(cfg.train);
  cfg.train.validate();
  const goal::DatasetBundle bundle = goal::load_bundle(a.data);
  fs::create_directories(a.out);
  write_json(fs::path(a.out) / "resolved_config.json", resolved(cfg));

  goal::TrainResult res = goal::train(bundle, cfg.train);
  goal::save_checkpoint(res.params, fs::path(a.out) / "checkpoint.json");
  res.report.checkpoint = "checkpoint.json";
  write_json(fs::path(a.out) / "report.json", res.report);

  if (cfg.verbosity > 0) {
    for (const auto& e : res.report.epochs) {
      std::fprintf(stderr, "%s %zu L_E^s=%.4f L_TB=%.4f L_DB=%.4f sel=%.3f\n", e.stage.c_str(), e.epoch,
                   e.loss_source, e.loss_tb, e.loss_db, e.selection_rate);
    }
  }
  std::printf("source accuracy %.4f\n", res.report.source_accuracy);
  if (res.report.target_accuracy) {
    std::printf("target accuracy %.4f\n", *res.report.target_accuracy);
  } else {
    std::printf("target accuracy n/a (bundle has no target labels)\n");
  }
  return kExitOk;
}

struct SweepArgs {
  std::string config;
  std::string data;
  std::string out;
  std::string grid = "0,0.25,0.5,1,2,2.414213562373095,5,10,50";
  std::size_t jobs = 1;
  TrainFlags flags;
};

int cmd_sweep(const SweepArgs& a) {
  CliConfig cfg = read_config(a.config);
  a.flags.apply(cfg.train);
  cfg.train.validate();
  const std::vector<double> grid = parse_grid(a.grid);
  if (a.jobs == 0) throw goal::SpecError("--jobs must be at least 1");
  const goal::DatasetBundle bundle = goal::load_bundle(a.data);
  fs::create_directories(a.out);
  json r = resolved(cfg);
  r["grid"] = grid;
  write_json(fs::path(a.out) / "resolved_config.json", r);

  const auto rows = goal::lambda_sweep(bundle, cfg.train, grid, a.jobs);
  write_text(fs::path(a.out) / "sweep.csv", goal::sweep_csv(rows));
  std::size_t failed = 0;
  for (const auto& row : rows) {
    if (row.error) {
      ++failed;
      std::printf("lambda %-10g failed: %s\n", row.lambda, row.error->c_str());
    } else {
      std::printf("lambda %-10g target accuracy %s\n", row.lambda,
                  row.target_accuracy ? std::to_string(*row.target_accuracy).c_str() : "n/a");
    }
  }
  return failed == rows.size() ? kExitNumerical : kExitOk;
}

struct DiagnoseArgs {
  std::string data;
  std::string checkpoint;
  std::string out;
  double rel_tol = goal::kAngleRelTol;
};

int cmd_diagnose(const DiagnoseArgs& a) {
  const goal::DatasetBundle bundle = goal::load_bundle(a.data);
  const goal::MlpParams params = goal::load_checkpoint(a.checkpoint);
  if (params.input_dim() != bundle.ambient_dim() || params.classes() != bundle.k) {
    throw goal::SpecError("checkpoint shape (D=" + std::to_string(params.input_dim()) + ", k=" +
                          std::to_string(params.classes()) + ") does not match the bundle");
  }
  const goal::DiagnosticsReport rep = goal::diagnose(params, bundle, a.rel_tol);
  fs::create_directories(a.out);
  write_json(fs::path(a.out) / "diagnostics.json", rep);
  write_text(fs::path(a.out) / "heatmap.csv", goal::heatmap_csv(rep.pairwise_cos_matrix));
  write_json(fs::path(a.out) / "resolved_config.json",
             json{{"data", a.data}, {"checkpoint", a.checkpoint}, {"rel_tol", a.rel_tol}});
  std::printf("inter %.4f intra %.4f discriminant %.4f p-angle %.4f c-angle %.4f\n", rep.inter_scatter,
              rep.intra_scatter, rep.discriminant, rep.mean_p_angle_cos, rep.mean_c_angle_cos);
  return kExitOk;
}

struct VerifyArgs {
  std::string config;
  std::string out;
  std::string grid;
  std::string seeds;
  std::optional<std::size_t> trials;
  std::optional<std::size_t> t3_trials;
  std::optional<std::size_t> rank_trials;
  bool force_violation = false;
};

int cmd_verify(const VerifyArgs& a) {
  CliConfig cfg = read_config(a.config);
  goal::HarnessConfig& h = cfg.harness;
  if (!a.grid.empty()) h.lambda_grid = parse_grid(a.grid);
  if (!a.seeds.empty()) {
    h.seeds.clear();
    for (double s : parse_grid(a.seeds)) {
      if (s != std::floor(s)) throw goal::SpecError("seeds must be integers");
      h.seeds.push_back(static_cast<std::uint64_t>(s));
    }
  }
  if (a.trials) h.theorem12_trials = *a.trials;
  if (a.t3_trials) h.theorem3_trials = *a.t3_trials;
  if (a.rank_trials) h.rank_trials = *a.rank_trials;
  h.force_violation = h.force_violation || a.force_violation;
  h.validate();

  const auto reports = goal::run_harness(h);
  bool ok = true;
  for (const auto& r : reports) {
    const bool pass = r.passed();
    ok = ok && pass;
    const std::string d = r.d ? " d=" + std::to_string(*r.d) : "";
    std::printf("%-16s seed %-4llu trials %-7zu violations %-4zu worst slack %-11.3e worst residual %.3e %s\n",
                (r.theorem + d).c_str(), static_cast<unsigned long long>(r.seed), r.trials, r.violations,
                r.worst_slack + 0.0, r.worst_residual(), pass ? "PASS" : "FAIL");
  }
  if (!a.out.empty()) {
    fs::create_directories(a.out);
    write_json(fs::path(a.out) / "trial_reports.json", reports);
    write_json(fs::path(a.out) / "resolved_config.json", resolved(cfg));
  }
  return ok ? kExitOk : kExitViolation;
}

template <class F>
int guarded(F&& f) {
  try {
    return f();
  } catch (const goal::TrainingAbort& e) {
    std::fprintf(stderr, "training aborted: %s\n", e.what());
    return kExitNumerical;
  } catch (const goal::NumericalError& e) {
    std::fprintf(stderr, "numerical error: %s\n", e.what());
    return kExitNumerical;
  } catch (const goal::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const json::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const fs::filesystem_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Geometry-oriented ability learning: data, training, diagnostics, theorem checks"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* g = app.add_subcommand("gen-data", "Generate a synthetic two-domain dataset");
  g->add_option("--config", gen.config, "JSON config file");
  g->add_option("--out", gen.out, "Output directory")->required();
  g->add_option("--seed", gen.seed, "Generator seed");
  g->add_option("--k", gen.k, "Number of classes");
  g->add_option("--dim", gen.dim, "Ambient dimension D");
  g->add_option("--per-class", gen.per_class, "Samples per class and domain");
  g->add_option("--center-scale", gen.center_scale, "Norm of the class centers");
  g->add_option("--noise", gen.noise, "Per-coordinate noise standard deviation");
  g->add_option("--rotation-deg", gen.rotation_deg, "Domain-shift rotation in degrees");
  g->add_option("--translation", gen.translation, "Domain-shift translation as a fraction of center scale");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Warm-up and GOAL training on a dataset");
  t->add_option("--config", tr.config, "JSON config file");
  t->add_option("--data", tr.data, "Dataset directory")->required();
  t->add_option("--out", tr.out, "Output directory")->required();
  tr.flags.add(*t);

  SweepArgs sw;
  auto* s = app.add_subcommand("sweep", "Train once per lambda = lambda_TB / lambda_DB");
  s->add_option("--config", sw.config, "JSON config file");
  s->add_option("--data", sw.data, "Dataset directory")->required();
  s->add_option("--out", sw.out, "Output directory")->required();
  s->add_option("--grid", sw.grid, "Comma-separated lambda values")->capture_default_str();
  s->add_option("--jobs", sw.jobs, "Concurrent runs")->capture_default_str();
  sw.flags.add(*s);

  DiagnoseArgs dg;
  auto* d = app.add_subcommand("diagnose", "Geometry measures of a trained checkpoint");
  d->add_option("--data", dg.data, "Dataset directory")->required();
  d->add_option("--checkpoint", dg.checkpoint, "Checkpoint file")->required();
  d->add_option("--out", dg.out, "Output directory")->required();
  d->add_option("--rel-tol", dg.rel_tol, "Dominant-subspace cutoff relative to the top singular value")
      ->capture_default_str();

  VerifyArgs vf;
  auto* v = app.add_subcommand("verify", "Randomized and constructive checks of the bounds");
  v->add_option("--config", vf.config, "JSON config file");
  v->add_option("--out", vf.out, "Directory for trial_reports.json");
  v->add_option("--grid", vf.grid, "Comma-separated lambda values for Theorem 3");
  v->add_option("--seeds", vf.seeds, "Comma-separated master seeds");
  v->add_option("--trials", vf.trials, "Trials per seed for Theorems 1 and 2");
  v->add_option("--t3-trials", vf.t3_trials, "Trials per lambda per seed for Theorem 3");
  v->add_option("--rank-trials", vf.rank_trials, "Trials per seed for the rank bounds");
  v->add_flag("--force-violation", vf.force_violation,
              "Self-test: check Theorem 1 against half its bound, which must fail");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  if (g->parsed()) return guarded([&] { return cmd_gen_data(gen); });
  if (t->parsed()) return guarded([&] { return cmd_train(tr); });
  if (s->parsed()) return guarded([&] { return cmd_sweep(sw); });
  if (d->parsed()) return guarded([&] { return cmd_diagnose(dg); });
  if (v->parsed()) return guarded([&] { return cmd_verify(vf); });
  return kExitUsage;
}
