#include "goal/theoremlab.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "goal/errors.hpp"
#include "goal/objectives.hpp"

namespace goal {

namespace {

constexpr double kSqrt2 = 1.414213562373095048801688724209698;

Mat gaussian(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  std::normal_distribution<double> n01(0.0, 1.0);
  Mat m(rows, cols);
  for (std::size_t j = 0; j < cols; ++j) {
    for (std::size_t i = 0; i < rows; ++i) m(i, j) = n01(rng);
  }
  return m;
}

/// Orthonormal rows × cols frame (cols ≤ rows) from a Gaussian draw.
Mat random_frame(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  for (;;) {
    const Mat q = orthonormal_basis(gaussian(rows, cols, rng));
    if (q.cols() == cols) return q;
  }
}

std::size_t uniform_size(std::size_t lo, std::size_t hi, std::mt19937_64& rng) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

void record(TrialReport& r, double slack) {
  ++r.trials;
  r.worst_slack = r.trials == 1 ? slack : std::min(r.worst_slack, slack);
  if (slack < -r.tolerance) ++r.violations;
}

Witness witness(std::string name, double value, double expected) {
  return {std::move(name), value, expected, std::abs(value - expected)};
}

double tb_gap(const Mat& a, const Mat& b) {
  return nuclear_norm(a) + nuclear_norm(b) - nuclear_norm(concat_cols(a, b));
}

}  // namespace

double TrialReport::worst_residual() const {
  double w = 0.0;
  for (const auto& x : witnesses) w = std::max(w, x.residual);
  return w;
}

bool TrialReport::passed(double witness_tol) const {
  return violations == 0 && worst_residual() <= witness_tol;
}

std::uint64_t trial_seed(std::uint64_t master, std::uint64_t trial) {
  // splitmix64 finalizer over a golden-ratio stride
  std::uint64_t z = master + (trial + 1) * 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Mat random_ball_matrix(std::size_t rows, std::size_t cols, double alpha, std::mt19937_64& rng) {
  Mat m = gaussian(rows, cols, rng);
  const double target = alpha * std::uniform_real_distribution<double>(0.2, 1.0)(rng);
  const double s = spectral_norm(m);
  if (s > 0.0) m *= target / s;
  return m;
}

// ---------------------------------------------------------------------------

TrialReport verify_rank_bounds(std::size_t trials, const RankDims& dims, std::uint64_t seed) {
  if (trials == 0) throw PreconditionError("verify_rank_bounds: trials must be at least 1");
  if (dims.rows < 4 || dims.max_rank == 0 || dims.max_rank > dims.rows || dims.max_cols < dims.max_rank) {
    throw PreconditionError("verify_rank_bounds: need rows >= 4 and 1 <= max_rank <= min(rows, max_cols)");
  }
  TrialReport r;
  r.theorem = "rank_bounds";
  r.seed = seed;
  r.tolerance = 0.0;  // integer criterion
  const double rel_tol = 1e-10;

  for (std::size_t t = 0; t < trials; ++t) {
    std::mt19937_64 rng(trial_seed(seed, t));
    const std::size_t ra = uniform_size(1, dims.max_rank, rng);
    const std::size_t rb = uniform_size(1, dims.max_rank, rng);
    // B reuses `shared` of A's basis directions so all overlap levels occur.
    const std::size_t shared = uniform_size(0, std::min(ra, rb), rng);
    const Mat frame = random_frame(dims.rows, std::min(dims.rows, ra + rb - shared), rng);
    std::vector<std::size_t> a_idx(ra);
    std::vector<std::size_t> b_idx;
    for (std::size_t i = 0; i < ra; ++i) a_idx[i] = i;
    for (std::size_t i = 0; i < shared; ++i) b_idx.push_back(i);
    for (std::size_t i = ra; b_idx.size() < rb && i < frame.cols(); ++i) b_idx.push_back(i);
    const Mat ua = frame.select_cols(a_idx);
    const Mat ub = frame.select_cols(b_idx);
    const Mat a = matmul(ua, gaussian(ua.cols(), uniform_size(ra, dims.max_cols, rng), rng));
    const Mat b = matmul(ub, gaussian(ub.cols(), uniform_size(ub.cols(), dims.max_cols, rng), rng));
    const auto rank_a = static_cast<double>(numerical_rank(a, rel_tol));
    const auto rank_b = static_cast<double>(numerical_rank(b, rel_tol));
    const auto rank_ab = static_cast<double>(numerical_rank(concat_cols(a, b), rel_tol));
    record(r, std::min(rank_ab - std::max(rank_a, rank_b), rank_a + rank_b - rank_ab));
  }

  std::mt19937_64 rng(trial_seed(seed, trials));
  const Mat q = random_frame(dims.rows, 4, rng);
  const Mat a = matmul(q.select_cols(std::vector<std::size_t>{0, 1}), gaussian(2, 5, rng));
  const Mat b = matmul(q.select_cols(std::vector<std::size_t>{2, 3}), gaussian(2, 5, rng));
  r.witnesses.push_back(
      witness("disjoint bases, r_A = r_B = 2", static_cast<double>(numerical_rank(concat_cols(a, b), rel_tol)), 4.0));
  const Mat a3 = matmul(q.select_cols(std::vector<std::size_t>{0, 1, 2}), gaussian(3, 5, rng));
  const Mat b_nested = matmul(q.select_cols(std::vector<std::size_t>{0, 1}), gaussian(2, 4, rng));
  r.witnesses.push_back(witness("nested bases, U_B in U_A, r_A = 3",
                                static_cast<double>(numerical_rank(concat_cols(a3, b_nested), rel_tol)), 3.0));
  return r;
}

TrialReport verify_theorem1(std::size_t trials, double alpha, std::size_t d, std::uint64_t seed,
                            bool force_violation) {
  if (trials == 0) throw PreconditionError("verify_theorem1: trials must be at least 1");
  const double bound = tb_upper_bound(alpha, d) * (force_violation ? 0.5 : 1.0);
  TrialReport r;
  r.theorem = "theorem1";
  r.seed = seed;
  r.tolerance = 1e-8;
  r.alpha = alpha;
  r.d = d;
  r.forced = force_violation;

  for (std::size_t t = 0; t < trials; ++t) {
    std::mt19937_64 rng(trial_seed(seed, t));
    Mat a = random_ball_matrix(d, uniform_size(1, 2 * d + 2, rng), alpha, rng);
    Mat b;
    if (t % 2 == 0) {
      b = random_ball_matrix(d, uniform_size(1, 2 * d + 2, rng), alpha, rng);
    } else {
      // Near-equivalent pair: B is a perturbation of A, close to the extremal case.
      b = a + gaussian(d, a.cols(), rng) * (0.05 * alpha);
      const double s = spectral_norm(b);
      if (s > alpha) b *= alpha / s;
    }
    record(r, bound - tb_gap(a, b));
  }

  std::mt19937_64 rng(trial_seed(seed, trials));
  const Mat q = random_frame(d, d, rng) * alpha;
  const double value = tb_gap(q, q);
  r.witnesses.push_back(witness("A = B = alpha * orthonormal d-frame", value, bound));
  if (value > bound + r.tolerance) ++r.violations;
  const auto cosines = principal_angle_cosines(orthonormal_basis(q), orthonormal_basis(q));
  const double min_cos = *std::min_element(cosines.begin(), cosines.end());
  r.witnesses.push_back({"witness principal-angle cosines >= 1 - 1e-8", min_cos, 1.0,
                         std::max(0.0, (1.0 - 1e-8) - min_cos)});
  if (d >= 2) {
    const Mat e = random_frame(d, 2, rng) * alpha;
    const Mat a = e.select_cols(std::vector<std::size_t>{0});
    const Mat b = e.select_cols(std::vector<std::size_t>{1});
    r.witnesses.push_back(witness("A orthogonal to B", tb_gap(a, b), 0.0));
  }
  return r;
}

TrialReport verify_theorem2(std::size_t trials, std::uint64_t seed) {
  if (trials == 0) throw PreconditionError("verify_theorem2: trials must be at least 1");
  TrialReport r;
  r.theorem = "theorem2";
  r.seed = seed;
  r.tolerance = 1e-9;

  for (std::size_t t = 0; t < trials; ++t) {
    std::mt19937_64 rng(trial_seed(seed, t));
    const std::size_t rows = uniform_size(1, 8, rng);
    const Mat a = gaussian(rows, uniform_size(1, 8, rng), rng);
    const Mat b = gaussian(rows, uniform_size(1, 8, rng), rng);
    record(r, tb_gap(a, b));
    if (rows >= 2 && t % 10 == 0) {
      // Orthogonal column spaces: the gap must vanish.
      const std::size_t ra = uniform_size(1, rows - 1, rng);
      const std::size_t rb = uniform_size(1, rows - ra, rng);
      const Mat q = random_frame(rows, ra + rb, rng);
      std::vector<std::size_t> ia(ra);
      std::vector<std::size_t> ib(rb);
      for (std::size_t i = 0; i < ra; ++i) ia[i] = i;
      for (std::size_t i = 0; i < rb; ++i) ib[i] = ra + i;
      const Mat oa = matmul(q.select_cols(ia), gaussian(ra, uniform_size(1, 6, rng), rng));
      const Mat ob = matmul(q.select_cols(ib), gaussian(rb, uniform_size(1, 6, rng), rng));
      const double gap = tb_gap(oa, ob);
      const double defect = std::abs(gap) - 1e-8 * std::max(1.0, nuclear_norm(oa) + nuclear_norm(ob));
      if (defect > 0.0) ++r.violations;
      r.worst_slack = std::min(r.worst_slack, -std::max(0.0, defect));
    }
  }

  const Mat e1 = Mat::from_rows({{1.0}, {0.0}});
  const Mat e2 = Mat::from_rows({{0.0}, {1.0}});
  r.witnesses.push_back(witness("A on e1, B on e2", tb_gap(e1, e2), 0.0));
  const Mat id = Mat::identity(2);
  r.witnesses.push_back(witness("B = A = I_2", tb_gap(id, id), 4.0 - 2.0 * kSqrt2));
  return r;
}

TrialReport verify_theorem3(std::size_t trials, double alpha, std::size_t d, std::size_t k,
                            std::span<const double> lambda_grid, std::uint64_t seed) {
  if (trials == 0) throw PreconditionError("verify_theorem3: trials must be at least 1");
  if (lambda_grid.empty()) throw PreconditionError("verify_theorem3: empty lambda grid");
  for (double l : lambda_grid) {
    if (!(l >= 0.0) || !std::isfinite(l)) {
      throw PreconditionError("verify_theorem3: lambda values must be finite and non-negative");
    }
  }
  if (k < 2) throw PreconditionError("verify_theorem3: need k >= 2");
  if (d < k) {
    throw PreconditionError("verify_theorem3: the witness needs d >= k (class-private frames of total dimension d), got d = " +
                            std::to_string(d) + ", k = " + std::to_string(k));
  }
  TrialReport r;
  r.theorem = "theorem3";
  r.seed = seed;
  r.tolerance = 1e-6;
  r.alpha = alpha;
  r.d = d;
  r.k = k;

  // Witness: class i owns a private orthonormal frame of dimension d_i with
  // Σ d_i = d, and both domains equal α times that frame.
  std::mt19937_64 wrng(trial_seed(seed, std::numeric_limits<std::uint32_t>::max()));
  const Mat frame = random_frame(d, d, wrng);
  Mat ws;
  std::vector<int> wlabels;
  std::size_t next = 0;
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t di = d / k + (i < d % k ? 1 : 0);
    std::vector<std::size_t> idx(di);
    for (std::size_t c = 0; c < di; ++c) idx[c] = next++;
    ws = concat_cols(ws, frame.select_cols(idx) * alpha);
    wlabels.insert(wlabels.end(), di, static_cast<int>(i));
  }
  std::vector<Domain> wdomains(ws.cols(), Domain::source);
  wdomains.resize(2 * ws.cols(), Domain::target);
  std::vector<int> wl = wlabels;
  wl.insert(wl.end(), wlabels.begin(), wlabels.end());
  const PartitionedBatch witness_batch(concat_cols(ws, ws), wdomains, wl, k);
  const double w_db = loss_db(witness_batch);
  const double w_tb = loss_tb(witness_batch);

  for (std::size_t li = 0; li < lambda_grid.size(); ++li) {
    const double lambda = lambda_grid[li];
    LambdaResult lr;
    lr.lambda = lambda;
    lr.regime = to_string(regime_of(lambda));
    lr.bound = go_lower_bound(lambda, alpha, d, k);

    for (std::size_t t = 0; t < trials; ++t) {
      std::mt19937_64 rng(trial_seed(seed ^ trial_seed(li, 0), t));
      const std::size_t ns = uniform_size(k, 3 * k + 6, rng);
      const std::size_t nt = uniform_size(k, 3 * k + 6, rng);
      std::vector<int> ls(ns);
      std::vector<int> lt(nt);
      std::uniform_int_distribution<int> cls(0, static_cast<int>(k) - 1);
      for (std::size_t j = 0; j < ns; ++j) ls[j] = j < k ? static_cast<int>(j) : cls(rng);
      for (std::size_t j = 0; j < nt; ++j) lt[j] = j < k ? static_cast<int>(j) : cls(rng);
      Mat zs;
      Mat zt;
      switch (t % 3) {
        case 0:
          zs = random_ball_matrix(d, ns, alpha, rng);
          zt = random_ball_matrix(d, nt, alpha, rng);
          break;
        default: {
          // Structured draw: every class lives near its own random subspace in
          // both domains, the regime where both terms are close to extremal.
          std::vector<Mat> bases(k);
          for (auto& b : bases) b = random_frame(d, uniform_size(1, d, rng), rng);
          const double noise = t % 3 == 1 ? 0.0 : 0.1;
          auto draw = [&](const std::vector<int>& labels) {
            Mat z(d, labels.size());
            for (std::size_t j = 0; j < labels.size(); ++j) {
              const Mat& b = bases[static_cast<std::size_t>(labels[j])];
              const Mat c = matmul(b, gaussian(b.cols(), 1, rng)) + gaussian(d, 1, rng) * noise;
              for (std::size_t i = 0; i < d; ++i) z(i, j) = c(i, 0);
            }
            const double s = spectral_norm(z);
            if (s > 0.0) z *= alpha * std::uniform_real_distribution<double>(0.2, 1.0)(rng) / s;
            return z;
          };
          zs = draw(ls);
          zt = draw(lt);
        }
      }
      std::vector<Domain> domains(ns, Domain::source);
      domains.resize(ns + nt, Domain::target);
      std::vector<int> labels = ls;
      labels.insert(labels.end(), lt.begin(), lt.end());
      const PartitionedBatch batch(concat_cols(zs, zt), std::move(domains), std::move(labels), k);
      const double value = loss_db(batch) - lambda * loss_tb(batch);
      const double slack = value - lr.bound;
      lr.worst_slack = lr.trials == 0 ? slack : std::min(lr.worst_slack, slack);
      ++lr.trials;
      if (slack < -r.tolerance) ++lr.violations;
    }
    r.trials += lr.trials;
    r.violations += lr.violations;
    r.worst_slack = li == 0 ? lr.worst_slack : std::min(r.worst_slack, lr.worst_slack);

    const double w_value = w_db - lambda * w_tb;
    if (lambda <= kBalanceLimit) {
      r.witnesses.push_back(witness("class-private frames, lambda = " + std::to_string(lambda), w_value, lr.bound));
    }
    if (w_value - lr.bound < -r.tolerance) ++r.violations;
    r.per_lambda.push_back(lr);
  }
  return r;
}

// ---------------------------------------------------------------------------

void HarnessConfig::validate() const {
  if (rank_trials == 0 || theorem12_trials == 0 || theorem3_trials == 0) {
    throw PreconditionError("harness: trial counts must be at least 1");
  }
  if (!(alpha > 0.0)) throw PreconditionError("harness: alpha must be positive");
  if (d_max == 0) throw PreconditionError("harness: d_max must be at least 1");
  if (k < 2 || k > d_max) throw PreconditionError("harness: need 2 <= k <= d_max");
  if (lambda_grid.empty()) throw PreconditionError("harness: empty lambda grid");
  for (double l : lambda_grid) {
    if (!(l >= 0.0) || !std::isfinite(l)) {
      throw PreconditionError("harness: lambda values must be finite and non-negative");
    }
  }
  if (seeds.empty()) throw PreconditionError("harness: no seeds");
}

std::vector<TrialReport> run_harness(const HarnessConfig& cfg) {
  cfg.validate();
  std::vector<TrialReport> out;
  for (std::uint64_t seed : cfg.seeds) {
    out.push_back(verify_rank_bounds(cfg.rank_trials, RankDims{}, seed));
    const std::size_t per_d = (cfg.theorem12_trials + cfg.d_max - 1) / cfg.d_max;
    for (std::size_t d = 1; d <= cfg.d_max; ++d) {
      TrialReport r = verify_theorem1(per_d, cfg.alpha, d, seed ^ (d << 32), cfg.force_violation);
      r.seed = seed;  // report the master seed; d is recorded separately
      out.push_back(std::move(r));
    }
    out.push_back(verify_theorem2(cfg.theorem12_trials, seed));
    out.push_back(verify_theorem3(cfg.theorem3_trials, cfg.alpha, cfg.d_max, cfg.k, cfg.lambda_grid, seed));
  }
  return out;
}

}  // namespace goal
