#include "goal/diagnostics.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <thread>

#include "goal/errors.hpp"

namespace goal {

namespace {

double mean_cos(const Mat& a, const Mat& b) {
  const auto c = principal_angle_cosines(a, b);
  if (c.empty()) return 0.0;
  return std::accumulate(c.begin(), c.end(), 0.0) / static_cast<double>(c.size());
}

}  // namespace

Mat dominant_basis(const Mat& m, double rel_tol) {
  if (!(rel_tol > 0.0 && rel_tol < 1.0)) {
    throw PreconditionError("dominant_basis: rel_tol must lie in (0, 1)");
  }
  const SvdResult s = svd(m);
  std::size_t r = 0;
  if (!s.sigma.empty() && s.sigma[0] > 0.0) {
    while (r < s.sigma.size() && s.sigma[r] > rel_tol * s.sigma[0]) ++r;
  }
  return s.u.leading_cols(r);
}

LdaMeasures lda_measures(const Mat& z, std::span<const int> labels) {
  if (labels.size() != z.cols()) {
    throw DimensionError("lda_measures: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(z.cols()) + " columns");
  }
  LdaMeasures out;
  const std::size_t n = z.cols();
  if (n == 0) return out;
  int k = 0;
  for (int y : labels) {
    if (y < 0) throw PreconditionError("lda_measures: negative label");
    k = std::max(k, y + 1);
  }
  const std::size_t d = z.rows();
  Mat means(d, static_cast<std::size_t>(k));
  std::vector<std::size_t> counts(static_cast<std::size_t>(k), 0);
  std::vector<double> grand(d, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    const auto c = static_cast<std::size_t>(labels[j]);
    ++counts[c];
    for (std::size_t r = 0; r < d; ++r) {
      means(r, c) += z(r, j);
      grand[r] += z(r, j);
    }
  }
  for (std::size_t r = 0; r < d; ++r) grand[r] /= static_cast<double>(n);
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] == 0) continue;
    for (std::size_t r = 0; r < d; ++r) means(r, c) /= static_cast<double>(counts[c]);
  }

  double sw = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const auto c = static_cast<std::size_t>(labels[j]);
    for (std::size_t r = 0; r < d; ++r) {
      const double e = z(r, j) - means(r, c);
      sw += e * e;
    }
  }
  double sb = 0.0;
  for (std::size_t c = 0; c < counts.size(); ++c) {
    for (std::size_t r = 0; r < d; ++r) {
      const double e = means(r, c) - grand[r];
      sb += static_cast<double>(counts[c]) * e * e;
    }
  }
  out.intra = sw / static_cast<double>(n);
  out.inter = sb / static_cast<double>(n);
  out.discriminant = out.inter / (out.intra + 1e-12);
  return out;
}

AngleMatrix principal_angle_matrix(const PartitionedBatch& batch, double rel_tol) {
  const std::size_t k = batch.k();
  std::vector<std::optional<Mat>> src(k);
  std::vector<std::optional<Mat>> tgt(k);
  for (std::size_t i = 0; i < k; ++i) {
    const auto cs = batch.class_domain_cols(i, Domain::source);
    const auto ct = batch.class_domain_cols(i, Domain::target);
    if (!cs.empty()) src[i] = dominant_basis(batch.block(cs), rel_tol);
    if (!ct.empty()) tgt[i] = dominant_basis(batch.block(ct), rel_tol);
  }
  AngleMatrix out(k, std::vector<std::optional<double>>(k));
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      if (src[i] && tgt[j]) out[i][j] = mean_cos(*src[i], *tgt[j]);
    }
  }
  return out;
}

double classwise_domain_angle(const PartitionedBatch& batch, double rel_tol) {
  const AngleMatrix m = principal_angle_matrix(batch, rel_tol);
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (m[i][i]) {
      sum += *m[i][i];
      ++count;
    }
  }
  if (count == 0) throw PartitionError("classwise_domain_angle: no class has both domains");
  return sum / static_cast<double>(count);
}

double domain_angle(const PartitionedBatch& batch, double rel_tol) {
  const auto cs = batch.domain_cols(Domain::source);
  const auto ct = batch.domain_cols(Domain::target);
  if (cs.empty() || ct.empty()) throw PartitionError("domain_angle: a domain has no columns");
  return mean_cos(dominant_basis(batch.block(cs), rel_tol), dominant_basis(batch.block(ct), rel_tol));
}

DominantSimilarity dominant_direction_similarity(const Mat& z_class,
                                                 const std::vector<bool>& correct_mask) {
  if (correct_mask.size() != z_class.cols()) {
    throw DimensionError("dominant_direction_similarity: mask has " +
                         std::to_string(correct_mask.size()) + " entries for " +
                         std::to_string(z_class.cols()) + " columns");
  }
  DominantSimilarity out;
  std::vector<std::size_t> groups[2];  // 0 = incorrect, 1 = correct
  std::vector<double> norms(z_class.cols());
  for (std::size_t j = 0; j < z_class.cols(); ++j) {
    auto c = z_class.col(j);
    norms[j] = std::sqrt(std::inner_product(c.begin(), c.end(), c.begin(), 0.0));
    if (norms[j] == 0.0) {
      ++out.excluded;
      continue;
    }
    groups[correct_mask[j] ? 1 : 0].push_back(j);
  }
  if (groups[0].empty() && groups[1].empty()) return out;

  const SvdResult s = svd(z_class);
  const double total = std::accumulate(s.sigma.begin(), s.sigma.end(), 0.0);
  auto weighted = [&](const std::vector<std::size_t>& cols) {
    double acc = 0.0;
    for (std::size_t p = 0; p < s.sigma.size(); ++p) {
      if (s.sigma[p] == 0.0) continue;
      auto u = s.u.col(p);
      double mean = 0.0;
      for (std::size_t j : cols) {
        auto x = z_class.col(j);
        mean += std::abs(std::inner_product(u.begin(), u.end(), x.begin(), 0.0)) / norms[j];
      }
      acc += (s.sigma[p] / total) * (mean / static_cast<double>(cols.size()));
    }
    return acc;
  };
  if (!groups[1].empty()) out.correct = weighted(groups[1]);
  if (!groups[0].empty()) out.incorrect = weighted(groups[0]);
  return out;
}

DiagnosticsReport diagnose(const MlpParams& params, const DatasetBundle& bundle, double rel_tol) {
  bundle.validate();
  const Mat zs = embed(params, bundle.x_source);
  const Mat zt = embed(params, bundle.x_target);
  const std::vector<int> predicted = predict(params, bundle.x_target);
  const std::vector<int>& target_labels = bundle.y_target_true ? *bundle.y_target_true : predicted;

  DiagnosticsReport r;
  r.rel_tol = rel_tol;
  r.target_labels = bundle.y_target_true ? "ground_truth" : "predicted";
  const LdaMeasures lda = lda_measures(zt, target_labels);
  r.inter_scatter = lda.inter;
  r.intra_scatter = lda.intra;
  r.discriminant = lda.discriminant;

  std::vector<Domain> domains(zs.cols(), Domain::source);
  domains.resize(zs.cols() + zt.cols(), Domain::target);
  std::vector<int> labels = bundle.y_source;
  labels.insert(labels.end(), target_labels.begin(), target_labels.end());
  const PartitionedBatch batch(concat_cols(zs, zt), std::move(domains), std::move(labels), bundle.k);
  r.pairwise_cos_matrix = principal_angle_matrix(batch, rel_tol);
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < bundle.k; ++i) {
    if (r.pairwise_cos_matrix[i][i]) {
      sum += *r.pairwise_cos_matrix[i][i];
      ++count;
    }
  }
  r.mean_c_angle_cos = count > 0 ? sum / static_cast<double>(count) : 0.0;
  r.mean_p_angle_cos = domain_angle(batch, rel_tol);

  r.dominant_similarity.resize(bundle.k);
  if (bundle.y_target_true) {
    const auto& truth = *bundle.y_target_true;
    for (std::size_t i = 0; i < bundle.k; ++i) {
      std::vector<std::size_t> cols;
      std::vector<bool> mask;
      for (std::size_t j = 0; j < predicted.size(); ++j) {
        if (predicted[j] != static_cast<int>(i)) continue;
        cols.push_back(j);
        mask.push_back(truth[j] == predicted[j]);
      }
      if (!cols.empty()) r.dominant_similarity[i] = dominant_direction_similarity(zt.select_cols(cols), mask);
    }
  }
  return r;
}

std::vector<SweepRow> lambda_sweep(const DatasetBundle& bundle, const TrainConfig& base,
                                   std::span<const double> grid, std::size_t jobs) {
  if (grid.empty()) throw PreconditionError("lambda_sweep: empty grid");
  for (double l : grid) {
    if (!(l >= 0.0) || !std::isfinite(l)) {
      throw PreconditionError("lambda_sweep: grid values must be finite and non-negative");
    }
  }
  base.validate();
  std::vector<SweepRow> rows(grid.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < grid.size(); i = next++) {
      SweepRow& row = rows[i];
      row.lambda = grid[i];
      TrainConfig cfg = base;
      cfg.lambda_tb = grid[i] * cfg.lambda_db;
      try {
        const TrainResult res = train(bundle, cfg);
        row.target_accuracy = res.report.target_accuracy;
        row.source_accuracy = res.report.source_accuracy;
        if (!res.report.epochs.empty()) {
          row.final_l_tb = res.report.epochs.back().loss_tb;
          row.final_l_db = res.report.epochs.back().loss_db;
        }
      } catch (const std::exception& e) {
        row.error = e.what();
      }
    }
  };
  const std::size_t n_threads = std::clamp<std::size_t>(jobs, 1, grid.size());
  std::vector<std::jthread> pool;
  for (std::size_t t = 1; t < n_threads; ++t) pool.emplace_back(worker);
  worker();
  pool.clear();
  return rows;
}

}  // namespace goal
