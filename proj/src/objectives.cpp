#include "goal/objectives.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "goal/errors.hpp"

namespace goal {

namespace {

constexpr double kSqrt2 = 1.414213562373095048801688724209698;

struct NormAndGrad {
  double value = 0.0;
  Mat grad;
};

NormAndGrad nuclear_with_grad(const Mat& m, double rel_tol, bool want_grad) {
  if (!want_grad) return {nuclear_norm(m), {}};
  const SvdResult s = svd(m);
  NormAndGrad out;
  out.value = std::accumulate(s.sigma.begin(), s.sigma.end(), 0.0);
  const std::size_t r = rank_from_sigma(s.sigma, m.rows(), m.cols(), rel_tol);
  out.grad = matmul_nt(s.u.leading_cols(r), s.v.leading_cols(r));
  return out;
}

void require_both_domains(const PartitionedBatch& batch, std::size_t i) {
  for (Domain d : {Domain::source, Domain::target}) {
    if (batch.class_domain_cols(i, d).empty()) {
      throw PartitionError("class " + std::to_string(i) + " has no " +
                           (d == Domain::source ? "source" : "target") + " columns");
    }
  }
}

void require_db_partition(const PartitionedBatch& batch) {
  if (batch.k() < 2) throw PartitionError("discriminability term needs at least two classes");
  for (std::size_t i = 0; i < batch.k(); ++i) {
    if (batch.class_cols(i).empty()) {
      throw PartitionError("class " + std::to_string(i) + " has no columns");
    }
  }
}

std::vector<std::size_t> all_classes(const PartitionedBatch& batch) {
  std::vector<std::size_t> c(batch.k());
  std::iota(c.begin(), c.end(), std::size_t{0});
  return c;
}

}  // namespace

// ---------------------------------------------------------------------------
// PartitionedBatch

PartitionedBatch::PartitionedBatch(Mat z, std::vector<Domain> domains, std::vector<int> labels,
                                   std::size_t k)
    : z_(std::move(z)), domains_(std::move(domains)), labels_(std::move(labels)), k_(k) {
  const std::size_t n = z_.cols();
  if (domains_.size() != n || labels_.size() != n) {
    throw DimensionError("PartitionedBatch: " + std::to_string(n) + " columns but " +
                         std::to_string(domains_.size()) + " domain tags and " +
                         std::to_string(labels_.size()) + " labels");
  }
  if (k_ == 0) throw PartitionError("PartitionedBatch: k must be at least 1");
  class_source_.resize(k_);
  class_target_.resize(k_);
  class_cols_.resize(k_);
  for (std::size_t j = 0; j < n; ++j) {
    const bool src = domains_[j] == Domain::source;
    (src ? source_cols_ : target_cols_).push_back(j);
    const int y = labels_[j];
    if (y == kUnlabeled) {
      unlabeled_cols_.push_back(j);
      continue;
    }
    if (y < 0 || static_cast<std::size_t>(y) >= k_) {
      throw PartitionError("PartitionedBatch: column " + std::to_string(j) + " has label " +
                           std::to_string(y) + " outside [0, " + std::to_string(k_) + ")");
    }
    (src ? class_source_ : class_target_)[static_cast<std::size_t>(y)].push_back(j);
    class_cols_[static_cast<std::size_t>(y)].push_back(j);
  }
}

std::span<const std::size_t> PartitionedBatch::class_domain_cols(std::size_t i, Domain d) const {
  return d == Domain::source ? class_source_.at(i) : class_target_.at(i);
}

PartitionedBatch PartitionedBatch::with_embedding(Mat z) const {
  if (z.cols() != z_.cols()) {
    throw DimensionError("PartitionedBatch::with_embedding: column count changed");
  }
  PartitionedBatch copy = *this;
  copy.z_ = std::move(z);
  return copy;
}

// ---------------------------------------------------------------------------
// Configuration

const char* to_string(Regime r) {
  switch (r) {
    case Regime::discriminability_only:
      return "discriminability-only";
    case Regime::balance:
      return "balance";
    case Regime::transferability_dominant:
      return "transferability-dominant";
  }
  return "unknown";
}

Regime regime_of(double lambda) {
  if (lambda <= 0.0) return Regime::discriminability_only;
  if (lambda <= kBalanceLimit) return Regime::balance;
  return Regime::transferability_dominant;
}

double GoConfig::lambda() const {
  if (lambda_tb == 0.0) return 0.0;
  if (lambda_db == 0.0) return std::numeric_limits<double>::infinity();
  return lambda_tb / lambda_db;
}

Regime GoConfig::regime() const { return regime_of(lambda()); }

void GoConfig::validate() const {
  if (!(lambda_tb >= 0.0) || !(lambda_db >= 0.0)) {
    throw PreconditionError("GoConfig: λ_TB and λ_DB must be non-negative");
  }
  if (!(alpha > 0.0)) throw PreconditionError("GoConfig: alpha must be positive");
  if (!(rel_tol > 0.0)) throw PreconditionError("GoConfig: rel_tol must be positive");
}

// ---------------------------------------------------------------------------
// Rank criteria

long rank_tb_criterion(const PartitionedBatch& batch, double rel_tol) {
  long total = 0;
  for (std::size_t i = 0; i < batch.k(); ++i) {
    require_both_domains(batch, i);
    const auto rs = numerical_rank(batch.block(batch.class_domain_cols(i, Domain::source)), rel_tol);
    const auto rt = numerical_rank(batch.block(batch.class_domain_cols(i, Domain::target)), rel_tol);
    const auto ri = numerical_rank(batch.block(batch.class_cols(i)), rel_tol);
    total += static_cast<long>(rs + rt) - static_cast<long>(ri);
  }
  return total;
}

long rank_db_criterion(const PartitionedBatch& batch, double rel_tol) {
  require_db_partition(batch);
  long total = 0;
  for (std::size_t i = 0; i < batch.k(); ++i) {
    total += static_cast<long>(numerical_rank(batch.block(batch.class_cols(i)), rel_tol));
  }
  return total - static_cast<long>(numerical_rank(batch.z(), rel_tol));
}

// ---------------------------------------------------------------------------
// Nuclear-norm objectives

std::vector<std::size_t> tb_eligible_classes(const PartitionedBatch& batch, std::size_t min_cols) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < batch.k(); ++i) {
    if (batch.class_domain_cols(i, Domain::source).size() >= min_cols &&
        batch.class_domain_cols(i, Domain::target).size() >= min_cols &&
        !batch.class_domain_cols(i, Domain::source).empty() &&
        !batch.class_domain_cols(i, Domain::target).empty()) {
      out.push_back(i);
    }
  }
  return out;
}

GoTerms go_terms(const PartitionedBatch& batch, const GoConfig& cfg,
                 std::span<const std::size_t> tb_classes) {
  cfg.validate();
  const bool grad_tb = cfg.lambda_tb != 0.0;
  const bool grad_db = cfg.lambda_db != 0.0;
  GoTerms out;
  out.grad = Mat(batch.dim(), batch.size());

  if (batch.k() >= 2) {
    double sum = 0.0;
    for (std::size_t i = 0; i < batch.k(); ++i) {
      const auto cols = batch.class_cols(i);
      if (cols.empty()) continue;
      auto t = nuclear_with_grad(batch.block(cols), cfg.rel_tol, grad_db);
      sum += t.value;
      if (grad_db) scatter_add_cols(out.grad, t.grad, cols, cfg.lambda_db);
    }
    auto whole = nuclear_with_grad(batch.z(), cfg.rel_tol, grad_db);
    out.l_db = sum - whole.value;
    if (grad_db) out.grad -= whole.grad * cfg.lambda_db;
  } else if (grad_db) {
    throw PartitionError("discriminability term needs at least two classes");
  }

  double sum = 0.0;
  for (std::size_t i : tb_classes) {
    if (i >= batch.k()) throw PartitionError("loss_tb: class index out of range");
    require_both_domains(batch, i);
    const auto cs = batch.class_domain_cols(i, Domain::source);
    const auto ct = batch.class_domain_cols(i, Domain::target);
    const auto ci = batch.class_cols(i);
    auto ts = nuclear_with_grad(batch.block(cs), cfg.rel_tol, grad_tb);
    auto tt = nuclear_with_grad(batch.block(ct), cfg.rel_tol, grad_tb);
    auto ti = nuclear_with_grad(batch.block(ci), cfg.rel_tol, grad_tb);
    sum += ts.value + tt.value - ti.value;
    if (grad_tb) {
      scatter_add_cols(out.grad, ts.grad, cs, -cfg.lambda_tb);
      scatter_add_cols(out.grad, tt.grad, ct, -cfg.lambda_tb);
      scatter_add_cols(out.grad, ti.grad, ci, cfg.lambda_tb);
    }
  }
  out.l_tb = sum;

  out.l_go = cfg.lambda_db * out.l_db - cfg.lambda_tb * out.l_tb;
  return out;
}

GoTerms go_terms_in_ball(const PartitionedBatch& batch, const GoConfig& cfg,
                         std::span<const std::size_t> tb_classes) {
  cfg.validate();
  struct Scale {
    std::vector<std::size_t> cols;
    double s = 0.0;
    Mat u1;  // leading singular pair
    Mat v1;
  };
  Scale scales[2];
  Mat scaled = batch.z();
  for (Domain d : {Domain::source, Domain::target}) {
    Scale& sc = scales[d == Domain::source ? 0 : 1];
    const auto cols = batch.domain_cols(d);
    if (cols.empty()) continue;
    sc.cols.assign(cols.begin(), cols.end());
    const SvdResult r = svd(batch.block(cols));
    sc.s = r.sigma[0];
    if (!(sc.s > 0.0)) {
      throw NumericalError(std::string("go_terms_in_ball: ") +
                           (d == Domain::source ? "source" : "target") +
                           " embedding block is zero, cannot rescale to the spectral ball");
    }
    sc.u1 = r.u.leading_cols(1);
    sc.v1 = r.v.leading_cols(1);
    for (std::size_t c : cols) {
      for (std::size_t i = 0; i < scaled.rows(); ++i) scaled(i, c) *= cfg.alpha / sc.s;
    }
  }
  GoTerms out = go_terms(batch.with_embedding(std::move(scaled)), cfg, tb_classes);

  // d(α Z / s) pulled back: (α/s)·(G − (⟨G, Z⟩ / s)·u₁v₁ᵀ), with s = u₁ᵀ Z v₁.
  for (const Scale& sc : scales) {
    if (sc.cols.empty()) continue;
    const Mat g = out.grad.select_cols(sc.cols);
    const Mat z = batch.block(sc.cols);
    Mat pulled = g - matmul_nt(sc.u1, sc.v1) * (inner(g, z) / sc.s);
    pulled *= cfg.alpha / sc.s;
    for (std::size_t p = 0; p < sc.cols.size(); ++p) {
      for (std::size_t i = 0; i < pulled.rows(); ++i) out.grad(i, sc.cols[p]) = pulled(i, p);
    }
  }
  return out;
}

double loss_tb(const PartitionedBatch& batch, std::span<const std::size_t> classes) {
  double total = 0.0;
  for (std::size_t i : classes) {
    if (i >= batch.k()) throw PartitionError("loss_tb: class index out of range");
    require_both_domains(batch, i);
    total += nuclear_norm(batch.block(batch.class_domain_cols(i, Domain::source))) +
             nuclear_norm(batch.block(batch.class_domain_cols(i, Domain::target))) -
             nuclear_norm(batch.block(batch.class_cols(i)));
  }
  return total;
}

double loss_tb(const PartitionedBatch& batch) { return loss_tb(batch, all_classes(batch)); }

double loss_db(const PartitionedBatch& batch) {
  require_db_partition(batch);
  double total = 0.0;
  for (std::size_t i = 0; i < batch.k(); ++i) total += nuclear_norm(batch.block(batch.class_cols(i)));
  return total - nuclear_norm(batch.z());
}

double loss_go(const PartitionedBatch& batch, const GoConfig& cfg,
               std::span<const std::size_t> tb_classes) {
  cfg.validate();
  double value = 0.0;
  if (cfg.lambda_db != 0.0) value += cfg.lambda_db * loss_db(batch);
  if (cfg.lambda_tb != 0.0) value -= cfg.lambda_tb * loss_tb(batch, tb_classes);
  return value;
}

double loss_go(const PartitionedBatch& batch, const GoConfig& cfg) {
  return loss_go(batch, cfg, all_classes(batch));
}

Mat grad_nuclear(const Mat& m, double rel_tol) {
  return nuclear_with_grad(m, rel_tol, true).grad;
}

Mat grad_loss_go(const PartitionedBatch& batch, const GoConfig& cfg,
                 std::span<const std::size_t> tb_classes) {
  if (cfg.lambda_db != 0.0) require_db_partition(batch);
  return go_terms(batch, cfg, tb_classes).grad;
}

Mat grad_loss_go(const PartitionedBatch& batch, const GoConfig& cfg) {
  // Like loss_go, a zero TB weight does not require every class in both domains.
  if (cfg.lambda_tb == 0.0) return grad_loss_go(batch, cfg, {});
  return grad_loss_go(batch, cfg, all_classes(batch));
}

// ---------------------------------------------------------------------------
// Bounds

double tb_upper_bound(double alpha, std::size_t d) {
  if (!(alpha > 0.0) || d == 0) throw PreconditionError("tb_upper_bound: need alpha > 0, d >= 1");
  return (2.0 - kSqrt2) * alpha * static_cast<double>(d);
}

double go_lower_bound(double lambda, double alpha, std::size_t d, std::size_t k) {
  if (!(lambda >= 0.0) || !(alpha > 0.0) || d == 0 || k == 0) {
    throw PreconditionError("go_lower_bound: need lambda >= 0, alpha > 0, d >= 1, k >= 1");
  }
  const double ad = alpha * static_cast<double>(d);
  if (lambda == 0.0) return 0.0;
  if (lambda <= kBalanceLimit) return (kSqrt2 - 2.0) * lambda * ad;
  return (((kSqrt2 - 2.0) * lambda + kSqrt2) * std::sqrt(static_cast<double>(k)) - kSqrt2) * ad;
}

}  // namespace goal
