#include "goal/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>

#include "goal/errors.hpp"

namespace goal {

namespace {

void require_finite(const Mat& m, const char* what) {
  if (!m.all_finite()) {
    throw PreconditionError(std::string(what) + ": matrix has non-finite entries");
  }
}

double dot(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

void rotate(double* a, double* b, std::size_t n, double c, double s) {
  for (std::size_t i = 0; i < n; ++i) {
    const double x = a[i];
    const double y = b[i];
    a[i] = c * x - s * y;
    b[i] = s * x + c * y;
  }
}

// Orthogonalizes the columns of `w` in place (one-sided Jacobi). When `rot`
// is non-null the applied rotations are accumulated into it, so that
// w_in · rot = w_out. Returns a per-column flag marking columns whose norm is
// negligible relative to the whole matrix; those were never rotated.
std::vector<bool> jacobi_orthogonalize(Mat& w, Mat* rot) {
  const std::size_t p = w.rows();
  const std::size_t q = w.cols();
  const double eps = std::numeric_limits<double>::epsilon();
  const double tol = eps * static_cast<double>(std::max<std::size_t>(p, 1));

  double frob2 = 0.0;
  for (double x : w.data()) frob2 += x * x;
  const double negligible = frob2 * eps * eps;

  std::vector<double> norm2(q);
  for (std::size_t j = 0; j < q; ++j) norm2[j] = dot(w.col(j).data(), w.col(j).data(), p);

  const std::size_t max_sweeps = 100 * std::max<std::size_t>(std::min(p, q), 1);
  bool converged = q < 2;
  std::size_t sweep = 0;
  for (; sweep < max_sweeps && !converged; ++sweep) {
    bool rotated = false;
    for (std::size_t i = 0; i + 1 < q; ++i) {
      for (std::size_t j = i + 1; j < q; ++j) {
        const double alpha = norm2[i];
        const double beta = norm2[j];
        if (alpha <= negligible || beta <= negligible) continue;
        double* wi = w.col(i).data();
        double* wj = w.col(j).data();
        const double gamma = dot(wi, wj, p);
        if (std::abs(gamma) <= tol * std::sqrt(alpha * beta)) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        rotate(wi, wj, p, c, s);
        // Recomputing is cheaper to reason about than the closed-form update
        // and keeps the norms consistent with the stored columns.
        norm2[i] = dot(wi, wi, p);
        norm2[j] = dot(wj, wj, p);
        if (rot != nullptr) rotate(rot->col(i).data(), rot->col(j).data(), q, c, s);
      }
    }
    converged = !rotated;
  }
  if (!converged) {
    double hi = 0.0;
    double lo = std::numeric_limits<double>::infinity();
    for (double n2 : norm2) {
      hi = std::max(hi, std::sqrt(n2));
      lo = std::min(lo, std::sqrt(n2));
    }
    std::ostringstream msg;
    msg << "svd: one-sided Jacobi did not converge after " << sweep << " sweeps on a " << p << "x"
        << q << " working matrix (column norms in [" << lo << ", " << hi
        << "], condition estimate " << (lo > 0 ? hi / lo : std::numeric_limits<double>::infinity())
        << ")";
    throw NumericalError(msg.str());
  }

  std::vector<bool> degenerate(q);
  for (std::size_t j = 0; j < q; ++j) degenerate[j] = norm2[j] <= negligible;
  return degenerate;
}

// Fills the columns flagged in `missing` with unit vectors orthogonal to all
// other columns, trying coordinate axes in order.
void complete_orthonormal(Mat& basis, const std::vector<bool>& missing) {
  const std::size_t p = basis.rows();
  std::vector<std::size_t> done;
  for (std::size_t j = 0; j < basis.cols(); ++j) {
    if (!missing[j]) done.push_back(j);
  }
  std::vector<double> cand(p);
  std::vector<double> best(p);
  for (std::size_t j = 0; j < basis.cols(); ++j) {
    if (!missing[j]) continue;
    double best_norm = -1.0;
    for (std::size_t axis = 0; axis < p; ++axis) {
      std::fill(cand.begin(), cand.end(), 0.0);
      cand[axis] = 1.0;
      for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t o : done) {
          const double* u = basis.col(o).data();
          const double proj = dot(u, cand.data(), p);
          for (std::size_t r = 0; r < p; ++r) cand[r] -= proj * u[r];
        }
      }
      const double n = std::sqrt(dot(cand.data(), cand.data(), p));
      if (n > best_norm) {
        best_norm = n;
        best = cand;
      }
      if (n > 0.5) break;
    }
    auto out = basis.col(j);
    for (std::size_t r = 0; r < p; ++r) out[r] = best[r] / best_norm;
    done.push_back(j);
  }
}

struct Decomposition {
  std::vector<double> sigma;
  Mat u;
  Mat v;
};

Decomposition decompose(const Mat& m, bool want_vectors) {
  require_finite(m, "svd");
  const std::size_t rows = m.rows();
  const std::size_t cols = m.cols();
  const std::size_t r = std::min(rows, cols);
  Decomposition out;
  if (r == 0) {
    out.u = Mat(rows, 0);
    out.v = Mat(cols, 0);
    return out;
  }

  // Orthogonalize the shorter side: the working matrix always has r columns.
  const bool wide = rows <= cols;
  Mat w = wide ? m.transpose() : m;
  Mat rot;
  if (want_vectors) rot = Mat::identity(r);
  const std::vector<bool> degenerate = jacobi_orthogonalize(w, want_vectors ? &rot : nullptr);

  std::vector<double> norms(r);
  for (std::size_t j = 0; j < r; ++j) {
    norms[j] = degenerate[j] ? 0.0 : std::sqrt(dot(w.col(j).data(), w.col(j).data(), w.rows()));
  }
  std::vector<std::size_t> order(r);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return norms[a] > norms[b]; });

  out.sigma.resize(r);
  for (std::size_t j = 0; j < r; ++j) out.sigma[j] = norms[order[j]];
  if (!want_vectors) return out;

  // Normalized working columns, sorted.
  Mat w_hat(w.rows(), r);
  Mat rot_sorted(r, r);
  std::vector<bool> missing(r);
  for (std::size_t j = 0; j < r; ++j) {
    const std::size_t src = order[j];
    missing[j] = degenerate[src] || norms[src] == 0.0;
    auto dst = w_hat.col(j);
    auto from = w.col(src);
    if (!missing[j]) {
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = from[i] / norms[src];
    }
    auto rdst = rot_sorted.col(j);
    auto rfrom = rot.col(src);
    std::copy(rfrom.begin(), rfrom.end(), rdst.begin());
  }
  complete_orthonormal(w_hat, missing);

  if (wide) {
    out.u = std::move(rot_sorted);
    out.v = std::move(w_hat);
  } else {
    out.u = std::move(w_hat);
    out.v = std::move(rot_sorted);
  }

  for (std::size_t j = 0; j < r; ++j) {
    auto uj = out.u.col(j);
    std::size_t arg = 0;
    for (std::size_t i = 1; i < uj.size(); ++i) {
      if (std::abs(uj[i]) > std::abs(uj[arg])) arg = i;
    }
    if (uj[arg] < 0.0) {
      for (double& x : uj) x = -x;
      for (double& x : out.v.col(j)) x = -x;
    }
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Mat

Mat::Mat(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

Mat::Mat(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw DimensionError("Mat: expected " + std::to_string(rows_ * cols_) + " entries, got " +
                         std::to_string(data_.size()));
  }
  require_finite(*this, "Mat");
}

Mat Mat::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  Mat m(r, c);
  std::size_t i = 0;
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("Mat::from_rows: ragged rows");
    std::size_t j = 0;
    for (double x : row) m(i, j++) = x;
    ++i;
  }
  require_finite(m, "Mat::from_rows");
  return m;
}

Mat Mat::from_columns(const std::vector<std::vector<double>>& cols) {
  const std::size_t c = cols.size();
  const std::size_t r = c == 0 ? 0 : cols.front().size();
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& col : cols) {
    if (col.size() != r) throw DimensionError("Mat::from_columns: ragged columns");
    data.insert(data.end(), col.begin(), col.end());
  }
  return Mat(r, c, std::move(data));
}

Mat Mat::identity(std::size_t n) {
  Mat m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Mat Mat::diagonal(std::span<const double> diag) {
  Mat m(diag.size(), diag.size());
  for (std::size_t i = 0; i < diag.size(); ++i) m(i, i) = diag[i];
  require_finite(m, "Mat::diagonal");
  return m;
}

bool Mat::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

Mat Mat::transpose() const {
  Mat t(cols_, rows_);
  for (std::size_t c = 0; c < cols_; ++c) {
    for (std::size_t r = 0; r < rows_; ++r) t(c, r) = (*this)(r, c);
  }
  return t;
}

Mat Mat::select_cols(std::span<const std::size_t> indices) const {
  Mat out(rows_, indices.size());
  for (std::size_t j = 0; j < indices.size(); ++j) {
    if (indices[j] >= cols_) {
      throw DimensionError("Mat::select_cols: column " + std::to_string(indices[j]) +
                           " out of range for " + std::to_string(cols_) + " columns");
    }
    auto src = col(indices[j]);
    std::copy(src.begin(), src.end(), out.col(j).begin());
  }
  return out;
}

Mat Mat::leading_cols(std::size_t n) const {
  if (n > cols_) throw DimensionError("Mat::leading_cols: not enough columns");
  Mat out(rows_, n);
  std::copy(data_.begin(), data_.begin() + static_cast<std::ptrdiff_t>(rows_ * n),
            out.data_.begin());
  return out;
}

Mat& Mat::operator+=(const Mat& other) {
  if (rows_ != other.rows_ || cols_ != other.cols_) throw DimensionError("Mat::operator+=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Mat& Mat::operator-=(const Mat& other) {
  if (rows_ != other.rows_ || cols_ != other.cols_) throw DimensionError("Mat::operator-=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

Mat& Mat::operator*=(double s) {
  for (double& x : data_) x *= s;
  return *this;
}

Mat operator+(Mat a, const Mat& b) { return a += b; }
Mat operator-(Mat a, const Mat& b) { return a -= b; }
Mat operator*(Mat a, double s) { return a *= s; }
Mat operator*(double s, Mat a) { return a *= s; }

Mat matmul(const Mat& a, const Mat& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                         " times " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
  Mat out(a.rows(), b.cols());
  for (std::size_t j = 0; j < b.cols(); ++j) {
    double* o = out.col(j).data();
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double bkj = b(k, j);
      if (bkj == 0.0) continue;
      const double* ak = a.col(k).data();
      for (std::size_t i = 0; i < a.rows(); ++i) o[i] += ak[i] * bkj;
    }
  }
  return out;
}

Mat matmul_tn(const Mat& a, const Mat& b) {
  if (a.rows() != b.rows()) throw DimensionError("matmul_tn: row counts differ");
  Mat out(a.cols(), b.cols());
  for (std::size_t j = 0; j < b.cols(); ++j) {
    const double* bj = b.col(j).data();
    for (std::size_t i = 0; i < a.cols(); ++i) out(i, j) = dot(a.col(i).data(), bj, a.rows());
  }
  return out;
}

Mat matmul_nt(const Mat& a, const Mat& b) {
  if (a.cols() != b.cols()) throw DimensionError("matmul_nt: column counts differ");
  Mat out(a.rows(), b.rows());
  for (std::size_t k = 0; k < a.cols(); ++k) {
    const double* ak = a.col(k).data();
    const double* bk = b.col(k).data();
    for (std::size_t j = 0; j < b.rows(); ++j) {
      const double bjk = bk[j];
      double* o = out.col(j).data();
      for (std::size_t i = 0; i < a.rows(); ++i) o[i] += ak[i] * bjk;
    }
  }
  return out;
}

double frobenius_norm(const Mat& m) {
  double s = 0.0;
  for (double x : m.data()) s += x * x;
  return std::sqrt(s);
}

double inner(const Mat& a, const Mat& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw DimensionError("inner: shape mismatch");
  return dot(a.data().data(), b.data().data(), a.size());
}

double max_abs_diff(const Mat& a, const Mat& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError("max_abs_diff: shape mismatch");
  }
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

Mat concat_cols(const Mat& a, const Mat& b) {
  if (a.cols() == 0) return b;
  if (b.cols() == 0) return a;
  if (a.rows() != b.rows()) {
    throw DimensionError("concat_cols: row counts differ (" + std::to_string(a.rows()) + " vs " +
                         std::to_string(b.rows()) + ")");
  }
  std::vector<double> data;
  data.reserve(a.size() + b.size());
  data.insert(data.end(), a.data().begin(), a.data().end());
  data.insert(data.end(), b.data().begin(), b.data().end());
  return Mat(a.rows(), a.cols() + b.cols(), std::move(data));
}

void scatter_add_cols(Mat& target, const Mat& block, std::span<const std::size_t> indices,
                      double weight) {
  if (block.cols() != indices.size() || block.rows() != target.rows()) {
    throw DimensionError("scatter_add_cols: block does not match index list");
  }
  for (std::size_t j = 0; j < indices.size(); ++j) {
    auto dst = target.col(indices[j]);
    auto src = block.col(j);
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += weight * src[i];
  }
}

// ---------------------------------------------------------------------------
// Decompositions

SvdResult svd(const Mat& m) {
  Decomposition d = decompose(m, true);
  return {std::move(d.u), std::move(d.sigma), std::move(d.v)};
}

std::vector<double> singular_values(const Mat& m) { return decompose(m, false).sigma; }

double nuclear_norm(const Mat& m) {
  const auto sigma = singular_values(m);
  return std::accumulate(sigma.begin(), sigma.end(), 0.0);
}

double spectral_norm(const Mat& m) {
  const auto sigma = singular_values(m);
  return sigma.empty() ? 0.0 : sigma.front();
}

std::size_t rank_from_sigma(std::span<const double> sigma, std::size_t rows, std::size_t cols,
                            double rel_tol) {
  if (!(rel_tol > 0.0)) throw PreconditionError("numerical_rank: rel_tol must be positive");
  if (sigma.empty() || sigma.front() == 0.0) return 0;
  const double threshold =
      rel_tol * sigma.front() * static_cast<double>(std::max(rows, cols));
  return static_cast<std::size_t>(
      std::count_if(sigma.begin(), sigma.end(), [&](double s) { return s > threshold; }));
}

std::size_t numerical_rank(const Mat& m, double rel_tol) {
  return rank_from_sigma(singular_values(m), m.rows(), m.cols(), rel_tol);
}

Mat orthonormal_basis(const Mat& m, double rel_tol) {
  if (!(rel_tol > 0.0)) throw PreconditionError("orthonormal_basis: rel_tol must be positive");
  const SvdResult s = svd(m);
  const std::size_t r = rank_from_sigma(s.sigma, m.rows(), m.cols(), rel_tol);
  return s.u.leading_cols(r);
}

namespace {

void require_orthonormal(const Mat& b, const char* name) {
  const Mat gram = matmul_tn(b, b);
  const double dev = max_abs_diff(gram, Mat::identity(b.cols()));
  if (dev > 1e-6) {
    std::ostringstream msg;
    msg << "principal_angle_cosines: " << name
        << " does not have orthonormal columns (max |BᵀB - I| = " << dev << ")";
    throw PreconditionError(msg.str());
  }
}

}  // namespace

std::vector<double> principal_angle_cosines(const Mat& basis_a, const Mat& basis_b) {
  if (basis_a.rows() != basis_b.rows()) {
    throw DimensionError("principal_angle_cosines: bases live in different ambient dimensions");
  }
  require_orthonormal(basis_a, "basis_a");
  require_orthonormal(basis_b, "basis_b");
  if (basis_a.cols() == 0 || basis_b.cols() == 0) return {};
  auto cosines = singular_values(matmul_tn(basis_a, basis_b));
  for (double& c : cosines) c = std::clamp(c, 0.0, 1.0);
  return cosines;
}

}  // namespace goal
