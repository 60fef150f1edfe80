#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace goal {

/// Dense real matrix, column-major. Rows are feature dimensions and each
/// column is one sample vector. Zero-sized matrices are allowed so that an
/// empty basis or an empty block can be represented.
class Mat {
 public:
  Mat() = default;
  Mat(std::size_t rows, std::size_t cols);
  /// Takes column-major data; throws PreconditionError on non-finite entries.
  Mat(std::size_t rows, std::size_t cols, std::vector<double> data);

  /// Row-major literal, convenient for small fixtures.
  static Mat from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Mat from_columns(const std::vector<std::vector<double>>& cols);
  static Mat identity(std::size_t n);
  static Mat diagonal(std::span<const double> diag);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[c * rows_ + r]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[c * rows_ + r]; }

  std::span<double> col(std::size_t c) { return {data_.data() + c * rows_, rows_}; }
  std::span<const double> col(std::size_t c) const { return {data_.data() + c * rows_, rows_}; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  bool all_finite() const noexcept;

  Mat transpose() const;
  Mat select_cols(std::span<const std::size_t> indices) const;
  /// First `n` columns.
  Mat leading_cols(std::size_t n) const;

  Mat& operator+=(const Mat& other);
  Mat& operator-=(const Mat& other);
  Mat& operator*=(double s);

  friend bool operator==(const Mat&, const Mat&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Mat operator+(Mat a, const Mat& b);
Mat operator-(Mat a, const Mat& b);
Mat operator*(Mat a, double s);
Mat operator*(double s, Mat a);

Mat matmul(const Mat& a, const Mat& b);
/// aᵀ·b without forming the transpose.
Mat matmul_tn(const Mat& a, const Mat& b);
/// a·bᵀ without forming the transpose.
Mat matmul_nt(const Mat& a, const Mat& b);

double frobenius_norm(const Mat& m);
/// ⟨a, b⟩ = trace(aᵀb).
double inner(const Mat& a, const Mat& b);
double max_abs_diff(const Mat& a, const Mat& b);

/// Column-wise concatenation [a, b]. An operand with zero columns is the
/// identity element regardless of its row count.
Mat concat_cols(const Mat& a, const Mat& b);

/// Adds `block` into the columns `indices` of `target`, scaled by `weight`.
void scatter_add_cols(Mat& target, const Mat& block, std::span<const std::size_t> indices,
                      double weight);

struct SvdResult {
  Mat u;                      // rows × r, orthonormal columns
  std::vector<double> sigma;  // r values, non-increasing, non-negative
  Mat v;                      // cols × r, orthonormal columns
};

/// Default relative tolerance for numerical rank decisions.
inline constexpr double kDefaultRelTol = 1e-10;

/// Thin SVD via one-sided Jacobi rotations. Each left singular vector is
/// signed so that its largest-magnitude entry is positive.
SvdResult svd(const Mat& m);

/// Singular values only; same algorithm without accumulating vectors.
std::vector<double> singular_values(const Mat& m);

double nuclear_norm(const Mat& m);
double spectral_norm(const Mat& m);

/// Number of singular values above rel_tol · σ₀ · max(rows, cols).
std::size_t numerical_rank(const Mat& m, double rel_tol = kDefaultRelTol);
std::size_t rank_from_sigma(std::span<const double> sigma, std::size_t rows, std::size_t cols,
                            double rel_tol);

/// Left singular vectors whose singular values clear the numerical-rank
/// threshold. A zero matrix yields a rows × 0 basis.
Mat orthonormal_basis(const Mat& m, double rel_tol = kDefaultRelTol);

/// Cosines of the principal angles between span(basis_a) and span(basis_b),
/// as the singular values of basis_aᵀ·basis_b, clamped to [0, 1].
std::vector<double> principal_angle_cosines(const Mat& basis_a, const Mat& basis_b);

}  // namespace goal
