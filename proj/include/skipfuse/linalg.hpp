#ifndef SKIPFUSE_LINALG_HPP_
#define SKIPFUSE_LINALG_HPP_

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "skipfuse/error.hpp"
#include "skipfuse/matrix.hpp"

namespace skipfuse {

inline constexpr double kDefaultPivotTolerance = 1e-12;

/*
 * LU factorization with partial (row) pivoting, PA = LU, stored packed:
 * strict lower triangle holds L (unit diagonal implied), upper holds U.
 *
 * The matrix is declared singular when any pivot magnitude falls below
 * rel_pivot_tol * max|A|, which makes the decision invariant to scaling A.
 */
class LuDecomposition {
 public:
  explicit LuDecomposition(const Matrix& a, double rel_pivot_tol = kDefaultPivotTolerance)
      : lu_(a), perm_(a.rows()) {
    if (!a.is_square())
      throw Error(ErrorCode::NonSquare, "LU of " + a.shape_str());
    if (!a.all_finite()) throw Error(ErrorCode::NonFinite, "LU input has NaN/Inf");
    const std::size_t n = a.rows();
    for (std::size_t i = 0; i < n; ++i) perm_[i] = i;

    const double threshold = rel_pivot_tol * max_abs(a);
    for (std::size_t k = 0; k < n; ++k) {
      std::size_t pivot_row = k;
      double pivot_mag = std::abs(lu_(k, k));
      for (std::size_t r = k + 1; r < n; ++r) {
        const double mag = std::abs(lu_(r, k));
        if (mag > pivot_mag) {
          pivot_mag = mag;
          pivot_row = r;
        }
      }
      if (!(pivot_mag >= threshold) || pivot_mag == 0.0)
        throw Error(ErrorCode::SingularMatrix,
                    "pivot " + std::to_string(k) + " magnitude below " +
                        std::to_string(rel_pivot_tol) + " * max|A|");
      if (pivot_row != k) {
        auto a_row = lu_.row(k);
        auto b_row = lu_.row(pivot_row);
        for (std::size_t c = 0; c < n; ++c) std::swap(a_row[c], b_row[c]);
        std::swap(perm_[k], perm_[pivot_row]);
      }
      const double pivot = lu_(k, k);
      for (std::size_t r = k + 1; r < n; ++r) {
        const double factor = lu_(r, k) / pivot;
        lu_(r, k) = factor;
        if (factor == 0.0) continue;
        for (std::size_t c = k + 1; c < n; ++c) lu_(r, c) -= factor * lu_(k, c);
      }
    }
  }

  std::size_t order() const noexcept { return lu_.rows(); }

  /// Solves A X = B column by column.
  Matrix solve(const Matrix& b) const {
    const std::size_t n = order();
    if (b.rows() != n)
      throw Error(ErrorCode::DimensionMismatch,
                  "solve with " + lu_.shape_str() + " and rhs " + b.shape_str());
    Matrix x(n, b.cols());
    std::vector<double> col(n);
    for (std::size_t j = 0; j < b.cols(); ++j) {
      for (std::size_t i = 0; i < n; ++i) col[i] = b(perm_[i], j);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < i; ++k) col[i] -= lu_(i, k) * col[k];
      for (std::size_t i = n; i-- > 0;) {
        for (std::size_t k = i + 1; k < n; ++k) col[i] -= lu_(i, k) * col[k];
        col[i] /= lu_(i, i);
      }
      for (std::size_t i = 0; i < n; ++i) x(i, j) = col[i];
    }
    return x;
  }

  Matrix inverse() const { return solve(Matrix::identity(order())); }

 private:
  Matrix lu_;
  std::vector<std::size_t> perm_;
};

inline Matrix invert(const Matrix& a, double rel_pivot_tol = kDefaultPivotTolerance) {
  return LuDecomposition(a, rel_pivot_tol).inverse();
}

/// Maximum absolute column sum.
inline double norm_1(const Matrix& a) {
  double best = 0.0;
  for (std::size_t c = 0; c < a.cols(); ++c) {
    double sum = 0.0;
    for (std::size_t r = 0; r < a.rows(); ++r) sum += std::abs(a(r, c));
    best = std::max(best, sum);
  }
  return best;
}

inline double condition_1norm(const Matrix& a, const Matrix& a_inverse) {
  return norm_1(a) * norm_1(a_inverse);
}

/// ||A||_1 * ||A^-1||_1 via an explicit inverse.
inline double condition_1norm(const Matrix& a) { return condition_1norm(a, invert(a)); }

}  // namespace skipfuse

#endif  // SKIPFUSE_LINALG_HPP_
