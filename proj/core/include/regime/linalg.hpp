#pragma once

#include <cstddef>
#include <vector>

namespace regime {

/// Dense row-major square/rectangular matrix of doubles. The state counts in
/// this library are tiny (a handful of regimes), so everything below is plain
/// O(n^3) Gaussian elimination with partial pivoting.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  const std::vector<double>& data() const { return data_; }

  /// Leading k x k principal submatrix.
  Matrix leading(std::size_t k) const;

  Matrix transposed() const;

  double max_abs() const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Solve a x = b by LU with partial pivoting. Throws Error{SingularSystem}
/// when a pivot falls below tiny * max|a|.
std::vector<double> solve_linear(const Matrix& a, const std::vector<double>& b);

/// Determinant by LU with partial pivoting (sign tracked across row swaps).
double determinant(const Matrix& a);

/// All n leading principal minors, det(a[0..k, 0..k]) for k = 1..n.
std::vector<double> leading_principal_minors(const Matrix& a);

/// Matrix inverse; throws Error{SingularSystem} if rank-deficient.
Matrix inverse(const Matrix& a);

}  // namespace regime
