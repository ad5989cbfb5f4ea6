#include "regime/linalg.hpp"

#include <cmath>
#include <utility>

#include "regime/errors.hpp"

namespace regime {

Matrix Matrix::leading(std::size_t k) const {
  Matrix m(k, k);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) m(i, j) = (*this)(i, j);
  return m;
}

Matrix Matrix::transposed() const {
  Matrix m(cols_, rows_);
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = 0; j < cols_; ++j) m(j, i) = (*this)(i, j);
  return m;
}

double Matrix::max_abs() const {
  double m = 0.0;
  for (double v : data_) m = std::max(m, std::abs(v));
  return m;
}

namespace {

struct LuResult {
  Matrix lu;
  std::vector<std::size_t> perm;
  int sign = 1;
  bool singular = false;
};

LuResult lu_decompose(const Matrix& a) {
  const std::size_t n = a.rows();
  LuResult r{a, {}, 1, false};
  r.perm.resize(n);
  for (std::size_t i = 0; i < n; ++i) r.perm[i] = i;

  const double tiny = 1e-14 * std::max(1.0, a.max_abs());
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t pivot = k;
    double best = std::abs(r.lu(k, k));
    for (std::size_t i = k + 1; i < n; ++i) {
      const double v = std::abs(r.lu(i, k));
      if (v > best) {
        best = v;
        pivot = i;
      }
    }
    if (best <= tiny) {
      r.singular = true;
      return r;
    }
    if (pivot != k) {
      for (std::size_t j = 0; j < n; ++j)
        std::swap(r.lu(k, j), r.lu(pivot, j));
      std::swap(r.perm[k], r.perm[pivot]);
      r.sign = -r.sign;
    }
    for (std::size_t i = k + 1; i < n; ++i) {
      const double f = r.lu(i, k) / r.lu(k, k);
      r.lu(i, k) = f;
      for (std::size_t j = k + 1; j < n; ++j) r.lu(i, j) -= f * r.lu(k, j);
    }
  }
  return r;
}

std::vector<double> lu_solve(const LuResult& lu, const std::vector<double>& b) {
  const std::size_t n = lu.perm.size();
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = b[lu.perm[i]];
  for (std::size_t i = 1; i < n; ++i)
    for (std::size_t j = 0; j < i; ++j) x[i] -= lu.lu(i, j) * x[j];
  for (std::size_t i = n; i-- > 0;) {
    for (std::size_t j = i + 1; j < n; ++j) x[i] -= lu.lu(i, j) * x[j];
    x[i] /= lu.lu(i, i);
  }
  return x;
}

}  // namespace

std::vector<double> solve_linear(const Matrix& a, const std::vector<double>& b) {
  if (a.rows() != a.cols() || a.rows() != b.size())
    throw Error(ErrorCode::SingularSystem, "solve_linear: shape mismatch");
  const LuResult lu = lu_decompose(a);
  if (lu.singular)
    throw Error(ErrorCode::SingularSystem, "matrix is numerically singular");
  return lu_solve(lu, b);
}

double determinant(const Matrix& a) {
  const LuResult lu = lu_decompose(a);
  if (lu.singular) return 0.0;
  double det = lu.sign;
  for (std::size_t i = 0; i < a.rows(); ++i) det *= lu.lu(i, i);
  return det;
}

std::vector<double> leading_principal_minors(const Matrix& a) {
  std::vector<double> minors;
  minors.reserve(a.rows());
  for (std::size_t k = 1; k <= a.rows(); ++k)
    minors.push_back(determinant(a.leading(k)));
  return minors;
}

Matrix inverse(const Matrix& a) {
  const std::size_t n = a.rows();
  const LuResult lu = lu_decompose(a);
  if (lu.singular)
    throw Error(ErrorCode::SingularSystem, "matrix is numerically singular");
  Matrix inv(n, n);
  std::vector<double> e(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    e[j] = 1.0;
    const std::vector<double> col = lu_solve(lu, e);
    e[j] = 0.0;
    for (std::size_t i = 0; i < n; ++i) inv(i, j) = col[i];
  }
  return inv;
}

}  // namespace regime
