#pragma once

// Small dense matrices over any scalar (double or nested duals) and a linear
// solve that is differentiable end to end. The primal matrix is factored
// once; tangents are propagated with d(A^-1 B) = A^-1 (dB - dA A^-1 B),
// reusing that factorization at every nesting level.

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <vector>

#include "basinlab/dual.hpp"
#include "basinlab/errors.hpp"

namespace basinlab::ad {

template <class S>
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<S> a;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), a(r * c, S(0.0)) {}

  S& operator()(std::size_t r, std::size_t c) { return a[r * cols + c]; }
  const S& operator()(std::size_t r, std::size_t c) const { return a[r * cols + c]; }
};

namespace detail {

using Lu = Eigen::PartialPivLU<Eigen::MatrixXd>;

inline Matrix<double> solve_factored(const Lu& lu, const Matrix<double>& /*a*/,
                                     const Matrix<double>& b) {
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> rhs(
      b.a.data(), static_cast<Eigen::Index>(b.rows), static_cast<Eigen::Index>(b.cols));
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> x = lu.solve(rhs);
  Matrix<double> out(b.rows, b.cols);
  for (std::size_t i = 0; i < out.a.size(); ++i) out.a[i] = x.data()[i];
  return out;
}

template <class T, std::size_t N>
Matrix<T> value_part(const Matrix<Dual<T, N>>& m) {
  Matrix<T> out(m.rows, m.cols);
  for (std::size_t i = 0; i < m.a.size(); ++i) out.a[i] = m.a[i].val;
  return out;
}

template <class T, std::size_t N>
Matrix<T> tangent_part(const Matrix<Dual<T, N>>& m, std::size_t k) {
  Matrix<T> out(m.rows, m.cols);
  for (std::size_t i = 0; i < m.a.size(); ++i) out.a[i] = m.a[i].eps[k];
  return out;
}

template <class T>
Matrix<T> multiply(const Matrix<T>& x, const Matrix<T>& y) {
  Matrix<T> out(x.rows, y.cols);
  for (std::size_t i = 0; i < x.rows; ++i)
    for (std::size_t k = 0; k < x.cols; ++k) {
      const T& xik = x(i, k);
      for (std::size_t j = 0; j < y.cols; ++j) out(i, j) += xik * y(k, j);
    }
  return out;
}

template <class T, std::size_t N>
Matrix<Dual<T, N>> solve_factored(const Lu& lu, const Matrix<Dual<T, N>>& a,
                                  const Matrix<Dual<T, N>>& b) {
  const Matrix<T> av = value_part(a);
  const Matrix<T> xv = solve_factored(lu, av, value_part(b));
  Matrix<Dual<T, N>> x(b.rows, b.cols);
  for (std::size_t i = 0; i < x.a.size(); ++i) x.a[i].val = xv.a[i];
  for (std::size_t k = 0; k < N; ++k) {
    Matrix<T> rhs = tangent_part(b, k);
    const Matrix<T> da_x = multiply(tangent_part(a, k), xv);
    for (std::size_t i = 0; i < rhs.a.size(); ++i) rhs.a[i] -= da_x.a[i];
    const Matrix<T> xk = solve_factored(lu, av, rhs);
    for (std::size_t i = 0; i < x.a.size(); ++i) x.a[i].eps[k] = xk.a[i];
  }
  return x;
}

}  // namespace detail

// Solves A X = B. Throws SingularSystem when the primal matrix is singular
// to working precision.
template <class S>
Matrix<S> solve(const Matrix<S>& a, const Matrix<S>& b) {
  if (a.rows != a.cols || a.rows != b.rows)
    throw ContractError("solve: dimension mismatch");
  const auto n = static_cast<Eigen::Index>(a.rows);
  Eigen::MatrixXd primal_a(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      primal_a(i, j) = primal(a(static_cast<std::size_t>(i), static_cast<std::size_t>(j)));
  detail::Lu lu(primal_a);
  const auto& u = lu.matrixLU();
  double max_pivot = 0.0;
  double min_pivot = INFINITY;
  for (Eigen::Index i = 0; i < n; ++i) {
    max_pivot = std::max(max_pivot, std::abs(u(i, i)));
    min_pivot = std::min(min_pivot, std::abs(u(i, i)));
  }
  if (!(min_pivot > 1e-14 * max_pivot) || !std::isfinite(max_pivot))
    throw SingularSystem("matrix is singular to working precision");
  return detail::solve_factored(lu, a, b);
}

}  // namespace basinlab::ad
