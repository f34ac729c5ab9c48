#pragma once

// Derivative drivers on top of Dual: gradients, Jacobians and Hessians of
// callables that are generic over their scalar type. A callable passed here
// receives std::span<const Dual<T, N>> and returns a Dual (gradient, Hessian)
// or a std::vector of Duals (Jacobian).

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "basinlab/dense.hpp"
#include "basinlab/dual.hpp"
#include "basinlab/errors.hpp"

namespace basinlab::ad {

// Default direction capacity; enough for every built-in game (IPD has 10
// parameters).
inline constexpr std::size_t kDefaultDirections = 10;

struct JacobianMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> entries;  // row-major
  std::vector<std::string> row_labels;
  std::vector<std::string> col_labels;

  JacobianMatrix() = default;
  JacobianMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), entries(r * c, 0.0) {}

  double& operator()(std::size_t r, std::size_t c) { return entries[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return entries[r * cols + c]; }
};

template <std::size_t N, class T>
std::vector<Dual<T, N>> seed(std::span<const T> at) {
  if (at.size() > N)
    throw ContractError("autodiff: " + std::to_string(at.size()) +
                        " inputs exceed the " + std::to_string(N) + " tangent directions");
  std::vector<Dual<T, N>> x;
  x.reserve(at.size());
  for (std::size_t k = 0; k < at.size(); ++k) x.push_back(Dual<T, N>::variable(at[k], k));
  return x;
}

// Gradient of a scalar map at `at`, with entries of the input's scalar type
// (so the driver itself can be nested).
template <std::size_t N, class T, class F>
std::vector<T> gradient(F&& f, std::span<const T> at) {
  const auto x = seed<N>(at);
  const Dual<T, N> y = f(std::span<const Dual<T, N>>(x));
  return std::vector<T>(y.eps.begin(), y.eps.begin() + static_cast<std::ptrdiff_t>(at.size()));
}

// rows[i][k] = d F_i / d x_k
template <std::size_t N, class T, class F>
std::vector<std::vector<T>> jacobian_rows(F&& f, std::span<const T> at) {
  const auto x = seed<N>(at);
  const std::vector<Dual<T, N>> y = f(std::span<const Dual<T, N>>(x));
  std::vector<std::vector<T>> rows(y.size(), std::vector<T>(at.size()));
  for (std::size_t i = 0; i < y.size(); ++i)
    for (std::size_t k = 0; k < at.size(); ++k) rows[i][k] = y[i].eps[k];
  return rows;
}

template <std::size_t N = kDefaultDirections, class F>
std::vector<double> grad(F&& f, std::span<const double> at) {
  return gradient<N, double>(f, at);
}

template <std::size_t N = kDefaultDirections, class F>
JacobianMatrix jacobian(F&& f, std::span<const double> at) {
  const auto rows = jacobian_rows<N, double>(f, at);
  JacobianMatrix j(rows.size(), at.size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t k = 0; k < at.size(); ++k) j(i, k) = rows[i][k];
  return j;
}

// Forward-over-forward Hessian: both layers seed the same coordinate.
template <std::size_t N = kDefaultDirections, class F>
JacobianMatrix hessian(F&& f, std::span<const double> at) {
  using Inner = Dual<double, N>;
  using Outer = Dual<Inner, N>;
  if (at.size() > N) throw ContractError("hessian: too many inputs for the direction capacity");
  std::vector<Outer> x;
  x.reserve(at.size());
  for (std::size_t k = 0; k < at.size(); ++k)
    x.push_back(Outer::variable(Inner::variable(at[k], k), k));
  const Outer y = f(std::span<const Outer>(x));
  JacobianMatrix h(at.size(), at.size());
  for (std::size_t j = 0; j < at.size(); ++j)
    for (std::size_t k = 0; k < at.size(); ++k) h(j, k) = y.eps[j].eps[k];
  return h;
}

}  // namespace basinlab::ad
