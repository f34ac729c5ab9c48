#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "basinlab/autodiff.hpp"
#include "basinlab/dense.hpp"
#include "basinlab/fields.hpp"
#include "basinlab/game.hpp"
#include "basinlab/game_value.hpp"

using namespace basinlab;
using ad::Dual;

namespace {

constexpr double kFdStep = 1e-5;

template <class F>
std::vector<double> central_gradient(F&& f, std::vector<double> x, double h = kFdStep) {
  std::vector<double> g(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double x0 = x[k];
    x[k] = x0 + h;
    const double fp = f(x);
    x[k] = x0 - h;
    const double fm = f(x);
    x[k] = x0;
    g[k] = (fp - fm) / (2 * h);
  }
  return g;
}

// A randomly composed smooth function of three variables.
struct RandomSmooth {
  std::array<double, 6> c{};
  std::array<int, 3> op{};

  template <class T>
  T apply(int which, const T& x) const {
    using std::exp;
    using std::log1p;
    using std::sqrt;
    using ad::exp;
    using ad::log1p;
    using ad::sigmoid;
    using ad::sqrt;
    switch (which) {
      case 0: return exp(0.3 * x);
      case 1: return log1p(x * x);
      case 2: return sigmoid(x);
      case 3: return sqrt(1.0 + x * x);
      default: return x * x * x / (2.0 + x * x);
    }
  }

  template <class T>
  T operator()(std::span<const T> x) const {
    const T a = apply(op[0], c[0] * x[0] + c[1] * x[1]);
    const T b = apply(op[1], c[2] * x[1] - c[3] * x[2]);
    const T d = apply(op[2], c[4] * x[0] * x[2] + c[5]);
    return a * b + d / (1.0 + a * a) - b * d;
  }
};

}  // namespace

TEST_CASE("elementary derivatives") {
  const std::vector<double> at{3.0};
  const auto g = ad::grad([](auto x) { return x[0] * x[0]; }, std::span<const double>(at));
  CHECK(g[0] == 6.0);
  const std::vector<double> zero{0.0};
  const auto s = ad::grad([](auto x) { return ad::sigmoid(x[0]); }, std::span<const double>(zero));
  CHECK(s[0] == doctest::Approx(0.25).epsilon(1e-15));
  const auto c = ad::grad([](auto) { return Dual<double, 10>(4.2); }, std::span<const double>(at));
  CHECK(c[0] == 0.0);
}

TEST_CASE("product and chain rules hold exactly for duals") {
  using D = Dual<double, 2>;
  const D x = D::variable(1.7, 0);
  const D y = D::variable(-0.4, 1);
  const D p = x * y;
  CHECK(p.eps[0] == -0.4);
  CHECK(p.eps[1] == 1.7);
  const D e = ad::exp(x * x);
  CHECK(e.eps[0] == doctest::Approx(std::exp(1.7 * 1.7) * 2 * 1.7).epsilon(1e-15));
  const D q = x / y;
  CHECK(q.eps[1] == doctest::Approx(-1.7 / (0.4 * 0.4)).epsilon(1e-15));
}

TEST_CASE("jacobian of identity and linear maps") {
  const std::vector<double> at{0.3, -1.2, 2.0};
  const auto id = ad::jacobian([](auto x) { return std::vector<std::decay_t<decltype(x[0])>>(x.begin(), x.end()); },
                               std::span<const double>(at));
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t k = 0; k < 3; ++k) CHECK(id(i, k) == (i == k ? 1.0 : 0.0));

  const double a[2][3] = {{1.5, -2.0, 0.25}, {3.0, 0.0, -1.0}};
  const auto lin = ad::jacobian(
      [&](auto x) {
        using T = std::decay_t<decltype(x[0])>;
        std::vector<T> y(2, T(0.0));
        for (int i = 0; i < 2; ++i)
          for (int k = 0; k < 3; ++k) y[i] += a[i][k] * x[k];
        return y;
      },
      std::span<const double>(at));
  CHECK(lin.rows == 2);
  CHECK(lin.cols == 3);
  for (int i = 0; i < 2; ++i)
    for (int k = 0; k < 3; ++k) CHECK(lin(i, k) == a[i][k]);
}

TEST_CASE("hessians of polynomials") {
  const std::vector<double> xy{0.7, -1.1};
  const auto h = ad::hessian([](auto x) { return x[0] * x[1]; }, std::span<const double>(xy));
  CHECK(h(0, 0) == 0.0);
  CHECK(h(1, 1) == 0.0);
  CHECK(h(0, 1) == 1.0);
  CHECK(h(1, 0) == 1.0);
  const std::vector<double> two{2.0};
  const auto c = ad::hessian([](auto x) { return x[0] * x[0] * x[0]; }, std::span<const double>(two));
  CHECK(c(0, 0) == 12.0);
}

TEST_CASE("random smooth functions match central differences; hessians are symmetric") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_int_distribution<int> pick(0, 4);
  for (int trial = 0; trial < 50; ++trial) {
    RandomSmooth f;
    for (auto& c : f.c) c = u(rng);
    for (auto& o : f.op) o = pick(rng);
    const std::vector<double> at{u(rng), u(rng), u(rng)};
    const auto g = ad::grad([&](auto x) { return f(x); }, std::span<const double>(at));
    const auto fd = central_gradient([&](const std::vector<double>& x) { return f(std::span<const double>(x)); }, at);
    for (std::size_t k = 0; k < 3; ++k) {
      INFO("trial " << trial << " k " << k);
      CHECK(std::abs(g[k] - fd[k]) <= 1e-6 * std::max(1.0, std::abs(fd[k])));
    }
    const auto h = ad::hessian([&](auto x) { return f(x); }, std::span<const double>(at));
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t k = 0; k < i; ++k) CHECK(std::abs(h(i, k) - h(k, i)) <= 1e-8);
  }
}

TEST_CASE("non-smooth primitives are refused") {
  const std::vector<double> at{0.5};
  CHECK_THROWS_AS(ad::grad([](auto x) { return ad::abs(x[0]); }, std::span<const double>(at)), UnsupportedOperation);
  CHECK_THROWS_AS(ad::grad([](auto x) { return ad::floor(x[0]); }, std::span<const double>(at)),
                  UnsupportedOperation);
}

TEST_CASE("nesting depth is bounded at three") {
  CHECK(ad::kMaxNesting == 3);
  CHECK(ad::nesting_v<Dual<Dual<Dual<double, 2>, 2>, 2>> == 3);
  CHECK(ad::nesting_v<double> == 0);
  const std::vector<double> many(11, 0.0);
  CHECK_THROWS_AS(ad::grad([](auto x) { return x[0]; }, std::span<const double>(many)), ContractError);
}

TEST_CASE("differentiable linear solve matches finite differences") {
  // x(t) = A(t)^-1 b(t), scalar output sum(x).
  const auto f = [](auto t) {
    using T = std::decay_t<decltype(t[0])>;
    ad::Matrix<T> a(2, 2), b(2, 1);
    a(0, 0) = 2.0 + t[0];
    a(0, 1) = 0.5 * t[1];
    a(1, 0) = -0.3;
    a(1, 1) = 1.5 + t[0] * t[1];
    b(0, 0) = T(1.0) + t[1];
    b(1, 0) = T(-0.5) * t[0];
    const auto x = ad::solve(a, b);
    return x(0, 0) + x(1, 0);
  };
  const std::vector<double> at{0.4, -0.7};
  const auto g = ad::grad(f, std::span<const double>(at));
  const auto fd = central_gradient([&](const std::vector<double>& x) { return f(std::span<const double>(x)); }, at);
  for (int k = 0; k < 2; ++k) CHECK(g[k] == doctest::Approx(fd[k]).epsilon(1e-8));
}

TEST_CASE("value gradients and hessians of the stag hunt match finite differences") {
  const GameSpec g = make_stag_hunt(default_stag_hunt_payoffs(), 0.9);
  const auto v1 = [&](const std::vector<double>& th) { return exact_value(g, make_params(g, th))[0]; };
  const auto v1_ad = [&](auto th) {
    using T = std::decay_t<decltype(th[0])>;
    return value::agent_values<T>(g, th)[0];
  };
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 5; ++trial) {
    const std::vector<double> at{n(rng), n(rng)};
    const auto gr = ad::grad(v1_ad, std::span<const double>(at));
    const auto fd = central_gradient(v1, at);
    for (int k = 0; k < 2; ++k) CHECK(std::abs(gr[k] - fd[k]) <= 1e-6 * std::abs(fd[k]) + 1e-9);

    const auto h = ad::hessian(v1_ad, std::span<const double>(at));
    for (int k = 0; k < 2; ++k) {
      const auto dk = central_gradient(
          [&](const std::vector<double>& x) { return ad::grad(v1_ad, std::span<const double>(x))[k]; }, at);
      for (int j = 0; j < 2; ++j) CHECK(std::abs(h(k, j) - dk[j]) <= 1e-4);
    }
  }
}

TEST_CASE("jacobian of v near (D,D) matches finite differences") {
  const GameSpec g = make_stag_hunt(default_stag_hunt_payoffs(), 0.9);
  const std::vector<double> at{-3.0, -2.5};
  const auto j = v_jacobian(g, make_params(g, at));
  for (std::size_t k = 0; k < 2; ++k) {
    std::vector<double> p = at, m = at;
    p[k] += kFdStep;
    m[k] -= kFdStep;
    const auto vp = eval_v(g, make_params(g, p));
    const auto vm = eval_v(g, make_params(g, m));
    for (std::size_t i = 0; i < 2; ++i) CHECK(std::abs(j(i, k) - (vp[i] - vm[i]) / (2 * kFdStep)) <= 1e-5);
  }
}
