#pragma once

// Scalar-generic kernels behind the fields module. Every kernel that adds a
// differentiation layer takes the direction count N explicitly.

#include <cmath>
#include <span>
#include <type_traits>
#include <utility>
#include <vector>

#include "basinlab/autodiff.hpp"
#include "basinlab/errors.hpp"
#include "basinlab/fields.hpp"
#include "basinlab/game_value.hpp"

namespace basinlab::detail {

// Calls fn(std::integral_constant<std::size_t, N>{}) with the smallest
// supported N that covers `dim` directions.
template <class Fn>
decltype(auto) with_directions(std::size_t dim, Fn&& fn) {
  if (dim <= 2) return fn(std::integral_constant<std::size_t, 2>{});
  if (dim <= ad::kDefaultDirections) return fn(std::integral_constant<std::size_t, ad::kDefaultDirections>{});
  throw ContractError("parameter dimension " + std::to_string(dim) + " exceeds the supported maximum of " +
                      std::to_string(ad::kDefaultDirections));
}

// grads[agent][k] = d V_agent / d theta_k over the full parameter vector.
template <std::size_t N, class S>
std::vector<std::vector<S>> value_gradients(const GameSpec& g, std::span<const S> theta) {
  const auto x = ad::seed<N>(theta);
  const auto vals = value::agent_values<ad::Dual<S, N>>(g, std::span<const ad::Dual<S, N>>(x));
  std::vector<std::vector<S>> out(vals.size(), std::vector<S>(theta.size()));
  for (std::size_t i = 0; i < vals.size(); ++i)
    for (std::size_t k = 0; k < theta.size(); ++k) out[i][k] = vals[i].eps[k];
  return out;
}

template <std::size_t N, class S>
std::vector<S> pg_field(const GameSpec& g, std::span<const S> theta) {
  const auto x = ad::seed<N>(theta);
  const auto vals = value::agent_values<ad::Dual<S, N>>(g, std::span<const ad::Dual<S, N>>(x));
  std::vector<S> out(theta.size());
  for (std::size_t k = 0; k < theta.size(); ++k) out[k] = vals[static_cast<std::size_t>(g.agent_of_param(k))].eps[k];
  return out;
}

inline std::vector<double> step_vector(const GameSpec& g, const UnrollConfig& cfg, int focal) {
  std::vector<double> a(g.param_dim());
  for (std::size_t k = 0; k < a.size(); ++k)
    a[k] = g.agent_of_param(k) == focal ? cfg.inner_step_own : cfg.inner_step_peer;
  return a;
}

template <class S>
void check_chain_finite(const std::vector<S>& x, int step, const char* where) {
  for (const auto& e : x)
    if (!ad::all_finite(e)) throw UnrollDivergence(step, where);
}

// Splits the total derivative of V_a(phi_L) w.r.t. agent a's block of phi_0
// into own-path and peer-path parts, given the chain Jacobian in x[j].eps[k]
// and the terminal gradients.
template <std::size_t N, class S>
void split_paths(const GameSpec& g, int agent, const std::vector<ad::Dual<S, N>>& x,
                 const std::vector<S>& grad_v, std::vector<S>& own, std::vector<S>& peer) {
  const std::size_t lo = g.block_offset(agent);
  const std::size_t hi = lo + g.block_size(agent);
  for (std::size_t k = lo; k < hi; ++k) {
    S o(0.0);
    S p(0.0);
    for (std::size_t j = 0; j < x.size(); ++j) {
      if (j >= lo && j < hi) {
        S d = x[j].eps[k];
        if (j == k) d -= 1.0;
        o += grad_v[j] * d;
      } else {
        p += grad_v[j] * x[j].eps[k];
      }
    }
    own[k] = o;
    peer[k] = p;
  }
}

template <std::size_t N, class S>
std::pair<std::vector<S>, std::vector<S>> corrections(const GameSpec& g, std::span<const S> theta,
                                                      const UnrollConfig& cfg) {
  using D = ad::Dual<S, N>;
  const std::size_t dim = theta.size();
  std::vector<S> own(dim, S(0.0));
  std::vector<S> peer(dim, S(0.0));
  const bool shared = cfg.inner_step_own == cfg.inner_step_peer;
  const int chains = shared ? 1 : g.n_agents();
  for (int focal = 0; focal < chains; ++focal) {
    const auto steps = step_vector(g, cfg, focal);
    auto x = ad::seed<N>(theta);
    for (int l = 0; l < cfg.length; ++l) {
      const auto v = pg_field<N, D>(g, std::span<const D>(x));
      for (std::size_t k = 0; k < dim; ++k) x[k] += v[k] * steps[k];
      check_chain_finite(x, l + 1, "exact inner step");
    }
    std::vector<S> terminal(dim);
    for (std::size_t k = 0; k < dim; ++k) terminal[k] = x[k].val;
    const auto grads = value_gradients<N, S>(g, std::span<const S>(terminal));
    for (int a = 0; a < g.n_agents(); ++a)
      if (shared || a == focal) split_paths<N, S>(g, a, x, grads[static_cast<std::size_t>(a)], own, peer);
  }
  return {std::move(own), std::move(peer)};
}

template <class S>
std::vector<S> combine(Arm arm, double lambda, const std::vector<S>& v, const std::vector<S>& own,
                       const std::vector<S>& peer) {
  std::vector<S> out = v;
  if (arm == Arm::pg || lambda == 0.0) return out;
  for (std::size_t k = 0; k < out.size(); ++k) {
    switch (arm) {
      case Arm::own_only:
        out[k] += own[k] * lambda;
        break;
      case Arm::peer_only:
        out[k] += peer[k] * lambda;
        break;
      case Arm::meta_mapg:
        out[k] += (own[k] + peer[k]) * lambda;
        break;
      case Arm::pg:
        break;
    }
  }
  return out;
}

// Importance-weighted surrogate of each agent's truncated discounted return
// over a fixed batch. Its value at the behavior parameters is the batch mean
// return; its gradient there is the score-function estimator.
template <class S>
std::vector<S> surrogate(const GameSpec& g, const TrajectoryBatch& batch, int horizon, bool baseline,
                         std::span<const S> theta) {
  using std::exp;
  const int n = g.n_agents();
  const auto table = value::policy_table<S>(g, theta);
  const auto behavior = value::policy_table<double>(g, std::span<const double>(batch.behavior.values));
  const auto count = batch.trajectories.size();

  std::vector<double> base(static_cast<std::size_t>(horizon) * n, 0.0);
  if (baseline) {
    for (const auto& tr : batch.trajectories)
      for (int t = 0; t < horizon; ++t)
        for (int i = 0; i < n; ++i) base[static_cast<std::size_t>(t) * n + i] += tr.rewards[static_cast<std::size_t>(t) * n + i];
    for (double& b : base) b /= static_cast<double>(count);
  }

  std::vector<S> acc(static_cast<std::size_t>(n), S(0.0));
  for (const auto& tr : batch.trajectories) {
    S cum(0.0);
    double cum_b = 0.0;
    double disc = 1.0;
    for (int t = 0; t < horizon; ++t) {
      const int s = tr.states[static_cast<std::size_t>(t)];
      const int joint = tr.joint_actions[static_cast<std::size_t>(t)];
      for (int i = 0; i < n; ++i) {
        const int a = g.agent_action(joint, i);
        cum += table.lp(i, s, a);
        cum_b += behavior.lp(i, s, a);
      }
      const S w = exp(cum - cum_b);
      for (int i = 0; i < n; ++i) {
        const auto idx = static_cast<std::size_t>(t) * n + i;
        const double centred = disc * (tr.rewards[idx] - base[idx]);
        if (centred != 0.0) acc[static_cast<std::size_t>(i)] += w * centred;
      }
      disc *= g.discount();
    }
  }
  for (auto& a : acc) a /= static_cast<double>(count);
  return acc;
}

template <std::size_t N, class S>
std::vector<std::vector<S>> sampled_value_gradients(const GameSpec& g, const TrajectoryBatch& batch, int horizon,
                                                    bool baseline, std::span<const S> theta) {
  const auto x = ad::seed<N>(theta);
  const auto sur = surrogate<ad::Dual<S, N>>(g, batch, horizon, baseline, std::span<const ad::Dual<S, N>>(x));
  std::vector<std::vector<S>> out(sur.size(), std::vector<S>(theta.size()));
  for (std::size_t i = 0; i < sur.size(); ++i)
    for (std::size_t k = 0; k < theta.size(); ++k) out[i][k] = sur[i].eps[k];
  return out;
}

template <std::size_t N, class S>
std::vector<S> sampled_pg(const GameSpec& g, const TrajectoryBatch& batch, int horizon, bool baseline,
                          std::span<const S> theta) {
  const auto grads = sampled_value_gradients<N, S>(g, batch, horizon, baseline, theta);
  std::vector<S> out(theta.size());
  for (std::size_t k = 0; k < theta.size(); ++k) out[k] = grads[static_cast<std::size_t>(g.agent_of_param(k))][k];
  return out;
}

}  // namespace basinlab::detail
