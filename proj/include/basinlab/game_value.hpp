#pragma once

// Scalar-generic policy and value computations. Everything here is a
// template over the scalar type so the same code evaluates on doubles and
// on (nested) dual numbers.

#include <cmath>
#include <span>
#include <vector>

#include "basinlab/dense.hpp"
#include "basinlab/dual.hpp"
#include "basinlab/game.hpp"

namespace basinlab::value {

// Log-probabilities of every action of every agent in every state:
// out[(agent * n_states + state) * max_actions + action].
template <class S>
struct PolicyTable {
  int n_states = 0;
  int max_actions = 0;
  std::vector<S> log_prob;
  std::vector<S> prob;

  const S& lp(int agent, int state, int action) const {
    return log_prob[(static_cast<std::size_t>(agent) * n_states + state) * max_actions + action];
  }
  const S& p(int agent, int state, int action) const {
    return prob[(static_cast<std::size_t>(agent) * n_states + state) * max_actions + action];
  }
};

template <class S>
PolicyTable<S> policy_table(const GameSpec& g, std::span<const S> theta) {
  using std::exp;
  using std::log;
  using ad::log_sigmoid;
  using ad::sigmoid;
  PolicyTable<S> t;
  t.n_states = g.n_states();
  t.max_actions = 0;
  for (int a : g.action_counts()) t.max_actions = std::max(t.max_actions, a);
  const std::size_t cells = static_cast<std::size_t>(g.n_agents()) * g.n_states() * t.max_actions;
  t.log_prob.assign(cells, S(0.0));
  t.prob.assign(cells, S(0.0));
  for (int i = 0; i < g.n_agents(); ++i) {
    const int na = g.action_count(i);
    const std::size_t off = g.block_offset(i);
    for (int s = 0; s < g.n_states(); ++s) {
      const std::size_t base = (static_cast<std::size_t>(i) * g.n_states() + s) * t.max_actions;
      const std::size_t pbase = off + static_cast<std::size_t>(s) * (na - 1);
      if (na == 2) {
        const S& z = theta[pbase];
        t.log_prob[base] = log_sigmoid(z);
        t.log_prob[base + 1] = log_sigmoid(-z);
        t.prob[base] = sigmoid(z);
        t.prob[base + 1] = sigmoid(-z);
        continue;
      }
      // Softmax with the last action as zero-logit reference; the shift by
      // the largest primal logit leaves the result unchanged.
      double shift = 0.0;
      for (int a = 0; a + 1 < na; ++a) shift = std::max(shift, ad::primal(theta[pbase + a]));
      S total(std::exp(-shift));
      for (int a = 0; a + 1 < na; ++a) total += exp(theta[pbase + a] - shift);
      const S lse = log(total) + shift;
      for (int a = 0; a < na; ++a) {
        const S z = (a + 1 < na) ? S(theta[pbase + a]) : S(0.0);
        t.log_prob[base + a] = z - lse;
        t.prob[base + a] = exp(t.log_prob[base + a]);
      }
    }
  }
  return t;
}

// Joint-action probabilities per state: out[state * n_joint + joint].
template <class S>
std::vector<S> joint_probs(const GameSpec& g, const PolicyTable<S>& t) {
  std::vector<S> out(static_cast<std::size_t>(g.n_states()) * g.n_joint(), S(0.0));
  for (int s = 0; s < g.n_states(); ++s)
    for (int j = 0; j < g.n_joint(); ++j) {
      S p = t.p(0, s, g.agent_action(j, 0));
      for (int i = 1; i < g.n_agents(); ++i) p = p * t.p(i, s, g.agent_action(j, i));
      out[static_cast<std::size_t>(s) * g.n_joint() + j] = p;
    }
  return out;
}

// (I - gamma P_pi) and the on-policy transition matrix.
template <class S>
ad::Matrix<S> resolvent_system(const GameSpec& g, const std::vector<S>& jp) {
  const auto ns = static_cast<std::size_t>(g.n_states());
  ad::Matrix<S> a(ns, ns);
  for (std::size_t s = 0; s < ns; ++s) a(s, s) = S(1.0);
  for (int s = 0; s < g.n_states(); ++s)
    for (int j = 0; j < g.n_joint(); ++j) {
      const S& pj = jp[static_cast<std::size_t>(s) * g.n_joint() + j];
      for (int s2 = 0; s2 < g.n_states(); ++s2) {
        const double tr = g.transition(s, j, s2);
        if (tr != 0.0) a(s, s2) -= pj * (g.discount() * tr);
      }
    }
  return a;
}

// Per-agent values V_i (including the entropy bonus when enabled).
template <class S>
std::vector<S> agent_values(const GameSpec& g, std::span<const S> theta) {
  const auto t = policy_table<S>(g, theta);
  const auto jp = joint_probs<S>(g, t);
  const auto ns = static_cast<std::size_t>(g.n_states());
  const auto na = static_cast<std::size_t>(g.n_agents());
  ad::Matrix<S> r(ns, na);
  for (int s = 0; s < g.n_states(); ++s)
    for (int i = 0; i < g.n_agents(); ++i) {
      S acc(0.0);
      for (int j = 0; j < g.n_joint(); ++j) {
        const double rw = g.reward(i, s, j);
        if (rw != 0.0) acc += jp[static_cast<std::size_t>(s) * g.n_joint() + j] * rw;
      }
      if (g.entropy_weight() != 0.0) {
        S ent(0.0);
        for (int a = 0; a < g.action_count(i); ++a) ent -= t.p(i, s, a) * t.lp(i, s, a);
        acc += ent * g.entropy_weight();
      }
      r(static_cast<std::size_t>(s), static_cast<std::size_t>(i)) = acc;
    }
  const auto x = ad::solve(resolvent_system(g, jp), r);
  std::vector<S> v(na, S(0.0));
  for (std::size_t s = 0; s < ns; ++s) {
    const double w = g.init_dist()[s];
    if (w == 0.0) continue;
    for (std::size_t i = 0; i < na; ++i) v[i] += x(s, i) * w;
  }
  return v;
}

// (1 - gamma) sum_t gamma^t Pr(joint action 0 at time t).
template <class S>
S joint0_frequency(const GameSpec& g, std::span<const S> theta) {
  const auto t = policy_table<S>(g, theta);
  const auto jp = joint_probs<S>(g, t);
  const auto ns = static_cast<std::size_t>(g.n_states());
  ad::Matrix<S> c(ns, 1);
  for (std::size_t s = 0; s < ns; ++s) c(s, 0) = jp[s * g.n_joint()];
  const auto x = ad::solve(resolvent_system(g, jp), c);
  S f(0.0);
  for (std::size_t s = 0; s < ns; ++s) f += x(s, 0) * g.init_dist()[s];
  return f * (1.0 - g.discount());
}

}  // namespace basinlab::value
