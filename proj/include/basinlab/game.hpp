#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "basinlab/rng.hpp"

namespace basinlab {

enum class GameKind { stag_hunt, ipd, custom };

std::string to_string(GameKind kind);

// A finite discounted stochastic game with rewards in [-1, 1].
//
// Joint actions are indexed row-major over agents (agent 0 most
// significant). Each agent's policy in each state is a softmax over its
// actions with the last action as the zero-logit reference, so a two-action
// agent has one parameter per state: the logit of choosing action 0.
//
// An optional per-step entropy bonus (weight times the entropy of the
// agent's own action distribution) can be added to each agent's objective;
// it is zero for the built-in games unless asked for.
class GameSpec {
 public:
  GameSpec(GameKind kind, int n_agents, int n_states, std::vector<int> action_counts,
           std::vector<double> rewards, std::vector<double> transitions, double discount,
           std::vector<double> init_dist, double entropy_weight = 0.0);

  GameKind kind() const noexcept { return kind_; }
  int n_agents() const noexcept { return n_agents_; }
  int n_states() const noexcept { return n_states_; }
  int n_joint() const noexcept { return n_joint_; }
  int action_count(int agent) const { return action_counts_.at(static_cast<std::size_t>(agent)); }
  const std::vector<int>& action_counts() const noexcept { return action_counts_; }
  double discount() const noexcept { return discount_; }
  double entropy_weight() const noexcept { return entropy_weight_; }
  const std::vector<double>& init_dist() const noexcept { return init_dist_; }

  double reward(int agent, int state, int joint) const {
    return rewards_[(static_cast<std::size_t>(agent) * n_states_ + state) * n_joint_ + joint];
  }
  double transition(int state, int joint, int next) const {
    return transitions_[(static_cast<std::size_t>(state) * n_joint_ + joint) * n_states_ + next];
  }
  const std::vector<double>& rewards() const noexcept { return rewards_; }
  const std::vector<double>& transitions() const noexcept { return transitions_; }

  // Action of `agent` inside joint action index `joint`.
  int agent_action(int joint, int agent) const;

  // Parameter layout: one contiguous block per agent, state-major inside.
  std::size_t param_dim() const noexcept { return block_offsets_.back(); }
  std::size_t block_offset(int agent) const { return block_offsets_.at(static_cast<std::size_t>(agent)); }
  std::size_t block_size(int agent) const {
    return block_offsets_.at(static_cast<std::size_t>(agent) + 1) - block_offsets_.at(static_cast<std::size_t>(agent));
  }
  int agent_of_param(std::size_t k) const;
  std::vector<std::string> param_labels() const;

  // Copy with every reward and the entropy weight multiplied by k > 0.
  GameSpec scaled(double k) const;
  GameSpec with_entropy_weight(double weight) const;

 private:
  GameKind kind_;
  int n_agents_;
  int n_states_;
  int n_joint_;
  std::vector<int> action_counts_;
  std::vector<double> rewards_;      // [agent][state][joint]
  std::vector<double> transitions_;  // [state][joint][next]
  double discount_;
  std::vector<double> init_dist_;
  double entropy_weight_;
  std::vector<std::size_t> block_offsets_;
};

// Stacked per-agent parameter blocks, tied to the layout of one game.
struct JointParams {
  std::vector<double> values;
  std::vector<std::size_t> block_offsets;

  std::size_t size() const noexcept { return values.size(); }
  std::span<const double> block(int agent) const {
    const auto a = static_cast<std::size_t>(agent);
    return std::span<const double>(values).subspan(block_offsets[a], block_offsets[a + 1] - block_offsets[a]);
  }
};

// Validates size and finiteness against the game's layout.
JointParams make_params(const GameSpec& game, std::vector<double> values);
// Two-action games only: parameters are the logits of the given action-0
// probabilities.
JointParams params_from_probabilities(const GameSpec& game, std::span<const double> probs);
// Action-0 probability for every parameter of a two-action game.
std::vector<double> action0_probabilities(const GameSpec& game, const JointParams& params);

double logit(double p);

// payoffs[a1][a2] = (reward to agent 1, reward to agent 2); action 0 is
// Cooperate / Stag.
using StagHuntPayoffs = std::array<std::array<std::array<double, 2>, 2>, 2>;
StagHuntPayoffs default_stag_hunt_payoffs();

GameSpec make_stag_hunt(const StagHuntPayoffs& payoffs, double discount = 0.9);

struct IpdPayoffs {
  double temptation = 5.0;
  double reward = 3.0;
  double punishment = 1.0;
  double sucker = 0.0;
};

// Memory-1 iterated Prisoner's Dilemma: state 0 is the opening move and
// states 1..4 remember the previous joint action CC, CD, DC, DD (agent 1's
// action first).
GameSpec make_ipd(const IpdPayoffs& payoffs, double discount = 0.96);

enum IpdState : int { kIpdInitial = 0, kIpdCC = 1, kIpdCD = 2, kIpdDC = 3, kIpdDD = 4 };

// {"kind":"stag_hunt"|"ipd"|"custom", "payoffs":[...], "discount":x, ...}
GameSpec game_from_json(const nlohmann::json& doc);
nlohmann::json game_to_json(const GameSpec& game);

// Exact per-agent discounted values from the linear system
// (I - gamma P_pi) V = r_pi, averaged over the initial distribution.
std::vector<double> exact_value(const GameSpec& game, const JointParams& params);

// Discounted frequency (1 - gamma) sum_t gamma^t Pr(joint action at t == 0),
// i.e. how often every agent plays its action 0.
double discounted_joint0_frequency(const GameSpec& game, const JointParams& params);

struct Trajectory {
  std::vector<int> states;
  std::vector<int> joint_actions;
  std::vector<double> rewards;  // [t * n_agents + agent]
};

struct TrajectoryBatch {
  std::vector<Trajectory> trajectories;
  int horizon = 0;
  JointParams behavior;
  std::vector<double> returns;  // discounted, [trajectory * n_agents + agent]
};

TrajectoryBatch sample_trajectories(const GameSpec& game, const JointParams& params, int count,
                                    int horizon, Stream& stream);

}  // namespace basinlab
