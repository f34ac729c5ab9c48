#include "basinlab/game.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "basinlab/errors.hpp"
#include "basinlab/game_value.hpp"

namespace basinlab {

namespace {

constexpr double kProbabilityTolerance = 1e-12;

void check_distribution(std::span<const double> p, const std::string& what) {
  double total = 0.0;
  for (double x : p) {
    if (!std::isfinite(x) || x < 0.0) throw ContractError(what + ": entries must be finite and non-negative");
    total += x;
  }
  if (std::abs(total - 1.0) > kProbabilityTolerance)
    throw ContractError(what + ": probabilities sum to " + std::to_string(total) + ", not 1");
}

}  // namespace

std::string to_string(GameKind kind) {
  switch (kind) {
    case GameKind::stag_hunt:
      return "stag_hunt";
    case GameKind::ipd:
      return "ipd";
    case GameKind::custom:
      return "custom";
  }
  return "custom";
}

GameSpec::GameSpec(GameKind kind, int n_agents, int n_states, std::vector<int> action_counts,
                   std::vector<double> rewards, std::vector<double> transitions, double discount,
                   std::vector<double> init_dist, double entropy_weight)
    : kind_(kind),
      n_agents_(n_agents),
      n_states_(n_states),
      n_joint_(1),
      action_counts_(std::move(action_counts)),
      rewards_(std::move(rewards)),
      transitions_(std::move(transitions)),
      discount_(discount),
      init_dist_(std::move(init_dist)),
      entropy_weight_(entropy_weight) {
  if (n_agents_ < 1) throw ContractError("game: need at least one agent");
  if (n_states_ < 1) throw ContractError("game: need at least one state");
  if (action_counts_.size() != static_cast<std::size_t>(n_agents_))
    throw ContractError("game: one action count per agent required");
  for (int a : action_counts_) {
    if (a < 2) throw ContractError("game: every agent needs at least two actions");
    n_joint_ *= a;
  }
  if (!(discount_ >= 0.0 && discount_ < 1.0)) throw ContractError("game: discount must lie in [0, 1)");
  if (!std::isfinite(entropy_weight_) || entropy_weight_ < 0.0)
    throw ContractError("game: entropy weight must be finite and non-negative");

  const auto ns = static_cast<std::size_t>(n_states_);
  const auto nj = static_cast<std::size_t>(n_joint_);
  if (rewards_.size() != static_cast<std::size_t>(n_agents_) * ns * nj)
    throw ContractError("game: reward tensor has wrong size");
  for (double r : rewards_)
    if (!std::isfinite(r) || r < -1.0 || r > 1.0)
      throw ContractError("game: every reward must be finite and lie in [-1, 1]");
  if (transitions_.size() != ns * nj * ns) throw ContractError("game: transition tensor has wrong size");
  for (std::size_t row = 0; row < ns * nj; ++row)
    check_distribution(std::span<const double>(transitions_).subspan(row * ns, ns), "game: transition row");
  if (init_dist_.size() != ns) throw ContractError("game: initial distribution has wrong size");
  check_distribution(init_dist_, "game: initial distribution");

  block_offsets_.assign(1, 0);
  for (int a : action_counts_)
    block_offsets_.push_back(block_offsets_.back() + ns * static_cast<std::size_t>(a - 1));
  if (block_offsets_.back() == 0) throw ContractError("game: empty parameter layout");
}

int GameSpec::agent_action(int joint, int agent) const {
  for (int i = n_agents_ - 1; i > agent; --i) joint /= action_counts_[static_cast<std::size_t>(i)];
  return joint % action_counts_[static_cast<std::size_t>(agent)];
}

int GameSpec::agent_of_param(std::size_t k) const {
  for (int i = 0; i < n_agents_; ++i)
    if (k < block_offsets_[static_cast<std::size_t>(i) + 1]) return i;
  throw ContractError("game: parameter index out of range");
}

std::vector<std::string> GameSpec::param_labels() const {
  std::vector<std::string> labels;
  for (int i = 0; i < n_agents_; ++i) {
    const int per_state = action_counts_[static_cast<std::size_t>(i)] - 1;
    for (int s = 0; s < n_states_; ++s)
      for (int a = 0; a < per_state; ++a) {
        std::string l = "agent" + std::to_string(i) + ".s" + std::to_string(s);
        if (per_state > 1) l += ".a" + std::to_string(a);
        labels.push_back(std::move(l));
      }
  }
  return labels;
}

GameSpec GameSpec::scaled(double k) const {
  if (!(k > 0.0) || !std::isfinite(k)) throw ContractError("game: scale factor must be positive");
  std::vector<double> r = rewards_;
  for (double& x : r) x *= k;
  return GameSpec(kind_, n_agents_, n_states_, action_counts_, std::move(r), transitions_, discount_,
                  init_dist_, entropy_weight_ * k);
}

GameSpec GameSpec::with_entropy_weight(double weight) const {
  return GameSpec(kind_, n_agents_, n_states_, action_counts_, rewards_, transitions_, discount_,
                  init_dist_, weight);
}

JointParams make_params(const GameSpec& game, std::vector<double> values) {
  if (values.size() != game.param_dim())
    throw ContractError("params: expected " + std::to_string(game.param_dim()) + " entries, got " +
                        std::to_string(values.size()));
  for (double v : values)
    if (!std::isfinite(v)) throw ContractError("params: entries must be finite");
  JointParams p;
  p.values = std::move(values);
  for (int i = 0; i <= game.n_agents(); ++i)
    p.block_offsets.push_back(i < game.n_agents() ? game.block_offset(i) : game.param_dim());
  return p;
}

double logit(double p) {
  if (!(p > 0.0 && p < 1.0)) throw ContractError("logit: probability must lie in (0, 1)");
  return std::log(p) - std::log1p(-p);
}

namespace {
void require_binary(const GameSpec& game) {
  for (int a : game.action_counts())
    if (a != 2) throw ContractError("probability parameterization needs two-action agents");
}
}  // namespace

JointParams params_from_probabilities(const GameSpec& game, std::span<const double> probs) {
  require_binary(game);
  std::vector<double> v(probs.size());
  std::transform(probs.begin(), probs.end(), v.begin(), logit);
  return make_params(game, std::move(v));
}

std::vector<double> action0_probabilities(const GameSpec& game, const JointParams& params) {
  require_binary(game);
  std::vector<double> p(params.size());
  std::transform(params.values.begin(), params.values.end(), p.begin(),
                 [](double z) { return ad::sigmoid(z); });
  return p;
}

StagHuntPayoffs default_stag_hunt_payoffs() {
  StagHuntPayoffs p{};
  p[0][0] = {4.0, 4.0};
  p[0][1] = {0.0, 3.0};
  p[1][0] = {3.0, 0.0};
  p[1][1] = {2.0, 2.0};
  return p;
}

GameSpec make_stag_hunt(const StagHuntPayoffs& payoffs, double discount) {
  double scale = 0.0;
  for (const auto& row : payoffs)
    for (const auto& cell : row)
      for (double x : cell) {
        if (!std::isfinite(x)) throw ContractError("stag hunt: payoffs must be finite");
        scale = std::max(scale, std::abs(x));
      }
  if (scale == 0.0) scale = 1.0;
  // rewards[agent][state=0][joint = 2*a1 + a2]
  std::vector<double> rewards(2 * 4);
  for (int a1 = 0; a1 < 2; ++a1)
    for (int a2 = 0; a2 < 2; ++a2)
      for (int i = 0; i < 2; ++i) rewards[static_cast<std::size_t>(i) * 4 + 2 * a1 + a2] = payoffs[a1][a2][i] / scale;
  return GameSpec(GameKind::stag_hunt, 2, 1, {2, 2}, std::move(rewards), std::vector<double>(4, 1.0), discount,
                  {1.0});
}

GameSpec make_ipd(const IpdPayoffs& p, double discount) {
  for (double x : {p.temptation, p.reward, p.punishment, p.sucker})
    if (!std::isfinite(x)) throw ContractError("ipd: payoffs must be finite");
  if (!(p.temptation > p.reward && p.reward > p.punishment && p.punishment > p.sucker))
    throw ContractError("ipd: payoffs must satisfy T > R > P > S");
  const double scale = std::max({std::abs(p.temptation), std::abs(p.reward), std::abs(p.punishment),
                                 std::abs(p.sucker)});
  constexpr int ns = 5;
  constexpr int nj = 4;
  // joint index 2*a1 + a2 with 0 = cooperate: CC, CD, DC, DD.
  const double r1[nj] = {p.reward, p.sucker, p.temptation, p.punishment};
  const double r2[nj] = {p.reward, p.temptation, p.sucker, p.punishment};
  std::vector<double> rewards(2 * ns * nj);
  std::vector<double> transitions(ns * nj * ns, 0.0);
  for (int s = 0; s < ns; ++s)
    for (int j = 0; j < nj; ++j) {
      rewards[static_cast<std::size_t>(s) * nj + j] = r1[j] / scale;
      rewards[static_cast<std::size_t>(ns + s) * nj + j] = r2[j] / scale;
      transitions[(static_cast<std::size_t>(s) * nj + j) * ns + 1 + j] = 1.0;
    }
  return GameSpec(GameKind::ipd, 2, ns, {2, 2}, std::move(rewards), std::move(transitions), discount,
                  {1.0, 0.0, 0.0, 0.0, 0.0});
}

std::vector<double> exact_value(const GameSpec& game, const JointParams& params) {
  if (params.size() != game.param_dim()) throw ContractError("exact_value: parameter layout mismatch");
  return value::agent_values<double>(game, params.values);
}

double discounted_joint0_frequency(const GameSpec& game, const JointParams& params) {
  if (params.size() != game.param_dim()) throw ContractError("frequency: parameter layout mismatch");
  return value::joint0_frequency<double>(game, params.values);
}

TrajectoryBatch sample_trajectories(const GameSpec& game, const JointParams& params, int count, int horizon,
                                    Stream& stream) {
  if (count < 1) throw ContractError("sample_trajectories: count must be at least 1");
  if (horizon < 1) throw ContractError("sample_trajectories: horizon must be at least 1");
  if (params.size() != game.param_dim()) throw ContractError("sample_trajectories: parameter layout mismatch");

  const auto table = value::policy_table<double>(game, params.values);
  const int n = game.n_agents();
  const auto ns = static_cast<std::size_t>(game.n_states());
  std::vector<double> next_probs(ns);
  std::vector<double> action_probs(static_cast<std::size_t>(table.max_actions));
  std::vector<int> actions(static_cast<std::size_t>(n));

  TrajectoryBatch batch;
  batch.horizon = horizon;
  batch.behavior = params;
  batch.trajectories.resize(static_cast<std::size_t>(count));
  batch.returns.assign(static_cast<std::size_t>(count) * n, 0.0);
  for (int k = 0; k < count; ++k) {
    Trajectory& tr = batch.trajectories[static_cast<std::size_t>(k)];
    tr.states.resize(static_cast<std::size_t>(horizon));
    tr.joint_actions.resize(static_cast<std::size_t>(horizon));
    tr.rewards.resize(static_cast<std::size_t>(horizon) * n);
    int s = stream.categorical(game.init_dist());
    double disc = 1.0;
    for (int t = 0; t < horizon; ++t) {
      int joint = 0;
      for (int i = 0; i < n; ++i) {
        const int na = game.action_count(i);
        for (int a = 0; a < na; ++a) action_probs[static_cast<std::size_t>(a)] = table.p(i, s, a);
        actions[static_cast<std::size_t>(i)] =
            stream.categorical(std::span<const double>(action_probs.data(), static_cast<std::size_t>(na)));
        joint = joint * na + actions[static_cast<std::size_t>(i)];
      }
      tr.states[static_cast<std::size_t>(t)] = s;
      tr.joint_actions[static_cast<std::size_t>(t)] = joint;
      for (int i = 0; i < n; ++i) {
        const double r = game.reward(i, s, joint);
        tr.rewards[static_cast<std::size_t>(t) * n + i] = r;
        batch.returns[static_cast<std::size_t>(k) * n + i] += disc * r;
      }
      disc *= game.discount();
      for (std::size_t s2 = 0; s2 < ns; ++s2) next_probs[s2] = game.transition(s, joint, static_cast<int>(s2));
      s = stream.categorical(next_probs);
    }
  }
  return batch;
}

// ---------------------------------------------------------------------------
// JSON

namespace {

double number_field(const nlohmann::json& doc, const char* key, double fallback) {
  if (!doc.contains(key)) return fallback;
  if (!doc.at(key).is_number()) throw ContractError(std::string("game.") + key + ": expected a number");
  return doc.at(key).get<double>();
}

std::vector<double> flatten_numbers(const nlohmann::json& j, const std::string& what) {
  std::vector<double> out;
  if (j.is_number()) {
    out.push_back(j.get<double>());
    return out;
  }
  if (!j.is_array()) throw ContractError(what + ": expected a (nested) array of numbers");
  for (const auto& e : j) {
    auto inner = flatten_numbers(e, what);
    out.insert(out.end(), inner.begin(), inner.end());
  }
  return out;
}

}  // namespace

GameSpec game_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ContractError("game: expected an object");
  if (doc.contains("kind") && !doc.at("kind").is_string()) throw ContractError("game.kind: expected a string");
  const std::string kind = doc.value("kind", std::string("stag_hunt"));
  const bool custom = kind == "custom";
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    const std::string& key = it.key();
    const bool common = key == "kind" || key == "discount" || key == "entropy_weight";
    const bool builtin = key == "payoffs";
    const bool tensor = key == "n_agents" || key == "n_states" || key == "action_counts" || key == "rewards" ||
                        key == "transitions" || key == "init_dist";
    if (!(common || (custom ? tensor : builtin))) throw ContractError("game." + key + ": unknown key");
  }
  const double entropy = number_field(doc, "entropy_weight", 0.0);
  if (kind == "stag_hunt") {
    StagHuntPayoffs p = default_stag_hunt_payoffs();
    if (doc.contains("payoffs")) {
      const auto flat = flatten_numbers(doc.at("payoffs"), "game.payoffs");
      if (flat.size() != 8) throw ContractError("game.payoffs: stag hunt needs 2x2x2 = 8 entries");
      for (std::size_t k = 0; k < 8; ++k) p[k / 4][(k / 2) % 2][k % 2] = flat[k];
    }
    return make_stag_hunt(p, number_field(doc, "discount", 0.9)).with_entropy_weight(entropy);
  }
  if (kind == "ipd") {
    IpdPayoffs p;
    if (doc.contains("payoffs")) {
      const auto& j = doc.at("payoffs");
      if (j.is_object()) {
        for (auto it = j.begin(); it != j.end(); ++it)
          if (it.key() != "T" && it.key() != "R" && it.key() != "P" && it.key() != "S")
            throw ContractError("game.payoffs." + it.key() + ": unknown key (expected T, R, P, S)");
        p.temptation = j.value("T", p.temptation);
        p.reward = j.value("R", p.reward);
        p.punishment = j.value("P", p.punishment);
        p.sucker = j.value("S", p.sucker);
      } else {
        const auto flat = flatten_numbers(j, "game.payoffs");
        if (flat.size() != 4) throw ContractError("game.payoffs: ipd needs [T, R, P, S]");
        p = {flat[0], flat[1], flat[2], flat[3]};
      }
    }
    return make_ipd(p, number_field(doc, "discount", 0.96)).with_entropy_weight(entropy);
  }
  if (kind == "custom") {
    for (const char* key : {"n_agents", "n_states", "action_counts", "rewards", "transitions", "init_dist"})
      if (!doc.contains(key)) throw ContractError(std::string("game.") + key + ": required for custom games");
    std::vector<int> actions;
    for (const auto& a : doc.at("action_counts")) actions.push_back(a.get<int>());
    return GameSpec(GameKind::custom, doc.at("n_agents").get<int>(), doc.at("n_states").get<int>(),
                    std::move(actions), flatten_numbers(doc.at("rewards"), "game.rewards"),
                    flatten_numbers(doc.at("transitions"), "game.transitions"),
                    number_field(doc, "discount", 0.9), flatten_numbers(doc.at("init_dist"), "game.init_dist"),
                    entropy);
  }
  throw ContractError("game.kind: unknown game kind '" + kind + "'");
}

namespace {

nlohmann::json full_game_json(const GameSpec& game) {
  nlohmann::json j;
  j["kind"] = "custom";
  j["n_agents"] = game.n_agents();
  j["n_states"] = game.n_states();
  j["action_counts"] = game.action_counts();
  j["rewards"] = game.rewards();
  j["transitions"] = game.transitions();
  j["discount"] = game.discount();
  j["init_dist"] = game.init_dist();
  j["entropy_weight"] = game.entropy_weight();
  return j;
}

}  // namespace

nlohmann::json game_to_json(const GameSpec& game) {
  nlohmann::json j;
  j["kind"] = to_string(game.kind());
  if (game.kind() == GameKind::stag_hunt) {
    nlohmann::json pay = nlohmann::json::array();
    for (int a1 = 0; a1 < 2; ++a1) {
      nlohmann::json row = nlohmann::json::array();
      for (int a2 = 0; a2 < 2; ++a2) row.push_back({game.reward(0, 0, 2 * a1 + a2), game.reward(1, 0, 2 * a1 + a2)});
      pay.push_back(row);
    }
    j["payoffs"] = pay;
  } else if (game.kind() == GameKind::ipd) {
    j["payoffs"] = {{"T", game.reward(0, kIpdInitial, 2)},
                    {"R", game.reward(0, kIpdInitial, 0)},
                    {"P", game.reward(0, kIpdInitial, 3)},
                    {"S", game.reward(0, kIpdInitial, 1)}};
  } else {
    return full_game_json(game);
  }
  j["discount"] = game.discount();
  j["entropy_weight"] = game.entropy_weight();
  // Built-in constructors renormalise payoffs; fall back to the full tensor
  // form when that would not reproduce this game (e.g. a scaled copy).
  const GameSpec back = game_from_json(j);
  if (back.rewards() != game.rewards() || back.transitions() != game.transitions()) return full_game_json(game);
  return j;
}

}  // namespace basinlab
