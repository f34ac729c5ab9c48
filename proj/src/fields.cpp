#include "basinlab/fields.hpp"

#include <cmath>
#include <sstream>

#include "fields_impl.hpp"

namespace basinlab {

std::string to_string(Arm arm) {
  switch (arm) {
    case Arm::pg:
      return "pg";
    case Arm::own_only:
      return "own_only";
    case Arm::peer_only:
      return "peer_only";
    case Arm::meta_mapg:
      return "meta_mapg";
  }
  return "pg";
}

Arm parse_arm(const std::string& name) {
  if (name == "pg") return Arm::pg;
  if (name == "own_only") return Arm::own_only;
  if (name == "peer_only") return Arm::peer_only;
  if (name == "meta_mapg") return Arm::meta_mapg;
  throw ContractError("unknown arm '" + name + "' (expected pg, own_only, peer_only or meta_mapg)");
}

bool uses_peer(Arm arm) { return arm == Arm::peer_only || arm == Arm::meta_mapg; }

void UnrollConfig::validate() const {
  if (length < 0) throw ContractError("unroll: length must be non-negative");
  if (!std::isfinite(inner_step_own) || !std::isfinite(inner_step_peer) || inner_step_own < 0.0 ||
      inner_step_peer < 0.0)
    throw ContractError("unroll: inner steps must be finite and non-negative");
}

double norm(const std::vector<double>& x) {
  double s = 0.0;
  for (double e : x) s += e * e;
  return std::sqrt(s);
}

namespace {

void check_layout(const GameSpec& game, const JointParams& params) {
  if (params.size() != game.param_dim())
    throw ContractError("parameter layout does not match the game (" + std::to_string(params.size()) + " vs " +
                        std::to_string(game.param_dim()) + ")");
}

std::span<const double> view(const JointParams& p) { return std::span<const double>(p.values); }

}  // namespace

std::vector<double> eval_v(const GameSpec& game, const JointParams& params) {
  check_layout(game, params);
  return detail::with_directions(game.param_dim(), [&](auto n) {
    return detail::pg_field<decltype(n)::value, double>(game, view(params));
  });
}

std::vector<JointParams> unroll_inner(const GameSpec& game, const JointParams& params, const UnrollConfig& cfg,
                                      int focal) {
  check_layout(game, params);
  cfg.validate();
  if (focal < 0 || focal >= game.n_agents()) throw ContractError("unroll: focal agent out of range");
  const auto steps = detail::step_vector(game, cfg, focal);
  std::vector<JointParams> chain{params};
  for (int l = 0; l < cfg.length; ++l) {
    JointParams next = chain.back();
    const auto v = eval_v(game, next);
    for (std::size_t k = 0; k < v.size(); ++k) next.values[k] += steps[k] * v[k];
    detail::check_chain_finite(next.values, l + 1, "exact inner step");
    chain.push_back(std::move(next));
  }
  return chain;
}

Corrections eval_corrections(const GameSpec& game, const JointParams& params, const UnrollConfig& cfg) {
  check_layout(game, params);
  cfg.validate();
  auto [own, peer] = detail::with_directions(game.param_dim(), [&](auto n) {
    return detail::corrections<decltype(n)::value, double>(game, view(params), cfg);
  });
  return {std::move(own), std::move(peer)};
}

FieldEval assemble_update(const JointParams& at, std::vector<double> v, const Corrections& c, Arm arm,
                          double lambda) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ContractError("lambda must be finite and non-negative");
  if (c.m_own.size() != v.size() || c.m_peer.size() != v.size())
    throw ContractError("assemble_update: components do not share a layout");
  FieldEval e;
  e.at = at;
  e.arm = arm;
  e.lambda = lambda;
  e.assembled = detail::combine(arm, lambda, v, c.m_own, c.m_peer);
  e.v = std::move(v);
  e.m_own = c.m_own;
  e.m_peer = c.m_peer;
  return e;
}

FieldEval evaluate_field(const GameSpec& game, const JointParams& params, const UnrollConfig& cfg, Arm arm,
                         double lambda) {
  auto v = eval_v(game, params);
  Corrections c;
  if (arm != Arm::pg && lambda != 0.0) {
    c = eval_corrections(game, params, cfg);
  } else {
    c.m_own.assign(v.size(), 0.0);
    c.m_peer.assign(v.size(), 0.0);
  }
  return assemble_update(params, std::move(v), c, arm, lambda);
}

namespace {

ad::JacobianMatrix labelled(const GameSpec& game, const std::vector<std::vector<double>>& rows) {
  ad::JacobianMatrix j(rows.size(), game.param_dim());
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < j.cols; ++c) j(r, c) = rows[r][c];
  j.row_labels = game.param_labels();
  j.col_labels = j.row_labels;
  return j;
}

}  // namespace

ad::JacobianMatrix v_jacobian(const GameSpec& game, const JointParams& params) {
  check_layout(game, params);
  return detail::with_directions(game.param_dim(), [&](auto n) {
    constexpr std::size_t N = decltype(n)::value;
    using D = ad::Dual<double, N>;
    return labelled(game, ad::jacobian_rows<N, double>(
                              [&](std::span<const D> x) { return detail::pg_field<N, D>(game, x); }, view(params)));
  });
}

ad::JacobianMatrix correction_jacobian(const GameSpec& game, const JointParams& params, const UnrollConfig& cfg,
                                       CorrectionPart part) {
  check_layout(game, params);
  cfg.validate();
  return detail::with_directions(game.param_dim(), [&](auto n) {
    constexpr std::size_t N = decltype(n)::value;
    using D = ad::Dual<double, N>;
    auto f = [&](std::span<const D> x) {
      auto [own, peer] = detail::corrections<N, D>(game, x, cfg);
      if (part == CorrectionPart::own) return own;
      if (part == CorrectionPart::peer) return peer;
      for (std::size_t k = 0; k < own.size(); ++k) own[k] += peer[k];
      return own;
    };
    return labelled(game, ad::jacobian_rows<N, double>(f, view(params)));
  });
}

ad::JacobianMatrix assembled_jacobian(const GameSpec& game, const JointParams& params, const UnrollConfig& cfg,
                                      Arm arm, double lambda) {
  check_layout(game, params);
  cfg.validate();
  if (arm == Arm::pg || lambda == 0.0) return v_jacobian(game, params);
  return detail::with_directions(game.param_dim(), [&](auto n) {
    constexpr std::size_t N = decltype(n)::value;
    using D = ad::Dual<double, N>;
    auto f = [&](std::span<const D> x) {
      const auto v = detail::pg_field<N, D>(game, x);
      const auto [own, peer] = detail::corrections<N, D>(game, x, cfg);
      return detail::combine(arm, lambda, v, own, peer);
    };
    return labelled(game, ad::jacobian_rows<N, double>(f, view(params)));
  });
}

std::vector<double> sampled_v(const GameSpec& game, const TrajectoryBatch& batch, int horizon, bool baseline) {
  if (horizon < 1 || horizon > batch.horizon) throw ContractError("sampled_v: horizon outside the batch horizon");
  check_layout(game, batch.behavior);
  return detail::with_directions(game.param_dim(), [&](auto n) {
    return detail::sampled_pg<decltype(n)::value, double>(game, batch, horizon, baseline, view(batch.behavior));
  });
}

namespace {

std::string describe(const std::vector<double>& x) {
  std::ostringstream os;
  os << '[';
  for (std::size_t k = 0; k < x.size(); ++k) os << (k ? ", " : "") << x[k];
  os << ']';
  return os.str();
}

template <std::size_t N>
Corrections sampled_corrections(const GameSpec& game, const JointParams& params, const TrajectoryBatch& first,
                                const UnrollConfig& cfg, const BatchSpec& spec, Stream& stream) {
  using D = ad::Dual<double, N>;
  const std::size_t dim = params.size();
  std::vector<double> own(dim, 0.0);
  std::vector<double> peer(dim, 0.0);
  const bool shared = cfg.inner_step_own == cfg.inner_step_peer;
  const int chains = shared ? 1 : game.n_agents();
  for (int focal = 0; focal < chains; ++focal) {
    const auto steps = detail::step_vector(game, cfg, focal);
    auto x = ad::seed<N>(view(params));
    for (int l = 0; l < cfg.length; ++l) {
      std::vector<double> primal(dim);
      for (std::size_t k = 0; k < dim; ++k) primal[k] = x[k].val;
      // The first step of every chain reuses the batch behind the v estimate.
      TrajectoryBatch fresh;
      if (l > 0) fresh = sample_trajectories(game, make_params(game, primal), spec.count, spec.horizon, stream);
      const TrajectoryBatch& batch = l == 0 ? first : fresh;
      const auto v = detail::sampled_pg<N, D>(game, batch, spec.horizon, spec.baseline, std::span<const D>(x));
      for (std::size_t k = 0; k < dim; ++k) x[k] += v[k] * steps[k];
      for (const auto& e : x)
        if (!ad::all_finite(e))
          throw EstimatorBlowup("sampled inner chain became non-finite at step " + std::to_string(l + 1) +
                                " from params " + describe(params.values));
    }
    std::vector<double> terminal(dim);
    for (std::size_t k = 0; k < dim; ++k) terminal[k] = x[k].val;
    const auto last = sample_trajectories(game, make_params(game, terminal), spec.count, spec.horizon, stream);
    const auto grads = detail::sampled_value_gradients<N, double>(game, last, spec.horizon, spec.baseline,
                                                                   std::span<const double>(terminal));
    for (int a = 0; a < game.n_agents(); ++a)
      if (shared || a == focal) detail::split_paths<N, double>(game, a, x, grads[static_cast<std::size_t>(a)], own, peer);
  }
  return {std::move(own), std::move(peer)};
}

}  // namespace

SampledUpdate sampled_update(const GameSpec& game, const JointParams& params, Arm arm, double lambda,
                             const UnrollConfig& cfg, const BatchSpec& batch, Stream& stream) {
  check_layout(game, params);
  cfg.validate();
  if (batch.count < 1 || batch.horizon < 1) throw ContractError("sampled_update: batch count and horizon must be >= 1");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ContractError("lambda must be finite and non-negative");
  if (game.entropy_weight() != 0.0)
    throw ContractError("sampled_update: the entropy bonus is only supported in exact mode");

  const auto first = sample_trajectories(game, params, batch.count, batch.horizon, stream);
  SampledUpdate out;
  out.lambda = lambda;
  out.batch_count = batch.count;
  out.horizon = batch.horizon;
  out.unroll_length = cfg.length;
  out.v_part = sampled_v(game, first, batch.horizon, batch.baseline);
  out.correction_part.assign(params.size(), 0.0);
  if (arm != Arm::pg && lambda != 0.0 && cfg.length > 0) {
    const Corrections c = detail::with_directions(game.param_dim(), [&](auto n) {
      return sampled_corrections<decltype(n)::value>(game, params, first, cfg, batch, stream);
    });
    const std::vector<double> zero(params.size(), 0.0);
    out.correction_part = detail::combine(arm, 1.0, zero, c.m_own, c.m_peer);
  }
  out.g = out.v_part;
  for (std::size_t k = 0; k < out.g.size(); ++k) out.g[k] += lambda * out.correction_part[k];
  for (double x : out.g)
    if (!std::isfinite(x))
      throw EstimatorBlowup("non-finite sampled update at params " + describe(params.values) + " (horizon " +
                            std::to_string(batch.horizon) + ", batch " + std::to_string(batch.count) + ")");
  return out;
}

}  // namespace basinlab
