#pragma once

#include <string>
#include <vector>

#include "basinlab/autodiff.hpp"
#include "basinlab/game.hpp"
#include "basinlab/rng.hpp"

namespace basinlab {

enum class Arm { pg, own_only, peer_only, meta_mapg };

std::string to_string(Arm arm);
Arm parse_arm(const std::string& name);
// True for the arms that carry the peer-learning term.
bool uses_peer(Arm arm);

struct UnrollConfig {
  int length = 3;
  double inner_step_own = 0.3;
  double inner_step_peer = 0.3;

  void validate() const;
};

struct Corrections {
  std::vector<double> m_own;
  std::vector<double> m_peer;
};

struct FieldEval {
  JointParams at;
  Arm arm = Arm::pg;
  double lambda = 0.0;
  std::vector<double> v;
  std::vector<double> m_own;
  std::vector<double> m_peer;
  std::vector<double> assembled;
};

struct BatchSpec {
  int count = 64;
  int horizon = 50;
  bool baseline = false;
};

struct SampledUpdate {
  std::vector<double> g;
  std::vector<double> v_part;
  std::vector<double> correction_part;  // already restricted to the arm
  double lambda = 0.0;
  int batch_count = 0;
  int horizon = 0;
  int unroll_length = 0;
};

// Stacked own-block gradients of the exact values.
std::vector<double> eval_v(const GameSpec& game, const JointParams& params);

// phi_0 ... phi_L with agent `focal` stepping by inner_step_own and every
// other agent by inner_step_peer.
std::vector<JointParams> unroll_inner(const GameSpec& game, const JointParams& params,
                                      const UnrollConfig& cfg, int focal = 0);

Corrections eval_corrections(const GameSpec& game, const JointParams& params, const UnrollConfig& cfg);

FieldEval assemble_update(const JointParams& at, std::vector<double> v, const Corrections& c, Arm arm,
                          double lambda);

// eval_v, plus eval_corrections when the arm needs them and lambda != 0.
FieldEval evaluate_field(const GameSpec& game, const JointParams& params, const UnrollConfig& cfg, Arm arm,
                         double lambda);

enum class CorrectionPart { own, peer, full };

ad::JacobianMatrix v_jacobian(const GameSpec& game, const JointParams& params);
ad::JacobianMatrix correction_jacobian(const GameSpec& game, const JointParams& params,
                                       const UnrollConfig& cfg, CorrectionPart part);
// Jacobian of the assembled update for (arm, lambda).
ad::JacobianMatrix assembled_jacobian(const GameSpec& game, const JointParams& params,
                                      const UnrollConfig& cfg, Arm arm, double lambda);

// Score-function estimate of the assembled update. The inner chain is
// re-estimated from fresh batches at every step and differentiated through
// the importance weights of each batch.
SampledUpdate sampled_update(const GameSpec& game, const JointParams& params, Arm arm, double lambda,
                             const UnrollConfig& cfg, const BatchSpec& batch, Stream& stream);

// Score-function estimate of v alone from an existing batch, using only the
// first `horizon` steps of each trajectory (horizon <= batch.horizon).
std::vector<double> sampled_v(const GameSpec& game, const TrajectoryBatch& batch, int horizon,
                              bool baseline = false);

double norm(const std::vector<double>& x);

}  // namespace basinlab
