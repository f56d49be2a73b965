#pragma once

#include <span>
#include <vector>

#include "turnrl/estimator.hpp"
#include "turnrl/model.hpp"
#include "turnrl/rollout.hpp"

namespace turnrl::objective {

// Which MDP view the actor objective takes:
//   token_*  one unit per response token, ratio pi/pi_old per token
//   turn_*   one unit per turn (turn_multi) or per trajectory (turn_single),
//            ratio = product of the unit's token ratios
// The *_single forms treat all of a trajectory's response tokens as one
// response; on single-turn data they are the textbook single-turn objectives.
enum class Mode { token_single, token_multi, turn_single, turn_multi };

// Weight applied to turn-mode units: 1/|a^i| over the trajectory's total
// response tokens, or 1/|a^i_n| of each turn's own length.
enum class TurnNormalizer { total_tokens, per_turn };

Mode parse_mode(std::string_view name);
std::string_view to_string(Mode mode);
TurnNormalizer parse_normalizer(std::string_view name);
std::string_view to_string(TurnNormalizer normalizer);

struct ClipResult {
  double value = 0.0;
  bool clipped = false;      // the clip_eps(r) * A branch is strictly smaller
  double d_ratio = 0.0;      // d value / d ratio
};

// min(r A, clip(r, 1-eps, 1+eps) A)
ClipResult clip_op(double ratio, double advantage, double epsilon);

// exp(new - behavior)
double token_ratio(double new_logprob, double behavior_logprob);

struct TurnRatio {
  double ratio = 1.0;
  double log_ratio = 0.0;  // after clamping
  bool clamped = false;
};

inline constexpr double kLogRatioClamp = 20.0;

// exp(sum of log differences), or exp(mean) when geometric. The log-ratio is
// clamped to +-clamp before exponentiation; `clamped` reports it.
TurnRatio turn_ratio(std::span<const double> new_logprobs,
                     std::span<const double> behavior_logprobs, bool geometric,
                     double clamp = kLogRatioClamp);

struct LossBreakdown {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double kl_penalty = 0.0;
  double kl_value = 0.0;        // mean (log pi - log pi_ref), unscaled
  double clip_fraction = 0.0;
  std::size_t unit_count = 0;   // tokens or turns contributing
  std::size_t clipped_units = 0;
  std::size_t clamp_events = 0;
};

struct ActorLossOptions {
  Mode mode = Mode::turn_multi;
  double epsilon = 0.2;
  bool geometric = false;
  TurnNormalizer normalizer = TurnNormalizer::total_tokens;
  // Optional KL penalty against a frozen reference policy.
  const model::PolicyModel* reference = nullptr;
  double kl_coefficient = 0.0;
};

// One trajectory's contribution to the (maximization) objective as a pure
// function of log-probabilities over the full token stream. Entries at query
// positions are ignored; the returned adjoints are d objective / d logprob per
// stream position and are exactly zero there.
struct TrajectoryTerms {
  double objective = 0.0;
  std::vector<double> adjoints;
  std::size_t units = 0;
  std::size_t clipped = 0;
  std::size_t clamps = 0;
};

TrajectoryTerms trajectory_objective(const rollout::Trajectory& trajectory,
                                     std::span<const double> stream_logprobs,
                                     const estimator::AdvantageSet& advantages,
                                     const ActorLossOptions& options);

struct Loss {
  LossBreakdown breakdown;
  model::LossNode node;  // minimization form: negated objective
};

// Negated objective averaged over the selected trajectories, plus the KL
// penalty when options.reference is set. Throws std::invalid_argument on an
// empty selection or an advantage granularity that does not fit the mode.
Loss actor_loss(const model::PolicyModel& policy, std::span<const rollout::Trajectory> batch,
                std::span<const estimator::AdvantageSet> advantages,
                std::span<const std::size_t> selection, const ActorLossOptions& options,
                model::Execution exec = model::Execution::parallel);

// Critic regression 1/B sum_i 1/K_i sum_k 1/2 (V(s_k) - target_k)^2 where the
// K_i states are turn starts (per_turn returns) or response-token states
// (per_token returns). Gradients reach only the critic.
Loss critic_loss(const model::PolicyModel& critic, std::span<const rollout::Trajectory> batch,
                 std::span<const estimator::AdvantageSet> targets,
                 std::span<const std::size_t> selection,
                 model::Execution exec = model::Execution::parallel);

// coefficient * mean over selected response tokens of (log pi - log pi_ref).
Loss kl_penalty(const model::PolicyModel& policy, const model::PolicyModel& reference,
                std::span<const rollout::Trajectory> batch,
                std::span<const std::size_t> selection, double coefficient,
                model::Execution exec = model::Execution::parallel);

// Identity selection 0..n-1.
std::vector<std::size_t> all_indices(std::size_t n);

}  // namespace turnrl::objective
