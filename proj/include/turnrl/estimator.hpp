#pragma once

#include <span>
#include <vector>

#include "turnrl/rollout.hpp"

namespace turnrl::estimator {

enum class Granularity { per_token, per_turn, per_trajectory };

// Advantages aligned to the trajectory's response tokens (flattened across
// turns), to its turns, or a single trajectory-wide scalar. `returns` are the
// critic regression targets at the same granularity (empty for GRPO).
struct AdvantageSet {
  Granularity granularity = Granularity::per_trajectory;
  std::vector<double> advantages;
  std::vector<double> returns;

  // Advantage credited to flattened response token `index` in `turn`.
  double at_token(std::size_t index, std::size_t turn) const;
  double at_turn(std::size_t turn) const;
};

// Group-relative advantage: (r - mean) / (std + eps) with the population std,
// or plain mean-centering when use_std is off. Throws std::invalid_argument
// for fewer than two rewards when use_std is on.
std::vector<double> grpo_advantage(std::span<const double> group_rewards, bool use_std,
                                   double eps = 1e-8);

// Backward recursion A_h = delta_h + gamma * lambda * A_{h+1}, A_{H+1} = 0.
std::vector<double> gae(std::span<const double> deltas, double gamma, double lambda);

// Token-level TD errors over the flattened response tokens. A turn's reward
// sits on its final response token and the value after the episode's last
// token is 0. Throws std::invalid_argument when values were not recorded.
std::vector<double> token_deltas(const rollout::Trajectory& trajectory, double gamma);
// Discounted reward-to-go at each response token.
std::vector<double> token_returns(const rollout::Trajectory& trajectory, double gamma);

// Turn-level TD errors with V_{N+1} = 0.
std::vector<double> turn_deltas(const rollout::Trajectory& trajectory, double gamma);
// Discounted return from each turn onward.
std::vector<double> turn_returns(const rollout::Trajectory& trajectory, double gamma);

AdvantageSet token_gae(const rollout::Trajectory& trajectory, double gamma, double lambda);
AdvantageSet turn_gae(const rollout::Trajectory& trajectory, double gamma, double lambda);

// GRPO over a batch laid out in groups of `group_size` consecutive
// trajectories, using episode returns as the sequence reward.
std::vector<AdvantageSet> grpo_batch(std::span<const rollout::Trajectory> batch,
                                     std::size_t group_size, bool use_std, double eps = 1e-8);

// Mean population std of episode returns within each group.
double mean_group_reward_std(std::span<const rollout::Trajectory> batch, std::size_t group_size);

// Batch-wide zero-mean / unit-std rescaling of every advantage entry.
void whiten(std::vector<AdvantageSet>& sets, double eps = 1e-8);

}  // namespace turnrl::estimator
