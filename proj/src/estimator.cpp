#include "turnrl/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace turnrl::estimator {

double AdvantageSet::at_token(std::size_t index, std::size_t turn) const {
  switch (granularity) {
    case Granularity::per_token: return advantages.at(index);
    case Granularity::per_turn: return advantages.at(turn);
    case Granularity::per_trajectory: return advantages.at(0);
  }
  return 0.0;
}

double AdvantageSet::at_turn(std::size_t turn) const {
  switch (granularity) {
    case Granularity::per_turn: return advantages.at(turn);
    case Granularity::per_trajectory: return advantages.at(0);
    case Granularity::per_token:
      throw std::invalid_argument("per-token advantages have no per-turn value");
  }
  return 0.0;
}

std::vector<double> grpo_advantage(std::span<const double> rewards, bool use_std, double eps) {
  if (rewards.empty()) throw std::invalid_argument("grpo_advantage: empty group");
  if (use_std && rewards.size() < 2)
    throw std::invalid_argument("grpo_advantage: std normalization needs G >= 2");
  const double n = static_cast<double>(rewards.size());
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= n;
  std::vector<double> out(rewards.size());
  if (std::all_of(rewards.begin(), rewards.end(), [&](double r) { return r == rewards[0]; }))
    return out;
  if (!use_std) {
    for (std::size_t i = 0; i < rewards.size(); ++i) out[i] = rewards[i] - mean;
    return out;
  }
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  const double std = std::sqrt(var / n);
  for (std::size_t i = 0; i < rewards.size(); ++i) out[i] = (rewards[i] - mean) / (std + eps);
  return out;
}

std::vector<double> gae(std::span<const double> deltas, double gamma, double lambda) {
  std::vector<double> out(deltas.size());
  double next = 0.0;
  for (std::size_t h = deltas.size(); h-- > 0;) {
    next = deltas[h] + gamma * lambda * next;
    out[h] = next;
  }
  return out;
}

namespace {

void require_values(const rollout::Trajectory& t) {
  if (!t.has_values) throw std::invalid_argument("trajectory has no recorded critic values");
}

// Per-response-token rewards: each turn's reward on its final token.
std::vector<double> token_rewards(const rollout::Trajectory& t) {
  std::vector<double> r;
  r.reserve(t.total_response_tokens());
  for (std::size_t n = 0; n < t.turns.size(); ++n) {
    const std::size_t len = t.turns[n].response_length();
    for (std::size_t h = 0; h < len; ++h)
      r.push_back(h + 1 == len ? t.turn_reward_with_terminal(n) : 0.0);
  }
  return r;
}

}  // namespace

std::vector<double> token_deltas(const rollout::Trajectory& t, double gamma) {
  require_values(t);
  std::vector<double> values;
  for (const auto& turn : t.turns) {
    if (turn.token_values.size() != turn.response_length())
      throw std::invalid_argument("token_deltas: token value count differs from response length");
    values.insert(values.end(), turn.token_values.begin(), turn.token_values.end());
  }
  const std::vector<double> rewards = token_rewards(t);
  std::vector<double> deltas(values.size());
  for (std::size_t k = 0; k < values.size(); ++k) {
    const double next = k + 1 < values.size() ? values[k + 1] : 0.0;
    deltas[k] = rewards[k] + gamma * next - values[k];
  }
  return deltas;
}

std::vector<double> token_returns(const rollout::Trajectory& t, double gamma) {
  const std::vector<double> rewards = token_rewards(t);
  std::vector<double> out(rewards.size());
  double acc = 0.0;
  for (std::size_t k = rewards.size(); k-- > 0;) {
    acc = rewards[k] + gamma * acc;
    out[k] = acc;
  }
  return out;
}

std::vector<double> turn_deltas(const rollout::Trajectory& t, double gamma) {
  require_values(t);
  const std::size_t N = t.turns.size();
  std::vector<double> deltas(N);
  for (std::size_t n = 0; n < N; ++n) {
    const double next = n + 1 < N ? t.turns[n + 1].turn_value : 0.0;
    deltas[n] = t.turn_reward_with_terminal(n) + gamma * next - t.turns[n].turn_value;
  }
  return deltas;
}

std::vector<double> turn_returns(const rollout::Trajectory& t, double gamma) {
  const std::size_t N = t.turns.size();
  std::vector<double> out(N);
  double acc = 0.0;
  for (std::size_t n = N; n-- > 0;) {
    acc = t.turn_reward_with_terminal(n) + gamma * acc;
    out[n] = acc;
  }
  return out;
}

AdvantageSet token_gae(const rollout::Trajectory& t, double gamma, double lambda) {
  AdvantageSet s;
  s.granularity = Granularity::per_token;
  s.advantages = gae(token_deltas(t, gamma), gamma, lambda);
  s.returns = token_returns(t, gamma);
  return s;
}

AdvantageSet turn_gae(const rollout::Trajectory& t, double gamma, double lambda) {
  AdvantageSet s;
  s.granularity = Granularity::per_turn;
  s.advantages = gae(turn_deltas(t, gamma), gamma, lambda);
  s.returns = turn_returns(t, gamma);
  return s;
}

std::vector<AdvantageSet> grpo_batch(std::span<const rollout::Trajectory> batch,
                                     std::size_t group_size, bool use_std, double eps) {
  if (group_size == 0 || batch.size() % group_size != 0)
    throw std::invalid_argument("grpo_batch: batch size must be a multiple of the group size");
  std::vector<AdvantageSet> out(batch.size());
  std::vector<double> rewards(group_size);
  for (std::size_t g = 0; g < batch.size(); g += group_size) {
    for (std::size_t m = 0; m < group_size; ++m) rewards[m] = batch[g + m].episode_return();
    const auto adv = grpo_advantage(rewards, use_std, eps);
    for (std::size_t m = 0; m < group_size; ++m) {
      out[g + m].granularity = Granularity::per_trajectory;
      out[g + m].advantages = {adv[m]};
    }
  }
  return out;
}

double mean_group_reward_std(std::span<const rollout::Trajectory> batch, std::size_t group_size) {
  if (group_size == 0 || batch.empty() || batch.size() % group_size != 0) return 0.0;
  double total = 0.0;
  for (std::size_t g = 0; g < batch.size(); g += group_size) {
    double mean = 0.0;
    for (std::size_t m = 0; m < group_size; ++m) mean += batch[g + m].episode_return();
    mean /= static_cast<double>(group_size);
    double var = 0.0;
    for (std::size_t m = 0; m < group_size; ++m) {
      const double d = batch[g + m].episode_return() - mean;
      var += d * d;
    }
    total += std::sqrt(var / static_cast<double>(group_size));
  }
  return total / static_cast<double>(batch.size() / group_size);
}

void whiten(std::vector<AdvantageSet>& sets, double eps) {
  double sum = 0.0, count = 0.0;
  for (const auto& s : sets)
    for (double a : s.advantages) sum += a, count += 1.0;
  if (count == 0.0) return;
  const double mean = sum / count;
  double var = 0.0;
  for (const auto& s : sets)
    for (double a : s.advantages) var += (a - mean) * (a - mean);
  const double std = std::sqrt(var / count);
  for (auto& s : sets)
    for (double& a : s.advantages) a = (a - mean) / (std + eps);
}

}  // namespace turnrl::estimator
