#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "turnrl/env.hpp"
#include "turnrl/model.hpp"
#include "turnrl/random.hpp"

namespace turnrl::rollout {

// One (query, response) exchange. Offsets index the owning trajectory's
// token stream: query = [query_begin, response_begin),
// response = [response_begin, response_end).
struct Turn {
  std::size_t query_begin = 0;
  std::size_t response_begin = 0;
  std::size_t response_end = 0;
  std::vector<double> behavior_logprobs;  // one per response token
  std::vector<double> token_values;       // critic value before each response token
  double turn_value = 0.0;                // critic value at the last query token
  double turn_reward = 0.0;

  std::size_t response_length() const { return response_end - response_begin; }
};

struct Trajectory {
  std::uint64_t question_id = 0;
  std::size_t member = 0;  // index within the question's group
  std::uint64_t env_seed = 0;
  std::vector<TokenId> tokens;  // full concatenated episode stream
  std::vector<Turn> turns;
  double terminal_reward = 0.0;  // outcome reward added on the final turn
  bool has_values = false;       // critic values were recorded
  bool success = false;
  bool truncated = false;        // stopped by max_turns before the env ended

  std::span<const TokenId> query_tokens(std::size_t turn) const;
  std::span<const TokenId> response_tokens(std::size_t turn) const;
  // Stream prefix that conditions the token at `position`.
  std::span<const TokenId> context(std::size_t position) const;
  std::size_t total_response_tokens() const;
  // Sum of turn rewards plus the terminal reward.
  double episode_return() const;
  // Reward credited to turn n (the terminal reward lands on the last turn).
  double turn_reward_with_terminal(std::size_t turn) const;
};

struct RolloutBatch {
  std::vector<Trajectory> trajectories;
  std::size_t group_size = 1;
  std::uint64_t policy_version = 0;
};

struct CollectOptions {
  env::EnvSpec env;
  std::size_t batch_size = 32;  // B_R
  std::size_t group_size = 1;   // G
  std::uint64_t seed = 0;
  std::size_t max_turns = 10;
  std::size_t max_response_tokens = 2;
  double temperature = 1.0;
  std::uint64_t policy_version = 0;
};

// Seeds are derived from (seed, question) for the environment and
// (seed, question, member) for sampling, so the batch does not depend on
// scheduling. `critic` may be null (no values recorded).
RolloutBatch collect(const model::PolicyModel& policy, const model::PolicyModel* critic,
                     const CollectOptions& options,
                     model::Execution exec = model::Execution::parallel);

std::uint64_t question_env_seed(std::uint64_t seed, std::uint64_t question);
std::uint64_t member_sample_seed(std::uint64_t seed, std::uint64_t question, std::size_t member);

// Plays one episode from `env_seed`.
Trajectory run_episode(const model::PolicyModel& policy, const model::PolicyModel* critic,
                       const env::EnvSpec& spec, std::uint64_t env_seed, Rng& rng,
                       std::size_t max_turns, std::size_t max_response_tokens,
                       double temperature);

// 1 on response positions of the full stream, 0 on query positions.
std::vector<std::uint8_t> response_mask(const Trajectory& trajectory);

struct EvalStats {
  double mean_reward = 0.0;
  double reward_std = 0.0;  // population std of episode returns
  double solve_rate = 0.0;
  std::size_t episodes = 0;
  std::vector<double> returns;
};

// Produces a response from the current stream. Used for scripted baselines.
using Agent = std::function<std::vector<TokenId>(std::span<const TokenId> context, Rng& rng)>;

std::uint64_t eval_instance_seed(std::uint64_t seed, std::size_t episode);

// Greedy by default. Throws std::invalid_argument when n_episodes == 0.
EvalStats evaluate(const model::PolicyModel& policy, const env::EnvSpec& spec,
                   std::size_t n_episodes, std::uint64_t seed, double temperature = 0.0,
                   std::size_t max_response_tokens = 2, std::size_t max_turns = 10,
                   model::Execution exec = model::Execution::parallel);
EvalStats evaluate(const Agent& agent, const env::EnvSpec& spec, std::size_t n_episodes,
                   std::uint64_t seed, std::size_t max_turns = 10);

// Structural invariants of a trajectory record; returns a list of problems.
std::vector<std::string> validate(const Trajectory& trajectory);

// Line-delimited JSON, one trajectory per line, doubles at round-trip precision.
void write_dump(std::ostream& out, std::span<const Trajectory> trajectories);
std::vector<Trajectory> read_dump(std::istream& in);  // throws std::runtime_error
std::string to_json_line(const Trajectory& trajectory);
Trajectory from_json_line(const std::string& line);

// Turn-by-turn text with detokenized queries/responses and rewards.
std::string render_text(const Trajectory& trajectory);

}  // namespace turnrl::rollout
