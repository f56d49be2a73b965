#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "turnrl/env.hpp"
#include "turnrl/estimator.hpp"
#include "turnrl/model.hpp"
#include "turnrl/objective.hpp"
#include "turnrl/rollout.hpp"

namespace turnrl::trainer {

enum class Algorithm { grpo, token_ppo, turn_ppo };

Algorithm parse_algorithm(std::string_view name);
std::string_view to_string(Algorithm algorithm);

struct TrainConfig {
  Algorithm algorithm = Algorithm::turn_ppo;
  env::EnvSpec env;

  // model
  std::size_t embed_dim = 32;
  std::size_t window = 32;
  std::size_t hidden = 64;
  double init_scale = 1.0;  // embedding range

  // (B_R, G, B_M, E)
  std::size_t rollout_batch = 32;
  std::size_t group_size = 1;
  std::size_t minibatch = 8;
  std::size_t epochs = 1;

  double epsilon = 0.2;
  double gamma = 0.99;
  double lambda = 0.9;
  double lr_actor = 3e-4;
  double lr_critic = 3e-3;
  double kl_coefficient = 0.0;
  bool use_std = true;
  double std_eps = 1e-8;
  bool geometric_ratio = false;
  objective::TurnNormalizer turn_normalizer = objective::TurnNormalizer::total_tokens;
  bool whiten_advantages = false;
  std::optional<objective::Mode> objective_mode;  // unset: chosen by algorithm

  std::size_t iterations = 300;
  std::size_t eval_every = 10;
  std::size_t eval_episodes = 32;
  std::size_t max_turns = 10;
  std::size_t max_response_tokens = 2;
  double temperature = 1.0;
  std::uint64_t seed = 0;
  bool log_wall_time = false;  // off keeps metrics files byte-reproducible

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

// Desk-scale defaults for each algorithm.
TrainConfig default_config(Algorithm algorithm);

struct ConfigError : std::invalid_argument {
  ConfigError(std::string field, const std::string& message)
      : std::invalid_argument(field + ": " + message), field(std::move(field)) {}
  std::string field;
};

// Throws ConfigError naming the offending field.
void validate(const TrainConfig& config);

objective::Mode actor_mode(const TrainConfig& config);
model::Architecture actor_architecture(const TrainConfig& config);
model::Architecture critic_architecture(const TrainConfig& config);
std::uint64_t eval_seed(const TrainConfig& config);
// Parameters at iteration 0.
model::PolicyModel initial_actor(const TrainConfig& config);
model::PolicyModel initial_critic(const TrainConfig& config);
rollout::CollectOptions collect_options(const TrainConfig& config, std::size_t iteration);
// Trajectory order for each epoch of one iteration; depends on nothing else.
std::vector<std::vector<std::size_t>> minibatch_orders(std::uint64_t seed, std::size_t iteration,
                                                       std::size_t epochs, std::size_t n);

struct IterationMetrics {
  std::size_t iteration = 0;
  double mean_train_reward = 0.0;
  std::optional<double> mean_eval_reward;
  std::optional<double> solve_rate;
  std::optional<double> group_reward_std;
  double clip_fraction = 0.0;
  double policy_loss = 0.0;
  std::optional<double> value_loss;
  std::optional<double> kl_value;
  double grad_norm_actor = 0.0;
  std::optional<double> grad_norm_critic;
  std::optional<double> wall_ms;
};

// Metrics record with the fixed field order; absent values are null.
std::string to_json_line(const IterationMetrics& metrics);
IterationMetrics metrics_from_json_line(const std::string& line);
const std::vector<std::string>& metrics_fields();
std::string metrics_csv_header();
std::string to_csv_row(const IterationMetrics& metrics);

struct TrainResult {
  std::vector<IterationMetrics> metrics;
  model::PolicyModel actor;
  std::optional<model::PolicyModel> critic;
  bool halted = false;
  std::string halt_reason;
};

using MetricsSink = std::function<void(const IterationMetrics&)>;

// Runs the full loop. A non-finite loss, gradient or metric stops training
// with `halted` set; the returned models hold the last finite parameters.
TrainResult train(const TrainConfig& config, const MetricsSink& sink = {});

struct CompareRun {
  std::string label;
  TrainConfig config;
};

struct CompareResult {
  std::vector<std::string> labels;
  std::vector<TrainResult> runs;
};

// Throws std::invalid_argument unless all runs share env, seed, iteration
// budget and evaluation settings.
void check_comparable(const std::vector<CompareRun>& runs);
CompareResult compare(const std::vector<CompareRun>& runs,
                      const std::function<void(std::size_t, const IterationMetrics&)>& sink = {});

// Delimiter-separated table: one row per iteration, train/eval reward per run.
std::string compare_table_csv(const CompareResult& result);
// One row per run with its final evaluation.
std::string compare_summary_csv(const CompareResult& result);

}  // namespace turnrl::trainer
