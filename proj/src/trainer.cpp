#include "turnrl/trainer.hpp"

#include <chrono>
#include <cmath>
#include <sstream>

#include "json.hpp"
#include "turnrl/random.hpp"

namespace turnrl::trainer {

using nlohmann::ordered_json;

namespace {

constexpr std::uint64_t kActorInit = 0xAC7;
constexpr std::uint64_t kCriticInit = 0xC217;
constexpr std::uint64_t kRollout = 0x2011;
constexpr std::uint64_t kShuffle = 0x5F1;
constexpr std::uint64_t kEval = 0xE7A1;

bool finite(double x) { return std::isfinite(x); }
bool finite(const std::optional<double>& x) { return !x || std::isfinite(*x); }

}  // namespace

Algorithm parse_algorithm(std::string_view name) {
  if (name == "grpo") return Algorithm::grpo;
  if (name == "token_ppo") return Algorithm::token_ppo;
  if (name == "turn_ppo") return Algorithm::turn_ppo;
  throw ConfigError("trainer.algorithm", "unknown algorithm '" + std::string(name) + "'");
}

std::string_view to_string(Algorithm a) {
  switch (a) {
    case Algorithm::grpo: return "grpo";
    case Algorithm::token_ppo: return "token_ppo";
    case Algorithm::turn_ppo: return "turn_ppo";
  }
  return "?";
}

TrainConfig default_config(Algorithm algorithm) {
  TrainConfig c;
  c.algorithm = algorithm;
  switch (algorithm) {
    case Algorithm::grpo:
      c.group_size = 8;
      c.gamma = 1.0;
      c.lambda = 1.0;
      c.kl_coefficient = 0.001;
      break;
    case Algorithm::token_ppo:
      c.gamma = 1.0;
      c.lambda = 1.0;
      break;
    case Algorithm::turn_ppo:
      c.gamma = 0.99;
      c.lambda = 0.9;
      break;
  }
  return c;
}

void validate(const TrainConfig& c) {
  auto require = [](bool ok, const char* field, const std::string& msg) {
    if (!ok) throw ConfigError(field, msg);
  };
  require(c.rollout_batch >= 1, "trainer.rollout_batch", "must be >= 1");
  require(c.group_size >= 1, "trainer.group_size", "must be >= 1");
  require(c.rollout_batch % c.group_size == 0, "trainer.group_size",
          "rollout_batch must be divisible by group_size");
  require(c.minibatch >= 1, "trainer.minibatch", "must be >= 1");
  require(c.rollout_batch % c.minibatch == 0, "trainer.minibatch",
          "rollout_batch must be divisible by minibatch");
  require(c.epochs >= 1, "trainer.epochs", "must be >= 1");
  require(c.epsilon > 0.0, "trainer.epsilon", "clip epsilon must be > 0");
  require(c.gamma >= 0.0 && c.gamma <= 1.0, "trainer.gamma", "must lie in [0,1]");
  require(c.lambda >= 0.0 && c.lambda <= 1.0, "trainer.lambda", "must lie in [0,1]");
  require(c.lr_actor > 0.0, "trainer.lr_actor", "must be > 0");
  require(c.lr_critic > 0.0, "trainer.lr_critic", "must be > 0");
  require(c.kl_coefficient >= 0.0, "trainer.kl_coefficient", "must be >= 0");
  require(c.std_eps >= 0.0, "trainer.std_eps", "must be >= 0");
  require(c.iterations >= 1, "trainer.iterations", "must be >= 1");
  require(c.eval_every >= 1, "trainer.eval_every", "must be >= 1");
  require(c.eval_episodes >= 1, "trainer.eval_episodes", "must be >= 1");
  require(c.max_turns >= 1, "trainer.max_turns", "must be >= 1");
  require(c.max_response_tokens >= 1, "trainer.max_response_tokens", "must be >= 1");
  require(c.temperature > 0.0, "trainer.temperature", "rollout temperature must be > 0");
  require(c.window >= 1 && c.embed_dim >= 1 && c.hidden >= 1, "model",
          "dimensions must be positive");
  if (c.algorithm == Algorithm::grpo)
    require(c.group_size >= 2, "trainer.group_size", "grpo needs group_size >= 2");
  if (c.algorithm == Algorithm::token_ppo) {
    require(c.gamma == 1.0, "trainer.gamma", "token_ppo requires gamma = 1");
    require(c.lambda == 1.0, "trainer.lambda", "token_ppo requires lambda = 1");
  }
  if (c.objective_mode) {
    const bool token_mode = *c.objective_mode == objective::Mode::token_single ||
                            *c.objective_mode == objective::Mode::token_multi;
    if (c.algorithm == Algorithm::token_ppo)
      require(token_mode, "trainer.objective_mode", "token_ppo advantages are per token");
    if (c.algorithm == Algorithm::turn_ppo)
      require(*c.objective_mode == objective::Mode::turn_multi, "trainer.objective_mode",
              "turn_ppo advantages are per turn");
  }
}

objective::Mode actor_mode(const TrainConfig& c) {
  if (c.objective_mode) return *c.objective_mode;
  return c.algorithm == Algorithm::turn_ppo ? objective::Mode::turn_multi
                                            : objective::Mode::token_multi;
}

model::Architecture actor_architecture(const TrainConfig& c) {
  model::Architecture a = model::default_architecture(false);
  a.embed_dim = c.embed_dim;
  a.window = c.window;
  a.hidden = c.hidden;
  return a;
}

model::Architecture critic_architecture(const TrainConfig& c) {
  model::Architecture a = actor_architecture(c);
  a.value_head = true;
  return a;
}

std::uint64_t eval_seed(const TrainConfig& c) { return derive_seed(c.seed, kEval); }

model::PolicyModel initial_actor(const TrainConfig& c) {
  return model::PolicyModel(actor_architecture(c), derive_seed(c.seed, kActorInit), c.init_scale);
}

model::PolicyModel initial_critic(const TrainConfig& c) {
  return model::PolicyModel(critic_architecture(c), derive_seed(c.seed, kCriticInit), c.init_scale);
}

rollout::CollectOptions collect_options(const TrainConfig& c, std::size_t iteration) {
  rollout::CollectOptions co;
  co.env = c.env;
  co.batch_size = c.rollout_batch;
  co.group_size = c.group_size;
  co.seed = derive_seed(c.seed, kRollout, iteration);
  co.max_turns = c.max_turns;
  co.max_response_tokens = c.max_response_tokens;
  co.temperature = c.temperature;
  co.policy_version = iteration;
  return co;
}

// ---------------------------------------------------------------------------

const std::vector<std::string>& metrics_fields() {
  static const std::vector<std::string> fields = {
      "iter",          "mean_train_reward", "mean_eval_reward", "solve_rate",
      "group_reward_std", "clip_fraction",  "policy_loss",      "value_loss",
      "kl_value",      "grad_norm_actor",   "grad_norm_critic", "wall_ms"};
  return fields;
}

namespace {

ordered_json opt(const std::optional<double>& v) {
  return v ? ordered_json(*v) : ordered_json(nullptr);
}

std::optional<double> opt_from(const ordered_json& j, const char* key) {
  const auto& v = j.at(key);
  if (v.is_null()) return std::nullopt;
  return v.get<double>();
}

std::string csv_cell(const std::optional<double>& v) {
  if (!v) return "";
  return ordered_json(*v).dump();
}

}  // namespace

std::string to_json_line(const IterationMetrics& m) {
  ordered_json j;
  j["iter"] = m.iteration;
  j["mean_train_reward"] = m.mean_train_reward;
  j["mean_eval_reward"] = opt(m.mean_eval_reward);
  j["solve_rate"] = opt(m.solve_rate);
  j["group_reward_std"] = opt(m.group_reward_std);
  j["clip_fraction"] = m.clip_fraction;
  j["policy_loss"] = m.policy_loss;
  j["value_loss"] = opt(m.value_loss);
  j["kl_value"] = opt(m.kl_value);
  j["grad_norm_actor"] = m.grad_norm_actor;
  j["grad_norm_critic"] = opt(m.grad_norm_critic);
  j["wall_ms"] = opt(m.wall_ms);
  return j.dump();
}

IterationMetrics metrics_from_json_line(const std::string& line) {
  const ordered_json j = ordered_json::parse(line);
  IterationMetrics m;
  m.iteration = j.at("iter").get<std::size_t>();
  m.mean_train_reward = j.at("mean_train_reward").get<double>();
  m.mean_eval_reward = opt_from(j, "mean_eval_reward");
  m.solve_rate = opt_from(j, "solve_rate");
  m.group_reward_std = opt_from(j, "group_reward_std");
  m.clip_fraction = j.at("clip_fraction").get<double>();
  m.policy_loss = j.at("policy_loss").get<double>();
  m.value_loss = opt_from(j, "value_loss");
  m.kl_value = opt_from(j, "kl_value");
  m.grad_norm_actor = j.at("grad_norm_actor").get<double>();
  m.grad_norm_critic = opt_from(j, "grad_norm_critic");
  m.wall_ms = opt_from(j, "wall_ms");
  return m;
}

std::string metrics_csv_header() {
  std::string out;
  for (const auto& f : metrics_fields()) {
    if (!out.empty()) out += ',';
    out += f;
  }
  return out;
}

std::string to_csv_row(const IterationMetrics& m) {
  std::ostringstream out;
  out << m.iteration << ',' << ordered_json(m.mean_train_reward).dump() << ','
      << csv_cell(m.mean_eval_reward) << ',' << csv_cell(m.solve_rate) << ','
      << csv_cell(m.group_reward_std) << ',' << ordered_json(m.clip_fraction).dump() << ','
      << ordered_json(m.policy_loss).dump() << ',' << csv_cell(m.value_loss) << ','
      << csv_cell(m.kl_value) << ',' << ordered_json(m.grad_norm_actor).dump() << ','
      << csv_cell(m.grad_norm_critic) << ',' << csv_cell(m.wall_ms);
  return out.str();
}

// ---------------------------------------------------------------------------

std::vector<std::vector<std::size_t>> minibatch_orders(std::uint64_t seed, std::size_t iteration,
                                                       std::size_t epochs, std::size_t n) {
  Rng rng(derive_seed(seed, kShuffle, iteration));
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t e = 0; e < epochs; ++e) {
    out.push_back(objective::all_indices(n));
    rng.shuffle(out.back());
  }
  return out;
}

TrainResult train(const TrainConfig& c, const MetricsSink& sink) {
  validate(c);
  const bool ppo = c.algorithm != Algorithm::grpo;
  TrainResult result{{}, initial_actor(c), std::nullopt, false, {}};
  model::PolicyModel& actor = result.actor;
  if (ppo) result.critic.emplace(initial_critic(c));
  model::PolicyModel* critic = result.critic ? &*result.critic : nullptr;

  std::optional<model::PolicyModel> reference;
  if (c.kl_coefficient > 0.0) reference.emplace(actor);

  objective::ActorLossOptions actor_options;
  actor_options.mode = actor_mode(c);
  actor_options.epsilon = c.epsilon;
  actor_options.geometric = c.geometric_ratio;
  actor_options.normalizer = c.turn_normalizer;
  actor_options.reference = reference ? &*reference : nullptr;
  actor_options.kl_coefficient = c.kl_coefficient;

  const model::AdamOptions actor_adam{c.lr_actor};
  const model::AdamOptions critic_adam{c.lr_critic};

  for (std::size_t iter = 1; iter <= c.iterations; ++iter) {
    const auto started = std::chrono::steady_clock::now();

    const rollout::RolloutBatch batch = rollout::collect(actor, critic, collect_options(c, iter));
    const auto& trajs = batch.trajectories;

    // Advantages come from behavior-time values and never change within the
    // iteration.
    std::vector<estimator::AdvantageSet> adv;
    adv.reserve(trajs.size());
    switch (c.algorithm) {
      case Algorithm::grpo:
        adv = estimator::grpo_batch(trajs, c.group_size, c.use_std, c.std_eps);
        break;
      case Algorithm::token_ppo:
        for (const auto& t : trajs) adv.push_back(estimator::token_gae(t, c.gamma, c.lambda));
        break;
      case Algorithm::turn_ppo:
        for (const auto& t : trajs) adv.push_back(estimator::turn_gae(t, c.gamma, c.lambda));
        break;
    }
    if (ppo && c.whiten_advantages) estimator::whiten(adv);

    IterationMetrics m;
    m.iteration = iter;
    double reward_sum = 0.0;
    for (const auto& t : trajs) reward_sum += t.episode_return();
    m.mean_train_reward = reward_sum / static_cast<double>(trajs.size());
    if (!ppo) m.group_reward_std = estimator::mean_group_reward_std(trajs, c.group_size);

    const auto orders = minibatch_orders(c.seed, iter, c.epochs, trajs.size());
    std::size_t updates = 0, units = 0, clipped = 0;
    double policy_loss = 0.0, value_loss = 0.0, kl = 0.0, gn_actor = 0.0, gn_critic = 0.0;
    try {
      for (const auto& order : orders) {
        for (std::size_t start = 0; start < order.size(); start += c.minibatch) {
          const std::span<const std::size_t> selection(order.data() + start, c.minibatch);

          model::zero_grads(actor.params());
          objective::Loss a = objective::actor_loss(actor, trajs, adv, selection, actor_options);
          actor.backward(a.node);
          const double gna = model::grad_norm(actor.params());
          if (!std::isfinite(gna)) throw std::runtime_error("non-finite actor gradient");

          double gnc = 0.0;
          objective::Loss v;
          if (critic) {
            model::zero_grads(critic->params());
            v = objective::critic_loss(*critic, trajs, adv, selection);
            critic->backward(v.node);
            gnc = model::grad_norm(critic->params());
            if (!std::isfinite(gnc)) throw std::runtime_error("non-finite critic gradient");
          }

          model::adam_step(actor.params(), actor_adam);
          if (critic) model::adam_step(critic->params(), critic_adam);

          updates += 1;
          units += a.breakdown.unit_count;
          clipped += a.breakdown.clipped_units;
          policy_loss += a.breakdown.policy_loss;
          kl += a.breakdown.kl_value;
          gn_actor += gna;
          value_loss += v.breakdown.value_loss;
          gn_critic += gnc;
        }
      }
    } catch (const std::runtime_error& e) {
      result.halted = true;
      result.halt_reason = "iteration " + std::to_string(iter) + ": " + e.what();
      return result;
    }

    const double u = static_cast<double>(updates);
    m.clip_fraction = units ? static_cast<double>(clipped) / static_cast<double>(units) : 0.0;
    m.policy_loss = policy_loss / u;
    m.grad_norm_actor = gn_actor / u;
    if (reference) m.kl_value = kl / u;
    if (critic) {
      m.value_loss = value_loss / u;
      m.grad_norm_critic = gn_critic / u;
    }

    if (iter % c.eval_every == 0 || iter == c.iterations) {
      const auto stats = rollout::evaluate(actor, c.env, c.eval_episodes, eval_seed(c), 0.0,
                                           c.max_response_tokens, c.max_turns);
      m.mean_eval_reward = stats.mean_reward;
      m.solve_rate = stats.solve_rate;
    }
    if (c.log_wall_time)
      m.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                            started)
                      .count();

    const bool all_finite = finite(m.mean_train_reward) && finite(m.mean_eval_reward) &&
                            finite(m.clip_fraction) && finite(m.policy_loss) &&
                            finite(m.value_loss) && finite(m.kl_value) &&
                            finite(m.grad_norm_actor) && finite(m.grad_norm_critic);
    result.metrics.push_back(m);
    if (sink) sink(m);
    if (!all_finite) {
      result.halted = true;
      result.halt_reason = "iteration " + std::to_string(iter) + ": non-finite metric";
      return result;
    }
  }
  return result;
}

// ---------------------------------------------------------------------------

void check_comparable(const std::vector<CompareRun>& runs) {
  if (runs.empty()) throw std::invalid_argument("compare: no runs");
  const TrainConfig& first = runs.front().config;
  for (const auto& r : runs) {
    const TrainConfig& c = r.config;
    if (!(c.env == first.env))
      throw std::invalid_argument("compare: run '" + r.label + "' uses a different environment");
    if (c.seed != first.seed)
      throw std::invalid_argument("compare: run '" + r.label + "' uses a different seed");
    if (c.iterations != first.iterations)
      throw std::invalid_argument("compare: run '" + r.label + "' has a different iteration budget");
    if (c.eval_every != first.eval_every || c.eval_episodes != first.eval_episodes ||
        c.max_turns != first.max_turns || c.max_response_tokens != first.max_response_tokens)
      throw std::invalid_argument("compare: run '" + r.label + "' evaluates differently");
  }
}

CompareResult compare(const std::vector<CompareRun>& runs,
                      const std::function<void(std::size_t, const IterationMetrics&)>& sink) {
  check_comparable(runs);
  CompareResult out;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    out.labels.push_back(runs[i].label);
    out.runs.push_back(train(runs[i].config, [&](const IterationMetrics& m) {
      if (sink) sink(i, m);
    }));
  }
  return out;
}

std::string compare_table_csv(const CompareResult& r) {
  std::ostringstream out;
  out << "iter";
  for (const auto& label : r.labels)
    out << ',' << label << ":mean_train_reward," << label << ":mean_eval_reward";
  out << '\n';
  std::size_t rows = 0;
  for (const auto& run : r.runs) rows = std::max(rows, run.metrics.size());
  for (std::size_t i = 0; i < rows; ++i) {
    out << i + 1;
    for (const auto& run : r.runs) {
      if (i < run.metrics.size())
        out << ',' << ordered_json(run.metrics[i].mean_train_reward).dump() << ','
            << csv_cell(run.metrics[i].mean_eval_reward);
      else
        out << ",,";
    }
    out << '\n';
  }
  return out.str();
}

std::string compare_summary_csv(const CompareResult& r) {
  std::ostringstream out;
  out << "run,iterations,final_eval_reward,final_solve_rate,halted\n";
  for (std::size_t i = 0; i < r.runs.size(); ++i) {
    const auto& run = r.runs[i];
    std::optional<double> eval, solve;
    for (auto it = run.metrics.rbegin(); it != run.metrics.rend(); ++it) {
      if (it->mean_eval_reward) {
        eval = it->mean_eval_reward;
        solve = it->solve_rate;
        break;
      }
    }
    out << r.labels[i] << ',' << run.metrics.size() << ',' << csv_cell(eval) << ','
        << csv_cell(solve) << ',' << (run.halted ? 1 : 0) << '\n';
  }
  return out.str();
}

}  // namespace turnrl::trainer
