#include "turnrl/rollout.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "turnrl/parallel.hpp"

namespace turnrl::rollout {

using nlohmann::json;

namespace {

constexpr std::uint64_t kEnvStream = 0xE4B;
constexpr std::uint64_t kSampleStream = 0x5A3;
constexpr std::uint64_t kEvalStream = 0xEFA1;

}  // namespace

std::span<const TokenId> Trajectory::query_tokens(std::size_t n) const {
  const Turn& t = turns.at(n);
  return std::span<const TokenId>(tokens).subspan(t.query_begin, t.response_begin - t.query_begin);
}

std::span<const TokenId> Trajectory::response_tokens(std::size_t n) const {
  const Turn& t = turns.at(n);
  return std::span<const TokenId>(tokens).subspan(t.response_begin, t.response_length());
}

std::span<const TokenId> Trajectory::context(std::size_t position) const {
  return std::span<const TokenId>(tokens).first(position);
}

std::size_t Trajectory::total_response_tokens() const {
  std::size_t n = 0;
  for (const auto& t : turns) n += t.response_length();
  return n;
}

double Trajectory::episode_return() const {
  double r = terminal_reward;
  for (const auto& t : turns) r += t.turn_reward;
  return r;
}

double Trajectory::turn_reward_with_terminal(std::size_t n) const {
  double r = turns.at(n).turn_reward;
  if (n + 1 == turns.size()) r += terminal_reward;
  return r;
}

std::uint64_t question_env_seed(std::uint64_t seed, std::uint64_t question) {
  return derive_seed(seed, kEnvStream, question);
}

std::uint64_t member_sample_seed(std::uint64_t seed, std::uint64_t question, std::size_t member) {
  return derive_seed(derive_seed(seed, kSampleStream, question), member);
}

std::uint64_t eval_instance_seed(std::uint64_t seed, std::size_t episode) {
  return derive_seed(seed, kEvalStream, episode);
}

Trajectory run_episode(const model::PolicyModel& policy, const model::PolicyModel* critic,
                       const env::EnvSpec& spec, std::uint64_t env_seed, Rng& rng,
                       std::size_t max_turns, std::size_t max_response_tokens,
                       double temperature) {
  if (max_turns == 0) throw std::invalid_argument("max_turns must be >= 1");
  Trajectory traj;
  traj.env_seed = env_seed;
  traj.has_values = critic != nullptr;
  auto [state, query] = env::reset(spec, env_seed);

  for (std::size_t n = 0; n < max_turns; ++n) {
    Turn turn;
    turn.query_begin = traj.tokens.size();
    traj.tokens.insert(traj.tokens.end(), query.begin(), query.end());
    turn.response_begin = traj.tokens.size();

    const model::Sample sample =
        policy.sample_response(traj.tokens, max_response_tokens, temperature, rng);
    turn.behavior_logprobs = sample.logprobs;
    if (critic) {
      std::span<const TokenId> stream(traj.tokens);
      turn.turn_value = critic->value(stream);
      turn.token_values.push_back(turn.turn_value);
      std::vector<TokenId> ctx(traj.tokens);
      for (std::size_t h = 1; h < sample.tokens.size(); ++h) {
        ctx.push_back(sample.tokens[h - 1]);
        turn.token_values.push_back(critic->value(ctx));
      }
    }
    traj.tokens.insert(traj.tokens.end(), sample.tokens.begin(), sample.tokens.end());
    turn.response_end = traj.tokens.size();

    const env::StepResult result = env::step(state, sample.tokens);
    turn.turn_reward = result.reward;
    traj.turns.push_back(std::move(turn));
    if (result.terminal) break;
    query = *result.query;
  }
  traj.truncated = !env::is_terminal(state);
  traj.success = env::is_success(state);
  return traj;
}

RolloutBatch collect(const model::PolicyModel& policy, const model::PolicyModel* critic,
                     const CollectOptions& o, model::Execution exec) {
  if (o.group_size == 0 || o.batch_size == 0 || o.batch_size % o.group_size != 0)
    throw std::invalid_argument("collect: batch_size must be a positive multiple of group_size");
  RolloutBatch batch;
  batch.group_size = o.group_size;
  batch.policy_version = o.policy_version;
  batch.trajectories.resize(o.batch_size);

  parallel_for(o.batch_size, exec == model::Execution::parallel, [&](std::size_t i) {
    const std::uint64_t question = i / o.group_size;
    const std::size_t member = i % o.group_size;
    Rng rng(member_sample_seed(o.seed, question, member));
    Trajectory t = run_episode(policy, critic, o.env, question_env_seed(o.seed, question), rng,
                               o.max_turns, o.max_response_tokens, o.temperature);
    t.question_id = question;
    t.member = member;
    batch.trajectories[i] = std::move(t);
  });
  return batch;
}

std::vector<std::uint8_t> response_mask(const Trajectory& t) {
  std::vector<std::uint8_t> mask(t.tokens.size(), 0);
  for (const auto& turn : t.turns)
    for (std::size_t p = turn.response_begin; p < turn.response_end; ++p) mask[p] = 1;
  return mask;
}

// ---------------------------------------------------------------------------

namespace {

EvalStats summarize(std::vector<double> returns, const std::vector<std::uint8_t>& solved) {
  EvalStats s;
  s.episodes = returns.size();
  double sum = 0.0;
  for (double r : returns) sum += r;
  s.mean_reward = sum / static_cast<double>(returns.size());
  double var = 0.0;
  for (double r : returns) var += (r - s.mean_reward) * (r - s.mean_reward);
  s.reward_std = std::sqrt(var / static_cast<double>(returns.size()));
  std::size_t wins = 0;
  for (auto w : solved) wins += w;
  s.solve_rate = static_cast<double>(wins) / static_cast<double>(returns.size());
  s.returns = std::move(returns);
  return s;
}

}  // namespace

EvalStats evaluate(const model::PolicyModel& policy, const env::EnvSpec& spec,
                   std::size_t n_episodes, std::uint64_t seed, double temperature,
                   std::size_t max_response_tokens, std::size_t max_turns,
                   model::Execution exec) {
  if (n_episodes == 0) throw std::invalid_argument("evaluate: n_episodes must be >= 1");
  std::vector<double> returns(n_episodes);
  std::vector<std::uint8_t> solved(n_episodes);
  parallel_for(n_episodes, exec == model::Execution::parallel, [&](std::size_t k) {
    Rng rng(derive_seed(seed, kSampleStream, k));
    const Trajectory t = run_episode(policy, nullptr, spec, eval_instance_seed(seed, k), rng,
                                     max_turns, max_response_tokens, temperature);
    returns[k] = t.episode_return();
    solved[k] = t.success ? 1 : 0;
  });
  return summarize(std::move(returns), solved);
}

EvalStats evaluate(const Agent& agent, const env::EnvSpec& spec, std::size_t n_episodes,
                   std::uint64_t seed, std::size_t max_turns) {
  if (n_episodes == 0) throw std::invalid_argument("evaluate: n_episodes must be >= 1");
  std::vector<double> returns(n_episodes);
  std::vector<std::uint8_t> solved(n_episodes);
  for (std::size_t k = 0; k < n_episodes; ++k) {
    Rng rng(derive_seed(seed, kSampleStream, k));
    auto [state, query] = env::reset(spec, eval_instance_seed(seed, k));
    std::vector<TokenId> stream(query);
    double total = 0.0;
    for (std::size_t n = 0; n < max_turns && !env::is_terminal(state); ++n) {
      const auto response = agent(stream, rng);
      stream.insert(stream.end(), response.begin(), response.end());
      const auto result = env::step(state, response);
      total += result.reward;
      if (result.query) stream.insert(stream.end(), result.query->begin(), result.query->end());
    }
    returns[k] = total;
    solved[k] = env::is_success(state) ? 1 : 0;
  }
  return summarize(std::move(returns), solved);
}

// ---------------------------------------------------------------------------

std::vector<std::string> validate(const Trajectory& t) {
  std::vector<std::string> problems;
  if (t.turns.empty()) problems.push_back("trajectory has no turns");
  std::size_t expect = 0;
  for (std::size_t n = 0; n < t.turns.size(); ++n) {
    const Turn& turn = t.turns[n];
    const std::string where = "turn " + std::to_string(n) + ": ";
    if (turn.query_begin != expect) problems.push_back(where + "turn offsets are not contiguous");
    if (turn.response_begin <= turn.query_begin) problems.push_back(where + "empty query");
    if (turn.response_end <= turn.response_begin) problems.push_back(where + "empty response");
    if (turn.response_end > t.tokens.size()) problems.push_back(where + "offsets past the stream");
    if (turn.behavior_logprobs.size() != turn.response_length())
      problems.push_back(where + "logprob count differs from response length");
    for (double lp : turn.behavior_logprobs)
      if (!(lp <= 0.0)) problems.push_back(where + "behavior logprob is positive or NaN");
    if (t.has_values && turn.token_values.size() != turn.response_length())
      problems.push_back(where + "value count differs from response length");
    expect = turn.response_end;
  }
  if (expect != t.tokens.size()) problems.push_back("stream has tokens after the last turn");
  return problems;
}

std::string to_json_line(const Trajectory& t) {
  json j;
  j["question_id"] = t.question_id;
  j["member"] = t.member;
  j["env_seed"] = t.env_seed;
  j["tokens"] = t.tokens;
  j["terminal_reward"] = t.terminal_reward;
  j["has_values"] = t.has_values;
  j["success"] = t.success;
  j["truncated"] = t.truncated;
  j["total_response_tokens"] = t.total_response_tokens();
  json turns = json::array();
  for (const auto& turn : t.turns) {
    turns.push_back({{"query_begin", turn.query_begin},
                     {"response_begin", turn.response_begin},
                     {"response_end", turn.response_end},
                     {"behavior_logprobs", turn.behavior_logprobs},
                     {"token_values", turn.token_values},
                     {"turn_value", turn.turn_value},
                     {"turn_reward", turn.turn_reward}});
  }
  j["turns"] = std::move(turns);
  return j.dump();
}

Trajectory from_json_line(const std::string& line) {
  try {
    const json j = json::parse(line);
    Trajectory t;
    t.question_id = j.at("question_id").get<std::uint64_t>();
    t.member = j.at("member").get<std::size_t>();
    t.env_seed = j.at("env_seed").get<std::uint64_t>();
    t.tokens = j.at("tokens").get<std::vector<TokenId>>();
    t.terminal_reward = j.at("terminal_reward").get<double>();
    t.has_values = j.at("has_values").get<bool>();
    t.success = j.value("success", false);
    t.truncated = j.value("truncated", false);
    for (const auto& jt : j.at("turns")) {
      Turn turn;
      turn.query_begin = jt.at("query_begin").get<std::size_t>();
      turn.response_begin = jt.at("response_begin").get<std::size_t>();
      turn.response_end = jt.at("response_end").get<std::size_t>();
      turn.behavior_logprobs = jt.at("behavior_logprobs").get<std::vector<double>>();
      turn.token_values = jt.at("token_values").get<std::vector<double>>();
      turn.turn_value = jt.at("turn_value").get<double>();
      turn.turn_reward = jt.at("turn_reward").get<double>();
      t.turns.push_back(std::move(turn));
    }
    return t;
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("malformed trajectory record: ") + e.what());
  }
}

void write_dump(std::ostream& out, std::span<const Trajectory> trajectories) {
  for (const auto& t : trajectories) out << to_json_line(t) << '\n';
}

std::vector<Trajectory> read_dump(std::istream& in) {
  std::vector<Trajectory> out;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) out.push_back(from_json_line(line));
  return out;
}

std::string render_text(const Trajectory& t) {
  const auto& vocab = Vocabulary::get();
  std::ostringstream out;
  out << "trajectory question=" << t.question_id << " member=" << t.member
      << " env_seed=" << t.env_seed << " turns=" << t.turns.size()
      << " return=" << t.episode_return() << " success=" << (t.success ? "yes" : "no") << '\n';
  for (std::size_t n = 0; n < t.turns.size(); ++n) {
    out << "turn " << n + 1 << '\n'
        << "  query:    " << vocab.detokenize(t.query_tokens(n)) << '\n'
        << "  response: " << vocab.detokenize(t.response_tokens(n)) << '\n'
        << "  action:   " << env::describe(env::parse_action(t.response_tokens(n))) << '\n'
        << "  reward:   " << t.turns[n].turn_reward << '\n';
  }
  return out.str();
}

}  // namespace turnrl::rollout
