#include <cmath>

#include "doctest.h"
#include "support.hpp"
#include "turnrl/objective.hpp"

using namespace turnrl;
using objective::Mode;
using objective::TurnNormalizer;

namespace {

const Mode kModes[] = {Mode::token_single, Mode::token_multi, Mode::turn_single, Mode::turn_multi};

bool token_mode(Mode m) { return m == Mode::token_single || m == Mode::token_multi; }

double mc(double r, double a, double eps) {
  const double c = r < 1 - eps ? 1 - eps : (r > 1 + eps ? 1 + eps : r);
  return std::min(r * a, c * a);
}

// Table 1 objectives written out term by term from the stream logprobs.
double oracle(const rollout::Trajectory& t, const std::vector<double>& lp,
              const estimator::AdvantageSet& adv, Mode mode, double eps, bool geometric,
              TurnNormalizer norm) {
  double total = 0.0;
  for (const auto& turn : t.turns) total += static_cast<double>(turn.response_length());
  double obj = 0.0;
  if (token_mode(mode)) {
    std::size_t k = 0;
    for (std::size_t n = 0; n < t.turns.size(); ++n) {
      const auto& turn = t.turns[n];
      for (std::size_t h = 0; h < turn.response_length(); ++h, ++k) {
        double a = adv.advantages[0];
        if (adv.granularity == estimator::Granularity::per_token) a = adv.advantages[k];
        if (adv.granularity == estimator::Granularity::per_turn) a = adv.advantages[n];
        obj += mc(std::exp(lp[turn.response_begin + h] - turn.behavior_logprobs[h]), a, eps) / total;
      }
    }
    return obj;
  }
  if (mode == Mode::turn_multi) {
    for (std::size_t n = 0; n < t.turns.size(); ++n) {
      const auto& turn = t.turns[n];
      const double len = static_cast<double>(turn.response_length());
      double s = 0.0;
      for (std::size_t h = 0; h < turn.response_length(); ++h)
        s += lp[turn.response_begin + h] - turn.behavior_logprobs[h];
      if (geometric) s /= len;
      const double a = adv.granularity == estimator::Granularity::per_turn ? adv.advantages[n]
                                                                         : adv.advantages[0];
      obj += mc(std::exp(s), a, eps) / (norm == TurnNormalizer::total_tokens ? total : len);
    }
    return obj;
  }
  double s = 0.0;
  for (const auto& turn : t.turns)
    for (std::size_t h = 0; h < turn.response_length(); ++h)
      s += lp[turn.response_begin + h] - turn.behavior_logprobs[h];
  if (geometric) s /= total;
  return mc(std::exp(s), adv.advantages[0], eps) / total;
}

// Stream logprobs near the behavior ones; query positions get arbitrary values.
std::vector<double> perturbed_stream(const rollout::Trajectory& t, Rng& rng, double spread) {
  std::vector<double> lp(t.tokens.size());
  for (double& x : lp) x = -rng.uniform(0.0, 5.0);
  for (const auto& turn : t.turns)
    for (std::size_t h = 0; h < turn.response_length(); ++h)
      lp[turn.response_begin + h] = turn.behavior_logprobs[h] + rng.uniform(-spread, spread);
  return lp;
}

estimator::AdvantageSet random_advantages(const rollout::Trajectory& t, Mode mode, Rng& rng) {
  estimator::AdvantageSet a;
  const int pick = static_cast<int>(rng.index(2));
  if (pick == 0 || (mode == Mode::turn_single && t.turns.size() != 1)) {
    a.granularity = estimator::Granularity::per_trajectory;
    a.advantages = {rng.uniform(-2, 2)};
  } else if (token_mode(mode)) {
    a.granularity = estimator::Granularity::per_token;
    for (std::size_t k = 0; k < t.total_response_tokens(); ++k) a.advantages.push_back(rng.uniform(-2, 2));
  } else {
    a.granularity = estimator::Granularity::per_turn;
    for (std::size_t n = 0; n < t.turns.size(); ++n) a.advantages.push_back(rng.uniform(-2, 2));
  }
  return a;
}

estimator::AdvantageSet constant(double a) {
  estimator::AdvantageSet s;
  s.granularity = estimator::Granularity::per_trajectory;
  s.advantages = {a};
  return s;
}

rollout::RolloutBatch fresh_batch(const model::PolicyModel& policy, std::uint64_t seed,
                                  std::size_t n = 6, std::size_t max_response = 3) {
  rollout::CollectOptions o;
  o.env.width = 3;
  o.env.height = 3;
  o.env.max_steps = 4;
  o.batch_size = n;
  o.seed = seed;
  o.max_response_tokens = max_response;
  return rollout::collect(policy, nullptr, o);
}

}  // namespace

TEST_CASE("clip operator examples") {
  CHECK(objective::clip_op(1.5, 1.0, 0.2).value == doctest::Approx(1.2).epsilon(1e-15));
  CHECK(objective::clip_op(1.5, 1.0, 0.2).clipped);
  CHECK(objective::clip_op(0.5, -1.0, 0.2).value == doctest::Approx(-0.8).epsilon(1e-15));
  CHECK(objective::clip_op(0.5, -1.0, 0.2).clipped);
  for (double a : {-3.0, -0.1, 0.0, 0.7, 5.0}) {
    const auto c = objective::clip_op(1.0, a, 0.2);
    CHECK(c.value == a);
    CHECK_FALSE(c.clipped);
  }
  // clipped branch is inactive when the unclipped term is already smaller
  CHECK_FALSE(objective::clip_op(1.5, -1.0, 0.2).clipped);
  CHECK(objective::clip_op(1.5, -1.0, 0.2).value == -1.5);
}

TEST_CASE("clip operator is pessimistic") {
  Rng rng(1);
  for (int i = 0; i < 100000; ++i) {
    const double r = std::exp(rng.uniform(-2, 2));
    const double a = rng.uniform(-5, 5);
    const double eps = rng.uniform(0.01, 0.5);
    const auto c = objective::clip_op(r, a, eps);
    const double cr = std::clamp(r, 1 - eps, 1 + eps);
    CHECK(c.value <= r * a);
    CHECK(std::abs(c.value) <= std::max(std::abs(r * a), std::abs(cr * a)));
    CHECK(c.value == mc(r, a, eps));
  }
}

TEST_CASE("ratio examples") {
  CHECK(objective::token_ratio(0.0, 0.0) == 1.0);
  CHECK(objective::token_ratio(-1.0, -1.1) == doctest::Approx(std::exp(0.1)).epsilon(1e-15));
  const std::vector<double> zero{-1, -2, -3};
  CHECK(objective::turn_ratio(zero, zero, false).ratio == 1.0);
  const std::vector<double> nw{-1.0, -2.0}, old{-1.04, -2.06};
  CHECK(objective::turn_ratio(nw, old, true).ratio == doctest::Approx(std::exp(0.05)).epsilon(1e-14));
  CHECK(objective::turn_ratio(nw, old, false).ratio == doctest::Approx(std::exp(0.1)).epsilon(1e-14));
  CHECK_THROWS_AS(objective::turn_ratio(nw, zero, false), std::invalid_argument);

  const std::vector<double> big{0.0}, small{-30.0};
  const auto clamped = objective::turn_ratio(big, small, false);
  CHECK(clamped.clamped);
  CHECK(clamped.ratio == std::exp(objective::kLogRatioClamp));
}

TEST_CASE("turn ratio equals the product of token ratios") {
  Rng rng(2);
  for (int i = 0; i < 2000; ++i) {
    std::vector<double> a(1 + rng.index(8)), b(a.size());
    double product = 1.0;
    for (std::size_t h = 0; h < a.size(); ++h) {
      b[h] = -rng.uniform(0.05, 5);
      a[h] = b[h] + rng.uniform(-0.5, 0.5);
      product *= objective::token_ratio(a[h], b[h]);
    }
    CHECK(std::abs(objective::turn_ratio(a, b, false).ratio - product) <= 1e-10);
    CHECK(std::abs(objective::turn_ratio(a, b, true).ratio -
                   std::pow(product, 1.0 / static_cast<double>(a.size()))) <= 1e-10);
  }
}

TEST_CASE("single response token, ratio 1, advantage 1 gives loss -1") {
  const model::PolicyModel policy(model::default_architecture(), 3);
  auto batch = fresh_batch(policy, 4, 1, 1);
  batch.trajectories.front().turns.resize(1);
  auto& t = batch.trajectories.front();
  t.tokens.resize(t.turns[0].response_end);
  REQUIRE(t.total_response_tokens() == 1);
  const std::vector<estimator::AdvantageSet> adv{constant(1.0)};
  const auto sel = objective::all_indices(1);
  for (Mode m : kModes) {
    const auto loss = objective::actor_loss(policy, batch.trajectories, adv, sel, {.mode = m});
    CHECK(std::abs(loss.breakdown.policy_loss + 1.0) <= 1e-12);
    CHECK(loss.breakdown.clip_fraction == 0.0);
  }
}

TEST_CASE("two-turn hand evaluation of the multi-turn turn objective") {
  // Turn 1: two tokens, ratio 1.1, A = 2.  Turn 2: three tokens, A = 1 or -1.
  rollout::Trajectory t;
  t.tokens = testing::toks("<bos> <act> up <eos> <bos> <act> left so <eos>");
  rollout::Turn a, b;
  a.query_begin = 0, a.response_begin = 2, a.response_end = 4;
  a.behavior_logprobs = {-1.0, -2.0};
  b.query_begin = 4, b.response_begin = 6, b.response_end = 9;
  b.behavior_logprobs = {-0.5, -0.5, -0.5};
  t.turns = {a, b};
  std::vector<double> lp{-9, -9, -1.0 + std::log(1.1), -2.0, -9, -9, -0.5 + std::log(1.5), -0.5, -0.5};

  estimator::AdvantageSet adv;
  adv.granularity = estimator::Granularity::per_turn;
  adv.advantages = {2.0, 1.0};
  const objective::ActorLossOptions opt{.mode = Mode::turn_multi, .epsilon = 0.2};
  // (min(2.2, 2.2) + min(1.5, 1.2)) / 5 tokens
  auto terms = objective::trajectory_objective(t, lp, adv, opt);
  CHECK(std::abs(terms.objective - 0.68) <= 1e-12);
  CHECK(terms.units == 2);
  CHECK(terms.clipped == 1);

  // second turn ratio 0.5 with A = -1: min(-0.5, -0.8) = -0.8
  lp[6] = -0.5 + std::log(0.5);
  adv.advantages = {2.0, -1.0};
  terms = objective::trajectory_objective(t, lp, adv, opt);
  CHECK(std::abs(terms.objective - (2.2 - 0.8) / 5.0) <= 1e-12);
  CHECK(terms.clipped == 1);

  // per-turn normalizer: 2.2 / 2 - 0.8 / 3
  auto per_turn = opt;
  per_turn.normalizer = TurnNormalizer::per_turn;
  terms = objective::trajectory_objective(t, lp, adv, per_turn);
  CHECK(std::abs(terms.objective - (2.2 / 2.0 - 0.8 / 3.0)) <= 1e-12);
}

TEST_CASE("trajectory objective and adjoints match the oracle and finite differences") {
  Rng rng(5);
  for (int trial = 0; trial < 2000; ++trial) {
    const auto t = testing::synthetic_trajectory(rng, 4, 4, false);
    const Mode mode = kModes[rng.index(4)];
    const objective::ActorLossOptions opt{
        .mode = mode,
        .epsilon = rng.uniform(0.05, 0.4),
        .geometric = rng.index(2) == 1,
        .normalizer = rng.index(2) ? TurnNormalizer::per_turn : TurnNormalizer::total_tokens};
    const auto adv = random_advantages(t, mode, rng);
    auto lp = perturbed_stream(t, rng, 0.3);
    const auto terms = objective::trajectory_objective(t, lp, adv, opt);
    const double want = oracle(t, lp, adv, mode, opt.epsilon, opt.geometric, opt.normalizer);
    CHECK(std::abs(terms.objective - want) <= 1e-12);
    CHECK(terms.clipped <= terms.units);

    const auto mask = rollout::response_mask(t);
    for (std::size_t p = 0; p < lp.size(); ++p) {
      if (!mask[p]) {
        CHECK(terms.adjoints[p] == 0.0);
        continue;
      }
      const double h = 1e-6, saved = lp[p];
      lp[p] = saved + h;
      const double up = oracle(t, lp, adv, mode, opt.epsilon, opt.geometric, opt.normalizer);
      lp[p] = saved - h;
      const double down = oracle(t, lp, adv, mode, opt.epsilon, opt.geometric, opt.normalizer);
      lp[p] = saved;
      const double numeric = (up - down) / (2 * h);
      // skip the measure-zero kinks of min/clip
      if (std::abs(up - 2 * want + down) > 1e-9) continue;
      CHECK(std::abs(terms.adjoints[p] - numeric) <= 1e-6 * std::max(1.0, std::abs(numeric)));
    }
  }
}

TEST_CASE("query positions never influence the objective") {
  Rng rng(6);
  for (int trial = 0; trial < 500; ++trial) {
    const auto t = testing::synthetic_trajectory(rng, 4, 3, false);
    const Mode mode = kModes[rng.index(4)];
    const objective::ActorLossOptions opt{.mode = mode};
    const auto adv = random_advantages(t, mode, rng);
    auto lp = perturbed_stream(t, rng, 0.3);
    const double base = objective::trajectory_objective(t, lp, adv, opt).objective;
    const auto mask = rollout::response_mask(t);
    for (std::size_t p = 0; p < lp.size(); ++p)
      if (!mask[p]) lp[p] += rng.uniform(-3, 3);
    CHECK(objective::trajectory_objective(t, lp, adv, opt).objective == base);
  }
}

TEST_CASE("zero advantages give zero loss and zero gradient") {
  Rng rng(7);
  model::PolicyModel policy(testing::tiny_arch(), 7);
  testing::jitter(policy, rng, 0.3);
  const auto batch = fresh_batch(policy, 8);
  const auto sel = objective::all_indices(batch.trajectories.size());
  for (Mode m : kModes) {
    std::vector<estimator::AdvantageSet> adv(batch.trajectories.size(), constant(0.0));
    const auto loss = objective::actor_loss(policy, batch.trajectories, adv, sel, {.mode = m});
    CHECK(loss.breakdown.policy_loss == 0.0);
    model::zero_grads(policy.params());
    policy.backward(loss.node);
    for (double g : policy.params().grads) CHECK(g == 0.0);
  }
}

TEST_CASE("fresh batch: ratios are 1 and the gradient is plain policy gradient") {
  Rng rng(8);
  model::PolicyModel policy(testing::tiny_arch(), 8);
  testing::jitter(policy, rng, 0.3);
  const auto batch = fresh_batch(policy, 9, 8);
  const auto& ts = batch.trajectories;
  const auto sel = objective::all_indices(ts.size());
  const double B = static_cast<double>(ts.size());

  for (Mode m : {Mode::token_multi, Mode::turn_multi}) {
    std::vector<estimator::AdvantageSet> adv;
    for (const auto& t : ts) adv.push_back(random_advantages(t, m, rng));
    const auto loss = objective::actor_loss(policy, ts, adv, sel, {.mode = m});
    CHECK(loss.breakdown.clip_fraction == 0.0);
    model::zero_grads(policy.params());
    policy.backward(loss.node);
    const auto got = policy.params().grads;

    // -(1/B) sum_i (1/|a^i|) sum_tokens A * grad log pi
    model::LossNode pg;
    for (std::size_t i = 0; i < ts.size(); ++i) {
      const auto& t = ts[i];
      const double total = static_cast<double>(t.total_response_tokens());
      std::size_t k = 0;
      for (std::size_t n = 0; n < t.turns.size(); ++n)
        for (std::size_t p = t.turns[n].response_begin; p < t.turns[n].response_end; ++p, ++k) {
          const auto act = policy.forward(t.context(p));
          CHECK(std::abs(act.log_probs[t.tokens[p]] - t.turns[n].behavior_logprobs[p - t.turns[n].response_begin]) <= 1e-12);
          const std::size_t e = pg.record(act, t.tokens[p]);
          pg.seed_logprob(e, -adv[i].at_token(k, n) / (B * total));
        }
    }
    model::zero_grads(policy.params());
    policy.backward(pg);
    const auto& want = policy.params().grads;
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < got.size(); ++k) {
      num += (got[k] - want[k]) * (got[k] - want[k]);
      den += want[k] * want[k];
    }
    CHECK(std::sqrt(num) <= 1e-6 * std::sqrt(den));
  }
}

TEST_CASE("mode degeneration") {
  Rng rng(9);
  for (int trial = 0; trial < 500; ++trial) {
    // single turn: turn_multi == turn_single
    auto one = testing::synthetic_trajectory(rng, 1, 5, false);
    const auto a = constant(rng.uniform(-2, 2));
    const bool geo = rng.index(2) == 1;
    auto lp = perturbed_stream(one, rng, 0.3);
    CHECK(objective::trajectory_objective(one, lp, a, {.mode = Mode::turn_multi, .geometric = geo}).objective ==
          doctest::Approx(objective::trajectory_objective(one, lp, a, {.mode = Mode::turn_single, .geometric = geo}).objective)
              .epsilon(1e-14));

    // single-token turns with a trajectory-wide advantage: turn == token
    auto flat = testing::synthetic_trajectory(rng, 6, 1, false);
    lp = perturbed_stream(flat, rng, 0.3);
    const double token = objective::trajectory_objective(flat, lp, a, {.mode = Mode::token_multi}).objective;
    CHECK(std::abs(objective::trajectory_objective(flat, lp, a, {.mode = Mode::turn_multi}).objective - token) <= 1e-14);
    CHECK(std::abs(objective::trajectory_objective(flat, lp, a, {.mode = Mode::token_single}).objective - token) <= 1e-14);
  }
}

TEST_CASE("geometric turn_single is the length-normalized sequence ratio objective") {
  Rng rng(10);
  for (int trial = 0; trial < 500; ++trial) {
    const auto t = testing::synthetic_trajectory(rng, 3, 4, false);
    const auto lp = perturbed_stream(t, rng, 0.3);
    const double A = rng.uniform(-2, 2), eps = 0.2;
    double s = 0.0, len = 0.0;
    for (const auto& turn : t.turns)
      for (std::size_t h = 0; h < turn.response_length(); ++h, len += 1.0)
        s += lp[turn.response_begin + h] - turn.behavior_logprobs[h];
    const double seq_ratio = std::exp(s / len);
    const double want = std::min(seq_ratio * A, std::clamp(seq_ratio, 1 - eps, 1 + eps) * A) / len;
    const auto got = objective::trajectory_objective(
        t, lp, constant(A), {.mode = Mode::turn_single, .epsilon = eps, .geometric = true});
    CHECK(std::abs(got.objective - want) <= 1e-12);
  }
}

TEST_CASE("granularity mismatches and empty selections are rejected") {
  const model::PolicyModel policy(testing::tiny_arch(), 11);
  const auto batch = fresh_batch(policy, 12, 2);
  const auto& ts = batch.trajectories;
  std::vector<estimator::AdvantageSet> per_token, per_turn;
  for (const auto& t : ts) {
    estimator::AdvantageSet a;
    a.granularity = estimator::Granularity::per_token;
    a.advantages.assign(t.total_response_tokens(), 1.0);
    per_token.push_back(a);
    a.granularity = estimator::Granularity::per_turn;
    a.advantages.assign(t.turns.size(), 1.0);
    per_turn.push_back(a);
  }
  const auto sel = objective::all_indices(2);
  CHECK_THROWS_AS(objective::actor_loss(policy, ts, per_token, sel, {.mode = Mode::turn_multi}), std::invalid_argument);
  CHECK_THROWS_AS(objective::actor_loss(policy, ts, per_turn, sel, {.mode = Mode::token_multi}), std::invalid_argument);
  CHECK_THROWS_AS(objective::actor_loss(policy, ts, per_turn, std::vector<std::size_t>{}, {}), std::invalid_argument);
}

TEST_CASE("critic loss examples") {
  const auto critic = model::PolicyModel::zeros(model::default_architecture(true));
  const model::PolicyModel policy(model::default_architecture(), 13);
  auto batch = fresh_batch(policy, 14, 2);
  auto& ts = batch.trajectories;
  ts[0].turns.resize(1);
  ts[0].tokens.resize(ts[0].turns[0].response_end);
  ts[1].turns.resize(std::min<std::size_t>(2, ts[1].turns.size()));
  REQUIRE(ts[1].turns.size() == 2);
  ts[1].tokens.resize(ts[1].turns[1].response_end);

  std::vector<estimator::AdvantageSet> targets(2);
  for (auto& s : targets) s.granularity = estimator::Granularity::per_turn;
  // single turn, V = 0, R = 1
  targets[0].returns = {1.0};
  CHECK(objective::critic_loss(critic, ts, targets, std::vector<std::size_t>{0}).breakdown.value_loss ==
        doctest::Approx(0.5).epsilon(1e-15));
  // N = 1 with R = 2 and N = 2 with R = (1, 3), V = 0: mean(2, (0.5 + 4.5) / 2)
  targets[0].returns = {2.0};
  targets[1].returns = {1.0, 3.0};
  CHECK(objective::critic_loss(critic, ts, targets, objective::all_indices(2)).breakdown.value_loss ==
        doctest::Approx(2.25).epsilon(1e-15));

  // V == R gives zero
  Rng rng(15);
  model::PolicyModel fitted(model::default_architecture(true), 16);
  testing::jitter(fitted, rng, 0.2);
  for (std::size_t i = 0; i < 2; ++i) {
    targets[i].returns.clear();
    for (const auto& turn : ts[i].turns) targets[i].returns.push_back(fitted.value(ts[i].context(turn.response_begin)));
  }
  const auto zero = objective::critic_loss(fitted, ts, targets, objective::all_indices(2));
  CHECK(zero.breakdown.value_loss == 0.0);
  model::zero_grads(fitted.params());
  fitted.backward(zero.node);
  for (double g : fitted.params().grads) CHECK(g == 0.0);
  CHECK_THROWS_AS(objective::critic_loss(policy, ts, targets, objective::all_indices(2)), std::logic_error);
}

TEST_CASE("kl penalty examples") {
  Rng rng(17);
  model::PolicyModel policy(testing::tiny_arch(), 18);
  testing::jitter(policy, rng, 0.3);
  const auto batch = fresh_batch(policy, 19, 3);
  const auto& ts = batch.trajectories;
  const auto sel = objective::all_indices(ts.size());
  CHECK(objective::kl_penalty(policy, policy, ts, sel, 0.0).breakdown.kl_penalty == 0.0);
  CHECK(std::abs(objective::kl_penalty(policy, policy, ts, sel, 0.5).breakdown.kl_penalty) <= 1e-12);

  // two response tokens with known gaps to a reference
  model::PolicyModel reference(testing::tiny_arch(), 20);
  rollout::Trajectory t;
  t.tokens = testing::toks("<bos> <act> up <eos>");
  rollout::Turn turn;
  turn.response_begin = 2;
  turn.response_end = 4;
  turn.behavior_logprobs = {-1.0, -1.0};
  t.turns = {turn};
  const std::vector<rollout::Trajectory> two{t};
  const double gap1 = policy.logprob(t.context(2), t.tokens[2]) - reference.logprob(t.context(2), t.tokens[2]);
  const double gap2 = policy.logprob(t.context(3), t.tokens[3]) - reference.logprob(t.context(3), t.tokens[3]);
  const auto kl = objective::kl_penalty(policy, reference, two, objective::all_indices(1), 0.01);
  CHECK(std::abs(kl.breakdown.kl_value - 0.5 * (gap1 + gap2)) <= 1e-12);
  CHECK(std::abs(kl.breakdown.kl_penalty - 0.005 * (gap1 + gap2)) <= 1e-14);
  CHECK_THROWS_AS(objective::kl_penalty(policy, reference, two, objective::all_indices(1), -1.0),
                  std::invalid_argument);

  // the actor loss folds the same penalty in
  const std::vector<estimator::AdvantageSet> adv{constant(0.0)};
  const auto with = objective::actor_loss(policy, two, adv, objective::all_indices(1),
                                          {.reference = &reference, .kl_coefficient = 0.01});
  CHECK(std::abs(with.breakdown.kl_penalty - kl.breakdown.kl_penalty) <= 1e-15);
  CHECK(std::abs(with.node.value - with.breakdown.policy_loss - kl.breakdown.kl_penalty) <= 1e-15);
}

TEST_CASE("serial and parallel loss construction agree") {
  Rng rng(21);
  model::PolicyModel policy(testing::tiny_arch(), 22);
  testing::jitter(policy, rng, 0.3);
  const auto batch = fresh_batch(policy, 23, 12);
  std::vector<estimator::AdvantageSet> adv;
  for (const auto& t : batch.trajectories) adv.push_back(random_advantages(t, Mode::turn_multi, rng));
  const auto sel = objective::all_indices(12);
  const auto a = objective::actor_loss(policy, batch.trajectories, adv, sel, {}, model::Execution::serial);
  const auto b = objective::actor_loss(policy, batch.trajectories, adv, sel, {}, model::Execution::parallel);
  CHECK(a.breakdown.policy_loss == b.breakdown.policy_loss);
  model::zero_grads(policy.params());
  policy.backward(a.node);
  const auto ga = policy.params().grads;
  model::zero_grads(policy.params());
  policy.backward(b.node);
  CHECK(policy.params().grads == ga);
}
