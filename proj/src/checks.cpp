#include "turnrl/checks.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "turnrl/env.hpp"
#include "turnrl/estimator.hpp"
#include "turnrl/objective.hpp"
#include "turnrl/random.hpp"
#include "turnrl/rollout.hpp"
#include "turnrl/vocab.hpp"

namespace turnrl::checks {

namespace {

constexpr double kGammaLambdaGrid[] = {0.0, 0.5, 0.9, 0.99, 1.0};

SuiteResult finish(SuiteResult r) {
  r.passed = r.passed && r.max_error <= r.tolerance;
  return r;
}

model::Architecture tiny_architecture(bool value_head) {
  model::Architecture a = model::default_architecture(value_head);
  a.embed_dim = 4;
  a.window = 8;
  a.hidden = 6;
  return a;
}

void jitter(model::PolicyModel& m, Rng& rng, double scale) {
  for (double& v : m.params().values) v += rng.uniform(-scale, scale);
}

std::vector<rollout::Trajectory> small_batch(const model::PolicyModel& actor,
                                             const model::PolicyModel* critic, std::uint64_t seed,
                                             std::size_t n) {
  rollout::CollectOptions o;
  o.env.width = 3;
  o.env.height = 3;
  o.env.max_steps = 4;
  o.batch_size = n;
  o.seed = seed;
  o.max_turns = 4;
  o.max_response_tokens = 3;
  return rollout::collect(actor, critic, o).trajectories;
}

// Rescored log pi(token) for every response position, in stream order.
std::vector<double> rescore(const model::PolicyModel& policy, const rollout::Trajectory& t) {
  std::vector<double> out;
  for (const auto& turn : t.turns)
    for (std::size_t p = turn.response_begin; p < turn.response_end; ++p)
      out.push_back(policy.logprob(t.context(p), t.tokens[p]));
  return out;
}

std::vector<double> behavior(const rollout::Trajectory& t) {
  std::vector<double> out;
  for (const auto& turn : t.turns)
    out.insert(out.end(), turn.behavior_logprobs.begin(), turn.behavior_logprobs.end());
  return out;
}

// Every clipped-objective unit keeps its ratio away from the clip kinks so
// central differences stay on one branch.
bool away_from_kinks(const model::PolicyModel& policy, const rollout::Trajectory& t,
                     objective::Mode mode, bool geometric, double epsilon) {
  const auto fresh = rescore(policy, t);
  const auto old = behavior(t);
  auto ok = [&](double r) {
    return std::abs(r - (1.0 - epsilon)) > 1e-3 && std::abs(r - (1.0 + epsilon)) > 1e-3;
  };
  using objective::Mode;
  if (mode == Mode::token_single || mode == Mode::token_multi) {
    for (std::size_t k = 0; k < fresh.size(); ++k)
      if (!ok(objective::token_ratio(fresh[k], old[k]))) return false;
    return true;
  }
  if (mode == Mode::turn_single) {
    const auto r = objective::turn_ratio(fresh, old, geometric);
    return ok(r.ratio) && !r.clamped;
  }
  std::size_t at = 0;
  for (const auto& turn : t.turns) {
    const std::size_t len = turn.response_length();
    const auto r = objective::turn_ratio(std::span(fresh).subspan(at, len),
                                         std::span(old).subspan(at, len), geometric);
    if (!ok(r.ratio) || r.clamped) return false;
    at += len;
  }
  return true;
}

estimator::AdvantageSet random_advantages(const rollout::Trajectory& t, objective::Mode mode,
                                          Rng& rng) {
  estimator::AdvantageSet a;
  std::size_t n = 1;
  switch (mode) {
    case objective::Mode::token_single:
    case objective::Mode::token_multi:
      a.granularity = estimator::Granularity::per_token;
      n = t.total_response_tokens();
      break;
    case objective::Mode::turn_multi:
      a.granularity = estimator::Granularity::per_turn;
      n = t.turns.size();
      break;
    case objective::Mode::turn_single:
      a.granularity = estimator::Granularity::per_trajectory;
      break;
  }
  for (std::size_t i = 0; i < n; ++i) a.advantages.push_back(rng.uniform(-2.0, 2.0));
  return a;
}

estimator::AdvantageSet random_targets(const rollout::Trajectory& t, bool per_token, Rng& rng) {
  estimator::AdvantageSet a;
  a.granularity = per_token ? estimator::Granularity::per_token : estimator::Granularity::per_turn;
  const std::size_t n = per_token ? t.total_response_tokens() : t.turns.size();
  for (std::size_t i = 0; i < n; ++i) {
    a.advantages.push_back(0.0);
    a.returns.push_back(rng.uniform(-3.0, 3.0));
  }
  return a;
}

// Max relative error between analytic and central-difference gradients over
// the largest analytic components plus a random sample of the rest.
double compare_gradients(model::PolicyModel& m, const std::function<double()>& loss,
                         const model::LossNode& node, Rng& rng) {
  constexpr double h = 1e-5;
  model::zero_grads(m.params());
  m.backward(node);
  const std::vector<double> analytic = m.params().grads;
  std::vector<std::size_t> coords(analytic.size());
  for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
  std::partial_sort(coords.begin(), coords.begin() + 10, coords.end(),
                    [&](std::size_t a, std::size_t b) {
                      return std::abs(analytic[a]) > std::abs(analytic[b]);
                    });
  std::vector<std::size_t> picked(coords.begin(), coords.begin() + 10);
  for (int k = 0; k < 30; ++k) picked.push_back(rng.index(analytic.size()));

  double worst = 0.0;
  auto& values = m.params().values;
  for (std::size_t i : picked) {
    const double saved = values[i];
    values[i] = saved + h;
    const double up = loss();
    values[i] = saved - h;
    const double down = loss();
    values[i] = saved;
    const double numeric = (up - down) / (2.0 * h);
    const double scale = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-5});
    worst = std::max(worst, std::abs(analytic[i] - numeric) / scale);
  }
  return worst;
}

}  // namespace

std::string format(const SuiteResult& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%s %-12s max_error=%.3e tol=%.1e cases=%zu",
                r.passed ? "PASS" : "FAIL", r.name.c_str(), r.max_error, r.tolerance, r.cases);
  std::string out = buf;
  if (!r.detail.empty()) out += "  " + r.detail;
  return out;
}

std::vector<double> gae_direct_sum(std::span<const double> deltas, double gamma, double lambda) {
  std::vector<double> out(deltas.size(), 0.0);
  for (std::size_t h = 0; h < deltas.size(); ++h) {
    double weight = 1.0, sum = 0.0;
    for (std::size_t k = h; k < deltas.size(); ++k) {
      sum += weight * deltas[k];
      weight *= gamma * lambda;
    }
    out[h] = sum;
  }
  return out;
}

SuiteResult gae_suite(std::uint64_t seed, std::size_t trials, const GaeFn& gae) {
  const GaeFn fn = gae ? gae : GaeFn(estimator::gae);
  SuiteResult r{"gae", true, 0.0, 1e-10, trials, {}};
  Rng rng(derive_seed(seed, 0x6AE));
  for (std::size_t t = 0; t < trials; ++t) {
    const std::size_t H = 1 + rng.index(50);
    const double gamma = kGammaLambdaGrid[rng.index(5)];
    const double lambda = kGammaLambdaGrid[rng.index(5)];
    std::vector<double> deltas(H);
    for (double& d : deltas) d = rng.uniform(-5.0, 5.0);
    const auto a = fn(deltas, gamma, lambda);
    const auto b = gae_direct_sum(deltas, gamma, lambda);
    if (a.size() != b.size()) {
      r.passed = false;
      r.detail = "length mismatch";
      continue;
    }
    for (std::size_t h = 0; h < H; ++h) r.max_error = std::max(r.max_error, std::abs(a[h] - b[h]));
  }
  r.detail += (r.detail.empty() ? "" : "; ") + std::string("max |recursive - direct-sum|");
  return finish(r);
}

SuiteResult gradient_suite(std::uint64_t seed, std::size_t instances) {
  SuiteResult r{"gradients", true, 0.0, 1e-4, 0, {}};
  Rng rng(derive_seed(seed, 0x96AD));
  const objective::Mode modes[] = {objective::Mode::token_single, objective::Mode::token_multi,
                                   objective::Mode::turn_single, objective::Mode::turn_multi};
  for (objective::Mode mode : modes) {
    std::size_t done = 0;
    for (std::size_t attempt = 0; done < instances && attempt < 20 * instances; ++attempt) {
      model::PolicyModel actor(tiny_architecture(false), rng.next(), 0.3);
      jitter(actor, rng, 0.2);
      auto batch = small_batch(actor, nullptr, rng.next(), 2);
      for (auto& t : batch)
        for (auto& turn : t.turns)
          for (double& lp : turn.behavior_logprobs) lp += rng.uniform(-0.3, 0.3);

      objective::ActorLossOptions o;
      o.mode = mode;
      o.epsilon = 0.2;
      o.geometric = rng.index(2) == 1;
      o.normalizer = rng.index(2) ? objective::TurnNormalizer::per_turn
                                  : objective::TurnNormalizer::total_tokens;
      std::optional<model::PolicyModel> reference;
      if (attempt % 2 == 1) {
        reference.emplace(actor);
        jitter(*reference, rng, 0.1);
        o.reference = &*reference;
        o.kl_coefficient = 0.05;
      }
      bool usable = true;
      for (const auto& t : batch) usable = usable && away_from_kinks(actor, t, mode, o.geometric, o.epsilon);
      if (!usable) continue;

      std::vector<estimator::AdvantageSet> adv;
      for (const auto& t : batch) adv.push_back(random_advantages(t, mode, rng));
      const auto sel = objective::all_indices(batch.size());
      auto loss = [&] { return objective::actor_loss(actor, batch, adv, sel, o).node.value; };
      const auto node = objective::actor_loss(actor, batch, adv, sel, o).node;
      r.max_error = std::max(r.max_error, compare_gradients(actor, loss, node, rng));
      ++done;
    }
    if (done < instances) {
      r.passed = false;
      r.detail = "could not draw enough kink-free instances for " +
                 std::string(objective::to_string(mode));
    }
    r.cases += done;
  }
  for (std::size_t i = 0; i < instances; ++i) {
    model::PolicyModel actor(tiny_architecture(false), rng.next(), 0.3);
    model::PolicyModel critic(tiny_architecture(true), rng.next(), 0.3);
    jitter(critic, rng, 0.3);
    const auto batch = small_batch(actor, &critic, rng.next(), 2);
    std::vector<estimator::AdvantageSet> targets;
    for (const auto& t : batch) targets.push_back(random_targets(t, i % 2 == 0, rng));
    const auto sel = objective::all_indices(batch.size());
    auto loss = [&] { return objective::critic_loss(critic, batch, targets, sel).node.value; };
    const auto node = objective::critic_loss(critic, batch, targets, sel).node;
    r.max_error = std::max(r.max_error, compare_gradients(critic, loss, node, rng));
    ++r.cases;
  }
  return finish(r);
}

SuiteResult ratio_suite(std::uint64_t seed, std::size_t trials) {
  SuiteResult r{"ratios", true, 0.0, 1e-10, 0, {}};
  Rng rng(derive_seed(seed, 0x2A7));
  for (std::size_t t = 0; t < trials; ++t) {
    const std::size_t n = 1 + rng.index(8);
    std::vector<double> fresh(n), old(n);
    for (std::size_t k = 0; k < n; ++k) {
      old[k] = -rng.uniform(0.0, 4.0);
      fresh[k] = old[k] + rng.uniform(-0.5, 0.5);
    }
    double product = 1.0, mean_diff = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      product *= objective::token_ratio(fresh[k], old[k]);
      mean_diff += fresh[k] - old[k];
    }
    mean_diff /= static_cast<double>(n);
    const double a = objective::turn_ratio(fresh, old, false).ratio;
    const double g = objective::turn_ratio(fresh, old, true).ratio;
    r.max_error = std::max({r.max_error, std::abs(a - product) / product,
                            std::abs(g - std::exp(mean_diff))});
    ++r.cases;
  }

  // First-epoch identity: nothing has moved since collection.
  model::PolicyModel actor(tiny_architecture(false), derive_seed(seed, 0xF1), 0.3);
  model::PolicyModel critic(tiny_architecture(true), derive_seed(seed, 0xF2), 0.3);
  const auto batch = small_batch(actor, &critic, derive_seed(seed, 0xF3), 8);
  double identity_error = 0.0;
  for (const auto& t : batch) {
    const auto fresh = rescore(actor, t);
    const auto old = behavior(t);
    for (std::size_t k = 0; k < fresh.size(); ++k)
      identity_error = std::max(identity_error, std::abs(objective::token_ratio(fresh[k], old[k]) - 1.0));
  }
  double clip = 0.0;
  const objective::Mode modes[] = {objective::Mode::token_single, objective::Mode::token_multi,
                                   objective::Mode::turn_single, objective::Mode::turn_multi};
  for (objective::Mode mode : modes) {
    std::vector<estimator::AdvantageSet> adv;
    for (const auto& t : batch) adv.push_back(random_advantages(t, mode, rng));
    objective::ActorLossOptions o;
    o.mode = mode;
    clip = std::max(clip, objective::actor_loss(actor, batch, adv, objective::all_indices(batch.size()), o)
                              .breakdown.clip_fraction);
  }
  if (identity_error > 1e-12 || clip != 0.0) r.passed = false;
  char buf[128];
  std::snprintf(buf, sizeof buf, "fresh-batch max|r-1|=%.2e clip_fraction=%g", identity_error, clip);
  r.detail = buf;
  return finish(r);
}

SuiteResult grpo_suite(std::uint64_t seed, std::size_t groups) {
  SuiteResult r{"grpo", true, 0.0, 1e-9, groups, {}};
  Rng rng(derive_seed(seed, 0x6290));
  double mean_error = 0.0;
  for (std::size_t g = 0; g < groups; ++g) {
    const std::size_t G = 2 + rng.index(15);
    std::vector<double> rewards(G);
    const bool discrete = rng.index(3) == 0;
    for (double& x : rewards) x = discrete ? static_cast<double>(rng.index(2)) : rng.uniform(-10, 10);
    const double shift = rng.uniform(-5.0, 5.0);
    std::vector<double> shifted = rewards;
    for (double& x : shifted) x += shift;

    const auto a = estimator::grpo_advantage(rewards, true, 0.0);
    const auto b = estimator::grpo_advantage(shifted, true, 0.0);
    const auto c = estimator::grpo_advantage(rewards, false, 0.0);
    const auto d = estimator::grpo_advantage(shifted, false, 0.0);

    double mean = 0.0, in_mean = 0.0;
    for (double x : rewards) in_mean += x;
    in_mean /= static_cast<double>(G);
    double in_var = 0.0;
    for (double x : rewards) in_var += (x - in_mean) * (x - in_mean);
    for (double x : a) mean += x;
    mean /= static_cast<double>(G);
    double var = 0.0;
    for (double x : a) var += (x - mean) * (x - mean);
    const double sd = std::sqrt(var / static_cast<double>(G));
    mean_error = std::max(mean_error, std::abs(mean));
    if (in_var > 0.0) r.max_error = std::max(r.max_error, std::abs(sd - 1.0));

    double c_mean = 0.0;
    for (std::size_t i = 0; i < G; ++i) {
      r.max_error = std::max({r.max_error, std::abs(a[i] - b[i]), std::abs(c[i] - d[i]),
                              std::abs(c[i] - (rewards[i] - in_mean))});
      c_mean += c[i];
    }
    mean_error = std::max(mean_error, std::abs(c_mean / static_cast<double>(G)));
  }
  if (mean_error > 1e-12) r.passed = false;
  char buf[96];
  std::snprintf(buf, sizeof buf, "max|mean|=%.2e", mean_error);
  r.detail = buf;
  return finish(r);
}

SuiteResult env_suite(std::uint64_t seed, std::size_t instances) {
  SuiteResult r{"env", true, 0.0, 0.0, instances, {}};
  std::size_t unsolvable = 0, unmatched = 0;
  for (std::size_t i = 0; i < instances; ++i) {
    env::EnvSpec spec;
    spec.width = 3 + static_cast<int>(i % 4);
    spec.height = 3 + static_cast<int>((i / 4) % 4);
    spec.boxes = spec.width * spec.height >= 16 ? 1 + static_cast<int>(i % 2) : 1;
    const auto s = env::generate_sokoban(spec, derive_seed(seed, 0x50C0, i));
    if (!env::solve(s)) ++unsolvable;
    spec.kind = env::EnvKind::shop;
    if (!env::has_matching_item(env::generate_shop(spec, derive_seed(seed, 0x5409, i)))) ++unmatched;
  }
  r.max_error = static_cast<double>(unsolvable + unmatched);
  r.detail = std::to_string(unsolvable) + " unsolvable sokoban, " + std::to_string(unmatched) +
             " shop goals without a match";
  return finish(r);
}

SuiteResult trajectory_suite(const std::string& path, const model::PolicyModel* policy) {
  SuiteResult r{"trajectories", true, 0.0, policy ? 1e-12 : 0.0, 0, {}};
  std::ifstream in(path);
  if (!in) {
    r.passed = false;
    r.detail = "cannot read " + path;
    return r;
  }
  std::vector<rollout::Trajectory> trajectories;
  try {
    trajectories = rollout::read_dump(in);
  } catch (const std::exception& e) {
    r.passed = false;
    r.detail = e.what();
    return r;
  }
  r.cases = trajectories.size();
  std::size_t problems = 0;
  for (std::size_t i = 0; i < trajectories.size(); ++i) {
    const auto issues = rollout::validate(trajectories[i]);
    problems += issues.size();
    if (!issues.empty() && r.detail.empty())
      r.detail = "record " + std::to_string(i) + ": " + issues.front();
    if (policy && issues.empty()) {
      const auto fresh = rescore(*policy, trajectories[i]);
      const auto old = behavior(trajectories[i]);
      for (std::size_t k = 0; k < fresh.size(); ++k)
        r.max_error = std::max(r.max_error, std::abs(fresh[k] - old[k]));
    }
  }
  if (problems) r.passed = false;
  if (r.detail.empty()) r.detail = policy ? "re-scored against checkpoint" : "structure only";
  return finish(r);
}

std::vector<SuiteResult> run_all(std::uint64_t seed) {
  return {gae_suite(seed), gradient_suite(seed), ratio_suite(seed), grpo_suite(seed),
          env_suite(seed)};
}

}  // namespace turnrl::checks
