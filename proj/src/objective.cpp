#include "turnrl/objective.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "turnrl/parallel.hpp"

namespace turnrl::objective {

using estimator::AdvantageSet;
using estimator::Granularity;
using rollout::Trajectory;

Mode parse_mode(std::string_view name) {
  if (name == "token_single") return Mode::token_single;
  if (name == "token_multi") return Mode::token_multi;
  if (name == "turn_single") return Mode::turn_single;
  if (name == "turn_multi") return Mode::turn_multi;
  throw std::invalid_argument("unknown objective mode '" + std::string(name) + "'");
}

std::string_view to_string(Mode mode) {
  switch (mode) {
    case Mode::token_single: return "token_single";
    case Mode::token_multi: return "token_multi";
    case Mode::turn_single: return "turn_single";
    case Mode::turn_multi: return "turn_multi";
  }
  return "?";
}

TurnNormalizer parse_normalizer(std::string_view name) {
  if (name == "total_tokens") return TurnNormalizer::total_tokens;
  if (name == "per_turn") return TurnNormalizer::per_turn;
  throw std::invalid_argument("unknown turn normalizer '" + std::string(name) + "'");
}

std::string_view to_string(TurnNormalizer n) {
  return n == TurnNormalizer::total_tokens ? "total_tokens" : "per_turn";
}

ClipResult clip_op(double ratio, double advantage, double epsilon) {
  const double clipped_ratio = std::clamp(ratio, 1.0 - epsilon, 1.0 + epsilon);
  const double unclipped = ratio * advantage;
  const double clipped = clipped_ratio * advantage;
  if (clipped < unclipped) return {clipped, true, 0.0};
  return {unclipped, false, advantage};
}

double token_ratio(double new_logprob, double behavior_logprob) {
  return std::exp(new_logprob - behavior_logprob);
}

TurnRatio turn_ratio(std::span<const double> new_lp, std::span<const double> old_lp,
                     bool geometric, double clamp) {
  if (new_lp.size() != old_lp.size() || new_lp.empty())
    throw std::invalid_argument("turn_ratio: need matching, non-empty logprob spans");
  double s = 0.0;
  for (std::size_t h = 0; h < new_lp.size(); ++h) s += new_lp[h] - old_lp[h];
  if (geometric) s /= static_cast<double>(new_lp.size());
  TurnRatio out;
  out.clamped = s > clamp || s < -clamp;
  out.log_ratio = std::clamp(s, -clamp, clamp);
  out.ratio = std::exp(out.log_ratio);
  return out;
}

namespace {

bool is_token_mode(Mode m) { return m == Mode::token_single || m == Mode::token_multi; }

void check_granularity(const Trajectory& t, const AdvantageSet& a, Mode mode) {
  const std::size_t expect = [&]() -> std::size_t {
    switch (a.granularity) {
      case Granularity::per_trajectory: return 1;
      case Granularity::per_token:
        if (!is_token_mode(mode))
          throw std::invalid_argument("per-token advantages do not fit a turn-level objective");
        return t.total_response_tokens();
      case Granularity::per_turn:
        if (is_token_mode(mode))
          throw std::invalid_argument("per-turn advantages do not fit a token-level objective");
        if (mode == Mode::turn_single && t.turns.size() != 1)
          throw std::invalid_argument("turn_single with per-turn advantages needs one turn");
        return t.turns.size();
    }
    return 0;
  }();
  if (a.advantages.size() != expect)
    throw std::invalid_argument("advantage count does not match its granularity");
}

std::vector<double> gather(std::span<const double> stream, std::size_t begin, std::size_t end) {
  return {stream.begin() + static_cast<std::ptrdiff_t>(begin),
          stream.begin() + static_cast<std::ptrdiff_t>(end)};
}

}  // namespace

TrajectoryTerms trajectory_objective(const Trajectory& t, std::span<const double> lp,
                                     const AdvantageSet& adv, const ActorLossOptions& o) {
  if (lp.size() != t.tokens.size())
    throw std::invalid_argument("trajectory_objective: logprobs must cover the full stream");
  const std::size_t total = t.total_response_tokens();
  if (total == 0) throw std::invalid_argument("trajectory_objective: no response tokens");
  check_granularity(t, adv, o.mode);

  TrajectoryTerms out;
  out.adjoints.assign(t.tokens.size(), 0.0);
  const double inv_total = 1.0 / static_cast<double>(total);

  if (is_token_mode(o.mode)) {
    std::size_t k = 0;
    for (std::size_t n = 0; n < t.turns.size(); ++n) {
      const auto& turn = t.turns[n];
      for (std::size_t h = 0; h < turn.response_length(); ++h, ++k) {
        const std::size_t p = turn.response_begin + h;
        const double r = token_ratio(lp[p], turn.behavior_logprobs[h]);
        const ClipResult c = clip_op(r, adv.at_token(k, n), o.epsilon);
        out.objective += inv_total * c.value;
        out.adjoints[p] = inv_total * c.d_ratio * r;
        out.units += 1;
        out.clipped += c.clipped;
      }
    }
    return out;
  }

  if (o.mode == Mode::turn_multi) {
    for (std::size_t n = 0; n < t.turns.size(); ++n) {
      const auto& turn = t.turns[n];
      const std::size_t len = turn.response_length();
      const auto new_lp = gather(lp, turn.response_begin, turn.response_end);
      const TurnRatio tr = turn_ratio(new_lp, turn.behavior_logprobs, o.geometric);
      const double weight = o.normalizer == TurnNormalizer::total_tokens
                                ? inv_total
                                : 1.0 / static_cast<double>(len);
      const ClipResult c = clip_op(tr.ratio, adv.at_turn(n), o.epsilon);
      out.objective += weight * c.value;
      double d = tr.clamped ? 0.0 : weight * c.d_ratio * tr.ratio;
      if (o.geometric) d /= static_cast<double>(len);
      for (std::size_t p = turn.response_begin; p < turn.response_end; ++p) out.adjoints[p] = d;
      out.units += 1;
      out.clipped += c.clipped;
      out.clamps += tr.clamped;
    }
    return out;
  }

  // turn_single: the whole episode's response is one action.
  std::vector<double> new_lp, old_lp;
  new_lp.reserve(total);
  old_lp.reserve(total);
  for (const auto& turn : t.turns) {
    for (std::size_t p = turn.response_begin; p < turn.response_end; ++p) new_lp.push_back(lp[p]);
    old_lp.insert(old_lp.end(), turn.behavior_logprobs.begin(), turn.behavior_logprobs.end());
  }
  const TurnRatio tr = turn_ratio(new_lp, old_lp, o.geometric);
  const ClipResult c = clip_op(tr.ratio, adv.advantages[0], o.epsilon);
  out.objective = inv_total * c.value;
  double d = tr.clamped ? 0.0 : inv_total * c.d_ratio * tr.ratio;
  if (o.geometric) d *= inv_total;
  for (const auto& turn : t.turns)
    for (std::size_t p = turn.response_begin; p < turn.response_end; ++p) out.adjoints[p] = d;
  out.units = 1;
  out.clipped = c.clipped;
  out.clamps = tr.clamped;
  return out;
}

std::vector<std::size_t> all_indices(std::size_t n) {
  std::vector<std::size_t> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = i;
  return out;
}

namespace {

struct Partial {
  model::LossNode node;
  double objective = 0.0;
  double kl_sum = 0.0;
  std::size_t units = 0, clipped = 0, clamps = 0;
};

void check_selection(std::span<const Trajectory> batch, std::span<const std::size_t> selection) {
  if (selection.empty()) throw std::invalid_argument("loss over an empty batch");
  for (std::size_t i : selection)
    if (i >= batch.size()) throw std::out_of_range("selection index past the batch");
}

}  // namespace

Loss actor_loss(const model::PolicyModel& policy, std::span<const Trajectory> batch,
                std::span<const AdvantageSet> advantages, std::span<const std::size_t> selection,
                const ActorLossOptions& o, model::Execution exec) {
  check_selection(batch, selection);
  if (advantages.size() != batch.size())
    throw std::invalid_argument("actor_loss: one advantage set per trajectory required");
  const double inv_batch = 1.0 / static_cast<double>(selection.size());
  const bool with_kl = o.reference != nullptr && o.kl_coefficient != 0.0;
  std::size_t kl_tokens = 0;
  for (std::size_t i : selection) kl_tokens += batch[i].total_response_tokens();
  const double kl_weight = with_kl ? o.kl_coefficient / static_cast<double>(kl_tokens) : 0.0;

  std::vector<Partial> parts(selection.size());
  parallel_for(selection.size(), exec == model::Execution::parallel, [&](std::size_t s) {
    const Trajectory& t = batch[selection[s]];
    Partial& part = parts[s];
    std::vector<double> stream_lp(t.tokens.size(), 0.0);
    std::vector<std::size_t> entry_at(t.tokens.size(), 0);
    for (const auto& turn : t.turns) {
      for (std::size_t p = turn.response_begin; p < turn.response_end; ++p) {
        const TokenId token = t.tokens[p];
        model::Activation act = policy.forward(t.context(p));
        stream_lp[p] = act.log_probs[token];
        entry_at[p] = part.node.record(std::move(act), token);
        if (with_kl) part.kl_sum += stream_lp[p] - o.reference->logprob(t.context(p), token);
      }
    }
    const TrajectoryTerms terms = trajectory_objective(t, stream_lp, advantages[selection[s]], o);
    for (const auto& turn : t.turns)
      for (std::size_t p = turn.response_begin; p < turn.response_end; ++p)
        part.node.seed_logprob(entry_at[p], -inv_batch * terms.adjoints[p] + kl_weight);
    part.objective = terms.objective;
    part.units = terms.units;
    part.clipped = terms.clipped;
    part.clamps = terms.clamps;
  });

  Loss loss;
  double objective = 0.0, kl_sum = 0.0;
  for (auto& part : parts) {
    objective += part.objective;
    kl_sum += part.kl_sum;
    loss.breakdown.unit_count += part.units;
    loss.breakdown.clipped_units += part.clipped;
    loss.breakdown.clamp_events += part.clamps;
    loss.node.append(std::move(part.node));
  }
  loss.breakdown.policy_loss = -inv_batch * objective;
  if (with_kl) {
    loss.breakdown.kl_value = kl_sum / static_cast<double>(kl_tokens);
    loss.breakdown.kl_penalty = o.kl_coefficient * loss.breakdown.kl_value;
  }
  loss.breakdown.clip_fraction =
      loss.breakdown.unit_count == 0
          ? 0.0
          : static_cast<double>(loss.breakdown.clipped_units) /
                static_cast<double>(loss.breakdown.unit_count);
  loss.node.value = loss.breakdown.policy_loss + loss.breakdown.kl_penalty;
  return loss;
}

Loss critic_loss(const model::PolicyModel& critic, std::span<const Trajectory> batch,
                 std::span<const AdvantageSet> targets, std::span<const std::size_t> selection,
                 model::Execution exec) {
  check_selection(batch, selection);
  if (!critic.arch().value_head) throw std::logic_error("critic_loss: model has no value head");
  if (targets.size() != batch.size())
    throw std::invalid_argument("critic_loss: one target set per trajectory required");
  const double inv_batch = 1.0 / static_cast<double>(selection.size());

  std::vector<Partial> parts(selection.size());
  parallel_for(selection.size(), exec == model::Execution::parallel, [&](std::size_t s) {
    const Trajectory& t = batch[selection[s]];
    const AdvantageSet& target = targets[selection[s]];
    std::vector<std::size_t> positions;
    if (target.granularity == Granularity::per_turn) {
      for (const auto& turn : t.turns) positions.push_back(turn.response_begin);
    } else if (target.granularity == Granularity::per_token) {
      for (const auto& turn : t.turns)
        for (std::size_t p = turn.response_begin; p < turn.response_end; ++p) positions.push_back(p);
    } else {
      throw std::invalid_argument("critic_loss: targets must be per-turn or per-token");
    }
    if (target.returns.size() != positions.size())
      throw std::invalid_argument("critic_loss: missing return targets");
    const double w = inv_batch / static_cast<double>(positions.size());
    Partial& part = parts[s];
    for (std::size_t k = 0; k < positions.size(); ++k) {
      model::Activation act = critic.forward(t.context(positions[k]), false);
      const double err = act.value - target.returns[k];
      part.objective += w * 0.5 * err * err;
      const std::size_t e = part.node.record(std::move(act));
      part.node.seed_value(e, w * err);
    }
  });

  Loss loss;
  double total = 0.0;
  for (auto& part : parts) {
    total += part.objective;
    loss.node.append(std::move(part.node));
  }
  loss.breakdown.value_loss = total;
  loss.node.value = total;
  return loss;
}

Loss kl_penalty(const model::PolicyModel& policy, const model::PolicyModel& reference,
                std::span<const Trajectory> batch, std::span<const std::size_t> selection,
                double coefficient, model::Execution exec) {
  check_selection(batch, selection);
  if (coefficient < 0.0) throw std::invalid_argument("kl_penalty: negative coefficient");
  Loss loss;
  if (coefficient == 0.0) return loss;
  std::size_t tokens = 0;
  for (std::size_t i : selection) tokens += batch[i].total_response_tokens();
  const double w = coefficient / static_cast<double>(tokens);

  std::vector<Partial> parts(selection.size());
  parallel_for(selection.size(), exec == model::Execution::parallel, [&](std::size_t s) {
    const Trajectory& t = batch[selection[s]];
    for (const auto& turn : t.turns) {
      for (std::size_t p = turn.response_begin; p < turn.response_end; ++p) {
        const TokenId token = t.tokens[p];
        model::Activation act = policy.forward(t.context(p));
        parts[s].kl_sum += act.log_probs[token] - reference.logprob(t.context(p), token);
        const std::size_t e = parts[s].node.record(std::move(act), token);
        parts[s].node.seed_logprob(e, w);
      }
    }
  });
  double kl_sum = 0.0;
  for (auto& part : parts) {
    kl_sum += part.kl_sum;
    loss.node.append(std::move(part.node));
  }
  loss.breakdown.kl_value = kl_sum / static_cast<double>(tokens);
  loss.breakdown.kl_penalty = coefficient * loss.breakdown.kl_value;
  loss.node.value = loss.breakdown.kl_penalty;
  return loss;
}

}  // namespace turnrl::objective
