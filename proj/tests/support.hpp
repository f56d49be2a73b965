#pragma once

// Generators and independent oracles shared by the test binaries. Nothing in
// here calls the code under test to produce an expected value.

#include <cmath>
#include <deque>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "turnrl/env.hpp"
#include "turnrl/model.hpp"
#include "turnrl/random.hpp"
#include "turnrl/rollout.hpp"
#include "turnrl/vocab.hpp"

namespace testing {

using namespace turnrl;

inline std::vector<TokenId> toks(std::string_view text) {
  return Vocabulary::get().tokenize(text);
}

inline model::Architecture tiny_arch(bool value_head = false) {
  model::Architecture a = model::default_architecture(value_head);
  a.embed_dim = 4;
  a.window = 8;
  a.hidden = 5;
  return a;
}

// Nudges every parameter so zero-initialized heads carry signal.
inline void jitter(model::PolicyModel& m, Rng& rng, double scale) {
  for (double& v : m.params().values) v += rng.uniform(-scale, scale);
}

// Structurally valid trajectory with random tokens, logprobs, values and
// rewards; no model or environment involved.
inline rollout::Trajectory synthetic_trajectory(Rng& rng, std::size_t max_turns = 4,
                                                std::size_t max_response = 3,
                                                bool with_values = true) {
  const std::size_t vocab = Vocabulary::get().size();
  rollout::Trajectory t;
  t.question_id = rng.index(100);
  t.env_seed = rng.next();
  t.has_values = with_values;
  const std::size_t turns = 1 + rng.index(max_turns);
  for (std::size_t n = 0; n < turns; ++n) {
    rollout::Turn turn;
    turn.query_begin = t.tokens.size();
    const std::size_t q = 1 + rng.index(5);
    for (std::size_t i = 0; i < q; ++i) t.tokens.push_back(static_cast<TokenId>(4 + rng.index(vocab - 4)));
    turn.response_begin = t.tokens.size();
    const std::size_t r = 1 + rng.index(max_response);
    for (std::size_t i = 0; i < r; ++i) {
      t.tokens.push_back(static_cast<TokenId>(rng.index(vocab)));
      turn.behavior_logprobs.push_back(-rng.uniform(0.05, 4.0));
      if (with_values) turn.token_values.push_back(rng.uniform(-2.0, 2.0));
    }
    turn.response_end = t.tokens.size();
    turn.turn_value = with_values ? turn.token_values.front() : 0.0;
    turn.turn_reward = rng.uniform(-1.0, 1.0);
    t.turns.push_back(std::move(turn));
  }
  return t;
}

// --- oracles --------------------------------------------------------------

// A_h = sum_{k >= h} (gamma lambda)^{k-h} delta_k by explicit powers.
inline std::vector<double> direct_gae(const std::vector<double>& deltas, double gamma,
                                      double lambda) {
  std::vector<double> out(deltas.size());
  for (std::size_t h = 0; h < deltas.size(); ++h) {
    double s = 0.0;
    for (std::size_t k = h; k < deltas.size(); ++k)
      s += std::pow(gamma * lambda, static_cast<double>(k - h)) * deltas[k];
    out[h] = s;
  }
  return out;
}

// R_n = sum_{m >= n} gamma^{m-n} r_m by double loop.
inline std::vector<double> discounted_returns(const std::vector<double>& rewards, double gamma) {
  std::vector<double> out(rewards.size());
  for (std::size_t n = 0; n < rewards.size(); ++n) {
    double s = 0.0;
    for (std::size_t m = n; m < rewards.size(); ++m)
      s += std::pow(gamma, static_cast<double>(m - n)) * rewards[m];
    out[n] = s;
  }
  return out;
}

// Reference Sokoban mechanics written from the rules, independent of env.cpp.
struct Board {
  int w = 0, h = 0;
  std::vector<int> walls, targets, boxes;  // 0/1 per cell
  int player = 0;

  static Board from(const env::SokobanState& s) {
    Board b;
    b.w = s.width;
    b.h = s.height;
    b.walls.assign(s.walls.begin(), s.walls.end());
    b.targets.assign(s.targets.begin(), s.targets.end());
    b.boxes.assign(s.boxes.begin(), s.boxes.end());
    b.player = s.player;
    return b;
  }

  // -1 when the step leaves the grid.
  int shift(int c, int dir) const {
    int x = c % w, y = c / w;
    if (dir == 0) --y;
    if (dir == 1) ++y;
    if (dir == 2) --x;
    if (dir == 3) ++x;
    if (x < 0 || y < 0 || x >= w || y >= h) return -1;
    return y * w + x;
  }
  bool free(int c) const { return c >= 0 && !walls[c]; }

  void move(int dir) {
    const int n = shift(player, dir);
    if (!free(n)) return;
    if (boxes[n]) {
      const int b = shift(n, dir);
      if (!free(b) || boxes[b]) return;
      boxes[n] = 0;
      boxes[b] = 1;
    }
    player = n;
  }
  bool solved() const {
    for (std::size_t i = 0; i < boxes.size(); ++i)
      if (boxes[i] && !targets[i]) return false;
    return true;
  }
  int on_target() const {
    int n = 0;
    for (std::size_t i = 0; i < boxes.size(); ++i) n += boxes[i] && targets[i];
    return n;
  }
  int box_count() const {
    int n = 0;
    for (int b : boxes) n += b;
    return n;
  }
  std::string key() const {
    std::string k = std::to_string(player) + ":";
    for (int b : boxes) k.push_back(static_cast<char>('0' + b));
    return k;
  }
};

// Shortest solution length by BFS over (player, boxes), or nullopt.
inline std::optional<int> bfs_length(const env::SokobanState& s) {
  const Board start = Board::from(s);
  if (start.solved()) return 0;
  std::map<std::string, int> dist{{start.key(), 0}};
  std::deque<Board> frontier{start};
  while (!frontier.empty()) {
    const Board b = frontier.front();
    frontier.pop_front();
    const int d = dist[b.key()];
    for (int dir = 0; dir < 4; ++dir) {
      Board n = b;
      n.move(dir);
      if (dist.count(n.key())) continue;
      if (n.solved()) return d + 1;
      dist[n.key()] = d + 1;
      frontier.push_back(n);
    }
  }
  return std::nullopt;
}

}  // namespace testing
