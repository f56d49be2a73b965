#include "doctest.h"
#include "support.hpp"

using namespace turnrl;
using testing::toks;

namespace {

// Hand-built 3x3 board, '#' wall, 'O' target, 'X' box, 'P' player.
env::SokobanState board(const std::vector<std::string>& rows, int max_steps = 10) {
  env::SokobanState s;
  s.height = static_cast<int>(rows.size());
  s.width = static_cast<int>(rows[0].size());
  const std::size_t n = static_cast<std::size_t>(s.width * s.height);
  s.walls.assign(n, 0);
  s.targets.assign(n, 0);
  s.boxes.assign(n, 0);
  s.max_steps = max_steps;
  for (int y = 0; y < s.height; ++y)
    for (int x = 0; x < s.width; ++x) {
      const char c = rows[y][x];
      const int i = s.cell(x, y);
      if (c == '#') s.walls[i] = 1;
      if (c == 'O' || c == '*' || c == '+') s.targets[i] = 1;
      if (c == 'X' || c == '*') s.boxes[i] = 1;
      if (c == 'P' || c == '+') s.player = i;
    }
  return s;
}

int count(const std::vector<TokenId>& v, std::string_view word) {
  const TokenId id = Vocabulary::get().id(word);
  return static_cast<int>(std::count(v.begin(), v.end(), id));
}

}  // namespace

TEST_CASE("vocabulary round trip and limits") {
  const auto& v = Vocabulary::get();
  CHECK(v.size() <= 128);
  CHECK(v.word(tok::kEnd) == "<eos>");
  const std::string text = "<bos> budget 1 0 grid _ X O / P _ _ <act> up <eos>";
  CHECK(v.detokenize(v.tokenize(text)) == text);
  CHECK_THROWS_AS(v.tokenize("up sideways"), std::out_of_range);
  CHECK(v.number(10) == toks("1 0"));
}

TEST_CASE("reset is deterministic in the seed") {
  env::EnvSpec spec;
  const auto a = env::reset(spec, 7);
  const auto b = env::reset(spec, 7);
  CHECK(a.first == b.first);
  CHECK(a.second == b.second);
  spec.kind = env::EnvKind::shop;
  CHECK(env::reset(spec, 7).first == env::reset(spec, 7).first);
}

TEST_CASE("unknown env kind is rejected") {
  CHECK_THROWS_AS(env::parse_env_kind("maze"), std::invalid_argument);
}

TEST_CASE("generated sokoban instances are BFS-solvable and unsolved") {
  Rng rng(11);
  for (int i = 0; i < 300; ++i) {
    env::EnvSpec spec;
    spec.width = 3 + static_cast<int>(rng.index(4));
    spec.height = 3 + static_cast<int>(rng.index(4));
    spec.boxes = spec.width * spec.height >= 16 ? 1 + static_cast<int>(rng.index(2)) : 1;
    const auto s = env::generate_sokoban(spec, rng.next());
    const auto len = testing::bfs_length(s);
    REQUIRE(len.has_value());
    CHECK(*len >= 1);
    CHECK(s.box_count() == spec.boxes);
    int targets = 0;
    for (std::size_t c = 0; c < s.walls.size(); ++c) {
      targets += s.targets[c];
      CHECK_FALSE((s.walls[c] && s.boxes[c]));
    }
    CHECK(targets == spec.boxes);
    CHECK_FALSE(s.walls[s.player]);
    const auto path = env::solve(s);
    REQUIRE(path.has_value());
    CHECK(static_cast<int>(path->size()) == *len);
  }
}

TEST_CASE("push into wall leaves the state alone except the step counter") {
  env::EnvState state = board({"P__", "_XO", "___"});
  const auto before = std::get<env::SokobanState>(state);
  const auto r = env::step(state, toks("up"));
  const auto& after = std::get<env::SokobanState>(state);
  CHECK(r.reward == env::kStepPenalty);
  CHECK_FALSE(r.terminal);
  CHECK(r.query.has_value());
  CHECK(after.player == before.player);
  CHECK(after.boxes == before.boxes);
  CHECK(after.steps_taken == before.steps_taken + 1);
}

TEST_CASE("3x3 push onto the target solves the puzzle") {
  env::EnvState state = board({"___", "PXO", "___"});
  const auto r = env::step(state, toks("right <eos>"));
  CHECK(r.terminal);
  CHECK_FALSE(r.query.has_value());
  CHECK(r.reward == env::kStepPenalty + env::kOnTargetBonus + env::kSolveBonus);
  CHECK(env::is_success(state));
}

TEST_CASE("pushing a box off its target costs the bonus back") {
  env::EnvState state = board({"____", "P*O_", "_X__"});
  auto& s = std::get<env::SokobanState>(state);
  s.targets[s.cell(2, 1)] = 0;
  const auto r = env::step(state, toks("right"));
  CHECK(r.reward == env::kStepPenalty - env::kOnTargetBonus);
}

TEST_CASE("unparseable response is an invalid no-op") {
  env::EnvState state = board({"P__", "_XO", "___"});
  const auto before = std::get<env::SokobanState>(state);
  const auto r = env::step(state, toks("grid grid <eos> up"));
  CHECK(r.reward == env::kInvalidPenalty);
  CHECK(std::get<env::SokobanState>(state).player == before.player);
  CHECK(std::get<env::SokobanState>(state).boxes == before.boxes);
}

TEST_CASE("step on a finished episode throws") {
  env::EnvState state = board({"___", "PXO", "___"});
  env::step(state, toks("right"));
  CHECK_THROWS_AS(env::step(state, toks("left")), std::logic_error);
}

TEST_CASE("parse_action grammar") {
  using env::parse_action;
  CHECK(std::get<env::Move>(parse_action(toks("up"))).dir == env::Direction::up);
  CHECK(std::get<env::Move>(parse_action(toks("the box grid left <eos>"))).dir ==
        env::Direction::left);
  CHECK(std::holds_alternative<env::Invalid>(parse_action({})));
  CHECK(std::holds_alternative<env::Invalid>(parse_action(toks("<eos> up"))));
  CHECK(std::get<env::Click>(parse_action(toks("click 2"))).slot == 2);
  CHECK(std::holds_alternative<env::Invalid>(parse_action(toks("click"))));
  CHECK(std::holds_alternative<env::Buy>(parse_action(toks("buy"))));
  CHECK(std::holds_alternative<env::Invalid>(
      parse_action(toks("buy"), env::EnvKind::sokoban)));
  CHECK(std::get<env::Move>(parse_action(toks("buy down"), env::EnvKind::sokoban)).dir ==
        env::Direction::down);
}

TEST_CASE("sokoban render counts box symbols") {
  Rng rng(3);
  for (int i = 0; i < 50; ++i) {
    env::EnvSpec spec;
    spec.width = 5;
    spec.height = 5;
    spec.boxes = 2;
    env::EnvState state = env::generate_sokoban(spec, rng.next());
    const auto& s = std::get<env::SokobanState>(state);
    const auto q = env::render_query(state);
    CHECK(count(q, "X") + count(q, "√") == s.box_count());
    CHECK(count(q, "√") == s.boxes_on_target());
    CHECK(count(q, "P") + count(q, "S") == 1);
    CHECK(q.front() == tok::kBegin);
    CHECK(q.back() == tok::kAct);
    CHECK(env::render_query(state) == q);
  }
}

TEST_CASE("box count is conserved and boxes stay out of walls over random play") {
  Rng rng(5);
  const std::vector<std::string> words = {"up", "down", "left", "right", "grid", "click 1"};
  env::EnvSpec spec;
  spec.width = 5;
  spec.height = 5;
  spec.boxes = 2;
  int steps = 0;
  while (steps < 10000) {
    env::EnvState state = env::reset(spec, rng.next()).first;
    const int boxes = std::get<env::SokobanState>(state).box_count();
    while (!env::is_terminal(state)) {
      env::step(state, toks(words[rng.index(words.size())]));
      const auto& s = std::get<env::SokobanState>(state);
      CHECK(s.box_count() == boxes);
      for (std::size_t c = 0; c < s.walls.size(); ++c) CHECK_FALSE((s.walls[c] && s.boxes[c]));
      CHECK(s.steps_taken <= s.max_steps);
      ++steps;
    }
  }
}

TEST_CASE("reference mechanics agree with the environment") {
  Rng rng(9);
  env::EnvSpec spec;
  spec.width = 5;
  spec.height = 4;
  spec.boxes = 2;
  const char* moves[] = {"up", "down", "left", "right"};
  for (int e = 0; e < 200; ++e) {
    env::EnvState state = env::reset(spec, rng.next()).first;
    testing::Board ref = testing::Board::from(std::get<env::SokobanState>(state));
    while (!env::is_terminal(state)) {
      const int dir = static_cast<int>(rng.index(4));
      const int before = ref.on_target();
      ref.move(dir);
      const auto r = env::step(state, toks(moves[dir]));
      const auto& s = std::get<env::SokobanState>(state);
      CHECK(s.player == ref.player);
      CHECK(std::vector<int>(s.boxes.begin(), s.boxes.end()) == ref.boxes);
      double expect = env::kStepPenalty + env::kOnTargetBonus * (ref.on_target() - before);
      if (ref.solved()) expect += env::kSolveBonus;
      CHECK(r.reward == doctest::Approx(expect).epsilon(1e-12));
    }
  }
}

TEST_CASE("sokoban episode returns stay inside the per-instance bound") {
  Rng rng(21);
  const std::vector<std::string> words = {"up", "down", "left", "right", "buy"};
  for (int e = 0; e < 500; ++e) {
    env::EnvSpec spec;
    spec.width = 3 + static_cast<int>(rng.index(3));
    spec.height = 3 + static_cast<int>(rng.index(3));
    spec.boxes = spec.width * spec.height >= 16 ? 2 : 1;
    env::EnvState state = env::reset(spec, rng.next()).first;
    const auto& s0 = std::get<env::SokobanState>(state);
    const int shortest = *testing::bfs_length(s0);
    const int on0 = s0.boxes_on_target();
    const double lower = spec.max_steps * std::min(env::kStepPenalty, env::kInvalidPenalty) -
                         env::kOnTargetBonus * on0;
    const double upper = env::kSolveBonus + env::kOnTargetBonus * (spec.boxes - on0) +
                         env::kStepPenalty * shortest;
    double ret = 0.0;
    while (!env::is_terminal(state)) ret += env::step(state, toks(words[rng.index(words.size())])).reward;
    CHECK(ret >= lower - 1e-9);
    CHECK(ret <= upper + 1e-9);
  }
}

TEST_CASE("shop goals always have a matching item") {
  Rng rng(13);
  env::EnvSpec spec;
  spec.kind = env::EnvKind::shop;
  for (int i = 0; i < 500; ++i) {
    const auto s = env::generate_shop(spec, rng.next());
    bool found = false;
    for (const auto& item : s.catalog)
      found = found || (item.category == s.goal.category && item.color == s.goal.color &&
                        item.size == s.goal.size && item.price <= s.goal.price_cap);
    CHECK(found);
    CHECK(static_cast<int>(s.catalog.size()) == spec.catalog_size);
  }
}

TEST_CASE("shop terminal rewards lie in [0,1] and pages respect page_size") {
  Rng rng(17);
  std::vector<std::string> words = {"next", "prev", "buy", "click 1", "click 2", "click 3",
                                    "click 4", "up"};
  for (const char* c : {"shirt", "shoe", "hat", "bag", "watch"}) words.push_back(std::string("search ") + c);
  env::EnvSpec spec;
  spec.kind = env::EnvKind::shop;
  int terminals = 0;
  for (int e = 0; e < 2000; ++e) {
    env::EnvState state = env::reset(spec, rng.next()).first;
    double last = 0.0;
    while (!env::is_terminal(state)) {
      const auto q = env::render_query(state);
      int shown = -1;  // the goal line names one color too
      for (const char* c : {"red", "blue", "green", "black", "white"}) shown += count(q, c);
      CHECK(shown <= spec.page_size);
      const auto r = env::step(state, toks(words[rng.index(words.size())]));
      last = r.reward;
      if (!r.terminal) CHECK((r.reward == 0.0 || r.reward == env::kInvalidPenalty));
    }
    ++terminals;
    CHECK(last >= 0.0);
    CHECK(last <= 1.0);
  }
  CHECK(terminals == 2000);
}

TEST_CASE("shop purchase of a matching item scores 1") {
  env::EnvSpec spec;
  spec.kind = env::EnvKind::shop;
  env::EnvState state = env::reset(spec, 99).first;
  auto& s = std::get<env::ShopState>(state);
  const char* cats[] = {"shirt", "shoe", "hat", "bag", "watch"};
  env::step(state, toks(std::string("search ") + cats[s.goal.category]));
  const auto results = s.results();
  int target = -1;
  for (std::size_t i = 0; i < results.size() && target < 0; ++i)
    if (s.match_score(results[i]) == 1.0) target = static_cast<int>(i);
  REQUIRE(target >= 0);
  for (int p = 0; p < target / spec.page_size; ++p) env::step(state, toks("next"));
  env::step(state, toks("click " + std::to_string(target % spec.page_size + 1)));
  const auto r = env::step(state, toks("buy"));
  CHECK(r.terminal);
  CHECK(r.reward == 1.0);
  CHECK(env::is_success(state));
}

TEST_CASE("instance dump and load round trip") {
  Rng rng(23);
  for (int i = 0; i < 100; ++i) {
    env::EnvSpec spec;
    spec.width = 4 + static_cast<int>(rng.index(3));
    spec.height = 4;
    spec.kind = i % 2 ? env::EnvKind::shop : env::EnvKind::sokoban;
    env::EnvState state = env::reset(spec, rng.next()).first;
    if (i % 4 == 1) env::step(state, toks("search hat"));
    if (i % 4 == 0) env::step(state, toks("left"));
    const std::string text = env::dump_instance(state);
    const env::EnvState back = env::load_instance(text);
    CHECK(back == state);
    CHECK(env::dump_instance(back) == text);
  }
  CHECK_THROWS_AS(env::load_instance("sokoban 3 3 0 10\n#"), std::invalid_argument);
}
