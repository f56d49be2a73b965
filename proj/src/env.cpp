#include "turnrl/env.hpp"

#include <algorithm>
#include <array>
#include <deque>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "turnrl/random.hpp"

namespace turnrl::env {

namespace {

constexpr std::array<const char*, kShopCategories> kCategoryWords = {
    "shirt", "shoe", "hat", "bag", "watch"};
constexpr std::array<const char*, kShopColors> kColorWords = {
    "red", "blue", "green", "black", "white"};
constexpr std::array<const char*, kShopSizes> kSizeWords = {
    "small", "medium", "large", "xl"};
constexpr std::array<Direction, 4> kDirections = {
    Direction::up, Direction::down, Direction::left, Direction::right};

Direction opposite(Direction d) {
  switch (d) {
    case Direction::up: return Direction::down;
    case Direction::down: return Direction::up;
    case Direction::left: return Direction::right;
    case Direction::right: return Direction::left;
  }
  return d;
}

const char* direction_word(Direction d) {
  switch (d) {
    case Direction::up: return "up";
    case Direction::down: return "down";
    case Direction::left: return "left";
    case Direction::right: return "right";
  }
  return "?";
}

template <std::size_t N>
int index_of(const std::array<const char*, N>& words, std::string_view w) {
  for (std::size_t i = 0; i < N; ++i)
    if (w == words[i]) return static_cast<int>(i);
  return -1;
}

template <typename... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <typename... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

// Moves the player; returns false (state untouched) when the move is blocked.
bool apply_move(SokobanState& s, Direction d) {
  const int next = s.neighbor(s.player, d);
  if (s.blocked(next)) return false;
  if (s.boxes[next]) {
    const int beyond = s.neighbor(next, d);
    if (s.blocked(beyond) || s.boxes[beyond]) return false;
    s.boxes[next] = 0;
    s.boxes[beyond] = 1;
  }
  s.player = next;
  return true;
}

void append(std::vector<TokenId>& out, const std::vector<TokenId>& more) {
  out.insert(out.end(), more.begin(), more.end());
}

std::vector<TokenId> render_sokoban(const SokobanState& s) {
  const auto& v = Vocabulary::get();
  std::vector<TokenId> out{tok::kBegin, v.id("budget")};
  append(out, v.number(static_cast<unsigned>(s.max_steps - s.steps_taken)));
  out.push_back(v.id("grid"));
  for (int y = 0; y < s.height; ++y) {
    if (y) out.push_back(v.id("/"));
    for (int x = 0; x < s.width; ++x) {
      const int c = s.cell(x, y);
      const char* sym = "_";
      if (s.walls[c]) sym = "#";
      else if (c == s.player) sym = s.targets[c] ? "S" : "P";
      else if (s.boxes[c]) sym = s.targets[c] ? "√" : "X";
      else if (s.targets[c]) sym = "O";
      out.push_back(v.id(sym));
    }
  }
  out.push_back(tok::kAct);
  return out;
}

void append_item(std::vector<TokenId>& out, const ShopItem& item) {
  const auto& v = Vocabulary::get();
  out.push_back(v.id(kColorWords[item.color]));
  out.push_back(v.id(kSizeWords[item.size]));
  out.push_back(v.id(kCategoryWords[item.category]));
  append(out, v.number(static_cast<unsigned>(item.price)));
}

std::vector<TokenId> render_shop(const ShopState& s) {
  const auto& v = Vocabulary::get();
  std::vector<TokenId> out{tok::kBegin, v.id("budget")};
  append(out, v.number(static_cast<unsigned>(std::max(s.actions_left, 0))));
  switch (s.phase) {
    case ShopPhase::search:
      out.push_back(v.id("phase"));
      out.push_back(v.id("search"));
      break;
    case ShopPhase::results: {
      const auto results = s.results();
      out.push_back(v.id("results"));
      if (results.empty()) {
        out.push_back(v.id("empty"));
        break;
      }
      out.push_back(v.id("page"));
      append(out, v.number(static_cast<unsigned>(s.page + 1)));
      out.push_back(v.id("of"));
      append(out, v.number(static_cast<unsigned>(s.page_count())));
      const std::size_t begin = static_cast<std::size_t>(s.page * s.page_size);
      const std::size_t end =
          std::min(results.size(), begin + static_cast<std::size_t>(s.page_size));
      for (std::size_t i = begin; i < end; ++i) {
        out.push_back(v.digit(static_cast<int>(i - begin + 1)));
        append_item(out, s.catalog[results[i]]);
      }
      break;
    }
    case ShopPhase::product:
      out.push_back(v.id("product"));
      append_item(out, s.catalog[s.selected]);
      break;
    case ShopPhase::done:
      out.push_back(v.id("done"));
      break;
  }
  out.push_back(v.id("goal"));
  out.push_back(v.id(kColorWords[s.goal.color]));
  out.push_back(v.id(kSizeWords[s.goal.size]));
  out.push_back(v.id(kCategoryWords[s.goal.category]));
  out.push_back(v.id("under"));
  append(out, v.number(static_cast<unsigned>(s.goal.price_cap)));
  out.push_back(tok::kAct);
  return out;
}

StepResult step_sokoban(SokobanState& s, std::span<const TokenId> response) {
  const Action action = parse_action(response, EnvKind::sokoban);
  StepResult result;
  s.steps_taken += 1;
  if (const auto* move = std::get_if<Move>(&action)) {
    const int before = s.boxes_on_target();
    apply_move(s, move->dir);
    const int after = s.boxes_on_target();
    result.reward = kStepPenalty + kOnTargetBonus * (after - before);
    if (s.solved()) result.reward += kSolveBonus;
  } else {
    result.reward = kInvalidPenalty;
  }
  result.terminal = s.terminal();
  if (!result.terminal) result.query = render_sokoban(s);
  return result;
}

StepResult step_shop(ShopState& s, std::span<const TokenId> response) {
  const Action action = parse_action(response, EnvKind::shop);
  s.actions_left -= 1;
  bool valid = false;
  switch (s.phase) {
    case ShopPhase::search:
      if (const auto* a = std::get_if<Search>(&action)) {
        s.searched_category = a->category;
        s.page = 0;
        s.phase = ShopPhase::results;
        valid = true;
      }
      break;
    case ShopPhase::results: {
      const auto results = s.results();
      if (const auto* a = std::get_if<Click>(&action)) {
        const int idx = s.page * s.page_size + a->slot - 1;
        if (a->slot >= 1 && a->slot <= s.page_size &&
            idx < static_cast<int>(results.size())) {
          s.selected = results[idx];
          s.phase = ShopPhase::product;
          valid = true;
        }
      } else if (std::holds_alternative<NextPage>(action)) {
        if (s.page + 1 < s.page_count()) {
          s.page += 1;
          valid = true;
        }
      } else if (std::holds_alternative<PrevPage>(action)) {
        if (s.page > 0) {
          s.page -= 1;
          valid = true;
        }
      }
      break;
    }
    case ShopPhase::product:
      if (std::holds_alternative<Buy>(action)) {
        s.phase = ShopPhase::done;
        s.purchased = true;
        valid = true;
      }
      break;
    case ShopPhase::done:
      break;
  }

  StepResult result;
  result.terminal = s.terminal();
  if (result.terminal) {
    // The terminal reward is the match score alone, so it stays in [0,1].
    result.reward = s.purchased ? s.match_score(s.selected) : 0.0;
  } else {
    result.reward = valid ? 0.0 : kInvalidPenalty;
    result.query = render_shop(s);
  }
  return result;
}

std::string key_of(const SokobanState& s) {
  std::string key;
  key.reserve(s.boxes.size() + 2);
  key.push_back(static_cast<char>(s.player & 0xff));
  key.push_back(static_cast<char>(s.player >> 8));
  for (auto b : s.boxes) key.push_back(static_cast<char>(b));
  return key;
}

}  // namespace

EnvKind parse_env_kind(std::string_view name) {
  if (name == "sokoban") return EnvKind::sokoban;
  if (name == "shop") return EnvKind::shop;
  throw std::invalid_argument("unknown env_kind '" + std::string(name) + "'");
}

std::string_view to_string(EnvKind kind) {
  return kind == EnvKind::sokoban ? "sokoban" : "shop";
}

// ---------------------------------------------------------------------------

int SokobanState::box_count() const {
  return static_cast<int>(std::count(boxes.begin(), boxes.end(), 1));
}

int SokobanState::boxes_on_target() const {
  int n = 0;
  for (std::size_t c = 0; c < boxes.size(); ++c) n += boxes[c] && targets[c];
  return n;
}

int SokobanState::neighbor(int from, Direction d) const {
  int x = from % width;
  int y = from / width;
  switch (d) {
    case Direction::up: --y; break;
    case Direction::down: ++y; break;
    case Direction::left: --x; break;
    case Direction::right: ++x; break;
  }
  if (x < 0 || y < 0 || x >= width || y >= height) return -1;
  return cell(x, y);
}

std::optional<std::vector<Direction>> solve(const SokobanState& start,
                                            std::size_t max_nodes) {
  struct Node {
    SokobanState state;
    std::size_t parent;
    Direction move;
  };
  std::vector<Node> nodes;
  std::unordered_map<std::string, std::size_t> seen;
  std::deque<std::size_t> frontier;

  SokobanState root = start;
  root.steps_taken = 0;
  nodes.push_back({root, 0, Direction::up});
  seen.emplace(key_of(root), 0);
  frontier.push_back(0);

  while (!frontier.empty()) {
    const std::size_t at = frontier.front();
    frontier.pop_front();
    if (nodes[at].state.solved()) {
      std::vector<Direction> path;
      for (std::size_t n = at; n != 0; n = nodes[n].parent) path.push_back(nodes[n].move);
      std::reverse(path.begin(), path.end());
      return path;
    }
    for (Direction d : kDirections) {
      SokobanState next = nodes[at].state;
      if (!apply_move(next, d)) continue;
      auto [it, inserted] = seen.emplace(key_of(next), nodes.size());
      if (!inserted) continue;
      nodes.push_back({std::move(next), at, d});
      frontier.push_back(nodes.size() - 1);
      if (nodes.size() > max_nodes) return std::nullopt;
    }
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------

std::vector<int> ShopState::results() const {
  std::vector<int> out;
  if (searched_category < 0) return out;
  for (std::size_t i = 0; i < catalog.size(); ++i)
    if (catalog[i].category == searched_category) out.push_back(static_cast<int>(i));
  return out;
}

int ShopState::page_count() const {
  const int n = static_cast<int>(results().size());
  return n == 0 ? 0 : (n + page_size - 1) / page_size;
}

double ShopState::match_score(int item) const {
  if (item < 0 || item >= static_cast<int>(catalog.size())) return 0.0;
  const ShopItem& it = catalog[item];
  int met = 0;
  met += it.category == goal.category;
  met += it.color == goal.color;
  met += it.size == goal.size;
  met += it.price <= goal.price_cap;
  return met / 4.0;
}

bool has_matching_item(const ShopState& state) {
  for (std::size_t i = 0; i < state.catalog.size(); ++i)
    if (state.match_score(static_cast<int>(i)) == 1.0) return true;
  return false;
}

// ---------------------------------------------------------------------------

Action parse_action(std::span<const TokenId> response) {
  const auto& v = Vocabulary::get();
  for (std::size_t i = 0; i < response.size(); ++i) {
    if (response[i] == tok::kEnd) break;
    if (response[i] >= v.size()) continue;
    const std::string& w = v.word(response[i]);
    if (w == "up") return Move{Direction::up};
    if (w == "down") return Move{Direction::down};
    if (w == "left") return Move{Direction::left};
    if (w == "right") return Move{Direction::right};
    if (w == "next") return NextPage{};
    if (w == "prev") return PrevPage{};
    if (w == "buy") return Buy{};
    if (i + 1 < response.size() && response[i + 1] != tok::kEnd &&
        response[i + 1] < v.size()) {
      const std::string& arg = v.word(response[i + 1]);
      if (w == "search") {
        const int c = index_of(kCategoryWords, arg);
        if (c >= 0) return Search{c};
      }
      if (w == "click" && arg.size() == 1 && arg[0] >= '1' && arg[0] <= '9')
        return Click{arg[0] - '0'};
    }
  }
  return Invalid{};
}

Action parse_action(std::span<const TokenId> response, EnvKind kind) {
  // Phrases of the other environment are skipped like any other filler.
  for (std::size_t start = 0; start < response.size(); ++start) {
    if (response[start] == tok::kEnd) break;
    Action a = parse_action(response.subspan(start, std::min<std::size_t>(2, response.size() - start)));
    const bool is_move = std::holds_alternative<Move>(a);
    if (std::holds_alternative<Invalid>(a)) continue;
    if ((kind == EnvKind::sokoban) == is_move) return a;
  }
  return Invalid{};
}

std::string describe(const Action& action) {
  return std::visit(
      Overloaded{
          [](const Invalid&) { return std::string("invalid"); },
          [](const Move& m) { return std::string(direction_word(m.dir)); },
          [](const Search& s) { return "search " + std::string(kCategoryWords[s.category]); },
          [](const Click& c) { return "click " + std::to_string(c.slot); },
          [](const NextPage&) { return std::string("next"); },
          [](const PrevPage&) { return std::string("prev"); },
          [](const Buy&) { return std::string("buy"); },
      },
      action);
}

// ---------------------------------------------------------------------------

SokobanState generate_sokoban(const EnvSpec& spec, std::uint64_t seed) {
  if (spec.width < 2 || spec.height < 2 || spec.boxes < 1 || spec.max_steps < 1)
    throw std::invalid_argument("sokoban spec needs width,height >= 2, boxes >= 1, max_steps >= 1");
  const int area = spec.width * spec.height;
  if (spec.boxes + 1 >= area)
    throw std::invalid_argument("sokoban grid too small for the requested boxes");
  const int walk = std::min(spec.reverse_steps, spec.max_steps);

  Rng rng(seed);
  for (int attempt = 0; attempt < 1000; ++attempt) {
    SokobanState s;
    s.width = spec.width;
    s.height = spec.height;
    s.max_steps = spec.max_steps;
    s.walls.assign(area, 0);
    s.targets.assign(area, 0);
    s.boxes.assign(area, 0);

    const int n_walls = area >= 16 ? static_cast<int>(rng.index(area / 8 + 1)) : 0;
    std::vector<int> cells(area);
    for (int c = 0; c < area; ++c) cells[c] = c;
    rng.shuffle(cells);
    for (int i = 0; i < n_walls; ++i) s.walls[cells[i]] = 1;
    std::vector<int> free(cells.begin() + n_walls, cells.end());
    if (static_cast<int>(free.size()) < spec.boxes + 1) continue;
    for (int b = 0; b < spec.boxes; ++b) {
      s.targets[free[b]] = 1;
      s.boxes[free[b]] = 1;
    }
    s.player = free[spec.boxes];

    // Reverse play from the solved position: every pull undoes a push, so
    // the forward puzzle is solvable in at most `walk` moves.
    for (int i = 0; i < walk; ++i) {
      const Direction d = kDirections[rng.index(4)];
      const int next = s.neighbor(s.player, d);
      if (s.blocked(next) || s.boxes[next]) continue;
      const int behind = s.neighbor(s.player, opposite(d));
      const bool pull = behind >= 0 && s.boxes[behind] && rng.uniform() < 0.75;
      if (pull) {
        s.boxes[behind] = 0;
        s.boxes[s.player] = 1;
      }
      s.player = next;
    }
    if (!s.solved()) return s;
  }
  throw std::runtime_error("failed to generate an unsolved sokoban instance");
}

ShopState generate_shop(const EnvSpec& spec, std::uint64_t seed) {
  if (spec.catalog_size < 1 || spec.page_size < 1 || spec.page_size > 9 || spec.max_steps < 1)
    throw std::invalid_argument("shop spec needs catalog_size >= 1, page_size in [1,9], max_steps >= 1");
  Rng rng(seed);
  ShopState s;
  s.page_size = spec.page_size;
  s.actions_left = spec.max_steps;
  s.catalog.resize(spec.catalog_size);
  for (auto& item : s.catalog) {
    item.category = static_cast<int>(rng.index(kShopCategories));
    item.color = static_cast<int>(rng.index(kShopColors));
    item.size = static_cast<int>(rng.index(kShopSizes));
    item.price = 10 + static_cast<int>(rng.index(90));
  }
  // The goal is modelled on a catalog item, so at least one item matches.
  const ShopItem& anchor = s.catalog[rng.index(s.catalog.size())];
  s.goal.category = anchor.category;
  s.goal.color = anchor.color;
  s.goal.size = anchor.size;
  s.goal.price_cap = std::min(99, anchor.price + static_cast<int>(rng.index(10)));
  return s;
}

std::pair<EnvState, std::vector<TokenId>> reset(const EnvSpec& spec, std::uint64_t seed) {
  EnvState state;
  if (spec.kind == EnvKind::sokoban)
    state = generate_sokoban(spec, seed);
  else
    state = generate_shop(spec, seed);
  auto query = render_query(state);
  return {std::move(state), std::move(query)};
}

StepResult step(EnvState& state, std::span<const TokenId> response) {
  if (is_terminal(state)) throw std::logic_error("step() called on a terminal state");
  return std::visit(
      Overloaded{[&](SokobanState& s) { return step_sokoban(s, response); },
                 [&](ShopState& s) { return step_shop(s, response); }},
      state);
}

std::vector<TokenId> render_query(const EnvState& state) {
  return std::visit(Overloaded{[](const SokobanState& s) { return render_sokoban(s); },
                               [](const ShopState& s) { return render_shop(s); }},
                    state);
}

EnvKind kind_of(const EnvState& state) {
  return std::holds_alternative<SokobanState>(state) ? EnvKind::sokoban : EnvKind::shop;
}

bool is_terminal(const EnvState& state) {
  return std::visit([](const auto& s) { return s.terminal(); }, state);
}

bool is_success(const EnvState& state) {
  return std::visit(
      Overloaded{[](const SokobanState& s) { return s.solved(); },
                 [](const ShopState& s) {
                   return s.purchased && s.match_score(s.selected) == 1.0;
                 }},
      state);
}

// ---------------------------------------------------------------------------
// Instance text formats

std::string dump_instance(const EnvState& state) {
  std::ostringstream out;
  if (const auto* s = std::get_if<SokobanState>(&state)) {
    out << "sokoban " << s->width << ' ' << s->height << ' ' << s->steps_taken << ' '
        << s->max_steps << '\n';
    for (int y = 0; y < s->height; ++y) {
      for (int x = 0; x < s->width; ++x) {
        const int c = s->cell(x, y);
        char ch = '-';
        if (s->walls[c]) ch = '#';
        else if (c == s->player) ch = s->targets[c] ? '+' : '@';
        else if (s->boxes[c]) ch = s->targets[c] ? '*' : '$';
        else if (s->targets[c]) ch = '.';
        out << ch;
      }
      out << '\n';
    }
    return out.str();
  }
  const auto& s = std::get<ShopState>(state);
  static constexpr const char* kPhases[] = {"search", "results", "product", "done"};
  out << "kind=shop\n"
      << "actions_left=" << s.actions_left << '\n'
      << "page_size=" << s.page_size << '\n'
      << "phase=" << kPhases[static_cast<int>(s.phase)] << '\n'
      << "searched=" << s.searched_category << '\n'
      << "page=" << s.page << '\n'
      << "selected=" << s.selected << '\n'
      << "purchased=" << (s.purchased ? 1 : 0) << '\n'
      << "goal=" << s.goal.category << ' ' << s.goal.color << ' ' << s.goal.size << ' '
      << s.goal.price_cap << '\n';
  for (const auto& it : s.catalog)
    out << "item=" << it.category << ' ' << it.color << ' ' << it.size << ' ' << it.price
        << '\n';
  return out.str();
}

namespace {

SokobanState load_sokoban(std::istringstream& in) {
  SokobanState s;
  if (!(in >> s.width >> s.height >> s.steps_taken >> s.max_steps) || s.width < 1 ||
      s.height < 1)
    throw std::invalid_argument("bad sokoban header");
  std::string line;
  std::getline(in, line);
  const int area = s.width * s.height;
  s.walls.assign(area, 0);
  s.targets.assign(area, 0);
  s.boxes.assign(area, 0);
  int players = 0;
  for (int y = 0; y < s.height; ++y) {
    if (!std::getline(in, line) || static_cast<int>(line.size()) < s.width)
      throw std::invalid_argument("sokoban grid row " + std::to_string(y) + " too short");
    for (int x = 0; x < s.width; ++x) {
      const int c = s.cell(x, y);
      switch (line[x]) {
        case '#': s.walls[c] = 1; break;
        case '-': case ' ': case '_': break;
        case '.': s.targets[c] = 1; break;
        case '$': s.boxes[c] = 1; break;
        case '*': s.boxes[c] = 1; s.targets[c] = 1; break;
        case '@': s.player = c; ++players; break;
        case '+': s.player = c; s.targets[c] = 1; ++players; break;
        default:
          throw std::invalid_argument(std::string("unknown sokoban symbol '") + line[x] + "'");
      }
    }
  }
  if (players != 1) throw std::invalid_argument("sokoban grid needs exactly one player");
  if (s.box_count() != static_cast<int>(std::count(s.targets.begin(), s.targets.end(), 1)))
    throw std::invalid_argument("sokoban box and target counts differ");
  return s;
}

ShopState load_shop(std::istringstream& in) {
  ShopState s;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("bad shop record line: " + line);
    const std::string key = line.substr(0, eq);
    std::istringstream value(line.substr(eq + 1));
    if (key == "kind") continue;
    if (key == "actions_left") value >> s.actions_left;
    else if (key == "page_size") value >> s.page_size;
    else if (key == "searched") value >> s.searched_category;
    else if (key == "page") value >> s.page;
    else if (key == "selected") value >> s.selected;
    else if (key == "purchased") { int p = 0; value >> p; s.purchased = p != 0; }
    else if (key == "phase") {
      std::string p;
      value >> p;
      if (p == "search") s.phase = ShopPhase::search;
      else if (p == "results") s.phase = ShopPhase::results;
      else if (p == "product") s.phase = ShopPhase::product;
      else if (p == "done") s.phase = ShopPhase::done;
      else throw std::invalid_argument("unknown shop phase '" + p + "'");
    } else if (key == "goal") {
      value >> s.goal.category >> s.goal.color >> s.goal.size >> s.goal.price_cap;
    } else if (key == "item") {
      ShopItem it;
      value >> it.category >> it.color >> it.size >> it.price;
      s.catalog.push_back(it);
    } else {
      throw std::invalid_argument("unknown shop key '" + key + "'");
    }
    if (value.fail()) throw std::invalid_argument("bad value for shop key '" + key + "'");
  }
  if (s.catalog.empty()) throw std::invalid_argument("shop record has no items");
  return s;
}

}  // namespace

EnvState load_instance(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string head;
  in >> head;
  if (head == "sokoban") return load_sokoban(in);
  if (head.rfind("kind=shop", 0) == 0) {
    std::istringstream rest{std::string(text)};
    return load_shop(rest);
  }
  throw std::invalid_argument("unrecognized instance record");
}

}  // namespace turnrl::env
