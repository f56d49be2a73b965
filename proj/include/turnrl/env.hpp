#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "turnrl/vocab.hpp"

namespace turnrl::env {

enum class EnvKind { sokoban, shop };

EnvKind parse_env_kind(std::string_view name);  // throws std::invalid_argument
std::string_view to_string(EnvKind kind);

// Reward constants shared by both environments.
inline constexpr double kStepPenalty = -0.1;
inline constexpr double kOnTargetBonus = 1.0;  // per box newly on a target (-1 if removed)
inline constexpr double kSolveBonus = 10.0;
inline constexpr double kInvalidPenalty = -0.2;

struct EnvSpec {
  EnvKind kind = EnvKind::sokoban;
  int width = 4;
  int height = 4;
  int boxes = 1;
  int max_steps = 10;      // action budget for both environments
  int reverse_steps = 6;   // length of the reverse-play walk used to scramble
  int catalog_size = 50;
  int page_size = 3;

  friend bool operator==(const EnvSpec&, const EnvSpec&) = default;
};

// ---------------------------------------------------------------------------
// Sokoban

enum class Direction { up, down, left, right };

struct SokobanState {
  int width = 0;
  int height = 0;
  // Row-major cell masks, width * height entries each. Cells outside the
  // grid behave as walls.
  std::vector<std::uint8_t> walls;
  std::vector<std::uint8_t> targets;
  std::vector<std::uint8_t> boxes;
  int player = 0;
  int steps_taken = 0;
  int max_steps = 10;

  int cell(int x, int y) const { return y * width + x; }
  int box_count() const;
  int boxes_on_target() const;
  bool solved() const { return boxes_on_target() == box_count(); }
  bool terminal() const { return solved() || steps_taken >= max_steps; }

  // Cell reached by moving one step from `from`, or -1 when off the grid.
  int neighbor(int from, Direction d) const;
  bool blocked(int c) const { return c < 0 || walls[c] != 0; }

  friend bool operator==(const SokobanState&, const SokobanState&) = default;
};

// Breadth-first search over (player, boxes). Returns a shortest move sequence
// or nullopt if the instance is unsolvable. Ignores the step budget.
std::optional<std::vector<Direction>> solve(const SokobanState& state,
                                            std::size_t max_nodes = 2'000'000);

// ---------------------------------------------------------------------------
// Shop

inline constexpr int kShopCategories = 5;
inline constexpr int kShopColors = 5;
inline constexpr int kShopSizes = 4;

struct ShopItem {
  int category = 0;
  int color = 0;
  int size = 0;
  int price = 10;  // 10..99
  friend bool operator==(const ShopItem&, const ShopItem&) = default;
};

struct ShopGoal {
  int category = 0;
  int color = 0;
  int size = 0;
  int price_cap = 99;
  friend bool operator==(const ShopGoal&, const ShopGoal&) = default;
};

enum class ShopPhase { search, results, product, done };

struct ShopState {
  std::vector<ShopItem> catalog;
  ShopGoal goal;
  ShopPhase phase = ShopPhase::search;
  int actions_left = 10;
  int page_size = 3;
  int searched_category = -1;
  int page = 0;
  int selected = -1;  // catalog index once a product is opened
  bool purchased = false;

  std::vector<int> results() const;  // catalog indices of the last search
  int page_count() const;
  double match_score(int item) const;  // fraction of goal attributes met, in [0,1]
  bool terminal() const { return phase == ShopPhase::done || actions_left <= 0; }

  friend bool operator==(const ShopState&, const ShopState&) = default;
};

// Does some catalog item meet every goal attribute under the price cap?
bool has_matching_item(const ShopState& state);

using EnvState = std::variant<SokobanState, ShopState>;

// ---------------------------------------------------------------------------
// Actions

struct Invalid {};
struct Move { Direction dir; };
struct Search { int category; };
struct Click { int slot; };  // 1-based slot on the current results page
struct NextPage {};
struct PrevPage {};
struct Buy {};

using Action = std::variant<Invalid, Move, Search, Click, NextPage, PrevPage, Buy>;

// First well-formed action phrase before the end-of-response marker. Anything
// else (reasoning filler, half phrases) is skipped. Never throws.
Action parse_action(std::span<const TokenId> response);
// Same, restricted to the action grammar of one environment.
Action parse_action(std::span<const TokenId> response, EnvKind kind);

std::string describe(const Action& action);

// ---------------------------------------------------------------------------
// Environment interface

struct StepResult {
  std::optional<std::vector<TokenId>> query;  // absent iff terminal
  double reward = 0.0;
  bool terminal = false;
};

// Deterministic in seed. Throws std::runtime_error when no valid instance can
// be produced for the spec.
std::pair<EnvState, std::vector<TokenId>> reset(const EnvSpec& spec,
                                                std::uint64_t seed);

SokobanState generate_sokoban(const EnvSpec& spec, std::uint64_t seed);
ShopState generate_shop(const EnvSpec& spec, std::uint64_t seed);

// Precondition: state is not terminal (std::logic_error otherwise).
StepResult step(EnvState& state, std::span<const TokenId> response);

std::vector<TokenId> render_query(const EnvState& state);

EnvKind kind_of(const EnvState& state);
bool is_terminal(const EnvState& state);
// Solved puzzle, or a purchase that meets every goal attribute.
bool is_success(const EnvState& state);

// Line-oriented instance formats (see README): an XSB-style grid for Sokoban
// and a flat key=value record for the shop.
std::string dump_instance(const EnvState& state);
EnvState load_instance(std::string_view text);  // throws std::invalid_argument

}  // namespace turnrl::env
