#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "snd/tensor.hpp"

namespace snd {

enum class Action : int { up = 0, down, left, right, interact, noop };
inline constexpr int kActionCount = 6;

enum class Cell : std::uint8_t { floor = 0, wall, door, locked_door, key, hazard, goal };

struct WorldConfig {
  std::size_t rooms = 9;
  /// Room side length in cells, border walls included.
  std::size_t size = 8;
  double hazard_density = 0.02;
  double obstacle_density = 0.1;
  /// Number of locked doors; each gets one key placed before it.
  std::size_t locked_doors = 0;
  std::size_t step_limit = 400;
  std::size_t obs_size = 32;
  /// Per-room cell that toggles at random every step (noise-as-novelty probe).
  bool blinker = false;
  /// Goal pays +1 on every entry and does not end the episode.
  bool repeatable_reward = false;
  /// Key pickups pay +1 as intermediate score events.
  bool pickup_reward = false;
};

void validate(const WorldConfig& config);

struct Door {
  std::size_t room = 0;
  std::size_t x = 0;
  std::size_t y = 0;
  /// Cell the agent lands on after passing through.
  std::size_t to_room = 0;
  std::size_t to_x = 0;
  std::size_t to_y = 0;
  /// Shared id of the two door cells that form one connection.
  std::size_t link = 0;
  bool locked = false;
};

struct Pos {
  std::size_t room = 0;
  std::size_t x = 0;
  std::size_t y = 0;
  bool operator==(const Pos&) const = default;
};

/// Immutable generated layout.
struct WorldLayout {
  std::uint64_t seed = 0;
  WorldConfig config;
  std::size_t grid_w = 1;
  std::size_t grid_h = 1;
  /// rooms x size x size cells, row-major per room.
  std::vector<Cell> cells;
  std::vector<Door> doors;
  std::vector<Pos> keys;
  std::vector<Pos> blinkers;
  Pos spawn;
  Pos goal;
  std::size_t links = 0;

  Cell at(std::size_t room, std::size_t x, std::size_t y) const { return cells[(room * config.size + y) * config.size + x]; }
  /// Index into `doors` for the door cell at the position, or -1.
  int door_at(std::size_t room, std::size_t x, std::size_t y) const;
  int key_at(const Pos& p) const;
};

/// Generates a solvable layout. Unsolvable draws are retried up to 100 times.
std::shared_ptr<const WorldLayout> generate_world(std::uint64_t seed, const WorldConfig& config);

/// Flood fill from spawn that opens locked doors as collected keys allow.
/// Returns true when the goal is reachable.
bool is_solvable(const WorldLayout& layout);
/// Rooms reachable under the same key-aware flood fill.
std::vector<bool> reachable_rooms(const WorldLayout& layout);

/// Layout as JSON: per-room rows of cell characters plus door/key lists.
nlohmann::json layout_to_json(const WorldLayout& layout);

struct StepInfo {
  std::size_t room_id = 0;
  std::size_t visited_rooms = 0;
};

struct StepOutcome {
  float reward = 0.0f;
  bool done = false;
  StepInfo info;
};

/// Mutable episode state over a shared layout.
struct EpisodeState {
  Pos agent;
  std::size_t keys_held = 0;
  std::vector<bool> key_taken;
  std::vector<bool> link_open;
  std::vector<bool> visited;
  std::vector<bool> blink_on;
  std::size_t steps = 0;
  bool goal_collected = false;
  bool done = false;
};

class World {
 public:
  World(std::shared_ptr<const WorldLayout> layout, std::uint64_t rng_seed);

  void reset();
  StepOutcome step(Action action);
  /// Room-local top-down rendering, values in [0, 1], shape (1, S, S).
  Tensor observe() const;
  void render_into(std::span<float> out) const;

  const WorldLayout& layout() const { return *layout_; }
  const EpisodeState& state() const { return state_; }
  std::size_t visited_count() const;

  /// Serialized episode state and RNG stream.
  nlohmann::json save_state() const;
  void load_state(const nlohmann::json& j);

 private:
  std::shared_ptr<const WorldLayout> layout_;
  std::mt19937_64 rng_;
  EpisodeState state_;
};

/// Gray level used for each rendered element.
namespace shade {
inline constexpr float floor = 0.0f;
inline constexpr float hazard = 0.15f;
inline constexpr float wall = 0.35f;
inline constexpr float door = 0.5f;
inline constexpr float locked_door = 0.65f;
inline constexpr float blink = 0.6f;
inline constexpr float agent = 0.8f;
inline constexpr float key = 0.9f;
inline constexpr float goal = 1.0f;
}  // namespace shade

}  // namespace snd
