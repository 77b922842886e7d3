#include "snd/world.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <sstream>

#include "snd/errors.hpp"

namespace snd {

namespace {

constexpr int kDx[4] = {0, 0, -1, 1};
constexpr int kDy[4] = {-1, 1, 0, 0};

std::size_t uniform_index(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

struct Builder {
  const WorldConfig& cfg;
  std::mt19937_64& rng;
  WorldLayout out;

  Cell& cell(std::size_t room, std::size_t x, std::size_t y) { return out.cells[(room * cfg.size + y) * cfg.size + x]; }

  Pos random_interior(std::size_t room) {
    return {room, uniform_index(rng, 1, cfg.size - 2), uniform_index(rng, 1, cfg.size - 2)};
  }

  void build(std::uint64_t seed) {
    const std::size_t n = cfg.rooms, s = cfg.size;
    out.seed = seed;
    out.config = cfg;
    out.grid_w = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n))));
    out.grid_h = (n + out.grid_w - 1) / out.grid_w;
    out.cells.assign(n * s * s, Cell::floor);
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t i = 0; i < s; ++i) {
        cell(r, i, 0) = cell(r, i, s - 1) = cell(r, 0, i) = cell(r, s - 1, i) = Cell::wall;
      }
    }

    // Random spanning tree over the room grid, grown from a uniformly drawn frontier edge.
    std::vector<std::pair<std::size_t, std::size_t>> edges;
    std::vector<bool> seen(n, false);
    std::vector<std::pair<std::size_t, std::size_t>> frontier;
    auto grow = [&](std::size_t r) {
      seen[r] = true;
      const std::size_t rx = r % out.grid_w, ry = r / out.grid_w;
      if (rx > 0) frontier.emplace_back(r, r - 1);
      if (rx + 1 < out.grid_w && r + 1 < n) frontier.emplace_back(r, r + 1);
      if (ry > 0) frontier.emplace_back(r, r - out.grid_w);
      if (r + out.grid_w < n) frontier.emplace_back(r, r + out.grid_w);
    };
    grow(0);
    while (!frontier.empty()) {
      const std::size_t i = uniform_index(rng, 0, frontier.size() - 1);
      const auto [r, q] = frontier[i];
      frontier.erase(frontier.begin() + static_cast<std::ptrdiff_t>(i));
      if (seen[q]) continue;
      edges.emplace_back(std::min(r, q), std::max(r, q));
      grow(q);
    }
    out.links = edges.size();

    std::vector<std::vector<std::pair<std::size_t, std::size_t>>> adj(n);  // (neighbor, link)
    for (std::size_t e = 0; e < edges.size(); ++e) {
      const auto [a, b] = edges[e];
      adj[a].emplace_back(b, e);
      adj[b].emplace_back(a, e);
      const std::size_t offset = uniform_index(rng, 1, s - 2);
      if (b == a + 1) {
        out.doors.push_back({a, s - 1, offset, b, 1, offset, e, false});
        out.doors.push_back({b, 0, offset, a, s - 2, offset, e, false});
      } else {
        out.doors.push_back({a, offset, s - 1, b, offset, 1, e, false});
        out.doors.push_back({b, offset, 0, a, offset, s - 2, e, false});
      }
    }

    // Goal in the room farthest from spawn along the tree.
    std::vector<int> depth(n, -1);
    std::vector<std::pair<std::size_t, std::size_t>> parent(n, {n, 0});
    std::deque<std::size_t> queue{0};
    depth[0] = 0;
    std::size_t goal_room = 0;
    while (!queue.empty()) {
      const std::size_t r = queue.front();
      queue.pop_front();
      if (depth[r] >= depth[goal_room]) goal_room = r;
      for (auto [q, e] : adj[r]) {
        if (depth[q] < 0) {
          depth[q] = depth[r] + 1;
          parent[q] = {r, e};
          queue.push_back(q);
        }
      }
    }
    std::vector<std::size_t> path_links;
    for (std::size_t r = goal_room; r != 0; r = parent[r].first) path_links.push_back(parent[r].second);
    std::reverse(path_links.begin(), path_links.end());

    out.spawn = {0, s / 2, s / 2};
    out.goal = random_interior(goal_room);
    if (goal_room == 0) {
      while (out.goal == out.spawn) out.goal = random_interior(goal_room);
    }

    // Locked doors along the spawn-goal path; each key sits on the spawn side.
    std::vector<std::size_t> locked;
    std::vector<std::size_t> candidates = path_links;
    std::shuffle(candidates.begin(), candidates.end(), rng);
    for (std::size_t i = 0; i < std::min(cfg.locked_doors, candidates.size()); ++i) locked.push_back(candidates[i]);
    std::sort(locked.begin(), locked.end(), [&](std::size_t a, std::size_t b) {
      return std::find(path_links.begin(), path_links.end(), a) < std::find(path_links.begin(), path_links.end(), b);
    });
    for (auto& d : out.doors) d.locked = std::find(locked.begin(), locked.end(), d.link) != locked.end();
    for (std::size_t i = 0; i < locked.size(); ++i) {
      // Rooms reachable from spawn without crossing locks i..end.
      std::vector<bool> side(n, false);
      std::deque<std::size_t> q{0};
      side[0] = true;
      while (!q.empty()) {
        const std::size_t r = q.front();
        q.pop_front();
        for (auto [nb, e] : adj[r]) {
          if (side[nb] || std::find(locked.begin() + i, locked.end(), e) != locked.end()) continue;
          side[nb] = true;
          q.push_back(nb);
        }
      }
      std::vector<std::size_t> rooms;
      for (std::size_t r = 0; r < n; ++r) {
        if (side[r]) rooms.push_back(r);
      }
      Pos k = random_interior(rooms[uniform_index(rng, 0, rooms.size() - 1)]);
      while (k == out.spawn || k == out.goal ||
             std::find(out.keys.begin(), out.keys.end(), k) != out.keys.end()) {
        k = random_interior(k.room);
      }
      out.keys.push_back(k);
    }

    for (std::size_t r = 0; r < n; ++r) out.blinkers.push_back(random_interior(r));

    std::bernoulli_distribution obstacle(cfg.obstacle_density);
    std::bernoulli_distribution hazard(cfg.hazard_density);
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t y = 1; y + 1 < s; ++y) {
        for (std::size_t x = 1; x + 1 < s; ++x) {
          if (obstacle(rng)) {
            cell(r, x, y) = Cell::wall;
          } else if (hazard(rng)) {
            cell(r, x, y) = Cell::hazard;
          }
        }
      }
    }
    auto clear = [&](const Pos& p) { cell(p.room, p.x, p.y) = Cell::floor; };
    for (const auto& d : out.doors) {
      clear({d.to_room, d.to_x, d.to_y});
      cell(d.room, d.x, d.y) = d.locked ? Cell::locked_door : Cell::door;
    }
    clear(out.spawn);
    for (const auto& k : out.keys) clear(k);
    for (const auto& b : out.blinkers) clear(b);
    cell(out.goal.room, out.goal.x, out.goal.y) = Cell::goal;
  }
};

// Key-aware flood fill; returns visited cell mask.
std::vector<bool> flood(const WorldLayout& layout) {
  const std::size_t s = layout.config.size, n = layout.config.rooms;
  std::vector<bool> open(layout.links, true);
  for (const auto& d : layout.doors) {
    if (d.locked) open[d.link] = false;
  }
  std::vector<bool> seen;
  for (;;) {
    seen.assign(n * s * s, false);
    auto idx = [&](const Pos& p) { return (p.room * s + p.y) * s + p.x; };
    std::deque<Pos> q{layout.spawn};
    seen[idx(layout.spawn)] = true;
    std::vector<std::size_t> frontier_links;
    while (!q.empty()) {
      const Pos p = q.front();
      q.pop_front();
      for (int d = 0; d < 4; ++d) {
        Pos nb{p.room, static_cast<std::size_t>(static_cast<long>(p.x) + kDx[d]),
               static_cast<std::size_t>(static_cast<long>(p.y) + kDy[d])};
        const Cell c = layout.at(nb.room, nb.x, nb.y);
        if (c == Cell::wall || c == Cell::hazard) continue;
        if (c == Cell::door || c == Cell::locked_door) {
          const auto& door = layout.doors[layout.door_at(nb.room, nb.x, nb.y)];
          if (!open[door.link]) {
            frontier_links.push_back(door.link);
            continue;
          }
          nb = {door.to_room, door.to_x, door.to_y};
        }
        if (!seen[idx(nb)]) {
          seen[idx(nb)] = true;
          q.push_back(nb);
        }
      }
    }
    std::size_t keys_found = 0;
    for (const auto& k : layout.keys) keys_found += seen[idx(k)] ? 1 : 0;
    std::size_t used = 0;
    for (const auto& d : layout.doors) used += (d.locked && open[d.link]) ? 1 : 0;
    used /= 2;
    if (keys_found > used && !frontier_links.empty()) {
      open[frontier_links.front()] = true;
      continue;
    }
    return seen;
  }
}

}  // namespace

void validate(const WorldConfig& c) {
  if (c.rooms < 1) throw ContractError("world: rooms must be >= 1");
  if (c.size < 5) throw ContractError("world: size must be >= 5");
  if (c.obs_size < c.size) throw ContractError("world: obs_size must be >= room size");
  if (c.hazard_density < 0 || c.hazard_density >= 1 || c.obstacle_density < 0 || c.obstacle_density >= 1) {
    throw ContractError("world: densities must lie in [0, 1)");
  }
  if (c.step_limit < 1) throw ContractError("world: step_limit must be >= 1");
}

int WorldLayout::door_at(std::size_t room, std::size_t x, std::size_t y) const {
  for (std::size_t i = 0; i < doors.size(); ++i) {
    if (doors[i].room == room && doors[i].x == x && doors[i].y == y) return static_cast<int>(i);
  }
  return -1;
}

int WorldLayout::key_at(const Pos& p) const {
  for (std::size_t i = 0; i < keys.size(); ++i) {
    if (keys[i] == p) return static_cast<int>(i);
  }
  return -1;
}

bool is_solvable(const WorldLayout& layout) {
  const std::size_t s = layout.config.size;
  return flood(layout)[(layout.goal.room * s + layout.goal.y) * s + layout.goal.x];
}

std::vector<bool> reachable_rooms(const WorldLayout& layout) {
  const std::size_t s = layout.config.size;
  const auto seen = flood(layout);
  std::vector<bool> rooms(layout.config.rooms, false);
  for (std::size_t i = 0; i < seen.size(); ++i) {
    if (seen[i]) rooms[i / (s * s)] = true;
  }
  return rooms;
}

std::shared_ptr<const WorldLayout> generate_world(std::uint64_t seed, const WorldConfig& config) {
  validate(config);
  std::mt19937_64 rng(seed);
  for (int attempt = 0; attempt < 100; ++attempt) {
    Builder b{config, rng, {}};
    b.build(seed);
    const auto rooms = reachable_rooms(b.out);
    if (is_solvable(b.out) && std::all_of(rooms.begin(), rooms.end(), [](bool r) { return r; })) {
      return std::make_shared<const WorldLayout>(std::move(b.out));
    }
  }
  throw std::runtime_error("world generation failed after 100 attempts (seed " + std::to_string(seed) + ")");
}

nlohmann::json layout_to_json(const WorldLayout& layout) {
  static constexpr char kGlyph[] = {'.', '#', 'D', 'L', 'k', 'x', 'G'};
  const std::size_t s = layout.config.size;
  nlohmann::json rooms = nlohmann::json::array();
  for (std::size_t r = 0; r < layout.config.rooms; ++r) {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t y = 0; y < s; ++y) {
      std::string row;
      for (std::size_t x = 0; x < s; ++x) row += kGlyph[static_cast<int>(layout.at(r, x, y))];
      rows.push_back(row);
    }
    rooms.push_back({{"room", r}, {"grid_x", r % layout.grid_w}, {"grid_y", r / layout.grid_w}, {"rows", rows}});
  }
  nlohmann::json doors = nlohmann::json::array();
  for (const auto& d : layout.doors) {
    doors.push_back({{"room", d.room}, {"x", d.x}, {"y", d.y}, {"to_room", d.to_room}, {"to_x", d.to_x},
                     {"to_y", d.to_y}, {"link", d.link}, {"locked", d.locked}});
  }
  nlohmann::json keys = nlohmann::json::array();
  for (const auto& k : layout.keys) keys.push_back({{"room", k.room}, {"x", k.x}, {"y", k.y}});
  auto pos = [](const Pos& p) { return nlohmann::json{{"room", p.room}, {"x", p.x}, {"y", p.y}}; };
  return {{"seed", layout.seed},
          {"room_size", s},
          {"grid_w", layout.grid_w},
          {"grid_h", layout.grid_h},
          {"legend", {{".", "floor"}, {"#", "wall"}, {"D", "door"}, {"L", "locked door"}, {"k", "key"}, {"x", "hazard"}, {"G", "goal"}}},
          {"rooms", rooms},
          {"doors", doors},
          {"keys", keys},
          {"spawn", pos(layout.spawn)},
          {"goal", pos(layout.goal)}};
}

World::World(std::shared_ptr<const WorldLayout> layout, std::uint64_t rng_seed)
    : layout_(std::move(layout)), rng_(rng_seed) {
  reset();
}

void World::reset() {
  const auto& l = *layout_;
  state_ = EpisodeState{};
  state_.agent = l.spawn;
  state_.key_taken.assign(l.keys.size(), false);
  state_.link_open.assign(l.links, true);
  for (const auto& d : l.doors) {
    if (d.locked) state_.link_open[d.link] = false;
  }
  state_.visited.assign(l.config.rooms, false);
  state_.visited[l.spawn.room] = true;
  state_.blink_on.assign(l.config.rooms, false);
}

std::size_t World::visited_count() const {
  return static_cast<std::size_t>(std::count(state_.visited.begin(), state_.visited.end(), true));
}

StepOutcome World::step(Action action) {
  if (state_.done) throw StateError("step called on a finished episode");
  const auto& l = *layout_;
  StepOutcome out;
  Pos& a = state_.agent;
  const int ai = static_cast<int>(action);
  if (ai < 0 || ai >= kActionCount) throw ContractError("invalid action");
  if (action == Action::interact) {
    const int k = l.key_at(a);
    if (k >= 0 && !state_.key_taken[k]) {
      state_.key_taken[k] = true;
      ++state_.keys_held;
      if (l.config.pickup_reward) out.reward += 1.0f;
    }
  } else if (action != Action::noop) {
    Pos nb{a.room, static_cast<std::size_t>(static_cast<long>(a.x) + kDx[ai]),
           static_cast<std::size_t>(static_cast<long>(a.y) + kDy[ai])};
    const Cell c = l.at(nb.room, nb.x, nb.y);
    bool moved = true;
    if (c == Cell::wall) {
      moved = false;
    } else if (c == Cell::door || c == Cell::locked_door) {
      const auto& door = l.doors[l.door_at(nb.room, nb.x, nb.y)];
      if (!state_.link_open[door.link]) {
        if (state_.keys_held > 0) {
          --state_.keys_held;
          state_.link_open[door.link] = true;
        } else {
          moved = false;
        }
      }
      nb = {door.to_room, door.to_x, door.to_y};
    }
    if (moved) {
      a = nb;
      state_.visited[a.room] = true;
      const Cell here = l.at(a.room, a.x, a.y);
      if (here == Cell::hazard) {
        state_.done = true;
      } else if (here == Cell::goal) {
        if (l.config.repeatable_reward) {
          out.reward += 1.0f;
        } else if (!state_.goal_collected) {
          out.reward += 1.0f;
          state_.goal_collected = true;
          state_.done = true;
        }
      }
    }
  }
  if (l.config.blinker) {
    std::bernoulli_distribution flip(0.5);
    for (std::size_t r = 0; r < state_.blink_on.size(); ++r) state_.blink_on[r] = flip(rng_);
  }
  ++state_.steps;
  if (state_.steps >= l.config.step_limit) state_.done = true;
  out.done = state_.done;
  out.info = {a.room, visited_count()};
  return out;
}

void World::render_into(std::span<float> out) const {
  const auto& l = *layout_;
  const std::size_t obs = l.config.obs_size, s = l.config.size;
  if (out.size() != obs * obs) throw ContractError("render buffer has wrong size");
  const std::size_t px = obs / s, off = (obs - px * s) / 2;
  std::fill(out.begin(), out.end(), 0.0f);
  auto paint = [&](std::size_t x, std::size_t y, float v) {
    for (std::size_t dy = 0; dy < px; ++dy) {
      float* row = out.data() + (off + y * px + dy) * obs + off + x * px;
      std::fill(row, row + px, v);
    }
  };
  const std::size_t room = state_.agent.room;
  for (std::size_t y = 0; y < s; ++y) {
    for (std::size_t x = 0; x < s; ++x) {
      float v = shade::floor;
      switch (l.at(room, x, y)) {
        case Cell::floor: break;
        case Cell::key: break;
        case Cell::wall: v = shade::wall; break;
        case Cell::hazard: v = shade::hazard; break;
        case Cell::goal: v = (state_.goal_collected && !l.config.repeatable_reward) ? shade::floor : shade::goal; break;
        case Cell::door: v = shade::door; break;
        case Cell::locked_door: {
          const auto& door = l.doors[l.door_at(room, x, y)];
          v = state_.link_open[door.link] ? shade::door : shade::locked_door;
          break;
        }
      }
      if (v != shade::floor) paint(x, y, v);
    }
  }
  for (std::size_t k = 0; k < l.keys.size(); ++k) {
    if (!state_.key_taken[k] && l.keys[k].room == room) paint(l.keys[k].x, l.keys[k].y, shade::key);
  }
  if (l.config.blinker && state_.blink_on[room]) paint(l.blinkers[room].x, l.blinkers[room].y, shade::blink);
  paint(state_.agent.x, state_.agent.y, shade::agent);
  for (std::size_t k = 0; k < std::min(state_.keys_held, s - 2); ++k) paint(1 + k, 0, shade::key);
}

Tensor World::observe() const {
  const std::size_t obs = layout_->config.obs_size;
  Tensor t({1, obs, obs});
  render_into(t.values());
  return t;
}

nlohmann::json World::save_state() const {
  std::ostringstream rng;
  rng << rng_;
  return {{"room", state_.agent.room},
          {"x", state_.agent.x},
          {"y", state_.agent.y},
          {"keys_held", state_.keys_held},
          {"key_taken", state_.key_taken},
          {"link_open", state_.link_open},
          {"visited", state_.visited},
          {"blink_on", state_.blink_on},
          {"steps", state_.steps},
          {"goal_collected", state_.goal_collected},
          {"done", state_.done},
          {"rng", rng.str()}};
}

void World::load_state(const nlohmann::json& j) {
  EpisodeState s;
  s.agent = {j.at("room"), j.at("x"), j.at("y")};
  s.keys_held = j.at("keys_held");
  s.key_taken = j.at("key_taken").get<std::vector<bool>>();
  s.link_open = j.at("link_open").get<std::vector<bool>>();
  s.visited = j.at("visited").get<std::vector<bool>>();
  s.blink_on = j.at("blink_on").get<std::vector<bool>>();
  s.steps = j.at("steps");
  s.goal_collected = j.at("goal_collected");
  s.done = j.at("done");
  const auto& l = *layout_;
  if (s.key_taken.size() != l.keys.size() || s.link_open.size() != l.links || s.visited.size() != l.config.rooms ||
      s.blink_on.size() != l.config.rooms || s.agent.room >= l.config.rooms) {
    throw LoadError("world state does not match layout");
  }
  std::istringstream rng(j.at("rng").get<std::string>());
  std::mt19937_64 r;
  rng >> r;
  if (!rng) throw LoadError("malformed world rng state");
  state_ = std::move(s);
  rng_ = r;
}

}  // namespace snd
