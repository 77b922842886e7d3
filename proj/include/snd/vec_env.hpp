#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include <json.hpp>

#include "snd/world.hpp"

namespace snd {

struct EnvInfo {
  std::size_t room_id = 0;
  std::size_t visited_rooms = 0;
  /// Set on the step that ended an episode; the fields below describe it.
  bool episode_end = false;
  float episode_return = 0.0f;
  std::size_t episode_length = 0;
};

struct VecStep {
  /// (E, stack, S, S) policy input; reset observation where an episode ended.
  Tensor obs;
  /// (E, 1, S, S) newest single frame, matching `obs`.
  Tensor frames;
  /// (E, 1, S, S) frame reached by the step; differs from `frames` only where an episode ended.
  Tensor terminal_frames;
  std::vector<float> rewards;
  std::vector<std::uint8_t> dones;
  std::vector<EnvInfo> infos;
};

/// E worlds over one layout, stepped in lockstep with auto-reset.
/// Instance i draws from its own RNG stream keyed by (seed, i).
class VecEnv {
 public:
  VecEnv(std::shared_ptr<const WorldLayout> layout, std::uint64_t seed, std::size_t instances,
         std::size_t frame_stack = 2, std::size_t workers = 1);

  std::size_t size() const { return worlds_.size(); }
  std::size_t frame_stack() const { return stack_; }
  std::size_t obs_size() const { return layout_->config.obs_size; }
  const WorldLayout& layout() const { return *layout_; }
  const World& world(std::size_t i) const { return worlds_.at(i); }

  Tensor observations() const;
  Tensor frames() const;
  std::vector<std::size_t> rooms() const;

  VecStep step(std::span<const int> actions);

  void set_workers(std::size_t workers) { workers_ = workers == 0 ? 1 : workers; }

  nlohmann::json save_state() const;
  void load_state(const nlohmann::json& j);

 private:
  void step_one(std::size_t i, int action, VecStep& out);
  void push_frame(std::size_t i);

  std::shared_ptr<const WorldLayout> layout_;
  std::size_t stack_;
  std::size_t workers_;
  std::vector<World> worlds_;
  std::vector<std::vector<float>> stacks_;
  std::vector<float> returns_;
  std::vector<std::size_t> lengths_;
};

std::uint64_t instance_seed(std::uint64_t seed, std::size_t index);

}  // namespace snd
