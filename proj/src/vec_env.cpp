#include "snd/vec_env.hpp"

#include <algorithm>
#include <random>
#include <thread>

#include "snd/errors.hpp"

namespace snd {

std::uint64_t instance_seed(std::uint64_t seed, std::size_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), 0x5eedu};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

VecEnv::VecEnv(std::shared_ptr<const WorldLayout> layout, std::uint64_t seed, std::size_t instances,
               std::size_t frame_stack, std::size_t workers)
    : layout_(std::move(layout)), stack_(frame_stack), workers_(workers == 0 ? 1 : workers) {
  if (instances == 0) throw ContractError("vec env needs at least one instance");
  if (frame_stack == 0) throw ContractError("frame stack must be >= 1");
  const std::size_t frame = obs_size() * obs_size();
  for (std::size_t i = 0; i < instances; ++i) {
    worlds_.emplace_back(layout_, instance_seed(seed, i));
    stacks_.emplace_back(stack_ * frame, 0.0f);
    push_frame(i);
  }
  returns_.assign(instances, 0.0f);
  lengths_.assign(instances, 0);
}

void VecEnv::push_frame(std::size_t i) {
  // Fresh episodes fill every slot with the first frame.
  const std::size_t frame = obs_size() * obs_size();
  auto& st = stacks_[i];
  const bool fresh = worlds_[i].state().steps == 0;
  if (fresh) {
    worlds_[i].render_into(std::span<float>(st).subspan(0, frame));
    for (std::size_t k = 1; k < stack_; ++k) std::copy_n(st.begin(), frame, st.begin() + k * frame);
  } else {
    std::copy(st.begin() + frame, st.end(), st.begin());
    worlds_[i].render_into(std::span<float>(st).subspan((stack_ - 1) * frame, frame));
  }
}

Tensor VecEnv::observations() const {
  const std::size_t s = obs_size();
  Tensor out({size(), stack_, s, s});
  for (std::size_t i = 0; i < size(); ++i) std::copy(stacks_[i].begin(), stacks_[i].end(), out.slice(i).begin());
  return out;
}

Tensor VecEnv::frames() const {
  const std::size_t s = obs_size(), frame = s * s;
  Tensor out({size(), 1, s, s});
  for (std::size_t i = 0; i < size(); ++i) {
    std::copy(stacks_[i].end() - static_cast<long>(frame), stacks_[i].end(), out.slice(i).begin());
  }
  return out;
}

std::vector<std::size_t> VecEnv::rooms() const {
  std::vector<std::size_t> r;
  for (const auto& w : worlds_) r.push_back(w.state().agent.room);
  return r;
}

void VecEnv::step_one(std::size_t i, int action, VecStep& out) {
  if (action < 0 || action >= kActionCount) throw ContractError("env " + std::to_string(i) + ": invalid action");
  const std::size_t frame = obs_size() * obs_size();
  World& w = worlds_[i];
  const StepOutcome r = w.step(static_cast<Action>(action));
  returns_[i] += r.reward;
  ++lengths_[i];
  EnvInfo info{r.info.room_id, r.info.visited_rooms, false, 0.0f, 0};
  push_frame(i);
  std::copy(stacks_[i].end() - static_cast<long>(frame), stacks_[i].end(), out.terminal_frames.slice(i).begin());
  if (r.done) {
    info.episode_end = true;
    info.episode_return = returns_[i];
    info.episode_length = lengths_[i];
    returns_[i] = 0.0f;
    lengths_[i] = 0;
    w.reset();
    push_frame(i);
  }
  std::copy(stacks_[i].begin(), stacks_[i].end(), out.obs.slice(i).begin());
  std::copy(stacks_[i].end() - static_cast<long>(frame), stacks_[i].end(), out.frames.slice(i).begin());
  out.rewards[i] = r.reward;
  out.dones[i] = r.done ? 1 : 0;
  out.infos[i] = info;
}

VecStep VecEnv::step(std::span<const int> actions) {
  if (actions.size() != size()) {
    throw ContractError("vec_step: expected " + std::to_string(size()) + " actions, got " + std::to_string(actions.size()));
  }
  const std::size_t s = obs_size();
  VecStep out{Tensor({size(), stack_, s, s}), Tensor({size(), 1, s, s}), Tensor({size(), 1, s, s}),
              std::vector<float>(size()), std::vector<std::uint8_t>(size()), std::vector<EnvInfo>(size())};
  const std::size_t workers = std::min(workers_, size());
  if (workers <= 1) {
    for (std::size_t i = 0; i < size(); ++i) step_one(i, actions[i], out);
    return out;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (std::size_t wk = 0; wk < workers; ++wk) {
    pool.emplace_back([&, wk] {
      try {
        for (std::size_t i = wk; i < size(); i += workers) step_one(i, actions[i], out);
      } catch (...) {
        errors[wk] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

nlohmann::json VecEnv::save_state() const {
  nlohmann::json worlds = nlohmann::json::array();
  for (const auto& w : worlds_) worlds.push_back(w.save_state());
  return {{"worlds", worlds}, {"stacks", stacks_}, {"returns", returns_}, {"lengths", lengths_}};
}

void VecEnv::load_state(const nlohmann::json& j) {
  const auto& worlds = j.at("worlds");
  if (worlds.size() != worlds_.size()) throw LoadError("vec env state has wrong instance count");
  auto stacks = j.at("stacks").get<std::vector<std::vector<float>>>();
  auto returns = j.at("returns").get<std::vector<float>>();
  auto lengths = j.at("lengths").get<std::vector<std::size_t>>();
  if (stacks.size() != worlds_.size() || returns.size() != worlds_.size() || lengths.size() != worlds_.size()) {
    throw LoadError("vec env state has inconsistent lengths");
  }
  for (const auto& st : stacks) {
    if (st.size() != stacks_[0].size()) throw LoadError("vec env frame stack has wrong size");
  }
  std::vector<World> restored = worlds_;
  for (std::size_t i = 0; i < restored.size(); ++i) restored[i].load_state(worlds[i]);
  worlds_ = std::move(restored);
  stacks_ = std::move(stacks);
  returns_ = std::move(returns);
  lengths_ = std::move(lengths);
}

}  // namespace snd
