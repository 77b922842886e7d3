#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "snd/tensor.hpp"

namespace snd {

/// Ordered recorded frames with the step each was seen at and its room.
struct StateLog {
  Tensor states;  // (K, 1, S, S)
  std::vector<std::uint64_t> steps;
  std::vector<std::uint32_t> rooms;

  std::size_t size() const { return steps.size(); }
  /// Throws ContractError unless steps strictly increase and all lengths agree.
  void validate() const;
  StateLog slice(std::size_t begin, std::size_t end) const;
};

void save_state_log(const StateLog& log, const std::filesystem::path& path);
StateLog load_state_log(const std::filesystem::path& path);

}  // namespace snd
