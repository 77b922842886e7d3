#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "snd/motivation.hpp"
#include "snd/ppo.hpp"
#include "snd/world.hpp"

namespace snd {

struct EnvConfig {
  /// Layout seed; the world map is fixed per value.
  std::uint64_t seed = 1;
  WorldConfig world;
  std::size_t envs = 16;
  std::size_t frame_stack = 2;
  std::size_t workers = 1;
};

struct PolicyConfig {
  std::size_t channels = 8;
  std::size_t hidden = 128;
  std::size_t head_hidden = 64;
};

struct RunConfig {
  std::uint64_t total_steps = 2'000'000;
  std::uint64_t seed = 0;
  std::string out = "runs/default";
  /// Updates between checkpoints (0: only the final one).
  std::uint64_t checkpoint_interval = 100;
  /// Updates between progress lines and coverage snapshots.
  std::uint64_t eval_interval = 50;
  /// Frames recorded by the final-policy rollout for analysis.
  std::size_t state_log_size = 2048;
};

struct ExperimentConfig {
  EnvConfig env;
  PpoConfig agent;
  PolicyConfig policy;
  MotivationConfig motivation;
  RunConfig run;
};

/// Throws ContractError naming the offending field.
void validate(const ExperimentConfig& config);

/// Parses flat `section.key = value` lines ('#' starts a comment) over the
/// defaults. Unknown keys, malformed values and out-of-range values raise
/// LoadError naming the key and line.
ExperimentConfig parse_config(const std::string& text, const std::string& origin = "<config>");
ExperimentConfig load_config(const std::filesystem::path& path);

/// Applies one `key = value` override (same rules as a config line).
void set_config_value(ExperimentConfig& config, const std::string& key, const std::string& value);

/// Every key with its resolved value, in a stable order; parses back to the same config.
std::string resolved_config(const ExperimentConfig& config);

}  // namespace snd
