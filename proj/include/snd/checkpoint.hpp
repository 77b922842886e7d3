#pragma once

#include <filesystem>

#include <json.hpp>

#include "snd/experiment.hpp"

namespace snd {

inline constexpr int kCheckpointVersion = 1;

/// Writes <prefix>.json (manifest, RNG and environment state, blob size and
/// checksum) and <prefix>.bin (little-endian f32 parameters and optimizer
/// moments). Both files are written to temporaries and renamed into place.
void save_checkpoint(const Trainer& trainer, const std::filesystem::path& prefix, const nlohmann::json& extra = {});

/// Rebuilds a trainer for `config` and restores the checkpoint into it.
/// Throws LoadError on version mismatch, config mismatch, size or checksum
/// failure; nothing outside the returned object is touched.
Trainer load_checkpoint(const ExperimentConfig& config, const std::filesystem::path& prefix,
                        nlohmann::json* extra = nullptr);

/// Configuration recorded in a checkpoint (run.* keys other than the seed at defaults).
ExperimentConfig checkpoint_config(const std::filesystem::path& prefix);

/// Resolved config without the run.* keys that may differ between a run and its resumption.
std::string checkpoint_config_key(const ExperimentConfig& config);

}  // namespace snd
