#pragma once

#include <random>
#include <string>
#include <vector>

#include "snd/tensor.hpp"

namespace snd {

enum class AugScheme { noise, noise_tiles, noise_tiles_conv };

AugScheme parse_aug_scheme(const std::string& name);
std::string to_string(AugScheme scheme);

struct AugmentConfig {
  AugScheme scheme = AugScheme::noise;
  /// Uniform per-pixel noise drawn from [-noise, noise]; always applied.
  double noise = 0.2;
  std::vector<std::size_t> tile_sizes{1, 2, 4, 8, 12, 16};
  /// Chance that a sample goes through tile masking at all.
  double tile_prob = 0.5;
  /// Chance that each tile is zeroed once masking is active.
  double tile_drop = 0.5;
  /// Chance of the random 3x3 convolution.
  double conv_prob = 0.5;
  /// Clip the result to [0, 1].
  bool clip = true;
};

void validate(const AugmentConfig& config, std::size_t frame_size);

/// Per sample, in order: random 3x3 convolution (scheme permitting), tile
/// masking (scheme permitting), uniform noise, clipping. Input (N, C, H, W).
Tensor augment(const Tensor& batch, const AugmentConfig& config, std::mt19937_64& rng);

}  // namespace snd
