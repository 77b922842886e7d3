#include "snd/augment.hpp"

#include <algorithm>
#include <cmath>

#include "snd/errors.hpp"

namespace snd {

AugScheme parse_aug_scheme(const std::string& name) {
  if (name == "noise") return AugScheme::noise;
  if (name == "noise+tiles") return AugScheme::noise_tiles;
  if (name == "noise+tiles+randconv") return AugScheme::noise_tiles_conv;
  throw ContractError("unknown augmentation scheme '" + name + "' (noise | noise+tiles | noise+tiles+randconv)");
}

std::string to_string(AugScheme scheme) {
  switch (scheme) {
    case AugScheme::noise: return "noise";
    case AugScheme::noise_tiles: return "noise+tiles";
    case AugScheme::noise_tiles_conv: return "noise+tiles+randconv";
  }
  return "noise";
}

void validate(const AugmentConfig& c, std::size_t frame_size) {
  auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (!prob(c.tile_prob) || !prob(c.tile_drop) || !prob(c.conv_prob)) {
    throw ContractError("augmentation probabilities must lie in [0, 1]");
  }
  if (c.noise < 0.0) throw ContractError("augmentation noise range must be >= 0");
  if (c.tile_sizes.empty()) throw ContractError("augmentation needs at least one tile size");
  for (auto t : c.tile_sizes) {
    if (t == 0 || t > frame_size) {
      throw ContractError("tile size " + std::to_string(t) + " outside [1, " + std::to_string(frame_size) + "]");
    }
  }
}

namespace {

void random_conv(std::span<float> img, std::size_t channels, std::size_t h, std::size_t w, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  double k[9];
  double norm = 0.0;
  for (double& v : k) {
    v = normal(rng);
    norm += v * v;
  }
  norm = std::sqrt(norm);
  for (double& v : k) v /= norm;
  std::vector<float> src(img.begin(), img.end());
  for (std::size_t c = 0; c < channels; ++c) {
    const float* in = src.data() + c * h * w;
    float* out = img.data() + c * h * w;
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        double acc = 0.0;
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const auto yy = static_cast<std::ptrdiff_t>(y) + dy;
            const auto xx = static_cast<std::ptrdiff_t>(x) + dx;
            if (yy < 0 || xx < 0 || yy >= static_cast<std::ptrdiff_t>(h) || xx >= static_cast<std::ptrdiff_t>(w)) {
              continue;
            }
            acc += k[(dy + 1) * 3 + dx + 1] * in[yy * static_cast<std::ptrdiff_t>(w) + xx];
          }
        }
        out[y * w + x] = static_cast<float>(acc);
      }
    }
  }
}

void tile_mask(std::span<float> img, std::size_t channels, std::size_t h, std::size_t w, std::size_t tile,
               double drop, std::mt19937_64& rng) {
  std::bernoulli_distribution coin(drop);
  for (std::size_t ty = 0; ty < h; ty += tile) {
    for (std::size_t tx = 0; tx < w; tx += tile) {
      if (!coin(rng)) continue;
      for (std::size_t c = 0; c < channels; ++c)
        for (std::size_t y = ty; y < std::min(h, ty + tile); ++y)
          for (std::size_t x = tx; x < std::min(w, tx + tile); ++x) img[(c * h + y) * w + x] = 0.0f;
    }
  }
}

}  // namespace

Tensor augment(const Tensor& batch, const AugmentConfig& config, std::mt19937_64& rng) {
  if (batch.rank() != 4) throw ContractError("augment: expected (N, C, H, W), got " + shape_string(batch.shape()));
  const std::size_t n = batch.dim(0), channels = batch.dim(1), h = batch.dim(2), w = batch.dim(3);
  Tensor out = batch;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> pick(0, config.tile_sizes.empty() ? 0 : config.tile_sizes.size() - 1);
  const bool tiles = config.scheme != AugScheme::noise && !config.tile_sizes.empty();
  const bool conv = config.scheme == AugScheme::noise_tiles_conv;
  for (std::size_t s = 0; s < n; ++s) {
    auto img = out.slice(s);
    if (conv && unif(rng) < config.conv_prob) random_conv(img, channels, h, w, rng);
    if (tiles && unif(rng) < config.tile_prob) {
      tile_mask(img, channels, h, w, config.tile_sizes[pick(rng)], config.tile_drop, rng);
    }
    if (config.noise > 0.0) {
      std::uniform_real_distribution<double> noise(-config.noise, config.noise);
      for (float& v : img) v = static_cast<float>(v + noise(rng));
    }
    if (config.clip) {
      for (float& v : img) v = std::clamp(v, 0.0f, 1.0f);
    }
  }
  return out;
}

}  // namespace snd
