#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "snd/augment.hpp"
#include "snd/losses.hpp"
#include "snd/network.hpp"
#include "snd/optim.hpp"
#include "snd/running_stats.hpp"

namespace snd {

enum class Variant { none, rnd, snd_v, snd_std, snd_vic };

Variant parse_variant(const std::string& name);
std::string to_string(Variant v);

struct MotivationConfig {
  Variant variant = Variant::rnd;
  /// Single unstacked frame.
  Shape input_shape{1, 32, 32};
  std::size_t channels = 8;
  std::size_t feature_dim = 64;
  std::size_t predictor_hidden = 512;
  double target_lr = 1e-4;
  double predictor_lr = 1e-4;
  /// Defaults to sqrt(2) for RND and SND-V, 0.5 for SND-STD and SND-VIC.
  std::optional<double> target_gain;
  std::size_t batch_size = 256;
  /// Share of each rollout's transitions used for module training.
  double sample_fraction = 0.25;
  std::size_t epochs = 1;
  Preprocessing preprocessing = Preprocessing::none;
  AugmentConfig augment;
  SndvLoss sndv_loss = SndvLoss::mse;
  bool sndv_unsquared = false;
  /// Chance that an SND-V pair repeats its state (target distance 0).
  double pair_same_prob = 0.5;
  StdimWeights stdim;
  VicregWeights vicreg;
};

void validate(const MotivationConfig& config);
double target_gain(const MotivationConfig& config);

/// Conv(k4 s4) ELU Conv(k3 s2 p1) ELU Dense(D); the second conv activation is the local layer.
NetworkSpec target_spec(const MotivationConfig& config);
/// Same convolutions followed by two hidden dense layers before the D outputs.
NetworkSpec predictor_spec(const MotivationConfig& config);

struct MotivationLosses {
  double predictor = 0.0;
  double target = NAN;
  double invariance = NAN;
  double variance = NAN;
  double covariance = NAN;
  double gl = NAN;
  double ll = NAN;
  double logit_norm = NAN;
  double sigma = NAN;
};

struct SndvBatch {
  Tensor s;
  Tensor s2;
  std::vector<float> tau;
};

class MotivationModule {
 public:
  MotivationModule(MotivationConfig config, std::uint64_t seed);

  const MotivationConfig& config() const { return config_; }
  Variant variant() const { return config_.variant; }

  Network& target() { return target_; }
  Network& predictor() { return predictor_; }
  const Network& target() const { return target_; }
  const Network& predictor() const { return predictor_; }
  Adam& target_optimizer() { return target_opt_; }
  Adam& predictor_optimizer() { return predictor_opt_; }
  Adam& projection_optimizer() { return proj_opt_; }
  /// Bias-free W_g (D x C) and W_l (C x C) used by SND-STD.
  std::vector<Param<float>>& projections() { return projections_; }
  const std::vector<Param<float>>& projections() const { return projections_; }
  RunningStats& obs_stats() { return obs_stats_; }
  const RunningStats& obs_stats() const { return obs_stats_; }
  std::mt19937_64& sample_rng() { return sample_rng_; }
  std::mt19937_64& aug_rng() { return aug_rng_; }

  /// Folds raw frames into the observation statistics (no-op for mode none).
  void observe(const Tensor& frames);
  /// Applies the configured preprocessing with the current statistics.
  Tensor prepare(const Tensor& frames) const;

  /// ||target(s) - predictor(s)||^2 per row of a prepared batch.
  std::vector<float> intrinsic_reward(const Tensor& states) const;

  /// One Adam step on the predictor; returns the loss before the step.
  double predictor_update(const Tensor& states);
  /// Random pairing plus independent augmentation of both members.
  SndvBatch make_sndv_batch(const Tensor& states);
  PairLoss<float> sndv_target_update(const SndvBatch& batch);
  StdimLoss<float> stdim_target_update(const Tensor& states, const Tensor& next_states);
  VicregLoss<float> vicreg_target_update(const Tensor& states, const Tensor& next_states);

  /// Predictor step and the variant's target step on one prepared minibatch of consecutive pairs.
  MotivationLosses train_step(const Tensor& states, const Tensor& next_states);

  /// Samples a share of the rollout's (frame, next frame) pairs and trains on
  /// them in minibatches. Returns losses averaged over minibatches.
  MotivationLosses module_update(const Tensor& frames, const Tensor& next_frames);

  nlohmann::json manifest() const;
  /// Parameters, projection matrices and optimizer moments in a fixed order.
  void append_blob(std::vector<float>& blob) const;
  void restore(const nlohmann::json& manifest, const std::vector<float>& blob, std::size_t& offset);

 private:
  void check_input(const Tensor& states, const char* what) const;

  MotivationConfig config_;
  std::uint64_t seed_;
  Network target_;
  Network predictor_;
  Adam target_opt_;
  Adam predictor_opt_;
  Adam proj_opt_;
  std::vector<Param<float>> projections_;
  RunningStats obs_stats_;
  std::mt19937_64 sample_rng_;
  std::mt19937_64 aug_rng_;
};

}  // namespace snd
