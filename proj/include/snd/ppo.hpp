#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "snd/policy.hpp"
#include "snd/running_stats.hpp"
#include "snd/vec_env.hpp"

namespace snd {

class MotivationModule;

enum class AdvantageNorm {
  /// Weighted sum of raw stream advantages, standardized once per minibatch.
  combined,
  /// Each stream standardized per minibatch, then weighted.
  per_stream,
};

AdvantageNorm parse_advantage_norm(const std::string& name);
std::string to_string(AdvantageNorm mode);

struct PpoConfig {
  double gamma_ext = 0.998;
  double gamma_intr = 0.99;
  double gae_lambda = 0.95;
  double clip = 0.1;
  double entropy_coef = 0.001;
  std::size_t epochs = 4;
  double grad_clip = 0.5;
  double adv_ext_coef = 2.0;
  double adv_intr_coef = 1.0;
  double eta = 0.5;
  double lr = 1e-4;
  std::size_t minibatches = 4;
  double value_coef = 0.5;
  std::size_t rollout_length = 128;
  bool episodic_intrinsic = false;
  bool normalize_intrinsic = true;
  AdvantageNorm advantage_norm = AdvantageNorm::combined;
};

void validate(const PpoConfig& config);

/// r = r_ext + eta * r_intr.
double combine_reward(double r_ext, double r_intr, double eta);

/// T steps x E envs, flattened with index t * E + e.
struct RolloutBuffer {
  RolloutBuffer() = default;
  RolloutBuffer(std::size_t steps, std::size_t envs, const Shape& state_shape, const Shape& frame_shape);

  std::size_t steps = 0;
  std::size_t envs = 0;
  std::size_t size() const { return steps * envs; }

  Tensor states;       // (T*E, stack, S, S) policy input
  Tensor frames;       // (T*E, 1, S, S) frame the action was taken from
  Tensor next_frames;  // (T*E, 1, S, S) frame reached; terminal frame when done
  std::vector<int> actions;
  std::vector<float> log_probs;
  std::vector<float> v_ext;
  std::vector<float> v_intr;
  std::vector<float> r_ext;
  /// Scaled intrinsic reward used for learning.
  std::vector<float> r_intr;
  /// Raw distillation error before normalization and scaling.
  std::vector<float> r_intr_raw;
  std::vector<std::uint8_t> dones;
  /// Room the agent occupies after each transition.
  std::vector<std::uint32_t> rooms;
  std::vector<float> boot_ext;   // (E) values of the state after step T
  std::vector<float> boot_intr;

  std::vector<float> adv_ext;
  std::vector<float> adv_intr;
  std::vector<float> ret_ext;
  std::vector<float> ret_intr;
  bool advantages_ready = false;

  std::vector<EnvInfo> finished;  // infos of episodes that ended during collection
};

void compute_gae(RolloutBuffer& buffer, const PpoConfig& config);

/// Single-stream GAE over one env's trajectory, accumulated in double.
std::vector<double> gae(std::span<const float> rewards, std::span<const float> values,
                        std::span<const std::uint8_t> dones, double bootstrap, double gamma, double lambda,
                        bool mask_dones);

struct PpoLossConfig {
  double clip = 0.1;
  double entropy_coef = 0.001;
  double value_coef = 0.5;
};

template <typename T>
struct PpoLoss {
  double loss = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double clip_frac = 0.0;
  BasicTensor<T> dlogits;
  BasicTensor<T> dvalues;
};

/// Clipped surrogate + squared-error value regression on both heads - entropy bonus,
/// all averaged over the batch. `values` has two columns (extrinsic, intrinsic).
template <typename T>
PpoLoss<T> ppo_loss(const BasicTensor<T>& logits, const BasicTensor<T>& values, std::span<const int> actions,
                    std::span<const float> old_log_probs, std::span<const double> advantages,
                    std::span<const float> ret_ext, std::span<const float> ret_intr, const PpoLossConfig& config);

struct PpoMetrics {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double clip_frac = 0.0;
};

PpoMetrics ppo_update(PolicyNet& policy, PolicyOptimizer& optimizer, const RolloutBuffer& buffer,
                      const PpoConfig& config, std::mt19937_64& rng);

/// Runs config.rollout_length lockstep steps. With a motivation module, observation statistics
/// are updated and raw intrinsic rewards are normalized by `reward_stats`
/// (when enabled) and scaled by eta.
RolloutBuffer collect_rollout(VecEnv& venv, const PolicyNet& policy, MotivationModule* motivation,
                              RunningStats& reward_stats, const PpoConfig& config, std::mt19937_64& rng);

}  // namespace snd
