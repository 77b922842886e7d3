#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include <json.hpp>

#include "snd/network.hpp"
#include "snd/optim.hpp"

namespace snd {

/// Shared trunk feeding an actor head (action logits) and a two-output
/// critic head (extrinsic and intrinsic value).
struct PolicySpec {
  NetworkSpec trunk;
  std::size_t head_hidden = 64;
  std::size_t actions = 6;
  double gain = std::sqrt(2.0);
};

/// Conv trunk over stacked frames, ReLU throughout.
PolicySpec default_policy_spec(const Shape& input_shape, std::size_t channels, std::size_t hidden,
                               std::size_t head_hidden, std::size_t actions);

class PolicyNet {
 public:
  struct Output {
    Tensor logits;  // (N, A)
    Tensor values;  // (N, 2): extrinsic, intrinsic
  };
  struct Grads {
    Gradients<float> trunk;
    Gradients<float> actor;
    Gradients<float> critic;
  };

  PolicyNet(PolicySpec spec, std::uint64_t seed);

  const PolicySpec& spec() const { return spec_; }
  std::size_t actions() const { return spec_.actions; }

  Output forward(const Tensor& obs);
  Output evaluate(const Tensor& obs) const;
  Grads backward(const Tensor& dlogits, const Tensor& dvalues);

  Network& trunk() { return trunk_; }
  Network& actor() { return actor_; }
  Network& critic() { return critic_; }
  const Network& trunk() const { return trunk_; }
  const Network& actor() const { return actor_; }
  const Network& critic() const { return critic_; }

 private:
  PolicySpec spec_;
  Network trunk_;
  Network actor_;
  Network critic_;
};

/// One Adam per sub-network with a joint gradient-norm clip.
class PolicyOptimizer {
 public:
  explicit PolicyOptimizer(AdamConfig config = {}) : trunk_(config), actor_(config), critic_(config) {}

  /// Clips the joint norm to `max_norm` (when > 0) and applies the step.
  /// Returns the pre-clip norm.
  double step(PolicyNet& policy, PolicyNet::Grads& grads, double max_norm);

  Adam& trunk() { return trunk_; }
  Adam& actor() { return actor_; }
  Adam& critic() { return critic_; }
  const Adam& trunk() const { return trunk_; }
  const Adam& actor() const { return actor_; }
  const Adam& critic() const { return critic_; }

 private:
  Adam trunk_;
  Adam actor_;
  Adam critic_;
};

/// Samples one action per row of logits by inverse CDF on a uniform draw.
std::vector<int> sample_actions(const Tensor& logits, std::mt19937_64& rng);
std::vector<float> log_softmax_row(std::span<const float> logits);

}  // namespace snd
