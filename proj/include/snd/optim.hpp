#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "snd/network.hpp"

namespace snd {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam over an ordered parameter list.
template <typename T>
class BasicAdam {
 public:
  explicit BasicAdam(AdamConfig config = {}) : config_(config) {}

  /// Rejects the whole update (no parameter touched) if any gradient is non-finite.
  void step(std::span<Param<T>> params, std::span<const BasicTensor<T>> grads);
  void step(BasicNetwork<T>& net, const Gradients<T>& grads) { step(net.parameters(), grads.params); }

  AdamConfig& config() { return config_; }
  const AdamConfig& config() const { return config_; }
  std::uint64_t steps() const { return steps_; }

  std::vector<BasicTensor<T>>& first_moments() { return m_; }
  std::vector<BasicTensor<T>>& second_moments() { return v_; }
  const std::vector<BasicTensor<T>>& first_moments() const { return m_; }
  const std::vector<BasicTensor<T>>& second_moments() const { return v_; }
  void restore(std::uint64_t steps, std::vector<BasicTensor<T>> m, std::vector<BasicTensor<T>> v);

 private:
  AdamConfig config_;
  std::uint64_t steps_ = 0;
  std::vector<BasicTensor<T>> m_;
  std::vector<BasicTensor<T>> v_;
};

using Adam = BasicAdam<float>;

/// Scales every gradient in place so that the joint L2 norm is at most
/// `max_norm`; returns the norm before clipping.
template <typename T>
double clip_grad_norm(std::span<std::vector<BasicTensor<T>>* const> groups, double max_norm);

}  // namespace snd
