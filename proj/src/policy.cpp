#include "snd/policy.hpp"

#include <algorithm>
#include <cmath>

#include "snd/errors.hpp"

namespace snd {

PolicySpec default_policy_spec(const Shape& input_shape, std::size_t channels, std::size_t hidden,
                               std::size_t head_hidden, std::size_t actions) {
  PolicySpec spec;
  spec.trunk.input_shape = input_shape;
  spec.trunk.layers = {Conv2dSpec{channels, 4, 4, 0},     ActivationSpec{Activation::relu},
                       Conv2dSpec{2 * channels, 3, 2, 1}, ActivationSpec{Activation::relu},
                       DenseSpec{hidden},                 ActivationSpec{Activation::relu}};
  spec.head_hidden = head_hidden;
  spec.actions = actions;
  return spec;
}

namespace {

NetworkSpec head_spec(std::size_t in, std::size_t hidden, std::size_t out) {
  NetworkSpec s;
  s.input_shape = {in};
  if (hidden > 0) {
    s.layers = {DenseSpec{hidden}, ActivationSpec{Activation::relu}, DenseSpec{out}};
  } else {
    s.layers = {DenseSpec{out}};
  }
  return s;
}

}  // namespace

PolicyNet::PolicyNet(PolicySpec spec, std::uint64_t seed)
    : spec_(std::move(spec)),
      trunk_(spec_.trunk, spec_.gain, seed),
      actor_(head_spec(trunk_.output_features(), spec_.head_hidden, spec_.actions), spec_.gain, seed + 1),
      critic_(head_spec(trunk_.output_features(), spec_.head_hidden, 2), spec_.gain, seed + 2) {}

PolicyNet::Output PolicyNet::forward(const Tensor& obs) {
  const auto h = trunk_.forward(obs).output;
  const Tensor flat = h.reshaped({h.dim(0), h.stride0()});
  return {actor_.forward(flat).output, critic_.forward(flat).output};
}

PolicyNet::Output PolicyNet::evaluate(const Tensor& obs) const {
  const auto h = trunk_.evaluate(obs).output;
  const Tensor flat = h.reshaped({h.dim(0), h.stride0()});
  return {actor_.evaluate(flat).output, critic_.evaluate(flat).output};
}

PolicyNet::Grads PolicyNet::backward(const Tensor& dlogits, const Tensor& dvalues) {
  Grads g{{}, actor_.backward(dlogits), critic_.backward(dvalues)};
  Tensor dh = g.actor.input;
  for (std::size_t i = 0; i < dh.size(); ++i) dh[i] += g.critic.input[i];
  g.trunk = trunk_.backward(dh);
  return g;
}

double PolicyOptimizer::step(PolicyNet& policy, PolicyNet::Grads& grads, double max_norm) {
  std::vector<BasicTensor<float>>* groups[] = {&grads.trunk.params, &grads.actor.params, &grads.critic.params};
  double norm = 0.0;
  if (max_norm > 0.0) {
    norm = clip_grad_norm<float>(groups, max_norm);
  }
  for (auto* g : groups) {
    for (const auto& t : *g) {
      if (!t.all_finite()) throw NumericError("policy update: non-finite gradient");
    }
  }
  trunk_.step(policy.trunk(), grads.trunk);
  actor_.step(policy.actor(), grads.actor);
  critic_.step(policy.critic(), grads.critic);
  return norm;
}

std::vector<float> log_softmax_row(std::span<const float> logits) {
  double mx = -INFINITY;
  for (float v : logits) mx = std::max(mx, static_cast<double>(v));
  double sum = 0.0;
  for (float v : logits) sum += std::exp(v - mx);
  const double lse = mx + std::log(sum);
  std::vector<float> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = static_cast<float>(logits[i] - lse);
  return out;
}

std::vector<int> sample_actions(const Tensor& logits, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<int> actions(logits.dim(0));
  for (std::size_t n = 0; n < logits.dim(0); ++n) {
    const auto lp = log_softmax_row(logits.slice(n));
    const double u = unif(rng);
    double acc = 0.0;
    int chosen = static_cast<int>(lp.size()) - 1;
    for (std::size_t a = 0; a < lp.size(); ++a) {
      acc += std::exp(static_cast<double>(lp[a]));
      if (u < acc) {
        chosen = static_cast<int>(a);
        break;
      }
    }
    actions[n] = chosen;
  }
  return actions;
}

}  // namespace snd
