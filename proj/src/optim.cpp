#include "snd/optim.hpp"

#include <cmath>

#include "snd/errors.hpp"

namespace snd {

template <typename T>
void BasicAdam<T>::step(std::span<Param<T>> params, std::span<const BasicTensor<T>> grads) {
  if (params.size() != grads.size()) throw ContractError("adam: parameter/gradient count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].value.shape() != grads[i].shape()) throw ContractError("adam: shape mismatch for " + params[i].name);
    if (!grads[i].all_finite()) throw NumericError("adam: non-finite gradient for " + params[i].name);
  }
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.emplace_back(p.value.shape());
      v_.emplace_back(p.value.shape());
    }
  } else if (m_.size() != params.size()) {
    throw ContractError("adam: parameter list changed between steps");
  }
  ++steps_;
  const double t = static_cast<double>(steps_);
  const T b1 = static_cast<T>(config_.beta1), b2 = static_cast<T>(config_.beta2);
  const T c1 = static_cast<T>(1.0 - std::pow(config_.beta1, t));
  const T c2 = static_cast<T>(1.0 - std::pow(config_.beta2, t));
  const T lr = static_cast<T>(config_.lr), eps = static_cast<T>(config_.eps);
  for (std::size_t i = 0; i < params.size(); ++i) {
    T* w = params[i].value.data();
    T* m = m_[i].data();
    T* v = v_[i].data();
    const T* g = grads[i].data();
    for (std::size_t j = 0; j < grads[i].size(); ++j) {
      m[j] = b1 * m[j] + (T(1) - b1) * g[j];
      v[j] = b2 * v[j] + (T(1) - b2) * g[j] * g[j];
      const T mhat = m[j] / c1;
      const T vhat = v[j] / c2;
      w[j] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

template <typename T>
void BasicAdam<T>::restore(std::uint64_t steps, std::vector<BasicTensor<T>> m, std::vector<BasicTensor<T>> v) {
  if (m.size() != v.size()) throw ContractError("adam: moment count mismatch");
  steps_ = steps;
  m_ = std::move(m);
  v_ = std::move(v);
}

template <typename T>
double clip_grad_norm(std::span<std::vector<BasicTensor<T>>* const> groups, double max_norm) {
  double sq = 0.0;
  for (auto* group : groups) {
    for (const auto& g : *group) {
      for (T v : g.values()) sq += static_cast<double>(v) * static_cast<double>(v);
    }
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const T scale = static_cast<T>(max_norm / norm);
    for (auto* group : groups) {
      for (auto& g : *group) {
        for (T& v : g.values()) v *= scale;
      }
    }
  }
  return norm;
}

template class BasicAdam<float>;
template class BasicAdam<double>;
template double clip_grad_norm(std::span<std::vector<BasicTensor<float>>* const>, double);
template double clip_grad_norm(std::span<std::vector<BasicTensor<double>>* const>, double);

}  // namespace snd
