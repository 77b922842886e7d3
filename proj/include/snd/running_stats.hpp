#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "snd/tensor.hpp"

namespace snd {

/// Per-element Welford accumulator (population variance).
class RunningStats {
 public:
  explicit RunningStats(std::size_t dim = 1);

  void update(std::span<const float> sample);
  /// Each leading-index slice of `batch` is one sample, folded in order.
  void update_batch(const Tensor& batch);

  std::size_t dim() const { return mean_.size(); }
  std::uint64_t count() const { return count_; }
  const std::vector<double>& mean() const { return mean_; }
  std::vector<double> variance() const;
  double variance(std::size_t i) const { return count_ ? m2_[i] / static_cast<double>(count_) : 0.0; }

  nlohmann::json save() const;
  static RunningStats load(const nlohmann::json& j);

 private:
  std::vector<double> mean_;
  std::vector<double> m2_;
  std::uint64_t count_ = 0;
};

enum class Preprocessing { normalize, mean_subtract, none };

Preprocessing parse_preprocessing(const std::string& name);
std::string to_string(Preprocessing mode);

/// Pure function of (observation batch, mode, statistics snapshot).
/// normalize: (x - mean) / max(std, 1e-8) clipped to [-5, 5];
/// mean_subtract: x - mean; none: x unchanged.
Tensor preprocess(const Tensor& batch, Preprocessing mode, const RunningStats& stats);

}  // namespace snd
