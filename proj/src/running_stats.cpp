#include "snd/running_stats.hpp"

#include <algorithm>
#include <cmath>

#include "snd/errors.hpp"

namespace snd {

RunningStats::RunningStats(std::size_t dim) : mean_(dim, 0.0), m2_(dim, 0.0) {}

void RunningStats::update(std::span<const float> sample) {
  if (sample.size() != mean_.size()) throw ContractError("running stats: sample size mismatch");
  ++count_;
  const double n = static_cast<double>(count_);
  for (std::size_t i = 0; i < mean_.size(); ++i) {
    const double x = sample[i];
    const double delta = x - mean_[i];
    mean_[i] += delta / n;
    m2_[i] += delta * (x - mean_[i]);
  }
}

void RunningStats::update_batch(const Tensor& batch) {
  for (std::size_t n = 0; n < batch.dim(0); ++n) update(batch.slice(n));
}

std::vector<double> RunningStats::variance() const {
  std::vector<double> v(m2_.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = variance(i);
  return v;
}

nlohmann::json RunningStats::save() const { return {{"count", count_}, {"mean", mean_}, {"m2", m2_}}; }

RunningStats RunningStats::load(const nlohmann::json& j) {
  RunningStats s;
  s.count_ = j.at("count").get<std::uint64_t>();
  s.mean_ = j.at("mean").get<std::vector<double>>();
  s.m2_ = j.at("m2").get<std::vector<double>>();
  if (s.mean_.size() != s.m2_.size()) throw LoadError("running stats: mean/m2 length mismatch");
  return s;
}

Preprocessing parse_preprocessing(const std::string& name) {
  if (name == "normalize") return Preprocessing::normalize;
  if (name == "mean_subtract") return Preprocessing::mean_subtract;
  if (name == "none") return Preprocessing::none;
  throw ContractError("unknown preprocessing mode '" + name + "'");
}

std::string to_string(Preprocessing mode) {
  switch (mode) {
    case Preprocessing::normalize: return "normalize";
    case Preprocessing::mean_subtract: return "mean_subtract";
    case Preprocessing::none: return "none";
  }
  return "none";
}

Tensor preprocess(const Tensor& batch, Preprocessing mode, const RunningStats& stats) {
  if (mode == Preprocessing::none) return batch;
  if (stats.count() == 0) throw StateError("preprocess: running statistics are empty");
  if (batch.stride0() != stats.dim()) throw ContractError("preprocess: observation size does not match statistics");
  Tensor out = batch;
  const std::size_t d = stats.dim();
  std::vector<float> mean(d), inv_std(d);
  for (std::size_t i = 0; i < d; ++i) {
    mean[i] = static_cast<float>(stats.mean()[i]);
    inv_std[i] = static_cast<float>(1.0 / std::max(std::sqrt(stats.variance(i)), 1e-8));
  }
  for (std::size_t n = 0; n < batch.dim(0); ++n) {
    auto row = out.slice(n);
    for (std::size_t i = 0; i < d; ++i) {
      const float c = row[i] - mean[i];
      row[i] = mode == Preprocessing::mean_subtract ? c : std::clamp(c * inv_std[i], -5.0f, 5.0f);
    }
  }
  return out;
}

}  // namespace snd
