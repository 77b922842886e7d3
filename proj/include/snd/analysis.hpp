#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "snd/motivation.hpp"
#include "snd/state_log.hpp"
#include "snd/tensor.hpp"

namespace snd {

struct ProbeConfig {
  /// Total module updates.
  std::size_t train_steps = 2000;
  std::size_t batch_size = 64;
  /// States per horizon per evaluation.
  std::size_t eval_batch = 256;
  /// Updates between evaluations (fixed position) or log stride between positions (advancing).
  std::size_t eval_every = 100;
  std::size_t near_window = 128;
  /// Train only on [0, n) for this n; otherwise n advances by `near_window`
  /// through the log with the updates spread evenly over positions.
  std::optional<std::size_t> fixed_position;
  std::uint64_t seed = 0;
};

struct ProbeRow {
  std::size_t update = 0;
  std::size_t position = 0;
  /// NaN where the horizon is empty at this position.
  double past = 0.0;
  double near_future = 0.0;
  double far_future = 0.0;
  double random = 0.0;
};

struct ProbeReport {
  std::vector<ProbeRow> rows;
  std::string to_csv() const;
};

/// Trains a module on past log states only (consecutive pairs m, m+1 < n)
/// and scores mean intrinsic reward on each horizon.
ProbeReport novelty_probe(MotivationModule& module, const StateLog& log, const ProbeConfig& config);

/// Euclidean distance between every pair of rows; row-major K x K.
std::vector<double> distance_matrix(const std::vector<std::vector<double>>& items);
std::vector<double> distance_matrix(const Tensor& items);

struct SpectrumReport {
  /// Descending, negatives from round-off clamped to 0.
  std::vector<double> eigenvalues;
  double l2_mean = 0.0;
  double l2_std = 0.0;
  double q25 = 0.0;
  double q50 = 0.0;
  double q75 = 0.0;
  double q95 = 0.0;
  /// Fewer samples than dimensions.
  bool underdetermined = false;

  std::string eigenvalues_csv() const;
  std::string summary_csv() const;
};

/// Linear interpolation between order statistics of an ascending list.
double percentile(const std::vector<double>& ascending, double q);

SpectrumReport pca_spectrum(const TensorD& features);
SpectrumReport pca_spectrum(const Tensor& features);

struct Projection2d {
  TensorD coords;  // (N, 2)
  std::vector<std::uint32_t> labels;
  /// Eigenvalues of the covariance, descending.
  std::vector<double> eigenvalues;
};

Projection2d pca_project2d(const TensorD& features, std::vector<std::uint32_t> labels = {});

/// Target-network output for every state of a prepared batch, in chunks.
Tensor target_features(const MotivationModule& module, const Tensor& states, std::size_t chunk = 512);

}  // namespace snd
