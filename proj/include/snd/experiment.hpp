#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "snd/config.hpp"
#include "snd/motivation.hpp"
#include "snd/policy.hpp"
#include "snd/ppo.hpp"
#include "snd/state_log.hpp"
#include "snd/vec_env.hpp"

namespace snd {

extern const char* const kCodeVersion;

/// One row per update. Quantities with no data this update are NaN.
struct MetricsRow {
  std::uint64_t step = 0;
  std::uint64_t update = 0;
  std::uint64_t episodes = 0;
  double episode_return_ext_mean = NAN;
  double episode_return_ext_std = NAN;
  double rooms_visited_mean = NAN;
  double rooms_visited_max = NAN;
  double r_intr_mean = NAN;
  double r_intr_std = NAN;
  MotivationLosses motivation;
  PpoMetrics ppo;
};

std::string metrics_header();
std::string format_metrics(const MetricsRow& row);

/// Whole-run aggregates written to summary.json.
struct RunSummary {
  std::uint64_t steps = 0;
  std::uint64_t updates = 0;
  std::uint64_t episodes = 0;
  double mean_return = 0.0;
  double max_return = 0.0;
  double mean_rooms = 0.0;
  double max_rooms = 0.0;
  /// Distinct rooms entered by any environment instance.
  std::size_t coverage = 0;
  std::size_t rooms_total = 0;
  /// Episodes that collected extrinsic reward.
  std::uint64_t rewarded_episodes = 0;

  nlohmann::json to_json() const;
  static RunSummary from_json(const nlohmann::json& j);
};

/// Full mutable training state: environments, policy, optional motivation
/// module, RNG streams and run aggregates.
class Trainer {
 public:
  explicit Trainer(ExperimentConfig config);

  const ExperimentConfig& config() const { return config_; }
  ExperimentConfig& mutable_config() { return config_; }
  std::uint64_t steps() const { return step_; }
  std::uint64_t updates() const { return update_; }
  std::uint64_t planned_updates() const;
  bool finished() const { return update_ >= planned_updates(); }

  /// Collect a rollout, train the motivation module, compute advantages, run PPO.
  MetricsRow update();

  RunSummary summary() const;
  /// Stochastic rollout of the current policy in one fresh environment instance.
  StateLog record_state_log(std::size_t frames, std::uint64_t seed) const;

  PolicyNet& policy() { return policy_; }
  const PolicyNet& policy() const { return policy_; }
  MotivationModule* motivation() { return motivation_ ? &*motivation_ : nullptr; }
  const MotivationModule* motivation() const { return motivation_ ? &*motivation_ : nullptr; }
  const VecEnv& envs() const { return venv_; }
  const WorldLayout& layout() const { return *layout_; }

  /// Manifest plus little-endian payload; see checkpoint.hpp for the file format.
  nlohmann::json checkpoint_manifest(std::vector<float>& blob) const;
  void restore_checkpoint(const nlohmann::json& manifest, std::span<const float> blob);

 private:
  ExperimentConfig config_;
  std::shared_ptr<const WorldLayout> layout_;
  VecEnv venv_;
  PolicyNet policy_;
  PolicyOptimizer policy_opt_;
  std::optional<MotivationModule> motivation_;
  RunningStats reward_stats_;
  std::mt19937_64 agent_rng_;
  std::uint64_t step_ = 0;
  std::uint64_t update_ = 0;

  std::uint64_t episodes_ = 0;
  std::uint64_t rewarded_ = 0;
  double return_sum_ = 0.0;
  double return_max_ = 0.0;
  double rooms_sum_ = 0.0;
  double rooms_max_ = 0.0;
  std::vector<std::uint8_t> coverage_;
};

struct RunOptions {
  /// Checkpoint prefix to continue from.
  std::optional<std::filesystem::path> resume;
  /// Stop after this many updates in this invocation (the run stays resumable).
  std::optional<std::uint64_t> max_updates;
  bool quiet = false;
};

/// Runs to completion into config.run.out: config.txt, version.txt,
/// layout.json, metrics.csv, checkpoint.{json,bin}, summary.json, state_log.f32.
/// Returns the summary; failures save checkpoint-failed.* and rethrow.
RunSummary run_experiment(const ExperimentConfig& config, const RunOptions& options = {});

/// True when `dir` holds a finished run of exactly this resolved config.
bool run_is_complete(const std::filesystem::path& dir, const ExperimentConfig& config);

/// Runs seeds [first, last] under out/seed-<n>, `jobs` at a time, reusing
/// finished runs with an identical resolved config.
std::vector<RunSummary> sweep(const ExperimentConfig& config, std::uint64_t first, std::uint64_t last,
                              std::size_t jobs, bool quiet = true);

}  // namespace snd
