#include "snd/experiment.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <mutex>
#include <thread>

#include "snd/checkpoint.hpp"
#include "snd/errors.hpp"
#include "snd/seeding.hpp"
#include "snd/serialize.hpp"

#ifndef SNDLAB_VERSION
#define SNDLAB_VERSION "unknown"
#endif

namespace snd {

const char* const kCodeVersion = SNDLAB_VERSION;

namespace {

enum Stream : std::uint64_t { policy_stream = 10, env_stream = 11, motivation_stream = 12, agent_stream = 13,
                              log_stream = 14 };

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

void mean_std(const std::vector<double>& xs, double& mean, double& sd) {
  if (xs.empty()) {
    mean = sd = NAN;
    return;
  }
  double s = 0.0;
  for (double x : xs) s += x;
  mean = s / static_cast<double>(xs.size());
  double v = 0.0;
  for (double x : xs) v += (x - mean) * (x - mean);
  sd = std::sqrt(v / static_cast<double>(xs.size()));
}

}  // namespace

std::string metrics_header() {
  return "step,update,episodes,episode_return_ext_mean,episode_return_ext_std,rooms_visited_mean,"
         "rooms_visited_max,r_intr_mean,r_intr_std,predictor_loss,target_loss,invariance,variance,covariance,gl,"
         "ll,logit_norm,sigma,policy_loss,value_loss,entropy,clip_frac\n";
}

std::string format_metrics(const MetricsRow& r) {
  std::string out = std::to_string(r.step) + ',' + std::to_string(r.update) + ',' + std::to_string(r.episodes);
  for (double v : {r.episode_return_ext_mean, r.episode_return_ext_std, r.rooms_visited_mean, r.rooms_visited_max,
                   r.r_intr_mean, r.r_intr_std, r.motivation.predictor, r.motivation.target, r.motivation.invariance,
                   r.motivation.variance, r.motivation.covariance, r.motivation.gl, r.motivation.ll,
                   r.motivation.logit_norm, r.motivation.sigma, r.ppo.policy_loss, r.ppo.value_loss, r.ppo.entropy,
                   r.ppo.clip_frac}) {
    out += ',' + fmt(v);
  }
  return out + '\n';
}

nlohmann::json RunSummary::to_json() const {
  return {{"steps", steps},
          {"updates", updates},
          {"episodes", episodes},
          {"mean_return", mean_return},
          {"max_return", max_return},
          {"mean_rooms", mean_rooms},
          {"max_rooms", max_rooms},
          {"coverage", coverage},
          {"rooms_total", rooms_total},
          {"rewarded_episodes", rewarded_episodes}};
}

RunSummary RunSummary::from_json(const nlohmann::json& j) {
  RunSummary s;
  s.steps = j.at("steps");
  s.updates = j.at("updates");
  s.episodes = j.at("episodes");
  s.mean_return = j.at("mean_return");
  s.max_return = j.at("max_return");
  s.mean_rooms = j.at("mean_rooms");
  s.max_rooms = j.at("max_rooms");
  s.coverage = j.at("coverage");
  s.rooms_total = j.at("rooms_total");
  s.rewarded_episodes = j.at("rewarded_episodes");
  return s;
}

namespace {

MotivationConfig motivation_config(const ExperimentConfig& c) {
  MotivationConfig m = c.motivation;
  m.input_shape = {1, c.env.world.obs_size, c.env.world.obs_size};
  return m;
}

}  // namespace

Trainer::Trainer(ExperimentConfig config)
    : config_((validate(config), std::move(config))),
      layout_(generate_world(config_.env.seed, config_.env.world)),
      venv_(layout_, derive_seed(config_.run.seed, env_stream), config_.env.envs, config_.env.frame_stack,
            config_.env.workers),
      policy_(default_policy_spec({config_.env.frame_stack, config_.env.world.obs_size, config_.env.world.obs_size},
                                  config_.policy.channels, config_.policy.hidden, config_.policy.head_hidden,
                                  kActionCount),
              derive_seed(config_.run.seed, policy_stream)),
      policy_opt_(AdamConfig{config_.agent.lr}),
      reward_stats_(1),
      agent_rng_(derive_seed(config_.run.seed, agent_stream)),
      coverage_(config_.env.world.rooms, 0) {
  if (config_.motivation.variant != Variant::none) {
    motivation_.emplace(motivation_config(config_), derive_seed(config_.run.seed, motivation_stream));
  }
  for (auto r : venv_.rooms()) coverage_.at(r) = 1;
}

std::uint64_t Trainer::planned_updates() const {
  const std::uint64_t per = config_.agent.rollout_length * config_.env.envs;
  return (config_.run.total_steps + per - 1) / per;
}

MetricsRow Trainer::update() {
  auto buffer = collect_rollout(venv_, policy_, motivation(), reward_stats_, config_.agent, agent_rng_);
  MetricsRow row;
  if (motivation_) {
    row.motivation = motivation_->module_update(buffer.frames, buffer.next_frames);
    std::vector<double> r(buffer.r_intr_raw.begin(), buffer.r_intr_raw.end());
    mean_std(r, row.r_intr_mean, row.r_intr_std);
  } else {
    row.motivation.predictor = NAN;
  }
  compute_gae(buffer, config_.agent);
  row.ppo = ppo_update(policy_, policy_opt_, buffer, config_.agent, agent_rng_);

  step_ += buffer.size();
  ++update_;
  for (auto room : buffer.rooms) coverage_.at(room) = 1;
  std::vector<double> returns, rooms;
  for (const auto& info : buffer.finished) {
    returns.push_back(info.episode_return);
    rooms.push_back(static_cast<double>(info.visited_rooms));
    ++episodes_;
    if (info.episode_return > 0.0f) ++rewarded_;
    return_sum_ += info.episode_return;
    rooms_sum_ += static_cast<double>(info.visited_rooms);
    return_max_ = std::max(return_max_, static_cast<double>(info.episode_return));
    rooms_max_ = std::max(rooms_max_, static_cast<double>(info.visited_rooms));
  }
  row.step = step_;
  row.update = update_;
  row.episodes = episodes_;
  mean_std(returns, row.episode_return_ext_mean, row.episode_return_ext_std);
  if (!rooms.empty()) {
    double unused = 0.0;
    mean_std(rooms, row.rooms_visited_mean, unused);
    row.rooms_visited_max = *std::max_element(rooms.begin(), rooms.end());
  }
  return row;
}

RunSummary Trainer::summary() const {
  RunSummary s;
  s.steps = step_;
  s.updates = update_;
  s.episodes = episodes_;
  s.rewarded_episodes = rewarded_;
  if (episodes_ > 0) {
    s.mean_return = return_sum_ / static_cast<double>(episodes_);
    s.mean_rooms = rooms_sum_ / static_cast<double>(episodes_);
  }
  s.max_return = return_max_;
  s.max_rooms = rooms_max_;
  for (auto c : coverage_) s.coverage += c;
  s.rooms_total = coverage_.size();
  return s;
}

StateLog Trainer::record_state_log(std::size_t frames, std::uint64_t seed) const {
  VecEnv env(layout_, seed, 1, config_.env.frame_stack);
  std::mt19937_64 rng(derive_seed(seed, 1));
  const std::size_t s = config_.env.world.obs_size;
  StateLog log;
  log.states = Tensor({frames, 1, s, s});
  Tensor obs = env.observations();
  Tensor frame = env.frames();
  for (std::size_t t = 0; t < frames; ++t) {
    std::copy(frame.values().begin(), frame.values().end(), log.states.data() + t * s * s);
    log.steps.push_back(t);
    log.rooms.push_back(static_cast<std::uint32_t>(env.rooms()[0]));
    const auto actions = sample_actions(policy_.evaluate(obs).logits, rng);
    auto step = env.step(actions);
    obs = std::move(step.obs);
    frame = std::move(step.frames);
  }
  return log;
}

nlohmann::json Trainer::checkpoint_manifest(std::vector<float>& blob) const {
  nlohmann::json m;
  m["step"] = step_;
  m["update"] = update_;
  m["episodes"] = episodes_;
  m["rewarded"] = rewarded_;
  m["return_sum"] = return_sum_;
  m["return_max"] = return_max_;
  m["rooms_sum"] = rooms_sum_;
  m["rooms_max"] = rooms_max_;
  m["coverage"] = coverage_;
  m["agent_rng"] = rng_to_string(agent_rng_);
  m["reward_stats"] = reward_stats_.save();
  m["envs"] = venv_.save_state();
  m["policy"] = {{"trunk", network_manifest(policy_.trunk())},
                 {"actor", network_manifest(policy_.actor())},
                 {"critic", network_manifest(policy_.critic())}};
  const auto& opt = policy_opt_;
  m["policy_adam"] = {{"trunk", adam_manifest(opt.trunk())},
                      {"actor", adam_manifest(opt.actor())},
                      {"critic", adam_manifest(opt.critic())}};
  append_parameters(policy_.trunk().parameters(), blob);
  append_parameters(policy_.actor().parameters(), blob);
  append_parameters(policy_.critic().parameters(), blob);
  append_adam(opt.trunk(), blob);
  append_adam(opt.actor(), blob);
  append_adam(opt.critic(), blob);
  if (motivation_) {
    m["motivation"] = motivation_->manifest();
    motivation_->append_blob(blob);
  } else {
    m["motivation"] = nullptr;
  }
  return m;
}

void Trainer::restore_checkpoint(const nlohmann::json& m, std::span<const float> blob) {
  auto same_shapes = [](const Network& net, const nlohmann::json& manifest, const char* what) {
    const auto& params = manifest.at("parameters");
    if (params.size() != net.parameters().size()) throw LoadError(std::string(what) + ": parameter count differs");
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (params[i].at("shape").get<Shape>() != net.parameters()[i].value.shape()) {
        throw LoadError(std::string(what) + ": shape of " + net.parameters()[i].name + " differs");
      }
    }
  };
  same_shapes(policy_.trunk(), m.at("policy").at("trunk"), "policy trunk");
  same_shapes(policy_.actor(), m.at("policy").at("actor"), "policy actor");
  same_shapes(policy_.critic(), m.at("policy").at("critic"), "policy critic");
  if (m.at("motivation").is_null() != !motivation_) throw LoadError("checkpoint motivation variant differs");

  std::size_t offset = 0;
  offset = read_parameters(policy_.trunk().parameters(), blob, offset);
  offset = read_parameters(policy_.actor().parameters(), blob, offset);
  offset = read_parameters(policy_.critic().parameters(), blob, offset);
  const auto& pa = m.at("policy_adam");
  offset = read_adam(policy_opt_.trunk(), pa.at("trunk"), policy_.trunk().parameters(), blob, offset);
  offset = read_adam(policy_opt_.actor(), pa.at("actor"), policy_.actor().parameters(), blob, offset);
  offset = read_adam(policy_opt_.critic(), pa.at("critic"), policy_.critic().parameters(), blob, offset);
  if (motivation_) {
    same_shapes(motivation_->target(), m.at("motivation").at("target"), "target network");
    same_shapes(motivation_->predictor(), m.at("motivation").at("predictor"), "predictor network");
    std::vector<float> copy(blob.begin(), blob.end());
    motivation_->restore(m.at("motivation"), copy, offset);
  }
  if (offset != blob.size()) throw LoadError("checkpoint blob has " + std::to_string(blob.size() - offset) +
                                             " unread values");
  venv_.load_state(m.at("envs"));
  reward_stats_ = RunningStats::load(m.at("reward_stats"));
  agent_rng_ = rng_from_string(m.at("agent_rng").get<std::string>());
  step_ = m.at("step");
  update_ = m.at("update");
  episodes_ = m.at("episodes");
  rewarded_ = m.at("rewarded");
  return_sum_ = m.at("return_sum");
  return_max_ = m.at("return_max");
  rooms_sum_ = m.at("rooms_sum");
  rooms_max_ = m.at("rooms_max");
  coverage_ = m.at("coverage").get<std::vector<std::uint8_t>>();
  if (coverage_.size() != config_.env.world.rooms) throw LoadError("checkpoint room coverage size differs");
}

RunSummary run_experiment(const ExperimentConfig& config, const RunOptions& options) {
  namespace fs = std::filesystem;
  const fs::path dir = config.run.out;
  fs::create_directories(dir);
  write_text_file(dir / "config.txt", resolved_config(config));
  write_text_file(dir / "version.txt", std::string(kCodeVersion) + "\n");
  const fs::path metrics = dir / "metrics.csv";

  std::optional<Trainer> trainer;
  if (options.resume) {
    nlohmann::json extra;
    trainer.emplace(load_checkpoint(config, *options.resume, &extra));
    const auto bytes = extra.at("metrics_bytes").get<std::uintmax_t>();
    if (!fs::exists(metrics) || fs::file_size(metrics) < bytes) {
      throw LoadError("metrics.csv in " + dir.string() + " is shorter than the checkpoint expects");
    }
    fs::resize_file(metrics, bytes);
  } else {
    trainer.emplace(config);
    write_text_file(metrics, metrics_header());
  }

  write_text_file(dir / "layout.json", layout_to_json(trainer->layout()).dump(1) + "\n");

  std::ofstream csv(metrics, std::ios::binary | std::ios::app);
  if (!csv) throw std::runtime_error("cannot append to " + metrics.string());
  auto checkpoint = [&](const fs::path& prefix) {
    csv.flush();
    save_checkpoint(*trainer, prefix, {{"metrics_bytes", fs::file_size(metrics)}});
  };

  std::uint64_t done = 0;
  try {
    while (!trainer->finished() && (!options.max_updates || done < *options.max_updates)) {
      const MetricsRow row = trainer->update();
      ++done;
      csv << format_metrics(row);
      csv.flush();
      const auto u = trainer->updates();
      if (config.run.checkpoint_interval > 0 && u % config.run.checkpoint_interval == 0) {
        checkpoint(dir / "checkpoint");
      }
      if (!options.quiet && (u % config.run.eval_interval == 0 || trainer->finished())) {
        const auto s = trainer->summary();
        std::fprintf(stderr, "[%s] update %llu/%llu step %llu episodes %llu mean_return %.4f rooms %zu/%zu\n",
                     config.run.out.c_str(), static_cast<unsigned long long>(u),
                     static_cast<unsigned long long>(trainer->planned_updates()),
                     static_cast<unsigned long long>(s.steps), static_cast<unsigned long long>(s.episodes),
                     s.mean_return, s.coverage, s.rooms_total);
      }
    }
  } catch (const std::exception& e) {
    try {
      checkpoint(dir / "checkpoint-failed");
    } catch (...) {
    }
    std::fprintf(stderr, "run %s failed at update %llu: %s\n", dir.string().c_str(),
                 static_cast<unsigned long long>(trainer->updates()), e.what());
    throw;
  }

  checkpoint(dir / "checkpoint");
  const RunSummary summary = trainer->summary();
  if (trainer->finished()) {
    if (config.run.state_log_size > 0) {
      save_state_log(trainer->record_state_log(config.run.state_log_size, derive_seed(config.run.seed, log_stream)),
                     dir / "state_log.f32");
    }
    write_text_file(dir / "summary.json", summary.to_json().dump(2) + "\n");
  }
  return summary;
}

bool run_is_complete(const std::filesystem::path& dir, const ExperimentConfig& config) {
  namespace fs = std::filesystem;
  if (!fs::exists(dir / "summary.json") || !fs::exists(dir / "config.txt")) return false;
  return read_text_file(dir / "config.txt") == resolved_config(config);
}

std::vector<RunSummary> sweep(const ExperimentConfig& config, std::uint64_t first, std::uint64_t last,
                              std::size_t jobs, bool quiet) {
  if (last < first) throw ContractError("sweep: empty seed range");
  const std::size_t count = static_cast<std::size_t>(last - first + 1);
  std::vector<RunSummary> results(count);
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      ExperimentConfig c = config;
      c.run.seed = first + i;
      c.run.out = (std::filesystem::path(config.run.out) / ("seed-" + std::to_string(c.run.seed))).string();
      try {
        if (run_is_complete(c.run.out, c)) {
          results[i] = RunSummary::from_json(nlohmann::json::parse(read_text_file(std::filesystem::path(c.run.out) /
                                                                                  "summary.json")));
        } else {
          results[i] = run_experiment(c, RunOptions{std::nullopt, std::nullopt, quiet});
        }
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> threads;
  for (std::size_t t = 1; t < std::max<std::size_t>(1, std::min(jobs, count)); ++t) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return results;
}

}  // namespace snd
