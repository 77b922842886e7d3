#include "snd/config.hpp"

#include <charconv>
#include <cstdio>
#include <functional>
#include <sstream>
#include <vector>

#include "snd/errors.hpp"
#include "snd/serialize.hpp"

namespace snd {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::uint64_t to_uint(const std::string& v) {
  std::uint64_t out = 0;
  const auto* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end) throw ContractError("expected a non-negative integer, got '" + v + "'");
  return out;
}

double to_double(const std::string& v) {
  double out = 0.0;
  const auto* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end) throw ContractError("expected a number, got '" + v + "'");
  return out;
}

bool to_bool(const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ContractError("expected true or false, got '" + v + "'");
}

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct Entry {
  const char* key;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

#define SND_UINT(KEY, FIELD)                                                                            \
  Entry {                                                                                               \
    KEY, [](ExperimentConfig& c, const std::string& v) { c.FIELD = static_cast<decltype(c.FIELD)>(to_uint(v)); }, \
        [](const ExperimentConfig& c) { return std::to_string(c.FIELD); }                               \
  }
#define SND_DOUBLE(KEY, FIELD)                                                                          \
  Entry {                                                                                               \
    KEY, [](ExperimentConfig& c, const std::string& v) { c.FIELD = to_double(v); },                     \
        [](const ExperimentConfig& c) { return num(c.FIELD); }                                          \
  }
#define SND_BOOL(KEY, FIELD)                                                                            \
  Entry {                                                                                               \
    KEY, [](ExperimentConfig& c, const std::string& v) { c.FIELD = to_bool(v); },                       \
        [](const ExperimentConfig& c) { return std::string(c.FIELD ? "true" : "false"); }               \
  }

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = {
      SND_UINT("env.seed", env.seed),
      SND_UINT("env.rooms", env.world.rooms),
      SND_UINT("env.size", env.world.size),
      SND_DOUBLE("env.hazard_density", env.world.hazard_density),
      SND_DOUBLE("env.obstacle_density", env.world.obstacle_density),
      SND_UINT("env.locked_doors", env.world.locked_doors),
      SND_UINT("env.step_limit", env.world.step_limit),
      SND_UINT("env.obs_size", env.world.obs_size),
      SND_BOOL("env.blinker", env.world.blinker),
      SND_BOOL("env.repeatable_reward", env.world.repeatable_reward),
      SND_BOOL("env.pickup_reward", env.world.pickup_reward),
      SND_UINT("env.envs", env.envs),
      SND_UINT("env.frame_stack", env.frame_stack),
      SND_UINT("env.workers", env.workers),
      Entry{"env.preprocessing",
            [](ExperimentConfig& c, const std::string& v) { c.motivation.preprocessing = parse_preprocessing(v); },
            [](const ExperimentConfig& c) { return to_string(c.motivation.preprocessing); }},

      SND_DOUBLE("agent.gamma_ext", agent.gamma_ext),
      SND_DOUBLE("agent.gamma_intr", agent.gamma_intr),
      SND_DOUBLE("agent.gae_lambda", agent.gae_lambda),
      SND_DOUBLE("agent.clip", agent.clip),
      SND_DOUBLE("agent.entropy_coef", agent.entropy_coef),
      SND_UINT("agent.epochs", agent.epochs),
      SND_DOUBLE("agent.grad_clip", agent.grad_clip),
      SND_DOUBLE("agent.adv_ext_coef", agent.adv_ext_coef),
      SND_DOUBLE("agent.adv_intr_coef", agent.adv_intr_coef),
      SND_DOUBLE("agent.eta", agent.eta),
      SND_DOUBLE("agent.lr", agent.lr),
      SND_UINT("agent.minibatches", agent.minibatches),
      SND_DOUBLE("agent.value_coef", agent.value_coef),
      SND_UINT("agent.rollout_length", agent.rollout_length),
      SND_BOOL("agent.episodic_intrinsic", agent.episodic_intrinsic),
      SND_BOOL("agent.normalize_intrinsic", agent.normalize_intrinsic),
      Entry{"agent.advantage_norm",
            [](ExperimentConfig& c, const std::string& v) { c.agent.advantage_norm = parse_advantage_norm(v); },
            [](const ExperimentConfig& c) { return to_string(c.agent.advantage_norm); }},
      SND_UINT("agent.channels", policy.channels),
      SND_UINT("agent.hidden", policy.hidden),
      SND_UINT("agent.head_hidden", policy.head_hidden),

      Entry{"motivation.variant",
            [](ExperimentConfig& c, const std::string& v) { c.motivation.variant = parse_variant(v); },
            [](const ExperimentConfig& c) { return to_string(c.motivation.variant); }},
      Entry{"motivation.eta", [](ExperimentConfig& c, const std::string& v) { c.agent.eta = to_double(v); },
            [](const ExperimentConfig& c) { return num(c.agent.eta); }},
      SND_UINT("motivation.feature_dim", motivation.feature_dim),
      SND_UINT("motivation.channels", motivation.channels),
      SND_UINT("motivation.predictor_hidden", motivation.predictor_hidden),
      SND_DOUBLE("motivation.target_lr", motivation.target_lr),
      SND_DOUBLE("motivation.predictor_lr", motivation.predictor_lr),
      Entry{"motivation.target_gain",
            [](ExperimentConfig& c, const std::string& v) {
              if (v == "auto") {
                c.motivation.target_gain.reset();
              } else {
                c.motivation.target_gain = to_double(v);
              }
            },
            [](const ExperimentConfig& c) {
              return c.motivation.target_gain ? num(*c.motivation.target_gain) : std::string("auto");
            }},
      SND_UINT("motivation.batch_size", motivation.batch_size),
      SND_DOUBLE("motivation.sample_fraction", motivation.sample_fraction),
      SND_UINT("motivation.epochs", motivation.epochs),
      Entry{"motivation.augmentation",
            [](ExperimentConfig& c, const std::string& v) { c.motivation.augment.scheme = parse_aug_scheme(v); },
            [](const ExperimentConfig& c) { return to_string(c.motivation.augment.scheme); }},
      SND_DOUBLE("motivation.noise", motivation.augment.noise),
      Entry{"motivation.tile_sizes",
            [](ExperimentConfig& c, const std::string& v) {
              std::vector<std::size_t> sizes;
              std::stringstream in(v);
              std::string item;
              while (std::getline(in, item, ',')) sizes.push_back(to_uint(trim(item)));
              c.motivation.augment.tile_sizes = sizes;
            },
            [](const ExperimentConfig& c) {
              std::string out;
              for (auto t : c.motivation.augment.tile_sizes) out += (out.empty() ? "" : ",") + std::to_string(t);
              return out;
            }},
      SND_DOUBLE("motivation.tile_prob", motivation.augment.tile_prob),
      SND_DOUBLE("motivation.tile_drop", motivation.augment.tile_drop),
      SND_DOUBLE("motivation.conv_prob", motivation.augment.conv_prob),
      SND_DOUBLE("motivation.pair_same_prob", motivation.pair_same_prob),
      Entry{"motivation.sndv_loss",
            [](ExperimentConfig& c, const std::string& v) {
              if (v == "mse") {
                c.motivation.sndv_loss = SndvLoss::mse;
              } else if (v == "hinge") {
                c.motivation.sndv_loss = SndvLoss::hinge;
              } else {
                throw ContractError("expected mse or hinge, got '" + v + "'");
              }
            },
            [](const ExperimentConfig& c) {
              return std::string(c.motivation.sndv_loss == SndvLoss::mse ? "mse" : "hinge");
            }},
      SND_BOOL("motivation.sndv_unsquared", motivation.sndv_unsquared),
      SND_DOUBLE("motivation.beta1", motivation.stdim.beta1),
      SND_DOUBLE("motivation.beta2", motivation.stdim.beta2),
      SND_DOUBLE("motivation.lambda", motivation.vicreg.lambda),
      SND_DOUBLE("motivation.mu", motivation.vicreg.mu),
      SND_DOUBLE("motivation.nu", motivation.vicreg.nu),
      SND_DOUBLE("motivation.tau", motivation.vicreg.tau),

      SND_UINT("run.total_steps", run.total_steps),
      SND_UINT("run.seed", run.seed),
      Entry{"run.out", [](ExperimentConfig& c, const std::string& v) { c.run.out = v; },
            [](const ExperimentConfig& c) { return c.run.out; }},
      SND_UINT("run.checkpoint_interval", run.checkpoint_interval),
      SND_UINT("run.eval_interval", run.eval_interval),
      SND_UINT("run.state_log_size", run.state_log_size),
  };
  return table;
}

const Entry* find_entry(const std::string& key) {
  for (const auto& e : entries()) {
    if (key == e.key) return &e;
  }
  return nullptr;
}

}  // namespace

void validate(const ExperimentConfig& c) {
  validate(c.env.world);
  if (c.env.envs == 0) throw ContractError("env.envs must be > 0");
  if (c.env.frame_stack == 0) throw ContractError("env.frame_stack must be > 0");
  validate(c.agent);
  if (c.policy.channels == 0 || c.policy.hidden == 0) throw ContractError("agent.channels and agent.hidden must be > 0");
  if (c.env.world.obs_size % 8 != 0) throw ContractError("env.obs_size must be a multiple of 8");
  if (c.motivation.variant != Variant::none) {
    auto m = c.motivation;
    m.input_shape = {1, c.env.world.obs_size, c.env.world.obs_size};
    validate(m);
  }
  if (c.run.total_steps == 0) throw ContractError("run.total_steps must be > 0");
  if (c.run.eval_interval == 0) throw ContractError("run.eval_interval must be > 0");
}

void set_config_value(ExperimentConfig& config, const std::string& key, const std::string& value) {
  const Entry* e = find_entry(key);
  if (e == nullptr) throw LoadError("unknown config key '" + key + "'");
  try {
    e->set(config, value);
  } catch (const ContractError& err) {
    throw LoadError("config key '" + key + "': " + err.what());
  }
  config.motivation.input_shape = {1, config.env.world.obs_size, config.env.world.obs_size};
}

ExperimentConfig parse_config(const std::string& text, const std::string& origin) {
  ExperimentConfig config;
  config.motivation.input_shape = {1, config.env.world.obs_size, config.env.world.obs_size};
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  // Last line that set each key, for range errors reported after parsing.
  std::vector<std::pair<std::string, std::size_t>> seen;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = origin + ":" + std::to_string(lineno);
    if (eq == std::string::npos) throw LoadError(where + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    try {
      set_config_value(config, key, value);
    } catch (const LoadError& err) {
      throw LoadError(where + ": " + err.what());
    }
    seen.emplace_back(key, lineno);
  }
  try {
    validate(config);
  } catch (const ContractError& err) {
    const std::string msg = err.what();
    for (auto it = seen.rbegin(); it != seen.rend(); ++it) {
      const auto dot = it->first.find('.');
      const std::string field = it->first.substr(dot + 1);
      if (msg.find(it->first) != std::string::npos || msg.find(field) != std::string::npos) {
        throw LoadError(origin + ":" + std::to_string(it->second) + ": config key '" + it->first + "': " + msg);
      }
    }
    throw LoadError(origin + ": " + msg);
  }
  return config;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw LoadError("config file not found: " + path.string());
  return parse_config(read_text_file(path), path.string());
}

std::string resolved_config(const ExperimentConfig& config) {
  std::string out;
  for (const auto& e : entries()) out += std::string(e.key) + " = " + e.get(config) + "\n";
  return out;
}

}  // namespace snd
