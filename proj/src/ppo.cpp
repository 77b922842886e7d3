#include "snd/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "snd/errors.hpp"
#include "snd/motivation.hpp"

namespace snd {

AdvantageNorm parse_advantage_norm(const std::string& name) {
  if (name == "combined") return AdvantageNorm::combined;
  if (name == "per_stream") return AdvantageNorm::per_stream;
  throw ContractError("unknown advantage normalization '" + name + "'");
}

std::string to_string(AdvantageNorm mode) {
  return mode == AdvantageNorm::combined ? "combined" : "per_stream";
}

void validate(const PpoConfig& c) {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw ContractError(std::string("ppo config: ") + what);
  };
  require(c.gamma_ext > 0.0 && c.gamma_ext <= 1.0, "gamma_ext must be in (0, 1]");
  require(c.gamma_intr > 0.0 && c.gamma_intr <= 1.0, "gamma_intr must be in (0, 1]");
  require(c.gae_lambda >= 0.0 && c.gae_lambda <= 1.0, "gae_lambda must be in [0, 1]");
  require(c.clip > 0.0, "clip must be > 0");
  require(c.entropy_coef >= 0.0 && c.adv_ext_coef >= 0.0 && c.adv_intr_coef >= 0.0 && c.value_coef >= 0.0,
          "coefficients must be >= 0");
  require(c.eta >= 0.0, "eta must be >= 0");
  require(c.lr >= 0.0, "lr must be >= 0");
  require(c.grad_clip >= 0.0, "grad_clip must be >= 0");
  require(c.epochs > 0 && c.minibatches > 0 && c.rollout_length > 0, "epochs, minibatches, rollout_length must be > 0");
}

double combine_reward(double r_ext, double r_intr, double eta) {
  if (eta < 0.0) throw ContractError("combine_reward: eta must be >= 0");
  return r_ext + eta * r_intr;
}

RolloutBuffer::RolloutBuffer(std::size_t t, std::size_t e, const Shape& state_shape, const Shape& frame_shape)
    : steps(t), envs(e) {
  const std::size_t n = t * e;
  Shape s{n};
  s.insert(s.end(), state_shape.begin(), state_shape.end());
  Shape f{n};
  f.insert(f.end(), frame_shape.begin(), frame_shape.end());
  states = Tensor(s);
  frames = Tensor(f);
  next_frames = Tensor(f);
  actions.assign(n, 0);
  log_probs.assign(n, 0.0f);
  v_ext.assign(n, 0.0f);
  v_intr.assign(n, 0.0f);
  r_ext.assign(n, 0.0f);
  r_intr.assign(n, 0.0f);
  r_intr_raw.assign(n, 0.0f);
  dones.assign(n, 0);
  rooms.assign(n, 0);
  boot_ext.assign(e, 0.0f);
  boot_intr.assign(e, 0.0f);
}

std::vector<double> gae(std::span<const float> rewards, std::span<const float> values,
                        std::span<const std::uint8_t> dones, double bootstrap, double gamma, double lambda,
                        bool mask_dones) {
  const std::size_t n = rewards.size();
  std::vector<double> adv(n);
  double next_value = bootstrap;
  double acc = 0.0;
  for (std::size_t k = n; k-- > 0;) {
    const double keep = (mask_dones && dones[k]) ? 0.0 : 1.0;
    const double delta = rewards[k] + gamma * next_value * keep - values[k];
    acc = delta + gamma * lambda * keep * acc;
    adv[k] = acc;
    next_value = values[k];
  }
  return adv;
}

void compute_gae(RolloutBuffer& b, const PpoConfig& config) {
  if (b.advantages_ready) throw StateError("compute_gae: advantages already computed for this buffer");
  const std::size_t T = b.steps, E = b.envs;
  if (b.size() == 0 || b.r_ext.size() != T * E) throw ContractError("compute_gae: buffer not filled");
  b.adv_ext.assign(T * E, 0.0f);
  b.adv_intr.assign(T * E, 0.0f);
  b.ret_ext.assign(T * E, 0.0f);
  b.ret_intr.assign(T * E, 0.0f);
  std::vector<float> r(T), v(T);
  std::vector<std::uint8_t> d(T);
  auto stream = [&](std::size_t e, const std::vector<float>& rewards, const std::vector<float>& values,
                    float boot, double gamma, bool mask, std::vector<float>& adv, std::vector<float>& ret) {
    for (std::size_t t = 0; t < T; ++t) {
      r[t] = rewards[t * E + e];
      v[t] = values[t * E + e];
      d[t] = b.dones[t * E + e];
    }
    const auto a = gae(r, v, d, boot, gamma, config.gae_lambda, mask);
    for (std::size_t t = 0; t < T; ++t) {
      adv[t * E + e] = static_cast<float>(a[t]);
      ret[t * E + e] = static_cast<float>(a[t] + v[t]);
    }
  };
  for (std::size_t e = 0; e < E; ++e) {
    stream(e, b.r_ext, b.v_ext, b.boot_ext[e], config.gamma_ext, true, b.adv_ext, b.ret_ext);
    stream(e, b.r_intr, b.v_intr, b.boot_intr[e], config.gamma_intr, config.episodic_intrinsic, b.adv_intr,
           b.ret_intr);
  }
  b.advantages_ready = true;
}

template <typename T>
PpoLoss<T> ppo_loss(const BasicTensor<T>& logits, const BasicTensor<T>& values, std::span<const int> actions,
                    std::span<const float> old_log_probs, std::span<const double> advantages,
                    std::span<const float> ret_ext, std::span<const float> ret_intr, const PpoLossConfig& config) {
  const std::size_t n = logits.dim(0);
  const std::size_t A = logits.dim(1);
  if (n == 0 || values.dim(0) != n || values.dim(1) != 2 || actions.size() != n || old_log_probs.size() != n ||
      advantages.size() != n || ret_ext.size() != n || ret_intr.size() != n) {
    throw ContractError("ppo_loss: batch sizes disagree");
  }
  PpoLoss<T> out;
  out.dlogits = BasicTensor<T>(logits.shape());
  out.dvalues = BasicTensor<T>(values.shape());
  const double inv_n = 1.0 / static_cast<double>(n);
  std::vector<double> logp(A), p(A);
  double clipped = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double mx = -INFINITY;
    for (std::size_t k = 0; k < A; ++k) mx = std::max(mx, static_cast<double>(logits(i, k)));
    double sum = 0.0;
    for (std::size_t k = 0; k < A; ++k) sum += std::exp(static_cast<double>(logits(i, k)) - mx);
    const double lse = mx + std::log(sum);
    double entropy = 0.0;
    for (std::size_t k = 0; k < A; ++k) {
      logp[k] = static_cast<double>(logits(i, k)) - lse;
      p[k] = std::exp(logp[k]);
      entropy -= p[k] * logp[k];
    }
    const auto a = static_cast<std::size_t>(actions[i]);
    if (a >= A) throw ContractError("ppo_loss: action out of range");
    const double ratio = std::exp(logp[a] - old_log_probs[i]);
    const double adv = advantages[i];
    const double lo = 1.0 - config.clip, hi = 1.0 + config.clip;
    const double unclipped_obj = ratio * adv;
    const double clipped_obj = std::clamp(ratio, lo, hi) * adv;
    const double obj = std::min(unclipped_obj, clipped_obj);
    if (ratio < lo || ratio > hi) clipped += 1.0;
    const double dobj_dratio = unclipped_obj <= clipped_obj ? adv : 0.0;

    out.policy_loss -= obj * inv_n;
    out.entropy += entropy * inv_n;
    for (std::size_t k = 0; k < A; ++k) {
      const double onehot = k == a ? 1.0 : 0.0;
      double g = -dobj_dratio * ratio * (onehot - p[k]);
      g += config.entropy_coef * p[k] * (logp[k] + entropy);
      out.dlogits(i, k) = static_cast<T>(g * inv_n);
    }
    const double ee = static_cast<double>(values(i, 0)) - ret_ext[i];
    const double ei = static_cast<double>(values(i, 1)) - ret_intr[i];
    out.value_loss += (ee * ee + ei * ei) * inv_n;
    out.dvalues(i, 0) = static_cast<T>(2.0 * config.value_coef * ee * inv_n);
    out.dvalues(i, 1) = static_cast<T>(2.0 * config.value_coef * ei * inv_n);
  }
  out.clip_frac = clipped * inv_n;
  out.loss = out.policy_loss + config.value_coef * out.value_loss - config.entropy_coef * out.entropy;
  return out;
}

template PpoLoss<float> ppo_loss<float>(const Tensor&, const Tensor&, std::span<const int>, std::span<const float>,
                                        std::span<const double>, std::span<const float>, std::span<const float>,
                                        const PpoLossConfig&);
template PpoLoss<double> ppo_loss<double>(const TensorD&, const TensorD&, std::span<const int>,
                                          std::span<const float>, std::span<const double>, std::span<const float>,
                                          std::span<const float>, const PpoLossConfig&);

namespace {

void standardize(std::vector<double>& x) {
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / static_cast<double>(x.size()));
  for (double& v : x) v = (v - mean) / (sd + 1e-8);
}

}  // namespace

PpoMetrics ppo_update(PolicyNet& policy, PolicyOptimizer& optimizer, const RolloutBuffer& b, const PpoConfig& config,
                      std::mt19937_64& rng) {
  if (!b.advantages_ready) throw StateError("ppo_update: compute_gae has not run");
  const std::size_t n = b.size();
  const std::size_t mb = std::max<std::size_t>(1, n / config.minibatches);
  for (Adam* adam : {&optimizer.trunk(), &optimizer.actor(), &optimizer.critic()}) adam->config().lr = config.lr;
  const PpoLossConfig lc{config.clip, config.entropy_coef, config.value_coef};

  std::vector<std::size_t> order(n);
  PpoMetrics m;
  std::size_t count = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start + mb <= n; start += mb) {
      const std::span<const std::size_t> idx(order.data() + start, mb);
      const Tensor states = b.states.gather(idx);
      std::vector<int> actions(mb);
      std::vector<float> old_lp(mb), re(mb), ri(mb);
      std::vector<double> ae(mb), ai(mb), adv(mb);
      for (std::size_t k = 0; k < mb; ++k) {
        const std::size_t j = idx[k];
        actions[k] = b.actions[j];
        old_lp[k] = b.log_probs[j];
        re[k] = b.ret_ext[j];
        ri[k] = b.ret_intr[j];
        ae[k] = b.adv_ext[j];
        ai[k] = b.adv_intr[j];
      }
      if (config.advantage_norm == AdvantageNorm::per_stream) {
        standardize(ae);
        standardize(ai);
        for (std::size_t k = 0; k < mb; ++k) adv[k] = config.adv_ext_coef * ae[k] + config.adv_intr_coef * ai[k];
      } else {
        for (std::size_t k = 0; k < mb; ++k) adv[k] = config.adv_ext_coef * ae[k] + config.adv_intr_coef * ai[k];
        standardize(adv);
      }

      const auto out = policy.forward(states);
      auto loss = ppo_loss<float>(out.logits, out.values, actions, old_lp, adv, re, ri, lc);
      if (!std::isfinite(loss.loss)) {
        throw NumericError("ppo_update: non-finite loss (policy " + std::to_string(loss.policy_loss) + ", value " +
                           std::to_string(loss.value_loss) + ", entropy " + std::to_string(loss.entropy) +
                           ") at epoch " + std::to_string(epoch));
      }
      auto grads = policy.backward(loss.dlogits, loss.dvalues);
      optimizer.step(policy, grads, config.grad_clip);

      m.policy_loss += loss.policy_loss;
      m.value_loss += loss.value_loss;
      m.entropy += loss.entropy;
      m.clip_frac += loss.clip_frac;
      ++count;
    }
  }
  if (count > 0) {
    const double c = static_cast<double>(count);
    m.policy_loss /= c;
    m.value_loss /= c;
    m.entropy /= c;
    m.clip_frac /= c;
  }
  return m;
}

RolloutBuffer collect_rollout(VecEnv& venv, const PolicyNet& policy, MotivationModule* motivation,
                              RunningStats& reward_stats, const PpoConfig& config, std::mt19937_64& rng) {
  const std::size_t T = config.rollout_length;
  const std::size_t E = venv.size();
  Tensor obs = venv.observations();
  Tensor frames = venv.frames();
  Shape state_shape(obs.shape().begin() + 1, obs.shape().end());
  Shape frame_shape(frames.shape().begin() + 1, frames.shape().end());
  if (state_shape != policy.spec().trunk.input_shape) {
    throw ContractError("collect_rollout: observation shape " + shape_string(state_shape) +
                        " does not match policy input " + shape_string(policy.spec().trunk.input_shape));
  }
  RolloutBuffer b(T, E, state_shape, frame_shape);
  const std::size_t ss = obs.stride0(), fs = frames.stride0();

  for (std::size_t t = 0; t < T; ++t) {
    const auto out = policy.evaluate(obs);
    const auto actions = sample_actions(out.logits, rng);
    VecStep step = venv.step(actions);
    std::vector<float> r_intr(E, 0.0f);
    if (motivation != nullptr) {
      motivation->observe(step.terminal_frames);
      r_intr = motivation->intrinsic_reward(motivation->prepare(step.terminal_frames));
    }
    for (std::size_t e = 0; e < E; ++e) {
      const std::size_t i = t * E + e;
      std::copy_n(obs.data() + e * ss, ss, b.states.data() + i * ss);
      std::copy_n(frames.data() + e * fs, fs, b.frames.data() + i * fs);
      std::copy_n(step.terminal_frames.data() + e * fs, fs, b.next_frames.data() + i * fs);
      b.actions[i] = actions[e];
      b.log_probs[i] = log_softmax_row(out.logits.slice(e))[static_cast<std::size_t>(actions[e])];
      b.v_ext[i] = out.values(e, 0);
      b.v_intr[i] = out.values(e, 1);
      b.r_ext[i] = step.rewards[e];
      b.r_intr_raw[i] = r_intr[e];
      b.dones[i] = step.dones[e];
      b.rooms[i] = static_cast<std::uint32_t>(step.infos[e].room_id);
      if (step.infos[e].episode_end) b.finished.push_back(step.infos[e]);
    }
    obs = std::move(step.obs);
    frames = std::move(step.frames);
  }
  const auto boot = policy.evaluate(obs);
  for (std::size_t e = 0; e < E; ++e) {
    b.boot_ext[e] = boot.values(e, 0);
    b.boot_intr[e] = boot.values(e, 1);
  }

  if (motivation != nullptr) {
    for (float r : b.r_intr_raw) reward_stats.update(std::span<const float>(&r, 1));
    const double sd = std::sqrt(reward_stats.variance(0));
    const double scale = config.normalize_intrinsic ? config.eta / std::max(sd, 1e-8) : config.eta;
    for (std::size_t i = 0; i < b.size(); ++i) b.r_intr[i] = static_cast<float>(b.r_intr_raw[i] * scale);
  }
  return b;
}

}  // namespace snd
