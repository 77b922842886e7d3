#include "snd/motivation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "snd/errors.hpp"
#include "snd/seeding.hpp"
#include "snd/serialize.hpp"

namespace snd {

Variant parse_variant(const std::string& name) {
  if (name == "none") return Variant::none;
  if (name == "rnd") return Variant::rnd;
  if (name == "snd-v") return Variant::snd_v;
  if (name == "snd-std") return Variant::snd_std;
  if (name == "snd-vic") return Variant::snd_vic;
  throw ContractError("unknown motivation variant '" + name + "' (none | rnd | snd-v | snd-std | snd-vic)");
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::none: return "none";
    case Variant::rnd: return "rnd";
    case Variant::snd_v: return "snd-v";
    case Variant::snd_std: return "snd-std";
    case Variant::snd_vic: return "snd-vic";
  }
  return "none";
}

void validate(const MotivationConfig& c) {
  if (c.input_shape.size() != 3) throw ContractError("motivation input must be (C, H, W)");
  if (c.feature_dim == 0 || c.channels == 0 || c.predictor_hidden == 0) {
    throw ContractError("motivation network sizes must be > 0");
  }
  if (c.target_lr < 0.0 || c.predictor_lr < 0.0) throw ContractError("motivation learning rates must be >= 0");
  if (c.target_gain && *c.target_gain <= 0.0) throw ContractError("target gain must be > 0");
  if (c.batch_size < 2) throw ContractError("motivation batch size must be >= 2");
  if (!(c.sample_fraction > 0.0 && c.sample_fraction <= 1.0)) {
    throw ContractError("motivation sample fraction must be in (0, 1]");
  }
  if (c.epochs == 0) throw ContractError("motivation epochs must be > 0");
  if (c.pair_same_prob < 0.0 || c.pair_same_prob > 1.0) throw ContractError("pair probability must be in [0, 1]");
  validate(c.augment, std::min(c.input_shape[1], c.input_shape[2]));
}

double target_gain(const MotivationConfig& c) {
  if (c.target_gain) return *c.target_gain;
  return (c.variant == Variant::snd_std || c.variant == Variant::snd_vic) ? 0.5 : std::sqrt(2.0);
}

NetworkSpec target_spec(const MotivationConfig& c) {
  NetworkSpec s;
  s.input_shape = c.input_shape;
  s.layers = {Conv2dSpec{c.channels, 4, 4, 0},     ActivationSpec{Activation::elu},
              Conv2dSpec{2 * c.channels, 3, 2, 1}, ActivationSpec{Activation::elu},
              DenseSpec{c.feature_dim}};
  s.local_layer = 3;
  return s;
}

NetworkSpec predictor_spec(const MotivationConfig& c) {
  NetworkSpec s;
  s.input_shape = c.input_shape;
  s.layers = {Conv2dSpec{c.channels, 4, 4, 0},     ActivationSpec{Activation::elu},
              Conv2dSpec{2 * c.channels, 3, 2, 1}, ActivationSpec{Activation::elu},
              DenseSpec{c.predictor_hidden},        ActivationSpec{Activation::elu},
              DenseSpec{c.predictor_hidden},        ActivationSpec{Activation::elu},
              DenseSpec{c.feature_dim}};
  return s;
}


MotivationModule::MotivationModule(MotivationConfig config, std::uint64_t seed)
    : config_((validate(config), std::move(config))),
      seed_(seed),
      target_(target_spec(config_), target_gain(config_), derive_seed(seed, 1)),
      predictor_(predictor_spec(config_), std::sqrt(2.0), derive_seed(seed, 2)),
      target_opt_(AdamConfig{config_.target_lr}),
      predictor_opt_(AdamConfig{config_.predictor_lr}),
      proj_opt_(AdamConfig{config_.target_lr}),
      obs_stats_(shape_size(config_.input_shape)),
      sample_rng_(derive_seed(seed, 3)),
      aug_rng_(derive_seed(seed, 4)) {
  const Shape local = target_.layer_output_shape(*target_spec(config_).local_layer);
  const std::size_t c = local[0], d = config_.feature_dim;
  std::mt19937_64 rng(derive_seed(seed, 5));
  auto wg = orthogonal_init(d, c, 1.0, rng);
  auto wl = orthogonal_init(c, c, 1.0, rng);
  projections_.push_back({"w_g", Tensor({d, c}, std::vector<float>(wg.begin(), wg.end()))});
  projections_.push_back({"w_l", Tensor({c, c}, std::vector<float>(wl.begin(), wl.end()))});
}

void MotivationModule::check_input(const Tensor& states, const char* what) const {
  Shape per(states.shape().begin() + (states.rank() > 0 ? 1 : 0), states.shape().end());
  if (states.rank() != 4 || per != config_.input_shape) {
    throw ContractError(std::string(what) + ": expected (N, " + shape_string(config_.input_shape) + "), got " +
                        shape_string(states.shape()));
  }
}

void MotivationModule::observe(const Tensor& frames) {
  if (config_.preprocessing == Preprocessing::none) return;
  check_input(frames, "observe");
  obs_stats_.update_batch(frames);
}

Tensor MotivationModule::prepare(const Tensor& frames) const {
  check_input(frames, "prepare");
  return preprocess(frames, config_.preprocessing, obs_stats_);
}

std::vector<float> MotivationModule::intrinsic_reward(const Tensor& states) const {
  check_input(states, "intrinsic_reward");
  const auto zt = target_.evaluate(states).output;
  const auto zp = predictor_.evaluate(states).output;
  const auto d = squared_distances(zt, zp);
  return std::vector<float>(d.begin(), d.end());
}

double MotivationModule::predictor_update(const Tensor& states) {
  check_input(states, "predictor_update");
  if (states.dim(0) == 0) throw ContractError("predictor_update: empty batch");
  const auto zt = target_.evaluate(states).output;
  const auto zp = predictor_.forward(states).output;
  const auto loss = distillation_loss(zt, zp);
  if (!std::isfinite(loss.value)) throw NumericError("predictor_update: non-finite loss, step rejected");
  predictor_opt_.config().lr = config_.predictor_lr;
  predictor_opt_.step(predictor_, predictor_.backward(loss.dz));
  return loss.value;
}

SndvBatch MotivationModule::make_sndv_batch(const Tensor& states) {
  check_input(states, "make_sndv_batch");
  const std::size_t n = states.dim(0);
  if (n < 2) throw ContractError("make_sndv_batch: need at least 2 states");
  std::bernoulli_distribution same(config_.pair_same_prob);
  std::uniform_int_distribution<std::size_t> other(0, n - 2);
  std::vector<std::size_t> partner(n);
  SndvBatch b;
  b.tau.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (same(aug_rng_)) {
      partner[i] = i;
      b.tau[i] = 0.0f;
    } else {
      const std::size_t j = other(aug_rng_);
      partner[i] = j >= i ? j + 1 : j;
      b.tau[i] = 1.0f;
    }
  }
  b.s = augment(states, config_.augment, aug_rng_);
  b.s2 = augment(states.gather(partner), config_.augment, aug_rng_);
  return b;
}

PairLoss<float> MotivationModule::sndv_target_update(const SndvBatch& batch) {
  check_input(batch.s, "sndv_target_update");
  const std::size_t n = batch.s.dim(0);
  if (n < 2) throw ContractError("sndv_target_update: batch of size < 2");
  const auto z = target_.forward(concat_rows(batch.s, batch.s2)).output;
  const auto loss = sndv_loss(z.rows(0, n), z.rows(n, 2 * n), batch.tau, config_.sndv_loss, config_.sndv_unsquared);
  if (!std::isfinite(loss.value)) throw NumericError("sndv_target_update: non-finite loss, step rejected");
  target_opt_.config().lr = config_.target_lr;
  target_opt_.step(target_, target_.backward(concat_rows(loss.dz, loss.dz2)));
  return loss;
}

StdimLoss<float> MotivationModule::stdim_target_update(const Tensor& states, const Tensor& next_states) {
  check_input(states, "stdim_target_update");
  const std::size_t n = states.dim(0);
  if (n < 2 || next_states.shape() != states.shape()) {
    throw ContractError("stdim_target_update: need matching batches of at least 2 pairs");
  }
  const auto out = target_.forward(concat_rows(states, next_states));
  const Tensor& locals = *out.locals;
  auto loss = stdim_loss(out.output.rows(0, n), locals.rows(0, n), locals.rows(n, 2 * n), projections_[0].value,
                         projections_[1].value, config_.stdim);
  if (!std::isfinite(loss.total)) throw NumericError("stdim_target_update: non-finite loss, step rejected");
  const Tensor dz = concat_rows(loss.dz, Tensor({n, config_.feature_dim}));
  const Tensor dlocal = concat_rows(loss.dlocal, loss.dlocal_next);
  const auto grads = target_.backward(dz, &dlocal);
  const std::vector<Tensor> proj_grads{loss.dw_g, loss.dw_l};
  target_opt_.config().lr = config_.target_lr;
  proj_opt_.config().lr = config_.target_lr;
  target_opt_.step(target_, grads);
  proj_opt_.step(projections_, proj_grads);
  return loss;
}

VicregLoss<float> MotivationModule::vicreg_target_update(const Tensor& states, const Tensor& next_states) {
  check_input(states, "vicreg_target_update");
  const std::size_t n = states.dim(0);
  if (n < 2 || next_states.shape() != states.shape()) {
    throw ContractError("vicreg_target_update: need matching batches of at least 2 pairs");
  }
  const auto z = target_.forward(concat_rows(states, next_states)).output;
  auto loss = vicreg_loss(z.rows(0, n), z.rows(n, 2 * n), config_.vicreg);
  if (!std::isfinite(loss.total)) throw NumericError("vicreg_target_update: non-finite loss, step rejected");
  target_opt_.config().lr = config_.target_lr;
  target_opt_.step(target_, target_.backward(concat_rows(loss.dz, loss.dz2)));
  return loss;
}

MotivationLosses MotivationModule::train_step(const Tensor& states, const Tensor& next_states) {
  MotivationLosses l;
  l.predictor = predictor_update(states);
  switch (config_.variant) {
    case Variant::none:
    case Variant::rnd:
      break;
    case Variant::snd_v: {
      l.target = sndv_target_update(make_sndv_batch(states)).value;
      break;
    }
    case Variant::snd_std: {
      const auto s = stdim_target_update(states, next_states);
      l.target = s.total;
      l.gl = s.gl;
      l.ll = s.ll;
      l.logit_norm = s.l2;
      l.sigma = s.sigma;
      break;
    }
    case Variant::snd_vic: {
      const auto v = vicreg_target_update(states, next_states);
      l.target = v.total;
      l.invariance = v.invariance;
      l.variance = v.variance;
      l.covariance = v.covariance;
      break;
    }
  }
  return l;
}

MotivationLosses MotivationModule::module_update(const Tensor& frames, const Tensor& next_frames) {
  check_input(frames, "module_update");
  if (next_frames.shape() != frames.shape()) throw ContractError("module_update: pair batches differ in shape");
  const std::size_t n = frames.dim(0);
  const std::size_t take = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::llround(config_.sample_fraction * static_cast<double>(n))), 2, n);
  const std::size_t mb = std::min(config_.batch_size, take);

  MotivationLosses sum;
  sum.predictor = 0.0;
  std::size_t count = 0;
  std::vector<std::size_t> order(n);
  auto accumulate = [](double& acc, double v) { acc = std::isnan(acc) ? v : acc + v; };
  for (std::size_t epoch = 0; epoch < config_.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), sample_rng_);
    for (std::size_t start = 0; start + mb <= take; start += mb) {
      const std::span<const std::size_t> idx(order.data() + start, mb);
      const auto l = train_step(prepare(frames.gather(idx)), prepare(next_frames.gather(idx)));
      sum.predictor += l.predictor;
      const std::initializer_list<std::pair<double*, double>> parts{
          {&sum.target, l.target}, {&sum.invariance, l.invariance}, {&sum.variance, l.variance},
          {&sum.covariance, l.covariance}, {&sum.gl, l.gl}, {&sum.ll, l.ll}, {&sum.logit_norm, l.logit_norm},
          {&sum.sigma, l.sigma}};
      for (auto [acc, v] : parts) {
        if (!std::isnan(v)) accumulate(*acc, v);
      }
      ++count;
    }
  }
  const double c = static_cast<double>(std::max<std::size_t>(count, 1));
  for (double* v : {&sum.predictor, &sum.target, &sum.invariance, &sum.variance, &sum.covariance, &sum.gl, &sum.ll,
                    &sum.logit_norm, &sum.sigma}) {
    *v /= c;
  }
  return sum;
}

nlohmann::json MotivationModule::manifest() const {
  const auto& c = config_;
  return {{"variant", to_string(c.variant)},
          {"seed", seed_},
          {"input_shape", c.input_shape},
          {"channels", c.channels},
          {"feature_dim", c.feature_dim},
          {"predictor_hidden", c.predictor_hidden},
          {"target_gain", target_gain(c)},
          {"hyperparameters",
           {{"beta1", c.stdim.beta1},
            {"beta2", c.stdim.beta2},
            {"lambda", c.vicreg.lambda},
            {"mu", c.vicreg.mu},
            {"nu", c.vicreg.nu},
            {"tau", c.vicreg.tau},
            {"sndv_loss", c.sndv_loss == SndvLoss::mse ? "mse" : "hinge"},
            {"sndv_unsquared", c.sndv_unsquared}}},
          {"target", network_manifest(target_)},
          {"predictor", network_manifest(predictor_)},
          {"target_adam", adam_manifest(target_opt_)},
          {"predictor_adam", adam_manifest(predictor_opt_)},
          {"projection_adam", adam_manifest(proj_opt_)},
          {"obs_stats", obs_stats_.save()},
          {"sample_rng", rng_to_string(sample_rng_)},
          {"aug_rng", rng_to_string(aug_rng_)}};
}

void MotivationModule::append_blob(std::vector<float>& blob) const {
  append_parameters(target_.parameters(), blob);
  append_parameters(predictor_.parameters(), blob);
  append_parameters(projections_, blob);
  append_adam(target_opt_, blob);
  append_adam(predictor_opt_, blob);
  append_adam(proj_opt_, blob);
}

void MotivationModule::restore(const nlohmann::json& m, const std::vector<float>& blob, std::size_t& offset) {
  if (m.at("variant").get<std::string>() != to_string(config_.variant) ||
      m.at("feature_dim").get<std::size_t>() != config_.feature_dim ||
      m.at("predictor_hidden").get<std::size_t>() != config_.predictor_hidden ||
      m.at("channels").get<std::size_t>() != config_.channels) {
    throw LoadError("motivation checkpoint does not match the configured module");
  }
  offset = read_parameters(target_.parameters(), blob, offset);
  offset = read_parameters(predictor_.parameters(), blob, offset);
  offset = read_parameters(projections_, blob, offset);
  offset = read_adam(target_opt_, m.at("target_adam"), target_.parameters(), blob, offset);
  offset = read_adam(predictor_opt_, m.at("predictor_adam"), predictor_.parameters(), blob, offset);
  offset = read_adam(proj_opt_, m.at("projection_adam"), projections_, blob, offset);
  obs_stats_ = RunningStats::load(m.at("obs_stats"));
  sample_rng_ = rng_from_string(m.at("sample_rng").get<std::string>());
  aug_rng_ = rng_from_string(m.at("aug_rng").get<std::string>());
}

}  // namespace snd
