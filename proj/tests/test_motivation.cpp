#include <doctest.h>

#include <chrono>
#include <cmath>
#include <cstring>
#include <random>

#include "gradient_suite.hpp"
#include "helpers.hpp"
#include "oracles.hpp"
#include "snd/errors.hpp"
#include "snd/motivation.hpp"

using namespace snd;
using snd::testing::random_tensor;

namespace {

MotivationConfig small_config(Variant v) {
  MotivationConfig c;
  c.variant = v;
  c.input_shape = {1, 16, 16};
  c.channels = 4;
  c.feature_dim = 16;
  c.predictor_hidden = 32;
  c.batch_size = 16;
  return c;
}

Tensor frames(std::size_t n, std::size_t size, std::mt19937_64& rng) {
  return random_tensor<float>({n, 1, size, size}, rng, 0.0, 1.0);
}

bool same_bytes(const Network& a, const Network& b) {
  for (std::size_t i = 0; i < a.parameters().size(); ++i) {
    const auto& x = a.parameters()[i].value;
    const auto& y = b.parameters()[i].value;
    if (x.size() != y.size() || std::memcmp(x.data(), y.data(), x.size() * sizeof(float)) != 0) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("every loss gradient matches finite differences") {
  const auto start = std::chrono::steady_clock::now();
  for (std::uint64_t seed : {1u, 2u}) {
    for (const auto& c : snd::testing::run_gradient_suite(seed)) {
      CAPTURE(c.name);
      CHECK(c.params <= 500);
      CHECK(c.worst <= 1.0);
      CHECK(c.scale > 1e-3);
    }
  }
  CHECK(std::chrono::steady_clock::now() - start < std::chrono::minutes(2));
}

TEST_CASE("losses match loop oracles on random features") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 2 + trial % 7, d = 1 + trial % 8;
    const TensorD z = random_tensor<double>({n, d}, rng), z2 = random_tensor<double>({n, d}, rng);
    const auto mz = oracle::to_mat(z), mz2 = oracle::to_mat(z2);
    std::vector<float> tau(n);
    for (std::size_t i = 0; i < n; ++i) tau[i] = static_cast<float>(i % 2);
    CHECK(distillation_loss(z, z2).value == doctest::Approx(oracle::distillation(mz, mz2)).epsilon(1e-9));
    CHECK(sndv_loss(z, z2, tau, SndvLoss::mse, false).value ==
          doctest::Approx(oracle::sndv_mse(mz, mz2, tau)).epsilon(1e-9));
    CHECK(sndv_loss(z, z2, tau, SndvLoss::hinge, false).value ==
          doctest::Approx(oracle::sndv_hinge(mz, mz2, tau)).epsilon(1e-9));
    CHECK(std::abs(variance_term(z, 1.0).value - oracle::variance_term(mz, 1.0)) < 1e-9);
    CHECK(std::abs(covariance_term(z).value - oracle::covariance_term(mz)) < 1e-9);
    CHECK(std::abs(invariance_term(z, z2).value - oracle::invariance_term(mz, mz2)) < 1e-9);
    const auto v = vicreg_loss(z, z2, VicregWeights{});
    const auto ov = oracle::vicreg(mz, mz2, 1.0, 1.0, 1.0 / 25.0, 1.0);
    CHECK(std::abs(v.total - ov.total) < 1e-9);
    CHECK(std::abs(v.variance - ov.variance) < 1e-9);
    CHECK(std::abs(v.covariance - ov.covariance) < 1e-9);

    const std::size_t c = 1 + trial % 3, h = 1 + trial % 2, w = 2;
    const TensorD local = random_tensor<double>({n, c, h, w}, rng);
    const TensorD next = random_tensor<double>({n, c, h, w}, rng);
    const TensorD wg = random_tensor<double>({d, c}, rng), wl = random_tensor<double>({c, c}, rng);
    const auto s = stdim_loss(z, local, next, wg, wl, StdimWeights{0.3, 0.7});
    const auto os = oracle::stdim(mz, oracle::to_mat(local), oracle::to_mat(next), oracle::to_mat(wg),
                                  oracle::to_mat(wl), c, h, w, 0.3, 0.7);
    CHECK(s.gl == doctest::Approx(os.gl).epsilon(1e-9));
    CHECK(s.ll == doctest::Approx(os.ll).epsilon(1e-9));
    CHECK(s.l2 == doctest::Approx(os.l2).epsilon(1e-9));
    CHECK(s.sigma == doctest::Approx(os.sigma).epsilon(1e-9));
    CHECK(s.total == doctest::Approx(os.total).epsilon(1e-9));

    // float instantiation agrees with double
    const Tensor zf = tensor_cast<float>(z), z2f = tensor_cast<float>(z2);
    CHECK(vicreg_loss(zf, z2f, VicregWeights{}).total == doctest::Approx(v.total).epsilon(1e-5));
  }
}

TEST_CASE("pair loss examples") {
  const TensorD z({2, 3}, {0.1, 0.2, 0.3, -1.0, 0.5, 2.0});
  const std::vector<float> zero{0.0f, 0.0f};
  CHECK(sndv_loss(z, z, zero, SndvLoss::mse, false).value == 0.0);
  CHECK(sndv_loss(z, z, zero, SndvLoss::hinge, false).value == 0.0);

  TensorD unit = z;
  unit(0, 1) += 1.0;
  unit(1, 2) -= 1.0;
  const std::vector<float> one{1.0f, 1.0f};
  CHECK(sndv_loss(z, unit, one, SndvLoss::mse, false).value == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(sndv_loss(z, unit, one, SndvLoss::hinge, false).value == doctest::Approx(0.0).epsilon(1e-12));
  // tau = 0 under the hinge pulls by the squared distance
  CHECK(sndv_loss(z, unit, zero, SndvLoss::hinge, false).value == doctest::Approx(1.0));
  // unsquared distance of 2 against tau 1
  TensorD two = z;
  two(0, 0) += 2.0;
  two(1, 0) += 2.0;
  CHECK(sndv_loss(z, two, one, SndvLoss::mse, false).value == doctest::Approx(9.0));
  CHECK(sndv_loss(z, two, one, SndvLoss::mse, true).value == doctest::Approx(1.0));

  const TensorD single({1, 3});
  CHECK_THROWS_AS(sndv_loss(single, single, std::vector<float>{0.0f}, SndvLoss::mse, false), ContractError);
}

TEST_CASE("variance, covariance and invariance terms") {
  const TensorD same({4, 3}, std::vector<double>(12, 0.7));
  CHECK(variance_term(same, 1.0).value == doctest::Approx(1.0));
  const auto flat = variance_term(same, 1.0);
  for (double g : flat.dz.values()) CHECK(g == 0.0);
  CHECK(invariance_term(same, same).value == 0.0);

  // columns with unbiased std >= tau: hinge inactive, exactly zero
  const TensorD spread({4, 2}, {2, 0, -2, 3, 2, -3, -2, 0});
  CHECK(variance_term(spread, 1.0).value == 0.0);

  const TensorD decorrelated({4, 2}, {1, 1, 1, -1, -1, 1, -1, -1});
  CHECK(covariance_term(decorrelated).value == 0.0);

  std::mt19937_64 rng(3);
  const TensorD z = random_tensor<double>({6, 4}, rng);
  TensorD shifted = z;
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t k = 0; k < 4; ++k) shifted(i, k) += 10.0 * double(k + 1);
  CHECK(std::abs(covariance_term(z).value - covariance_term(shifted).value) < 1e-6);

  CHECK_THROWS_AS(variance_term(TensorD({1, 3}), 1.0), ContractError);
  CHECK_THROWS_AS(vicreg_loss(TensorD({1, 3}), TensorD({1, 3}), VicregWeights{}), ContractError);
}

TEST_CASE("InfoNCE terms: uniform scores give ln N, saturated scores give zero") {
  const std::size_t n = 3, d = 2, c = 3, h = 2, w = 1;
  std::mt19937_64 rng(4);
  const TensorD z = random_tensor<double>({n, d}, rng);
  TensorD local({n, c, h, w});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t y = 0; y < h; ++y) local[((i * c + i) * h + y) * w] = 1.0;
  const TensorD zero_g({d, c}), zero_l({c, c});
  const auto flat = stdim_loss(z, local, local, zero_g, zero_l, StdimWeights{0.0, 0.0});
  CHECK(flat.gl == doctest::Approx(double(h * w) * std::log(double(n))));
  CHECK(flat.ll == doctest::Approx(double(h * w) * std::log(double(n))));
  for (std::size_t i = 0; i < n; ++i) {
    // each location separately is ln N; the ratio check keeps the per-location claim explicit
    CHECK(flat.gl / double(h * w) == doctest::Approx(std::log(double(n))));
  }

  TensorD big({c, c});
  for (std::size_t k = 0; k < c; ++k) big(k, k) = 200.0;
  const auto sharp = stdim_loss(z, local, local, zero_g, big, StdimWeights{0.0, 0.0});
  CHECK(sharp.ll < 1e-12);
  CHECK(sharp.ll >= 0.0);

  CHECK_THROWS_AS(stdim_loss(TensorD({1, d}), TensorD({1, c, h, w}), TensorD({1, c, h, w}), zero_g, zero_l,
                             StdimWeights{}),
                  ContractError);
}

TEST_CASE("augmentation") {
  std::mt19937_64 rng(5);
  const Tensor x = frames(8, 16, rng);
  AugmentConfig off;
  off.scheme = AugScheme::noise_tiles_conv;
  off.noise = 0.0;
  off.tile_prob = 0.0;
  off.conv_prob = 0.0;
  CHECK(augment(x, off, rng) == x);

  AugmentConfig tiles = off;
  tiles.tile_prob = 1.0;
  tiles.tile_drop = 1.0;
  tiles.tile_sizes = {16};
  const Tensor blank = augment(x, tiles, rng);
  for (float v : blank.values()) CHECK(v == 0.0f);

  AugmentConfig noise;
  const Tensor mid = random_tensor<float>({10000, 1, 2, 2}, rng, 0.0, 1.0);
  const Tensor y = augment(mid, noise, rng);
  double worst = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) worst = std::max(worst, double(std::abs(y[i] - mid[i])));
  CHECK(worst <= 0.2 + 1e-6);
  CHECK(worst > 0.19);
  for (float v : y.values()) CHECK((v >= 0.0f && v <= 1.0f));

  // the random convolution kernel is unit-norm: a centered impulse reproduces it
  AugmentConfig conv = off;
  conv.conv_prob = 1.0;
  conv.clip = false;
  Tensor impulse({1, 1, 5, 5});
  impulse[12] = 1.0f;
  const Tensor k = augment(impulse, conv, rng);
  double sq = 0.0;
  for (float v : k.values()) sq += double(v) * v;
  CHECK(sq == doctest::Approx(1.0).epsilon(1e-5));

  CHECK_THROWS_AS(validate(tiles, 8), ContractError);
  CHECK(parse_aug_scheme("noise+tiles") == AugScheme::noise_tiles);
}

TEST_CASE("intrinsic reward is the squared distance between the two nets") {
  std::mt19937_64 rng(6);
  MotivationModule m(small_config(Variant::rnd), 3);
  const Tensor x = frames(5, 16, rng);
  const auto r = m.intrinsic_reward(x);
  const auto zt = m.target().evaluate(x).output, zp = m.predictor().evaluate(x).output;
  for (std::size_t i = 0; i < 5; ++i) {
    double d = 0.0;
    for (std::size_t k = 0; k < zt.dim(1); ++k) d += double(zt(i, k) - zp(i, k)) * double(zt(i, k) - zp(i, k));
    CHECK(r[i] == doctest::Approx(d).epsilon(1e-6));
    CHECK(r[i] >= 0.0f);
  }
  const auto same = squared_distances(zt, zt);
  for (double v : same) CHECK(v < 1e-10);
  Tensor moved = zt;
  moved(0, 3) += 1.0f;
  CHECK(squared_distances(zt, moved)[0] == doctest::Approx(1.0).epsilon(1e-6));
  CHECK_THROWS_AS(m.intrinsic_reward(frames(2, 8, rng)), ContractError);
}

TEST_CASE("target gains and variant names") {
  CHECK(target_gain(small_config(Variant::rnd)) == doctest::Approx(std::sqrt(2.0)));
  CHECK(target_gain(small_config(Variant::snd_v)) == doctest::Approx(std::sqrt(2.0)));
  CHECK(target_gain(small_config(Variant::snd_std)) == 0.5);
  CHECK(target_gain(small_config(Variant::snd_vic)) == 0.5);
  CHECK(parse_variant("snd-vic") == Variant::snd_vic);
  CHECK(to_string(Variant::snd_std) == "snd-std");
  CHECK_THROWS(parse_variant("icm"));
}

TEST_CASE("predictor and target updates touch only their own network") {
  std::mt19937_64 rng(7);
  const Tensor s = frames(16, 16, rng), s2 = frames(16, 16, rng);
  for (Variant v : {Variant::rnd, Variant::snd_v, Variant::snd_std, Variant::snd_vic}) {
    CAPTURE(to_string(v));
    MotivationModule m(small_config(v), 11);
    const Network target0 = m.target(), predictor0 = m.predictor();
    m.predictor_update(s);
    CHECK(same_bytes(m.target(), target0));
    CHECK_FALSE(same_bytes(m.predictor(), predictor0));
    const Network predictor1 = m.predictor();
    switch (v) {
      case Variant::snd_v: m.sndv_target_update(m.make_sndv_batch(s)); break;
      case Variant::snd_std: m.stdim_target_update(s, s2); break;
      case Variant::snd_vic: m.vicreg_target_update(s, s2); break;
      default: break;
    }
    CHECK(same_bytes(m.predictor(), predictor1));
    CHECK(same_bytes(m.target(), target0) == (v == Variant::rnd));
  }
}

TEST_CASE("module updates: fixed RND target, moving SND-VIC target, determinism") {
  std::mt19937_64 rng(8);
  const Tensor s = frames(64, 16, rng), s2 = frames(64, 16, rng);
  MotivationModule rnd(small_config(Variant::rnd), 2);
  const Network t0 = rnd.target();
  const auto l = rnd.module_update(s, s2);
  CHECK(same_bytes(rnd.target(), t0));
  CHECK(std::isnan(l.target));
  CHECK(l.predictor > 0.0);

  for (Variant v : {Variant::snd_v, Variant::snd_std, Variant::snd_vic}) {
    MotivationModule a(small_config(v), 4), b(small_config(v), 4);
    const Network before = a.target();
    const auto la = a.module_update(s, s2), lb = b.module_update(s, s2);
    CHECK(la.predictor == lb.predictor);
    CHECK(la.target == lb.target);
    CHECK_FALSE(std::isnan(la.target));
    CHECK_FALSE(same_bytes(a.target(), before));
    if (v == Variant::snd_vic) CHECK(la.variance > 0.0);
  }
}

TEST_CASE("SND-V with a frozen target reproduces RND exactly") {
  std::mt19937_64 rng(9);
  MotivationConfig rc = small_config(Variant::rnd);
  MotivationConfig vc = small_config(Variant::snd_v);
  vc.target_lr = 0.0;
  MotivationModule rnd(rc, 21), sndv(vc, 21);
  const Tensor probe = frames(32, 16, rng);
  for (int u = 0; u < 100; ++u) {
    const Tensor s = frames(32, 16, rng), s2 = frames(32, 16, rng);
    rnd.module_update(s, s2);
    sndv.module_update(s, s2);
    const auto a = rnd.intrinsic_reward(probe), b = sndv.intrinsic_reward(probe);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) <= 1e-6);
  }
}

TEST_CASE("the predictor drives distillation error on a fixed buffer below 1% of its start") {
  MotivationConfig c;
  c.variant = Variant::rnd;
  MotivationModule m(c, 5);
  std::mt19937_64 rng(10);
  const Tensor buffer = frames(32, 32, rng);
  const double initial = m.predictor_update(buffer);
  double last = initial;
  for (int step = 1; step < 2000 && last >= 0.01 * initial; ++step) last = m.predictor_update(buffer);
  CHECK(last < 0.01 * initial);
}

TEST_CASE("module state survives a manifest and blob round trip") {
  std::mt19937_64 rng(12);
  const Tensor s = frames(32, 16, rng), s2 = frames(32, 16, rng);
  for (Variant v : {Variant::snd_v, Variant::snd_std, Variant::snd_vic}) {
    MotivationModule a(small_config(v), 6);
    a.module_update(s, s2);
    std::vector<float> blob;
    a.append_blob(blob);
    MotivationModule b(small_config(v), 99);
    std::size_t offset = 0;
    b.restore(a.manifest(), blob, offset);
    CHECK(offset == blob.size());
    const auto la = a.module_update(s, s2), lb = b.module_update(s, s2);
    CHECK(la.target == lb.target);
    CHECK(a.intrinsic_reward(s) == b.intrinsic_reward(s));
  }
  MotivationModule vic(small_config(Variant::snd_vic), 1);
  MotivationModule stdm(small_config(Variant::snd_std), 1);
  std::vector<float> blob;
  vic.append_blob(blob);
  std::size_t offset = 0;
  CHECK_THROWS_AS(stdm.restore(vic.manifest(), blob, offset), LoadError);
}
