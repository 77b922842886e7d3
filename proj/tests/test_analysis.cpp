#include <doctest.h>

#include <cmath>
#include <random>

#include "helpers.hpp"
#include "oracles.hpp"
#include "snd/analysis.hpp"
#include "snd/errors.hpp"
#include "snd/stats_tests.hpp"

using namespace snd;
using snd::testing::random_tensor;

namespace {

StateLog synthetic_log(std::size_t k, std::size_t size, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  StateLog log;
  log.states = random_tensor<float>({k, 1, size, size}, rng, 0.0, 1.0);
  for (std::size_t i = 0; i < k; ++i) {
    log.steps.push_back(10 * i);
    log.rooms.push_back(static_cast<std::uint32_t>(i / 50));
  }
  return log;
}

MotivationConfig probe_module(Variant v) {
  MotivationConfig c;
  c.variant = v;
  c.input_shape = {1, 16, 16};
  c.channels = 4;
  c.feature_dim = 16;
  c.predictor_hidden = 32;
  return c;
}

}  // namespace

TEST_CASE("distance matrix examples and properties") {
  const std::vector<std::vector<double>> same(3, {1.0, 2.0});
  for (double v : distance_matrix(same)) CHECK(v == 0.0);
  const auto e = distance_matrix(std::vector<std::vector<double>>{{1, 0}, {0, 1}});
  CHECK(e[1] == doctest::Approx(std::sqrt(2.0)));
  CHECK(e[2] == doctest::Approx(std::sqrt(2.0)));
  CHECK_THROWS_AS(distance_matrix(std::vector<std::vector<double>>{{1, 0}, {1}}), ContractError);

  std::mt19937_64 rng(1);
  const Tensor items = random_tensor<float>({50, 8}, rng);
  const auto d = distance_matrix(items);
  for (std::size_t i = 0; i < 50; ++i) {
    CHECK(d[i * 50 + i] == 0.0);
    for (std::size_t j = 0; j < 50; ++j) {
      double s = 0.0;
      for (std::size_t c = 0; c < 8; ++c) s += double(items(i, c) - items(j, c)) * double(items(i, c) - items(j, c));
      CHECK(std::abs(d[i * 50 + j] - std::sqrt(s)) < 1e-6);
      CHECK(d[i * 50 + j] == d[j * 50 + i]);
    }
  }
  std::uniform_int_distribution<std::size_t> pick(0, 49);
  for (int t = 0; t < 1000; ++t) {
    const std::size_t a = pick(rng), b = pick(rng), c = pick(rng);
    CHECK(d[a * 50 + c] <= d[a * 50 + b] + d[b * 50 + c] + 1e-9);
  }
}

TEST_CASE("PCA spectrum") {
  // rank one: points on a line through R^4
  TensorD line({20, 4});
  for (std::size_t i = 0; i < 20; ++i)
    for (std::size_t k = 0; k < 4; ++k) line(i, k) = (double(i) - 3.0) * (0.5 + double(k)) + double(k);
  const auto r1 = pca_spectrum(line);
  CHECK(r1.eigenvalues.size() == 4);
  CHECK(r1.eigenvalues[0] > 1e-8);
  for (std::size_t k = 1; k < 4; ++k) CHECK(r1.eigenvalues[k] <= 1e-8);

  // isotropic unit variance
  std::mt19937_64 rng(2);
  std::normal_distribution<double> nd(0.0, 1.0);
  TensorD iso({10000, 8});
  for (auto& v : iso.values()) v = nd(rng);
  const auto ri = pca_spectrum(iso);
  for (double ev : ri.eigenvalues) CHECK(ev == doctest::Approx(1.0).epsilon(0.1));
  for (std::size_t k = 1; k < 8; ++k) CHECK(ri.eigenvalues[k - 1] >= ri.eigenvalues[k]);

  // rows +-(2,0,0), +-(0,1,1), +-(0,1,-1): covariance diag(8, 4, 4) / 5
  TensorD x({6, 3}, {2, 0, 0, -2, 0, 0, 0, 1, 1, 0, -1, -1, 0, 1, -1, 0, -1, 1});
  const auto r3 = pca_spectrum(x);
  CHECK(r3.eigenvalues[0] == doctest::Approx(1.6).epsilon(1e-6));
  CHECK(r3.eigenvalues[1] == doctest::Approx(0.8).epsilon(1e-6));
  CHECK(r3.eigenvalues[2] == doctest::Approx(0.8).epsilon(1e-6));

  // non-diagonal case: cubic roots by the trigonometric method
  TensorD y = random_tensor<double>({30, 3}, rng);
  const auto cov = oracle::covariance(oracle::to_mat(y));
  const double p1 = cov[0][1] * cov[0][1] + cov[0][2] * cov[0][2] + cov[1][2] * cov[1][2];
  const double q = (cov[0][0] + cov[1][1] + cov[2][2]) / 3.0;
  const double p2 = (cov[0][0] - q) * (cov[0][0] - q) + (cov[1][1] - q) * (cov[1][1] - q) +
                    (cov[2][2] - q) * (cov[2][2] - q) + 2.0 * p1;
  const double p = std::sqrt(p2 / 6.0);
  double bm[3][3];
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) bm[i][j] = (cov[i][j] - (i == j ? q : 0.0)) / p;
  const double det = bm[0][0] * (bm[1][1] * bm[2][2] - bm[1][2] * bm[2][1]) -
                     bm[0][1] * (bm[1][0] * bm[2][2] - bm[1][2] * bm[2][0]) +
                     bm[0][2] * (bm[1][0] * bm[2][1] - bm[1][1] * bm[2][0]);
  const double phi = std::acos(std::clamp(det / 2.0, -1.0, 1.0)) / 3.0;
  const double e1 = q + 2.0 * p * std::cos(phi);
  const double e3 = q + 2.0 * p * std::cos(phi + 2.0 * M_PI / 3.0);
  const double e2 = 3.0 * q - e1 - e3;
  const auto ry = pca_spectrum(y);
  CHECK(std::abs(ry.eigenvalues[0] - e1) < 1e-6);
  CHECK(std::abs(ry.eigenvalues[1] - e2) < 1e-6);
  CHECK(std::abs(ry.eigenvalues[2] - e3) < 1e-6);
  CHECK(ry.eigenvalues[0] + ry.eigenvalues[1] + ry.eigenvalues[2] ==
        doctest::Approx(cov[0][0] + cov[1][1] + cov[2][2]).epsilon(1e-6));

  CHECK_THROWS_AS(pca_spectrum(TensorD({5, 0})), ContractError);
  CHECK(pca_spectrum(random_tensor<double>({3, 5}, rng)).underdetermined);
}

TEST_CASE("spectrum statistics") {
  const std::vector<double> v{1.0, 2.0, 3.0, 4.0, 5.0};
  CHECK(percentile(v, 0) == 1.0);
  CHECK(percentile(v, 25) == 2.0);
  CHECK(percentile(v, 50) == 3.0);
  CHECK(percentile(v, 95) == doctest::Approx(4.8));
  CHECK(percentile(v, 100) == 5.0);
  CHECK_THROWS_AS(percentile({}, 50), ContractError);

  TensorD f({2, 2}, {3, 4, 0, 1});
  const auto r = pca_spectrum(f);
  CHECK(r.l2_mean == doctest::Approx(3.0));
  CHECK(r.l2_std == doctest::Approx(2.0));
  // eigenvalues ascending for the percentiles: {0, 9}
  CHECK(r.q50 == doctest::Approx(4.5));
  CHECK(r.summary_csv().find("q25") != std::string::npos);
}

TEST_CASE("two-dimensional projection") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd(0.0, 1.0);
  TensorD axis({100, 2});
  for (std::size_t i = 0; i < 100; ++i) {
    axis(i, 0) = 3.0 * nd(rng) + 5.0;
    axis(i, 1) = 0.5 * nd(rng) - 1.0;
  }
  const auto p = pca_project2d(axis);
  double m0 = 0.0, m1 = 0.0;
  for (std::size_t i = 0; i < 100; ++i) {
    m0 += axis(i, 0);
    m1 += axis(i, 1);
  }
  m0 /= 100;
  m1 /= 100;
  // rotation-free input: each column equals the centered input up to sign, allowing for the
  // small correlation a finite sample carries
  const double s0 = p.coords(0, 0) * (axis(0, 0) - m0) >= 0 ? 1.0 : -1.0;
  for (std::size_t i = 0; i < 100; ++i) CHECK(s0 * p.coords(i, 0) == doctest::Approx(axis(i, 0) - m0).epsilon(0.05));

  TensorD rank1({30, 3});
  for (std::size_t i = 0; i < 30; ++i)
    for (std::size_t k = 0; k < 3; ++k) rank1(i, k) = double(i) * double(k + 1);
  const auto p1 = pca_project2d(rank1);
  for (std::size_t i = 0; i < 30; ++i) CHECK(std::abs(p1.coords(i, 1)) < 1e-6);

  const TensorD rnd = random_tensor<double>({200, 6}, rng);
  const auto pr = pca_project2d(rnd);
  double v0 = 0.0, v1 = 0.0;
  for (std::size_t i = 0; i < 200; ++i) {
    v0 += pr.coords(i, 0) * pr.coords(i, 0);
    v1 += pr.coords(i, 1) * pr.coords(i, 1);
  }
  CHECK(v0 >= v1);
  // residual after two components equals the dropped eigenvalues (scaled to sums of squares)
  const auto x = oracle::to_mat(rnd);
  const auto mean = oracle::column_means(x);
  double total = 0.0;
  for (const auto& row : x)
    for (std::size_t k = 0; k < 6; ++k) total += (row[k] - mean[k]) * (row[k] - mean[k]);
  const double residual = total - v0 - v1;
  double dropped = 0.0;
  for (std::size_t k = 2; k < 6; ++k) dropped += pr.eigenvalues[k];
  CHECK(residual / 199.0 == doctest::Approx(dropped).epsilon(1e-5));
  CHECK_THROWS_AS(pca_project2d(TensorD({10, 1})), ContractError);
}

TEST_CASE("Mann-Whitney U examples") {
  const std::vector<double> one{1.0};
  const auto tie = mann_whitney_u(one, one);
  CHECK(tie.u == 0.5);
  CHECK(tie.p == doctest::Approx(1.0));
  const std::vector<double> a{1, 2, 3}, b{4, 5, 6};
  const auto sep = mann_whitney_u(a, b);
  CHECK(sep.u == 0.0);
  CHECK(sep.exact);
  CHECK(sep.p == doctest::Approx(0.1));
  CHECK(mann_whitney_u(b, a, Alternative::greater).p == doctest::Approx(0.05));
  CHECK(mann_whitney_u(a, b, Alternative::greater).p == doctest::Approx(1.0));
  CHECK(mid_ranks(std::vector<double>{3, 1, 3, 2}) == std::vector<double>{3.5, 1, 3.5, 2});
}

TEST_CASE("exact Mann-Whitney p values match permutation enumeration") {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> coarse(0, 5);
  std::normal_distribution<double> nd(0.0, 1.0);
  for (std::size_t na = 1; na <= 8; ++na) {
    for (std::size_t nb = 1; nb <= 8 && na * nb <= 64; ++nb) {
      for (int trial = 0; trial < 3; ++trial) {
        std::vector<double> a(na), b(nb);
        // odd trials use coarse values so ties appear
        for (auto& v : a) v = trial % 2 ? double(coarse(rng)) : nd(rng) + 0.5;
        for (auto& v : b) v = trial % 2 ? double(coarse(rng)) : nd(rng);
        const auto oracle = oracle::enumerate_mann_whitney(a, b);
        const auto two = mann_whitney_u(a, b);
        const auto greater = mann_whitney_u(a, b, Alternative::greater);
        CAPTURE(na);
        CAPTURE(nb);
        CHECK(two.exact);
        CHECK(two.u_a == oracle.u_a);
        CHECK(std::abs(two.p - oracle.p_two_sided) < 1e-9);
        CHECK(std::abs(greater.p - oracle.p_greater) < 1e-9);
      }
    }
  }
}

TEST_CASE("Mann-Whitney U is invariant under monotone transforms and falls back to the normal approximation") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<double> a(12), b(9);
  for (auto& v : a) v = nd(rng);
  for (auto& v : b) v = nd(rng) + 0.3;
  auto ta = a, tb = b;
  for (auto& v : ta) v = std::exp(3.0 * v) + 7.0;
  for (auto& v : tb) v = std::exp(3.0 * v) + 7.0;
  const auto r = mann_whitney_u(a, b), t = mann_whitney_u(ta, tb);
  CHECK(r.u == t.u);
  CHECK(r.p == t.p);

  std::vector<double> big_a(30), big_b(30);
  for (auto& v : big_a) v = nd(rng) + 1.0;
  for (auto& v : big_b) v = nd(rng);
  const auto approx = mann_whitney_u(big_a, big_b, Alternative::greater);
  CHECK_FALSE(approx.exact);
  CHECK(approx.p < 0.01);
  const auto both = mann_whitney_u(big_a, big_b);
  CHECK(both.p == doctest::Approx(2.0 * approx.p).epsilon(1e-9));
  CHECK_THROWS(mann_whitney_u(std::vector<double>{}, big_b));
}

TEST_CASE("novelty probe") {
  const StateLog log = synthetic_log(300, 16, 6);
  ProbeConfig pc;
  pc.train_steps = 50;
  pc.batch_size = 16;
  pc.eval_batch = 1000;
  pc.eval_every = 10;
  pc.fixed_position = 150;

  {
    MotivationModule untrained(probe_module(Variant::rnd), 1);
    ProbeConfig none = pc;
    none.train_steps = 0;
    const auto r = novelty_probe(untrained, log, none);
    REQUIRE(r.rows.size() >= 1);
    CHECK(r.rows[0].past > 0.0);
    CHECK(r.rows[0].near_future > 0.0);
    CHECK(r.rows[0].far_future > 0.0);
    CHECK(r.rows[0].random > 0.0);
  }
  {
    MotivationConfig frozen = probe_module(Variant::rnd);
    frozen.predictor_lr = 0.0;
    MotivationModule m(frozen, 2);
    const auto r = novelty_probe(m, log, pc);
    CHECK(r.rows.size() == 6);
    for (const auto& row : r.rows) {
      CHECK(row.past == r.rows[0].past);
      CHECK(row.far_future == r.rows[0].far_future);
      CHECK(row.random == r.rows[0].random);
    }
  }
  {
    MotivationModule m(probe_module(Variant::snd_vic), 3);
    ProbeConfig adv = pc;
    adv.fixed_position.reset();
    adv.eval_batch = 32;
    const auto r = novelty_probe(m, log, adv);
    CHECK(r.rows.size() == 3);  // initial plus positions 128 and 256
    CHECK(r.rows.back().position == 256);
    CHECK(r.rows.back().update == 50);
    for (const auto& row : r.rows) CHECK(row.past >= 0.0);
    CHECK(r.to_csv().rfind("update,position,past,near_future,far_future,random\n", 0) == 0);
  }
  MotivationModule m(probe_module(Variant::rnd), 4);
  ProbeConfig bad = pc;
  bad.fixed_position = 300;
  CHECK_THROWS_AS(novelty_probe(m, log, bad), ContractError);
  CHECK_THROWS_AS(novelty_probe(m, synthetic_log(100, 16, 1), pc), ContractError);
}

TEST_CASE("state logs round-trip and validate") {
  const StateLog log = synthetic_log(20, 8, 7);
  const auto path = std::filesystem::temp_directory_path() / "snd_state_log_test.f32";
  save_state_log(log, path);
  const StateLog back = load_state_log(path);
  CHECK(back.states == log.states);
  CHECK(back.steps == log.steps);
  CHECK(back.rooms == log.rooms);
  const StateLog part = log.slice(5, 10);
  CHECK(part.size() == 5);
  CHECK(part.steps.front() == 50);
  StateLog bad = log;
  bad.steps[3] = bad.steps[2];
  CHECK_THROWS_AS(bad.validate(), ContractError);
}
