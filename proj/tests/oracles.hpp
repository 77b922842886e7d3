#pragma once

// Direct loop-by-loop recomputations of the training losses, written
// independently of src/losses.cpp. Matrices are row-major vectors of rows.

#include <algorithm>
#include <cmath>
#include <vector>

#include "snd/tensor.hpp"

namespace snd::oracle {

using Mat = std::vector<std::vector<double>>;

template <typename T>
Mat to_mat(const BasicTensor<T>& t) {
  const std::size_t n = t.dim(0), d = t.size() / n;
  Mat m(n, std::vector<double>(d));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) m[i][j] = static_cast<double>(t[i * d + j]);
  return m;
}

inline double sqdist(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
  return s;
}

inline double distillation(const Mat& t, const Mat& p) {
  double s = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) s += sqdist(t[i], p[i]);
  return s / static_cast<double>(t.size());
}

inline double sndv_mse(const Mat& z, const Mat& z2, const std::vector<float>& tau) {
  double s = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double e = tau[i] - sqdist(z[i], z2[i]);
    s += e * e;
  }
  return s / static_cast<double>(z.size());
}

inline double sndv_hinge(const Mat& z, const Mat& z2, const std::vector<float>& tau) {
  double s = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double d = sqdist(z[i], z2[i]);
    s += tau[i] == 0.0f ? d : std::max(1.0 - d, 0.0);
  }
  return s / static_cast<double>(z.size());
}

inline std::vector<double> column_means(const Mat& z) {
  std::vector<double> m(z[0].size(), 0.0);
  for (const auto& row : z)
    for (std::size_t k = 0; k < row.size(); ++k) m[k] += row[k];
  for (double& v : m) v /= static_cast<double>(z.size());
  return m;
}

// Unbiased covariance matrix.
inline Mat covariance(const Mat& z) {
  const std::size_t n = z.size(), d = z[0].size();
  const auto m = column_means(z);
  Mat c(d, std::vector<double>(d, 0.0));
  for (std::size_t a = 0; a < d; ++a)
    for (std::size_t b = 0; b < d; ++b) {
      for (std::size_t i = 0; i < n; ++i) c[a][b] += (z[i][a] - m[a]) * (z[i][b] - m[b]);
      c[a][b] /= static_cast<double>(n - 1);
    }
  return c;
}

inline double variance_term(const Mat& z, double tau) {
  const auto c = covariance(z);
  double s = 0.0;
  for (std::size_t k = 0; k < c.size(); ++k) s += std::max(0.0, tau - std::sqrt(c[k][k]));
  return s / static_cast<double>(c.size());
}

inline double covariance_term(const Mat& z) {
  const auto c = covariance(z);
  const std::size_t d = c.size();
  double s = 0.0;
  for (std::size_t a = 0; a < d; ++a)
    for (std::size_t b = 0; b < d; ++b)
      if (a != b) s += c[a][b] * c[a][b];
  return s / (static_cast<double>(z.size() - 1) * static_cast<double>(d));
}

inline double invariance_term(const Mat& z, const Mat& z2) { return distillation(z, z2); }

struct Vicreg {
  double invariance, variance, covariance, total;
};

inline Vicreg vicreg(const Mat& z, const Mat& z2, double lambda, double mu, double nu, double tau) {
  Vicreg v;
  v.invariance = invariance_term(z, z2);
  v.variance = variance_term(z, tau) + variance_term(z2, tau);
  v.covariance = covariance_term(z) + covariance_term(z2);
  v.total = lambda * v.invariance + mu * v.variance + nu * v.covariance;
  return v;
}

struct Stdim {
  double gl, ll, l2, sigma, total;
};

// z (N, D); local and local_next (N, C, H, W) flattened per row; w_g (D, C); w_l (C, C).
inline Stdim stdim(const Mat& z, const Mat& local, const Mat& local_next, const Mat& w_g, const Mat& w_l,
                   std::size_t c, std::size_t h, std::size_t w, double beta1, double beta2) {
  const std::size_t n = z.size(), d = z[0].size();
  auto at = [&](const Mat& m, std::size_t i, std::size_t ch, std::size_t y, std::size_t x) {
    return m[i][(ch * h + y) * w + x];
  };
  auto infonce = [&](const Mat& s) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double mx = s[i][0];
      for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, s[i][j]);
      double sum = 0.0;
      for (std::size_t j = 0; j < n; ++j) sum += std::exp(s[i][j] - mx);
      total += mx + std::log(sum) - s[i][i];
    }
    return total / static_cast<double>(n);
  };
  auto frobenius = [&](const Mat& s) {
    double sum = 0.0;
    for (const auto& row : s)
      for (double v : row) sum += v * v;
    return std::sqrt(sum);
  };
  Stdim out{0.0, 0.0, 0.0, 0.0, 0.0};
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      Mat g(n, std::vector<double>(n, 0.0)), f(n, std::vector<double>(n, 0.0));
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          for (std::size_t a = 0; a < c; ++a) {
            const double next = at(local_next, j, a, y, x);
            for (std::size_t k = 0; k < d; ++k) g[i][j] += z[i][k] * w_g[k][a] * next;
            for (std::size_t b = 0; b < c; ++b) f[i][j] += at(local, i, b, y, x) * w_l[b][a] * next;
          }
        }
      }
      out.gl += infonce(g);
      out.ll += infonce(f);
      out.l2 += frobenius(g) + frobenius(f);
    }
  }
  const auto cov = covariance(z);
  for (std::size_t k = 0; k < d; ++k) out.sigma -= std::sqrt(cov[k][k]);
  out.sigma /= static_cast<double>(d);
  out.total = (out.gl + out.ll + beta1 * out.l2) / static_cast<double>(h * w) + beta2 * out.sigma;
  return out;
}

struct RankTest {
  double u_a;
  double p_two_sided;
  double p_greater;
};

// U of sample a by direct pair counting, ties counting one half.
inline double pair_count_u(const std::vector<double>& a, const std::vector<double>& b) {
  double u = 0.0;
  for (double x : a)
    for (double y : b) u += x > y ? 1.0 : (x == y ? 0.5 : 0.0);
  return u;
}

// Exact null distribution by visiting every split of the pooled values into
// groups of the original sizes.
inline RankTest enumerate_mann_whitney(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> pool(a);
  pool.insert(pool.end(), b.begin(), b.end());
  const std::size_t n = pool.size(), na = a.size();
  const double observed = pair_count_u(a, b);
  const double mu = static_cast<double>(a.size() * b.size()) / 2.0;
  const double dev = std::abs(observed - mu);
  double total = 0.0, extreme = 0.0, upper = 0.0;
  std::vector<int> pick(n, 0);
  std::fill(pick.begin(), pick.begin() + static_cast<long>(na), 1);
  std::sort(pick.begin(), pick.end());
  do {
    std::vector<double> x, y;
    for (std::size_t i = 0; i < n; ++i) (pick[i] ? x : y).push_back(pool[i]);
    const double u = pair_count_u(x, y);
    total += 1.0;
    if (std::abs(u - mu) >= dev - 1e-9) extreme += 1.0;
    if (u >= observed - 1e-9) upper += 1.0;
  } while (std::next_permutation(pick.begin(), pick.end()));
  return {observed, extreme / total, upper / total};
}

}  // namespace snd::oracle
