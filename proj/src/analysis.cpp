#include "snd/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <sstream>

#include <Eigen/Dense>

#include "snd/errors.hpp"

namespace snd {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

double mean_reward(const MotivationModule& module, const StateLog& log, std::size_t lo, std::size_t hi,
                   std::size_t count, std::mt19937_64& rng) {
  if (hi <= lo) return NAN;
  std::vector<std::size_t> idx(std::min(count, hi - lo));
  if (idx.size() == hi - lo) {
    std::iota(idx.begin(), idx.end(), lo);
  } else {
    std::uniform_int_distribution<std::size_t> pick(lo, hi - 1);
    for (auto& i : idx) i = pick(rng);
  }
  const auto r = module.intrinsic_reward(module.prepare(log.states.gather(idx)));
  double sum = 0.0;
  for (float v : r) sum += v;
  return sum / static_cast<double>(r.size());
}

}  // namespace

std::string ProbeReport::to_csv() const {
  std::ostringstream out;
  out << "update,position,past,near_future,far_future,random\n";
  for (const auto& r : rows) {
    out << r.update << ',' << r.position << ',' << fmt(r.past) << ',' << fmt(r.near_future) << ','
        << fmt(r.far_future) << ',' << fmt(r.random) << '\n';
  }
  return out.str();
}

ProbeReport novelty_probe(MotivationModule& module, const StateLog& log, const ProbeConfig& config) {
  log.validate();
  const std::size_t k = log.size();
  if (k <= config.near_window) {
    throw ContractError("novelty_probe: log of " + std::to_string(k) + " states does not exceed the near window");
  }
  if (config.batch_size < 2 || config.eval_batch == 0 || config.eval_every == 0) {
    throw ContractError("novelty_probe: batch sizes and evaluation interval must be positive");
  }
  std::mt19937_64 rng(config.seed);
  ProbeReport report;
  auto evaluate = [&](std::size_t update, std::size_t n) {
    ProbeRow row;
    row.update = update;
    row.position = n;
    row.past = mean_reward(module, log, 0, n, config.eval_batch, rng);
    row.near_future = mean_reward(module, log, n + 1, std::min(k, n + config.near_window), config.eval_batch, rng);
    row.far_future = mean_reward(module, log, n + 1, k, config.eval_batch, rng);
    row.random = mean_reward(module, log, 0, k, config.eval_batch, rng);
    report.rows.push_back(row);
  };
  auto train = [&](std::size_t n) {
    // pairs (m, m + 1) with both inside the past
    if (n < 2) return;
    std::uniform_int_distribution<std::size_t> pick(0, n - 2);
    std::vector<std::size_t> a(config.batch_size), b(config.batch_size);
    for (std::size_t i = 0; i < a.size(); ++i) {
      a[i] = pick(rng);
      b[i] = a[i] + 1;
    }
    module.train_step(module.prepare(log.states.gather(a)), module.prepare(log.states.gather(b)));
  };

  if (config.fixed_position) {
    const std::size_t n = *config.fixed_position;
    if (n < 2 || n >= k) throw ContractError("novelty_probe: fixed position outside the log");
    evaluate(0, n);
    for (std::size_t u = 1; u <= config.train_steps; ++u) {
      train(n);
      if (u % config.eval_every == 0 || u == config.train_steps) evaluate(u, n);
    }
    return report;
  }

  std::vector<std::size_t> positions;
  for (std::size_t n = config.near_window; n < k; n += config.near_window) positions.push_back(n);
  std::size_t update = 0;
  evaluate(0, positions.front());
  for (std::size_t p = 0; p < positions.size(); ++p) {
    const std::size_t quota = config.train_steps * (p + 1) / positions.size() - config.train_steps * p / positions.size();
    for (std::size_t u = 0; u < quota; ++u, ++update) train(positions[p]);
    evaluate(update, positions[p]);
  }
  return report;
}

std::vector<double> distance_matrix(const std::vector<std::vector<double>>& items) {
  const std::size_t k = items.size();
  if (k < 2) throw ContractError("distance_matrix: need at least 2 items");
  const std::size_t d = items[0].size();
  for (const auto& v : items) {
    if (v.size() != d) throw ContractError("distance_matrix: items differ in dimensionality");
  }
  std::vector<double> out(k * k, 0.0);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = i + 1; j < k; ++j) {
      double s = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        const double diff = items[i][c] - items[j][c];
        s += diff * diff;
      }
      out[i * k + j] = out[j * k + i] = std::sqrt(s);
    }
  }
  return out;
}

std::vector<double> distance_matrix(const Tensor& items) {
  std::vector<std::vector<double>> rows(items.rank() == 0 ? 0 : items.dim(0));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto s = items.slice(i);
    rows[i].assign(s.begin(), s.end());
  }
  return distance_matrix(rows);
}

double percentile(const std::vector<double>& v, double q) {
  if (v.empty()) throw ContractError("percentile of an empty list");
  if (q < 0.0 || q > 100.0) throw ContractError("percentile outside [0, 100]");
  const double pos = q / 100.0 * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

namespace {

using MatD = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

MatD centered(const TensorD& f) {
  if (f.rank() != 2 || f.dim(1) == 0) throw ContractError("expected an (N, D) feature matrix with D > 0");
  if (f.dim(0) < 2) throw ContractError("need at least 2 feature rows");
  MatD x = Eigen::Map<const MatD>(f.data(), static_cast<Eigen::Index>(f.dim(0)), static_cast<Eigen::Index>(f.dim(1)));
  x.rowwise() -= x.colwise().mean();
  return x;
}

/// Eigen-decomposition of the unbiased covariance, descending.
Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> covariance_eigen(const MatD& x) {
  const Eigen::MatrixXd cov = (x.transpose() * x) / static_cast<double>(x.rows() - 1);
  return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(cov);
}

}  // namespace

std::string SpectrumReport::eigenvalues_csv() const {
  std::ostringstream out;
  out << "index,eigenvalue\n";
  for (std::size_t i = 0; i < eigenvalues.size(); ++i) out << i << ',' << fmt(eigenvalues[i]) << '\n';
  return out.str();
}

std::string SpectrumReport::summary_csv() const {
  std::ostringstream out;
  out << "l2_mean,l2_std,q25,q50,q75,q95\n"
      << fmt(l2_mean) << ',' << fmt(l2_std) << ',' << fmt(q25) << ',' << fmt(q50) << ',' << fmt(q75) << ','
      << fmt(q95) << '\n';
  return out.str();
}

SpectrumReport pca_spectrum(const TensorD& features) {
  const MatD x = centered(features);
  const auto solver = covariance_eigen(x);
  SpectrumReport r;
  const auto& ev = solver.eigenvalues();
  for (Eigen::Index i = ev.size(); i-- > 0;) r.eigenvalues.push_back(std::max(0.0, ev(i)));
  r.underdetermined = features.dim(0) <= features.dim(1);
  std::vector<double> asc(r.eigenvalues.rbegin(), r.eigenvalues.rend());
  r.q25 = percentile(asc, 25.0);
  r.q50 = percentile(asc, 50.0);
  r.q75 = percentile(asc, 75.0);
  r.q95 = percentile(asc, 95.0);

  const std::size_t n = features.dim(0), d = features.dim(1);
  double sum = 0.0, sq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t c = 0; c < d; ++c) s += features(i, c) * features(i, c);
    const double l2 = std::sqrt(s);
    sum += l2;
    sq += l2 * l2;
  }
  r.l2_mean = sum / static_cast<double>(n);
  r.l2_std = std::sqrt(std::max(0.0, sq / static_cast<double>(n) - r.l2_mean * r.l2_mean));
  return r;
}

SpectrumReport pca_spectrum(const Tensor& features) { return pca_spectrum(tensor_cast<double>(features)); }

Projection2d pca_project2d(const TensorD& features, std::vector<std::uint32_t> labels) {
  if (features.rank() != 2 || features.dim(1) < 2) throw ContractError("pca_project2d: need D >= 2");
  if (!labels.empty() && labels.size() != features.dim(0)) {
    throw ContractError("pca_project2d: one label per row required");
  }
  const MatD x = centered(features);
  const auto solver = covariance_eigen(x);
  const auto d = solver.eigenvalues().size();
  Eigen::MatrixXd basis(d, 2);
  basis.col(0) = solver.eigenvectors().col(d - 1);
  basis.col(1) = solver.eigenvectors().col(d - 2);
  const MatD proj = x * basis;
  Projection2d out;
  out.coords = TensorD({features.dim(0), 2});
  for (std::size_t i = 0; i < features.dim(0); ++i) {
    out.coords(i, 0) = proj(static_cast<Eigen::Index>(i), 0);
    out.coords(i, 1) = proj(static_cast<Eigen::Index>(i), 1);
  }
  out.labels = std::move(labels);
  for (Eigen::Index i = d; i-- > 0;) out.eigenvalues.push_back(std::max(0.0, solver.eigenvalues()(i)));
  return out;
}

Tensor target_features(const MotivationModule& module, const Tensor& states, std::size_t chunk) {
  const std::size_t n = states.dim(0);
  Tensor out({n, module.config().feature_dim});
  for (std::size_t start = 0; start < n; start += chunk) {
    const std::size_t end = std::min(n, start + chunk);
    const auto z = module.target().evaluate(states.rows(start, end)).output;
    std::copy(z.values().begin(), z.values().end(), out.data() + start * module.config().feature_dim);
  }
  return out;
}

}  // namespace snd
