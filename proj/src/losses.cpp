#include "snd/losses.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "snd/errors.hpp"

namespace snd {

namespace {

template <typename T>
void require_matrix(const BasicTensor<T>& z, const char* what, std::size_t min_rows) {
  if (z.rank() != 2) throw ContractError(std::string(what) + ": expected (N, D), got " + shape_string(z.shape()));
  if (z.dim(0) < min_rows) {
    throw ContractError(std::string(what) + ": batch of " + std::to_string(z.dim(0)) + " rows, need at least " +
                        std::to_string(min_rows));
  }
}

template <typename T>
void require_same(const BasicTensor<T>& a, const BasicTensor<T>& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ContractError(std::string(what) + ": shapes " + shape_string(a.shape()) + " and " +
                        shape_string(b.shape()) + " differ");
  }
}

template <typename T>
std::vector<double> column_mean(const BasicTensor<T>& z) {
  const std::size_t n = z.dim(0), d = z.dim(1);
  std::vector<double> m(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < d; ++k) m[k] += z(i, k);
  for (double& v : m) v /= static_cast<double>(n);
  return m;
}

}  // namespace

template <typename T>
std::vector<double> squared_distances(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_same(a, b, "squared_distances");
  const std::size_t n = a.dim(0), stride = a.stride0();
  std::vector<double> out(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < stride; ++k) {
      const double diff = static_cast<double>(a[i * stride + k]) - b[i * stride + k];
      out[i] += diff * diff;
    }
  }
  return out;
}

template <typename T>
PairLoss<T> distillation_loss(const BasicTensor<T>& target, const BasicTensor<T>& pred) {
  require_matrix(pred, "distillation_loss", 1);
  require_same(target, pred, "distillation_loss");
  const double inv_n = 1.0 / static_cast<double>(pred.dim(0));
  PairLoss<T> out;
  out.dz = BasicTensor<T>(pred.shape());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double diff = static_cast<double>(pred[i]) - target[i];
    out.value += diff * diff * inv_n;
    out.dz[i] = static_cast<T>(2.0 * diff * inv_n);
  }
  return out;
}

template <typename T>
PairLoss<T> sndv_loss(const BasicTensor<T>& z, const BasicTensor<T>& z2, std::span<const float> tau, SndvLoss kind,
                      bool unsquared) {
  require_matrix(z, "sndv_loss", 2);
  require_same(z, z2, "sndv_loss");
  const std::size_t n = z.dim(0), d = z.dim(1);
  if (tau.size() != n) throw ContractError("sndv_loss: one target distance per pair required");
  const double inv_n = 1.0 / static_cast<double>(n);
  const auto sq = squared_distances(z, z2);
  PairLoss<T> out;
  out.dz = BasicTensor<T>(z.shape());
  out.dz2 = BasicTensor<T>(z.shape());
  for (std::size_t i = 0; i < n; ++i) {
    const double dist = unsquared ? std::sqrt(sq[i]) : sq[i];
    double dl_ddist = 0.0;
    if (kind == SndvLoss::mse) {
      const double e = tau[i] - dist;
      out.value += e * e * inv_n;
      dl_ddist = -2.0 * e * inv_n;
    } else if (tau[i] == 0.0f) {
      out.value += dist * inv_n;
      dl_ddist = inv_n;
    } else if (dist < 1.0) {
      out.value += (1.0 - dist) * inv_n;
      dl_ddist = -inv_n;
    }
    // d(dist)/dz_i = 2 (z - z') for the squared form, (z - z') / ||z - z'|| otherwise.
    double scale = 0.0;
    if (!unsquared) {
      scale = 2.0;
    } else if (dist > 0.0) {
      scale = 1.0 / dist;
    }
    for (std::size_t k = 0; k < d; ++k) {
      const double g = dl_ddist * scale * (static_cast<double>(z(i, k)) - z2(i, k));
      out.dz(i, k) = static_cast<T>(g);
      out.dz2(i, k) = static_cast<T>(-g);
    }
  }
  return out;
}

template <typename T>
PairLoss<T> variance_term(const BasicTensor<T>& z, double tau) {
  require_matrix(z, "variance_term", 2);
  const std::size_t n = z.dim(0), d = z.dim(1);
  const auto mean = column_mean(z);
  PairLoss<T> out;
  out.dz = BasicTensor<T>(z.shape());
  for (std::size_t k = 0; k < d; ++k) {
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) ss += (z(i, k) - mean[k]) * (z(i, k) - mean[k]);
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));
    if (sd >= tau) continue;
    out.value += (tau - sd) / static_cast<double>(d);
    if (sd == 0.0) continue;  // subgradient 0 at a collapsed column
    const double c = -1.0 / (static_cast<double>(d) * static_cast<double>(n - 1) * sd);
    for (std::size_t i = 0; i < n; ++i) out.dz(i, k) = static_cast<T>(c * (z(i, k) - mean[k]));
  }
  return out;
}

template <typename T>
PairLoss<T> covariance_term(const BasicTensor<T>& z) {
  require_matrix(z, "covariance_term", 2);
  using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const std::size_t n = z.dim(0), d = z.dim(1);
  Mat x(n, d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < d; ++k) x(i, k) = z(i, k);
  x.rowwise() -= x.colwise().mean();
  const double nm1 = static_cast<double>(n - 1);
  Mat c = (x.transpose() * x) / nm1;
  c.diagonal().setZero();
  const double k = 1.0 / (nm1 * static_cast<double>(d));
  PairLoss<T> out;
  out.value = k * c.squaredNorm();
  // dL/dC = 2k C_off, dL/dX = (2/(N-1)) X dL/dC; centering leaves it unchanged since X has zero column sums.
  const Mat g = x * c * (4.0 * k / nm1);
  out.dz = BasicTensor<T>(z.shape());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out.dz(i, j) = static_cast<T>(g(i, j));
  return out;
}

template <typename T>
PairLoss<T> invariance_term(const BasicTensor<T>& z, const BasicTensor<T>& z2) {
  require_matrix(z, "invariance_term", 1);
  require_same(z, z2, "invariance_term");
  const double inv_n = 1.0 / static_cast<double>(z.dim(0));
  PairLoss<T> out;
  out.dz = BasicTensor<T>(z.shape());
  out.dz2 = BasicTensor<T>(z.shape());
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double diff = static_cast<double>(z[i]) - z2[i];
    out.value += diff * diff * inv_n;
    out.dz[i] = static_cast<T>(2.0 * diff * inv_n);
    out.dz2[i] = static_cast<T>(-2.0 * diff * inv_n);
  }
  return out;
}

template <typename T>
VicregLoss<T> vicreg_loss(const BasicTensor<T>& z, const BasicTensor<T>& z2, const VicregWeights& w) {
  require_matrix(z, "vicreg_loss", 2);
  require_same(z, z2, "vicreg_loss");
  const auto inv = invariance_term(z, z2);
  const auto v1 = variance_term(z, w.tau);
  const auto v2 = variance_term(z2, w.tau);
  const auto c1 = covariance_term(z);
  const auto c2 = covariance_term(z2);
  VicregLoss<T> out;
  out.invariance = inv.value;
  out.variance = v1.value + v2.value;
  out.covariance = c1.value + c2.value;
  out.total = w.lambda * out.invariance + w.mu * out.variance + w.nu * out.covariance;
  out.dz = BasicTensor<T>(z.shape());
  out.dz2 = BasicTensor<T>(z.shape());
  for (std::size_t i = 0; i < z.size(); ++i) {
    out.dz[i] = static_cast<T>(w.lambda * inv.dz[i] + w.mu * v1.dz[i] + w.nu * c1.dz[i]);
    out.dz2[i] = static_cast<T>(w.lambda * inv.dz2[i] + w.mu * v2.dz[i] + w.nu * c2.dz[i]);
  }
  return out;
}

namespace {

using MatD = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
MatD to_mat(const BasicTensor<T>& t, std::size_t rows, std::size_t cols) {
  MatD m(rows, cols);
  for (std::size_t i = 0; i < rows * cols; ++i) m.data()[i] = t[i];
  return m;
}

/// (N, C) slice of a (N, C, H, W) map at one position.
template <typename T>
MatD local_at(const BasicTensor<T>& local, std::size_t h, std::size_t w) {
  const std::size_t n = local.dim(0), c = local.dim(1), hh = local.dim(2), ww = local.dim(3);
  MatD m(n, c);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < c; ++k) m(i, k) = local[((i * c + k) * hh + h) * ww + w];
  return m;
}

template <typename T>
void add_local_at(BasicTensor<T>& grad, const MatD& g, std::size_t h, std::size_t w) {
  const std::size_t n = grad.dim(0), c = grad.dim(1), hh = grad.dim(2), ww = grad.dim(3);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < c; ++k) grad[((i * c + k) * hh + h) * ww + w] += static_cast<T>(g(i, k));
}

/// Mean over rows of -log softmax(s_i)_i; writes dL/ds into `grad`.
double info_nce(const MatD& s, MatD& grad) {
  const auto n = s.rows();
  grad.resize(n, n);
  double loss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mx = s.row(i).maxCoeff();
    double sum = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) sum += std::exp(s(i, j) - mx);
    const double lse = mx + std::log(sum);
    loss += (lse - s(i, i)) / static_cast<double>(n);
    for (Eigen::Index j = 0; j < n; ++j) {
      grad(i, j) = (std::exp(s(i, j) - lse) - (i == j ? 1.0 : 0.0)) / static_cast<double>(n);
    }
  }
  return loss;
}

template <typename T>
void check_stdim_shapes(const BasicTensor<T>& z, const BasicTensor<T>& local, const BasicTensor<T>& local_next,
                        const BasicTensor<T>& w_g, const BasicTensor<T>& w_l) {
  require_matrix(z, "stdim_loss", 2);
  if (local.rank() != 4 || local.shape() != local_next.shape() || local.dim(0) != z.dim(0)) {
    throw ContractError("stdim_loss: local maps must be (N, C, H, W) for both batches");
  }
  const std::size_t c = local.dim(1);
  if (w_g.shape() != Shape{z.dim(1), c} || w_l.shape() != Shape{c, c}) {
    throw ContractError("stdim_loss: projection shapes " + shape_string(w_g.shape()) + ", " +
                        shape_string(w_l.shape()) + " do not match D=" + std::to_string(z.dim(1)) +
                        ", C=" + std::to_string(c));
  }
}

}  // namespace

template <typename T>
void stdim_scores(const BasicTensor<T>& z, const BasicTensor<T>& local, const BasicTensor<T>& local_next,
                  const BasicTensor<T>& w_g, const BasicTensor<T>& w_l, std::size_t h, std::size_t w,
                  std::vector<double>& g, std::vector<double>& f) {
  check_stdim_shapes(z, local, local_next, w_g, w_l);
  const std::size_t n = z.dim(0), d = z.dim(1), c = local.dim(1);
  const MatD zm = to_mat(z, n, d), wg = to_mat(w_g, d, c), wl = to_mat(w_l, c, c);
  const MatD l = local_at(local, h, w), ln = local_at(local_next, h, w);
  const MatD gm = zm * wg * ln.transpose();
  const MatD fm = l * wl * ln.transpose();
  g.assign(gm.data(), gm.data() + gm.size());
  f.assign(fm.data(), fm.data() + fm.size());
}

template <typename T>
StdimLoss<T> stdim_loss(const BasicTensor<T>& z, const BasicTensor<T>& local, const BasicTensor<T>& local_next,
                        const BasicTensor<T>& w_g, const BasicTensor<T>& w_l, const StdimWeights& weights) {
  check_stdim_shapes(z, local, local_next, w_g, w_l);
  const std::size_t n = z.dim(0), d = z.dim(1), c = local.dim(1), hh = local.dim(2), ww = local.dim(3);
  const double inv_hw = 1.0 / static_cast<double>(hh * ww);
  const MatD zm = to_mat(z, n, d), wg = to_mat(w_g, d, c), wl = to_mat(w_l, c, c);
  const MatD zwg = zm * wg;

  StdimLoss<T> out;
  out.dlocal = BasicTensor<T>(local.shape());
  out.dlocal_next = BasicTensor<T>(local.shape());
  MatD dz = MatD::Zero(n, d), dwg = MatD::Zero(d, c), dwl = MatD::Zero(c, c);
  MatD ds;
  for (std::size_t h = 0; h < hh; ++h) {
    for (std::size_t w = 0; w < ww; ++w) {
      const MatD l = local_at(local, h, w), ln = local_at(local_next, h, w);
      const MatD lwl = l * wl;
      const MatD g = zwg * ln.transpose();
      const MatD f = lwl * ln.transpose();

      out.gl += info_nce(g, ds);
      MatD dg = ds * inv_hw;
      out.ll += info_nce(f, ds);
      MatD df = ds * inv_hw;

      const double gn = g.norm(), fn = f.norm();
      out.l2 += gn + fn;
      if (gn > 0.0) dg += g * (weights.beta1 * inv_hw / gn);
      if (fn > 0.0) df += f * (weights.beta1 * inv_hw / fn);

      // g = Z Wg Ln^T, f = L Wl Ln^T
      dz += dg * ln * wg.transpose();
      dwg += zm.transpose() * dg * ln;
      MatD dln = dg.transpose() * zwg + df.transpose() * lwl;
      const MatD dl = df * ln * wl.transpose();
      dwl += l.transpose() * df * ln;
      add_local_at(out.dlocal, dl, h, w);
      add_local_at(out.dlocal_next, dln, h, w);
    }
  }

  // L_sigma = -(1/D) sum_d std_d(Z), unbiased.
  const auto mean = column_mean(z);
  for (std::size_t k = 0; k < d; ++k) {
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) ss += (z(i, k) - mean[k]) * (z(i, k) - mean[k]);
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));
    out.sigma -= sd / static_cast<double>(d);
    if (sd == 0.0) continue;
    const double coef = -weights.beta2 / (static_cast<double>(d) * static_cast<double>(n - 1) * sd);
    for (std::size_t i = 0; i < n; ++i) dz(i, k) += coef * (z(i, k) - mean[k]);
  }

  out.total = (out.gl + out.ll + weights.beta1 * out.l2) * inv_hw + weights.beta2 * out.sigma;
  auto to_tensor = [](const MatD& m, Shape shape) {
    BasicTensor<T> t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(m.data()[i]);
    return t;
  };
  out.dz = to_tensor(dz, {n, d});
  out.dw_g = to_tensor(dwg, {d, c});
  out.dw_l = to_tensor(dwl, {c, c});
  return out;
}

#define SND_LOSSES(T)                                                                                           \
  template std::vector<double> squared_distances<T>(const BasicTensor<T>&, const BasicTensor<T>&);             \
  template PairLoss<T> distillation_loss<T>(const BasicTensor<T>&, const BasicTensor<T>&);                    \
  template PairLoss<T> sndv_loss<T>(const BasicTensor<T>&, const BasicTensor<T>&, std::span<const float>,     \
                                    SndvLoss, bool);                                                           \
  template PairLoss<T> variance_term<T>(const BasicTensor<T>&, double);                                       \
  template PairLoss<T> covariance_term<T>(const BasicTensor<T>&);                                             \
  template PairLoss<T> invariance_term<T>(const BasicTensor<T>&, const BasicTensor<T>&);                      \
  template VicregLoss<T> vicreg_loss<T>(const BasicTensor<T>&, const BasicTensor<T>&, const VicregWeights&);  \
  template void stdim_scores<T>(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&,          \
                                const BasicTensor<T>&, const BasicTensor<T>&, std::size_t, std::size_t,       \
                                std::vector<double>&, std::vector<double>&);                                   \
  template StdimLoss<T> stdim_loss<T>(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&,    \
                                      const BasicTensor<T>&, const BasicTensor<T>&, const StdimWeights&);

SND_LOSSES(float)
SND_LOSSES(double)

}  // namespace snd
