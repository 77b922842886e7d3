#pragma once

#include <span>
#include <vector>

#include "snd/tensor.hpp"

namespace snd {

/// Loss value plus gradients with respect to the feature matrices it reads.
template <typename T>
struct PairLoss {
  double value = 0.0;
  BasicTensor<T> dz;
  BasicTensor<T> dz2;
};

/// Per-row squared distance ||a_n - b_n||^2.
template <typename T>
std::vector<double> squared_distances(const BasicTensor<T>& a, const BasicTensor<T>& b);

/// mean_n ||target_n - pred_n||^2; dz is d/d(pred), dz2 is left empty.
template <typename T>
PairLoss<T> distillation_loss(const BasicTensor<T>& target, const BasicTensor<T>& pred);

enum class SndvLoss { mse, hinge };

/// mse:   mean_n (tau_n - d_n)^2
/// hinge: mean_n [tau_n == 0 ? d_n : max(1 - d_n, 0)]
/// with d_n the squared distance, or the plain distance when `unsquared`.
template <typename T>
PairLoss<T> sndv_loss(const BasicTensor<T>& z, const BasicTensor<T>& z2, std::span<const float> tau, SndvLoss kind,
                      bool unsquared);

/// (1/D) sum_d max(0, tau - std_d(Z)), unbiased std over the batch.
template <typename T>
PairLoss<T> variance_term(const BasicTensor<T>& z, double tau);

/// 1/((N-1) D) * sum_{i != j} C_ij^2, C the unbiased covariance of Z.
template <typename T>
PairLoss<T> covariance_term(const BasicTensor<T>& z);

/// (1/N) sum_n ||Z_n - Z'_n||^2.
template <typename T>
PairLoss<T> invariance_term(const BasicTensor<T>& z, const BasicTensor<T>& z2);

struct VicregWeights {
  double lambda = 1.0;
  double mu = 1.0;
  double nu = 1.0 / 25.0;
  double tau = 1.0;
};

template <typename T>
struct VicregLoss {
  double invariance = 0.0;
  double variance = 0.0;    // L_v(Z) + L_v(Z')
  double covariance = 0.0;  // L_c(Z) + L_c(Z')
  double total = 0.0;
  BasicTensor<T> dz;
  BasicTensor<T> dz2;
};

template <typename T>
VicregLoss<T> vicreg_loss(const BasicTensor<T>& z, const BasicTensor<T>& z2, const VicregWeights& w);

struct StdimWeights {
  double beta1 = 1e-4;
  double beta2 = 1e-4;
};

template <typename T>
struct StdimLoss {
  double gl = 0.0;
  double ll = 0.0;
  /// Sum over locations of Frobenius norms of both score matrices.
  double l2 = 0.0;
  double sigma = 0.0;
  double total = 0.0;
  BasicTensor<T> dz;           // (N, D)
  BasicTensor<T> dlocal;       // (N, C, H, W)
  BasicTensor<T> dlocal_next;  // (N, C, H, W)
  BasicTensor<T> dw_g;         // (D, C)
  BasicTensor<T> dw_l;         // (C, C)
};

/// Score matrices at one location: g[i][j] = z_i W_g l'_j, f[i][j] = l_i W_l l'_j.
template <typename T>
void stdim_scores(const BasicTensor<T>& z, const BasicTensor<T>& local, const BasicTensor<T>& local_next,
                  const BasicTensor<T>& w_g, const BasicTensor<T>& w_l, std::size_t h, std::size_t w,
                  std::vector<double>& g, std::vector<double>& f);

/// InfoNCE over the batch at every local position (positive j = i), averaged
/// over rows and summed over positions, for the global-local and
/// local-local scores; total = (GL + LL + beta1 L2) / (H W) + beta2 L_sigma
/// where L_sigma = -mean_d std_d(z).
template <typename T>
StdimLoss<T> stdim_loss(const BasicTensor<T>& z, const BasicTensor<T>& local, const BasicTensor<T>& local_next,
                        const BasicTensor<T>& w_g, const BasicTensor<T>& w_l, const StdimWeights& weights);

}  // namespace snd
