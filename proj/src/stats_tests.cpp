#include "snd/stats_tests.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "snd/errors.hpp"

namespace snd {

std::vector<double> mid_ranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return values[i] < values[j]; });
  std::vector<double> ranks(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

namespace {

/// Null distribution of twice the rank sum of a random na-subset of the
/// pooled doubled ranks. Returns probabilities indexed by doubled sum.
std::vector<double> doubled_rank_sum_distribution(const std::vector<long>& doubled, std::size_t na) {
  long total = 0;
  for (long r : doubled) total += r;
  // ways[k][s]: number of k-subsets of the items seen so far with doubled sum s.
  std::vector<std::vector<double>> ways(na + 1, std::vector<double>(static_cast<std::size_t>(total) + 1, 0.0));
  ways[0][0] = 1.0;
  std::size_t seen = 0;
  long prefix = 0;
  for (long r : doubled) {
    ++seen;
    prefix += r;
    for (std::size_t k = std::min(na, seen); k >= 1; --k) {
      auto& dst = ways[k];
      const auto& src = ways[k - 1];
      for (long s = prefix; s >= r; --s) dst[s] += src[s - r];
    }
  }
  auto dist = ways[na];
  const double count = std::accumulate(dist.begin(), dist.end(), 0.0);
  for (double& v : dist) v /= count;
  return dist;
}

double normal_upper(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

}  // namespace

MannWhitney mann_whitney_u(std::span<const double> a, std::span<const double> b, Alternative alternative) {
  const std::size_t na = a.size(), nb = b.size();
  if (na == 0 || nb == 0) throw ContractError("mann_whitney_u: both samples must be nonempty");
  std::vector<double> pooled(a.begin(), a.end());
  pooled.insert(pooled.end(), b.begin(), b.end());
  for (double v : pooled) {
    if (!std::isfinite(v)) throw ContractError("mann_whitney_u: samples must be finite");
  }
  const auto ranks = mid_ranks(pooled);
  double ra = 0.0;
  for (std::size_t i = 0; i < na; ++i) ra += ranks[i];
  const double nad = static_cast<double>(na), nbd = static_cast<double>(nb);
  MannWhitney out;
  out.u_a = ra - nad * (nad + 1.0) / 2.0;
  out.u = std::min(out.u_a, nad * nbd - out.u_a);
  const double mu = nad * nbd / 2.0;

  if (na * nb <= 400) {
    out.exact = true;
    std::vector<long> doubled(pooled.size());
    for (std::size_t i = 0; i < pooled.size(); ++i) doubled[i] = std::lround(2.0 * ranks[i]);
    // Count subsets of the smaller sample's size; the other rank sum is the complement.
    const bool flip = nb < na;
    const long total = std::accumulate(doubled.begin(), doubled.end(), 0L);
    const auto dist = doubled_rank_sum_distribution(doubled, flip ? nb : na);
    // Doubled U_a for doubled rank sum s: s - na (na + 1); doubled mean: na nb.
    const long base = static_cast<long>(na * (na + 1));
    const long mean2 = static_cast<long>(na * nb);
    const long obs2 = std::lround(2.0 * ra) - base;
    double p = 0.0;
    for (std::size_t s = 0; s < dist.size(); ++s) {
      if (dist[s] == 0.0) continue;
      const long wa2 = flip ? total - static_cast<long>(s) : static_cast<long>(s);
      const long u2 = wa2 - base;
      const bool extreme = alternative == Alternative::two_sided ? std::labs(u2 - mean2) >= std::labs(obs2 - mean2)
                                                                 : u2 >= obs2;
      if (extreme) p += dist[s];
    }
    out.p = std::min(1.0, p);
    return out;
  }

  const double n = nad + nbd;
  double ties = 0.0;
  std::vector<double> sorted = pooled;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
    const double t = static_cast<double>(j - i);
    ties += t * t * t - t;
    i = j;
  }
  const double var = nad * nbd / 12.0 * ((n + 1.0) - ties / (n * (n - 1.0)));
  if (var <= 0.0) {
    out.p = 1.0;
    return out;
  }
  const double sd = std::sqrt(var);
  if (alternative == Alternative::two_sided) {
    const double z = (std::abs(out.u_a - mu) - 0.5) / sd;
    out.p = z <= 0.0 ? 1.0 : std::min(1.0, 2.0 * normal_upper(z));
  } else {
    out.p = normal_upper((out.u_a - mu - 0.5) / sd);
  }
  return out;
}

}  // namespace snd
