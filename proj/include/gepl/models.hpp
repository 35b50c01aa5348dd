#pragma once

// Collapsed (parameter-free) log posteriors of allocations for three
// conjugate clustering models:
//   - univariate Gaussian mixture with Normal-Gamma priors,
//   - stochastic block model with Beta priors on block connection rates,
//   - bipartite latent block model on a binary matrix.
// All arithmetic is in natural-log space via lgamma.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "gepl/error.hpp"
#include "gepl/partition.hpp"

namespace gepl {

/// How the number of mixture components K enters the collapsed allocation
/// prior.
enum class GroupCountPrior {
  /// K fixed at k_prior; Dirichlet(alpha, ..., alpha) over K components.
  FixedDimension,
  /// K ~ Poisson(rate) truncated to 1..k_prior and summed out; the
  /// unlabeled partition is then spread uniformly over its labelings in
  /// 0..k_prior-1.
  Poisson,
  /// K equal to the number of occupied groups (exact-ICL style), rescaled
  /// to sum to one over partitions with at most k_prior groups; labelings
  /// spread uniformly as above.
  Occupied,
};

/// Collapsed Dirichlet prior on allocations.
struct AllocationPrior {
  double alpha = 1.0;
  std::size_t k_prior = 1;
  GroupCountPrior k_mode = GroupCountPrior::FixedDimension;
  double poisson_rate = 1.0;

  void validate() const {
    if (!(alpha > 0.0) || !std::isfinite(alpha)) throw InvalidArgument("Dirichlet alpha must be positive");
    if (k_prior < 1) throw InvalidArgument("prior dimension must be at least 1");
    if (!(poisson_rate > 0.0) || !std::isfinite(poisson_rate)) throw InvalidArgument("Poisson rate must be positive");
  }
};

/// Per-group factor of the collapsed prior: log Gamma(n + alpha) - log Gamma(alpha).
inline double log_prior_group_term(std::size_t n, double alpha) {
  return n == 0 ? 0.0 : std::lgamma(static_cast<double>(n) + alpha) - std::lgamma(alpha);
}

namespace detail {

// log of K!/(K-k)!
inline double log_falling(std::size_t big_k, std::size_t k) {
  return std::lgamma(static_cast<double>(big_k) + 1.0) - std::lgamma(static_cast<double>(big_k - k) + 1.0);
}

inline double dirichlet_constant(std::size_t n_items, double big_k, double alpha) {
  return std::lgamma(big_k * alpha) - std::lgamma(static_cast<double>(n_items) + big_k * alpha);
}

inline double log_add(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

// log of the sum, over partitions of n_items with k <= k_prior groups, of
// prod_g Gamma(n_g + alpha)/Gamma(alpha) * Gamma(k alpha)/Gamma(N + k alpha).
// lb[n][k] accumulates the group products over partitions of n items into k
// blocks, growing each partition by the block that holds the last item.
inline double log_occupied_normalizer(std::size_t n_items, std::size_t k_prior, double alpha) {
  const double ninf = -std::numeric_limits<double>::infinity();
  const std::size_t kmax = std::min(n_items, k_prior);
  std::vector<std::vector<double>> lb(n_items + 1, std::vector<double>(kmax + 1, ninf));
  lb[0][0] = 0.0;
  for (std::size_t n = 1; n <= n_items; ++n) {
    for (std::size_t k = 1; k <= std::min(n, kmax); ++k) {
      double acc = ninf;
      for (std::size_t m = 1; m <= n - k + 1; ++m) {
        if (lb[n - m][k - 1] == ninf) continue;
        const double log_choose = std::lgamma(double(n)) - std::lgamma(double(m)) - std::lgamma(double(n - m + 1));
        const double group = std::lgamma(double(m) + alpha) - std::lgamma(alpha);
        acc = log_add(acc, log_choose + group + lb[n - m][k - 1]);
      }
      lb[n][k] = acc;
    }
  }
  double z = ninf;
  for (std::size_t k = 1; k <= kmax; ++k) z = log_add(z, lb[n_items][k] + dirichlet_constant(n_items, double(k), alpha));
  return z;
}

}  // namespace detail

/// Part of the log prior that depends only on N and the number of occupied
/// groups; the full log prior adds log_prior_group_term over the groups.
/// Returns -inf when `occupied` exceeds k_prior.
inline double log_prior_occupancy_term(std::size_t n_items, std::size_t occupied, const AllocationPrior& p) {
  if (occupied > p.k_prior || occupied == 0) return -std::numeric_limits<double>::infinity();
  switch (p.k_mode) {
    case GroupCountPrior::FixedDimension:
      return detail::dirichlet_constant(n_items, static_cast<double>(p.k_prior), p.alpha);
    case GroupCountPrior::Occupied:
      return detail::dirichlet_constant(n_items, static_cast<double>(occupied), p.alpha) -
             detail::log_falling(p.k_prior, occupied) - detail::log_occupied_normalizer(n_items, p.k_prior, p.alpha);
    case GroupCountPrior::Poisson: {
      // truncated Poisson weights, normalized over 1..k_prior
      std::vector<double> log_pk(p.k_prior + 1, 0.0);
      double norm_max = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 1; k <= p.k_prior; ++k) {
        log_pk[k] = static_cast<double>(k) * std::log(p.poisson_rate) - std::lgamma(static_cast<double>(k) + 1.0);
        norm_max = std::max(norm_max, log_pk[k]);
      }
      double norm = 0.0;
      for (std::size_t k = 1; k <= p.k_prior; ++k) norm += std::exp(log_pk[k] - norm_max);
      const double log_norm = norm_max + std::log(norm);
      std::vector<double> terms;
      for (std::size_t k = occupied; k <= p.k_prior; ++k) {
        terms.push_back(log_pk[k] - log_norm + detail::log_falling(k, occupied) +
                        detail::dirichlet_constant(n_items, static_cast<double>(k), p.alpha));
      }
      const double m = *std::max_element(terms.begin(), terms.end());
      double sum = 0.0;
      for (double t : terms) sum += std::exp(t - m);
      return m + std::log(sum) - detail::log_falling(p.k_prior, occupied);
    }
  }
  return 0.0;
}

/// The Poisson and Occupied modes spread mass over labelings in
/// 0..k_prior-1, so they need K_up == k_prior.
inline void check_label_range(std::size_t k_up, const AllocationPrior& p) {
  if (p.k_mode != GroupCountPrior::FixedDimension && k_up != p.k_prior) {
    throw InvalidArgument("this group-count prior needs K_up equal to the prior dimension (" + std::to_string(k_up) +
                          " vs " + std::to_string(p.k_prior) + ")");
  }
}

/// Precomputed log_prior_occupancy_term for occupied = 0..k_prior.
inline std::vector<double> occupancy_table(std::size_t n_items, const AllocationPrior& p) {
  std::vector<double> t(p.k_prior + 1);
  if (p.k_mode == GroupCountPrior::Occupied) {
    const double log_z = detail::log_occupied_normalizer(n_items, p.k_prior, p.alpha);
    t[0] = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 1; k <= p.k_prior; ++k) {
      t[k] = detail::dirichlet_constant(n_items, static_cast<double>(k), p.alpha) - detail::log_falling(p.k_prior, k) -
             log_z;
    }
    return t;
  }
  for (std::size_t k = 0; k <= p.k_prior; ++k) t[k] = log_prior_occupancy_term(n_items, k, p);
  return t;
}

inline double log_alloc_prior(const Partition& z, const AllocationPrior& p) {
  p.validate();
  check_label_range(z.k_up(), p);
  const auto sizes = z.group_sizes();
  std::size_t occupied = 0;
  double sum = 0.0;
  for (std::size_t n : sizes) {
    if (n > 0) ++occupied;
    sum += log_prior_group_term(n, p.alpha);
  }
  if (occupied > p.k_prior) {
    throw InvalidArgument("partition has " + std::to_string(occupied) + " groups but the prior allows " +
                          std::to_string(p.k_prior));
  }
  return sum + log_prior_occupancy_term(z.size(), occupied, p);
}

inline double log_beta(double a, double b) { return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b); }

// ---------------------------------------------------------------------------
// Gaussian mixture

struct GmmSpec {
  std::vector<double> data;
  double tau = 0.01;
  double gamma = 0.5;
  double delta = 0.5;
  AllocationPrior prior;

  void validate() const {
    if (data.empty()) throw InvalidArgument("Gaussian mixture needs at least one observation");
    for (std::size_t i = 0; i < data.size(); ++i)
      if (!std::isfinite(data[i])) throw DataError("observation " + std::to_string(i + 1) + " is not finite");
    if (!(tau > 0.0) || !(gamma > 0.0) || !(delta > 0.0)) throw InvalidArgument("tau, gamma and delta must be positive");
    prior.validate();
  }
};

/// Sufficient statistics of one group.
struct GaussianStats {
  std::size_t n = 0;
  double sum = 0.0;
  double sum_sq = 0.0;

  void add(double y) {
    ++n;
    sum += y;
    sum_sq += y * y;
  }
};

/// Log marginal density of one group's observations with mean and
/// precision integrated out:
///   (2 pi)^(-n/2) (tau/tau')^(1/2) Gamma(gamma')/Gamma(gamma) delta^gamma / delta'^gamma'
/// with tau' = tau + n, gamma' = gamma + n/2, delta' = delta + (Q - S^2/tau')/2.
inline double gmm_group_log_marginal(const GaussianStats& s, double tau, double gamma, double delta) {
  if (s.n == 0) return 0.0;
  const double n = static_cast<double>(s.n);
  const double tau_post = tau + n;
  const double gamma_post = gamma + 0.5 * n;
  const double delta_post = delta + 0.5 * (s.sum_sq - s.sum * s.sum / tau_post);
  return -0.5 * n * std::log(2.0 * std::numbers::pi) + 0.5 * (std::log(tau) - std::log(tau_post)) +
         std::lgamma(gamma_post) - std::lgamma(gamma) + gamma * std::log(delta) - gamma_post * std::log(delta_post);
}

inline std::vector<GaussianStats> gmm_group_stats(const Partition& z, std::span<const double> data) {
  std::vector<GaussianStats> stats(z.k_up());
  for (std::size_t i = 0; i < z.size(); ++i) stats[z[i]].add(data[i]);
  return stats;
}

inline double gmm_log_marginal_likelihood(const Partition& z, const GmmSpec& m) {
  m.validate();
  if (z.size() != m.data.size()) throw InvalidArgument("allocation length does not match the data");
  double sum = 0.0;
  for (const auto& s : gmm_group_stats(z, m.data)) sum += gmm_group_log_marginal(s, m.tau, m.gamma, m.delta);
  return sum;
}

// ---------------------------------------------------------------------------
// Stochastic block model

/// Undirected simple graph stored as adjacency lists.
class Graph {
 public:
  explicit Graph(std::size_t nodes) : adj_(nodes) {}

  void add_edge(std::size_t i, std::size_t j) {
    if (i >= adj_.size() || j >= adj_.size()) throw DataError("edge endpoint outside the node range");
    if (i == j) throw DataError("self-loops are not allowed (node " + std::to_string(i + 1) + ")");
    for (std::size_t k : adj_[i])
      if (k == j) return;
    adj_[i].push_back(j);
    adj_[j].push_back(i);
    ++edges_;
  }

  bool has_edge(std::size_t i, std::size_t j) const {
    for (std::size_t k : adj_[i])
      if (k == j) return true;
    return false;
  }

  std::size_t nodes() const { return adj_.size(); }
  std::size_t edges() const { return edges_; }
  std::span<const std::size_t> neighbors(std::size_t i) const { return adj_[i]; }

 private:
  std::vector<std::vector<std::size_t>> adj_;
  std::size_t edges_ = 0;
};

struct SbmSpec {
  Graph graph{1};
  double beta_a = 0.5;
  double beta_b = 0.5;
  AllocationPrior prior;

  void validate() const {
    if (!(beta_a > 0.0) || !(beta_b > 0.0)) throw InvalidArgument("Beta hyperparameters must be positive");
    prior.validate();
  }
};

/// log B(e + a, m - e + b) - log B(a, b) for a block with e edges among m dyads.
inline double block_log_marginal(std::size_t edges, std::size_t dyads, double a, double b) {
  if (dyads == 0) return 0.0;
  return log_beta(static_cast<double>(edges) + a, static_cast<double>(dyads - edges) + b) - log_beta(a, b);
}

inline std::size_t block_dyads(std::size_t ng, std::size_t nh, bool same_block) {
  return same_block ? ng * (ng - (ng > 0 ? 1 : 0)) / 2 : ng * nh;
}

/// Each unordered node pair counted once, within-block pairs included.
inline double sbm_log_marginal_likelihood(const Partition& z, const SbmSpec& m) {
  m.validate();
  if (z.size() != m.graph.nodes()) throw InvalidArgument("allocation length does not match the node count");
  const std::size_t k = z.k_up();
  std::vector<std::size_t> edges(k * k, 0);
  for (std::size_t i = 0; i < z.size(); ++i)
    for (std::size_t j : m.graph.neighbors(i))
      if (i < j) {
        const std::size_t g = std::min(z[i], z[j]), h = std::max(z[i], z[j]);
        ++edges[g * k + h];
      }
  const auto sizes = z.group_sizes();
  double sum = 0.0;
  for (std::size_t g = 0; g < k; ++g)
    for (std::size_t h = g; h < k; ++h)
      sum += block_log_marginal(edges[g * k + h], block_dyads(sizes[g], sizes[h], g == h), m.beta_a, m.beta_b);
  return sum;
}

// ---------------------------------------------------------------------------
// Bipartite latent block model

struct LbmSpec {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> y;  // row-major, entries 0/1
  double beta_a = 0.5;
  double beta_b = 0.5;
  AllocationPrior row_prior;
  AllocationPrior col_prior;

  std::uint8_t at(std::size_t i, std::size_t j) const { return y[i * cols + j]; }

  void validate() const {
    if (rows == 0 || cols == 0) throw InvalidArgument("latent block model needs a non-empty matrix");
    if (y.size() != rows * cols) throw InvalidArgument("matrix size does not match its dimensions");
    for (std::uint8_t v : y)
      if (v > 1) throw DataError("latent block model data must be binary");
    if (!(beta_a > 0.0) || !(beta_b > 0.0)) throw InvalidArgument("Beta hyperparameters must be positive");
    row_prior.validate();
    col_prior.validate();
  }
};

/// Every cell (i, j) falls in exactly one block (r_i, c_j).
inline double lbm_log_marginal_likelihood(const Partition& r, const Partition& c, const LbmSpec& m) {
  m.validate();
  if (r.size() != m.rows || c.size() != m.cols) throw InvalidArgument("allocations do not match the matrix shape");
  const std::size_t kc = c.k_up();
  std::vector<std::size_t> ones(r.k_up() * kc, 0);
  for (std::size_t i = 0; i < m.rows; ++i)
    for (std::size_t j = 0; j < m.cols; ++j) ones[r[i] * kc + c[j]] += m.at(i, j);
  const auto rs = r.group_sizes();
  const auto cs = c.group_sizes();
  double sum = 0.0;
  for (std::size_t g = 0; g < r.k_up(); ++g)
    for (std::size_t h = 0; h < kc; ++h) sum += block_log_marginal(ones[g * kc + h], rs[g] * cs[h], m.beta_a, m.beta_b);
  return sum;
}

// ---------------------------------------------------------------------------
// Unnormalized log posteriors

inline double log_posterior(const GmmSpec& m, const Partition& z) {
  return gmm_log_marginal_likelihood(z, m) + log_alloc_prior(z, m.prior);
}

inline double log_posterior(const SbmSpec& m, const Partition& z) {
  return sbm_log_marginal_likelihood(z, m) + log_alloc_prior(z, m.prior);
}

inline double log_posterior(const LbmSpec& m, const Partition& r, const Partition& c) {
  return lbm_log_marginal_likelihood(r, c, m) + log_alloc_prior(r, m.row_prior) + log_alloc_prior(c, m.col_prior);
}

}  // namespace gepl
