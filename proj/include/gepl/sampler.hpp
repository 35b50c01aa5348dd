#pragma once

// Metropolis-Hastings allocation sampler whose only proposal is the
// ejection/absorption block move: pick an occupied outbound group g, an
// inbound group h, a count r and a uniform r-subset of g, and relabel that
// subset to h.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gepl/epl.hpp"
#include "gepl/error.hpp"
#include "gepl/models.hpp"
#include "gepl/partition.hpp"

namespace gepl {

inline constexpr double kLogZero = -std::numeric_limits<double>::infinity();

struct ProposalMove {
  Label from = 0;  // outbound group g
  Label to = 0;    // inbound group h
  std::vector<std::size_t> items;

  std::size_t count() const { return items.size(); }
  ProposalMove reversed() const { return {to, from, items}; }
};

namespace detail {

struct Occupancy {
  std::vector<std::size_t> sizes;
  std::vector<Label> occupied;
  std::vector<Label> empty;
};

inline Occupancy occupancy(const Partition& z) {
  Occupancy o{z.group_sizes(), {}, {}};
  for (Label g = 0; g < o.sizes.size(); ++g) (o.sizes[g] > 0 ? o.occupied : o.empty).push_back(g);
  return o;
}

inline void check_sampler_dims(const Partition& z, std::size_t k_up) {
  if (k_up < 2) throw InvalidArgument("the allocation sampler requires K_up >= 2");
  if (z.size() < 2) throw InvalidArgument("the allocation sampler requires at least two items");
  if (z.k_up() != k_up) throw InvalidArgument("partition K_up does not match the sampler's K_up");
}

// |U| = 1 or |U| = K_up: h is uniform over the K_up - 1 other labels.
inline bool single_branch(std::size_t n_occupied, std::size_t k_up) { return n_occupied == 1 || n_occupied == k_up; }

inline std::size_t max_block(std::size_t n_from, std::size_t n_to) { return n_to > 0 ? n_from : (n_from + 1) / 2; }

}  // namespace detail

/// Draws a move from z. The returned move has not been applied.
template <class Rng>
ProposalMove propose_move(const Partition& z, std::size_t k_up, Rng& rng) {
  detail::check_sampler_dims(z, k_up);
  const auto occ = detail::occupancy(z);
  const std::size_t nu = occ.occupied.size();
  ProposalMove m;
  m.from = occ.occupied[std::uniform_int_distribution<std::size_t>(0, nu - 1)(rng)];

  auto pick_other = [&](const std::vector<Label>& pool) {
    // uniform over pool \ {from}; `from` is in pool iff pool is the occupied set
    std::vector<Label> others;
    for (Label l : pool)
      if (l != m.from) others.push_back(l);
    return others[std::uniform_int_distribution<std::size_t>(0, others.size() - 1)(rng)];
  };
  if (detail::single_branch(nu, k_up)) {
    Label h = static_cast<Label>(std::uniform_int_distribution<std::size_t>(0, k_up - 2)(rng));
    m.to = h >= m.from ? h + 1 : h;
  } else if (std::bernoulli_distribution(0.5)(rng)) {
    m.to = pick_other(occ.occupied);
  } else {
    m.to = occ.empty[std::uniform_int_distribution<std::size_t>(0, occ.empty.size() - 1)(rng)];
  }

  const std::size_t n_from = occ.sizes[m.from];
  const std::size_t r =
      std::uniform_int_distribution<std::size_t>(1, detail::max_block(n_from, occ.sizes[m.to]))(rng);

  std::vector<std::size_t> members;
  members.reserve(n_from);
  for (std::size_t i = 0; i < z.size(); ++i)
    if (z[i] == m.from) members.push_back(i);
  for (std::size_t k = 0; k < r; ++k) {
    std::swap(members[k], members[std::uniform_int_distribution<std::size_t>(k, n_from - 1)(rng)]);
  }
  m.items.assign(members.begin(), members.begin() + static_cast<std::ptrdiff_t>(r));
  std::sort(m.items.begin(), m.items.end());
  return m;
}

inline Partition apply(const Partition& z, const ProposalMove& m) {
  Partition out = z;
  for (std::size_t i : m.items) out.assign(i, m.to);
  return out;
}

struct Proposal {
  Partition next;
  ProposalMove move;
};

template <class Rng>
Proposal propose(const Partition& z, std::size_t k_up, Rng& rng) {
  ProposalMove m = propose_move(z, k_up, rng);
  return {apply(z, m), std::move(m)};
}

/// log q(z'|z) = log Pr(g) + log Pr(h|g) + log Pr(r|g,h) + log Pr(I|g,r).
/// A well-formed move whose block size is outside the recipe's range has
/// probability zero (returns -inf); a malformed move throws.
inline double proposal_log_prob(const Partition& z, const ProposalMove& m, std::size_t k_up) {
  detail::check_sampler_dims(z, k_up);
  if (m.from >= k_up || m.to >= k_up || m.from == m.to) throw InvalidArgument("move needs two distinct labels");
  if (m.items.empty()) throw InvalidArgument("move relocates no items");
  std::vector<char> seen(z.size(), 0);
  for (std::size_t i : m.items) {
    if (i >= z.size() || z[i] != m.from) throw InvalidArgument("moved item is not in the outbound group");
    if (seen[i]++) throw InvalidArgument("moved items must be distinct");
  }
  const auto occ = detail::occupancy(z);
  const double nu = static_cast<double>(occ.occupied.size());
  const std::size_t n_from = occ.sizes[m.from];
  const std::size_t n_to = occ.sizes[m.to];

  double lp = -std::log(nu);
  if (detail::single_branch(occ.occupied.size(), k_up)) {
    lp -= std::log(static_cast<double>(k_up - 1));
  } else if (n_to > 0) {
    lp -= std::log(2.0 * (nu - 1.0));
  } else {
    lp -= std::log(2.0 * static_cast<double>(occ.empty.size()));
  }
  const std::size_t r = m.count();
  const std::size_t r_max = detail::max_block(n_from, n_to);
  if (r > r_max) return kLogZero;
  lp -= std::log(static_cast<double>(r_max));
  // log C(n_from, r)
  lp -= std::lgamma(double(n_from) + 1.0) - std::lgamma(double(r) + 1.0) - std::lgamma(double(n_from - r) + 1.0);
  return lp;
}

/// What the sampler needs from a model: the current allocation, its log
/// posterior, and an in-place block relabeling.
template <class S>
concept AllocationState = requires(S& s, const S& cs, std::span<const std::size_t> items, Label h) {
  { cs.partition() } -> std::convertible_to<const Partition&>;
  { cs.log_posterior() } -> std::convertible_to<double>;
  s.relocate(items, h);
};

struct StepResult {
  bool accepted = false;
  double log_posterior = 0.0;
};

/// One Metropolis-Hastings update. The reverse move sends the same items
/// from h back to g and is scored under the proposed state's occupancy.
template <AllocationState S, class Rng>
StepResult mh_step(S& state, std::size_t k_up, Rng& rng) {
  const ProposalMove move = propose_move(state.partition(), k_up, rng);
  const double forward = proposal_log_prob(state.partition(), move, k_up);
  const double lp_old = state.log_posterior();
  state.relocate(move.items, move.to);
  const double backward = proposal_log_prob(state.partition(), move.reversed(), k_up);
  const double lp_new = state.log_posterior();

  bool accept = false;
  if (backward != kLogZero && lp_new != kLogZero) {
    const double log_ratio = backward + lp_new - forward - lp_old;
    accept = log_ratio >= 0.0 || std::log(std::uniform_real_distribution<double>(0.0, 1.0)(rng)) < log_ratio;
  }
  if (!accept) state.relocate(move.items, move.from);
  return {accept, state.log_posterior()};
}

// ---------------------------------------------------------------------------
// Model states. Each keeps per-group (or per-block) terms computed from exact
// statistics, so undoing a move restores the log posterior bit for bit.

namespace detail {

// Collapsed prior from group sizes, with the occupancy term looked up.
inline double prior_total(const std::vector<std::size_t>& sizes, const AllocationPrior& p,
                          const std::vector<double>& occupancy) {
  std::size_t occupied = 0;
  double sum = 0.0;
  for (std::size_t n : sizes) {
    if (n > 0) ++occupied;
    sum += log_prior_group_term(n, p.alpha);
  }
  return occupied > p.k_prior ? kLogZero : sum + occupancy[occupied];
}

}  // namespace detail

class GmmState {
 public:
  GmmState(const GmmSpec& spec, Partition init) : spec_(&spec), z_(std::move(init)) {
    spec.validate();
    if (z_.size() != spec.data.size()) throw InvalidArgument("initial allocation does not match the data");
    check_label_range(z_.k_up(), spec.prior);
    occupancy_ = occupancy_table(z_.size(), spec.prior);
    terms_.assign(z_.k_up(), 0.0);
    for (Label g = 0; g < z_.k_up(); ++g) refresh(g);
    sizes_ = z_.group_sizes();
    total();
  }

  const Partition& partition() const { return z_; }
  double log_posterior() const { return total_; }

  void relocate(std::span<const std::size_t> items, Label h) {
    if (items.empty()) return;
    const Label g = z_[items.front()];
    for (std::size_t i : items) {
      --sizes_[z_[i]];
      ++sizes_[h];
      z_.assign(i, h);
    }
    refresh(g);
    refresh(h);
    total();
  }

 private:
  void refresh(Label g) {
    GaussianStats s;
    for (std::size_t i = 0; i < z_.size(); ++i)
      if (z_[i] == g) s.add(spec_->data[i]);
    terms_[g] = gmm_group_log_marginal(s, spec_->tau, spec_->gamma, spec_->delta);
  }

  void total() {
    const double prior = detail::prior_total(sizes_, spec_->prior, occupancy_);
    total_ = prior + std::accumulate(terms_.begin(), terms_.end(), 0.0);
  }

  const GmmSpec* spec_;
  Partition z_;
  std::vector<double> terms_;
  std::vector<std::size_t> sizes_;
  std::vector<double> occupancy_;
  double total_ = 0.0;
};

class SbmState {
 public:
  SbmState(const SbmSpec& spec, Partition init) : spec_(&spec), z_(std::move(init)), k_(z_.k_up()) {
    spec.validate();
    if (z_.size() != spec.graph.nodes()) throw InvalidArgument("initial allocation does not match the node count");
    check_label_range(z_.k_up(), spec.prior);
    occupancy_ = occupancy_table(z_.size(), spec.prior);
    sizes_ = z_.group_sizes();
    edges_.assign(k_ * k_, 0);
    for (std::size_t i = 0; i < z_.size(); ++i)
      for (std::size_t j : spec.graph.neighbors(i))
        if (i < j) bump(z_[i], z_[j], +1);
    terms_.assign(k_ * k_, 0.0);
    for (Label g = 0; g < k_; ++g)
      for (Label h = g; h < k_; ++h) refresh(g, h);
    total();
  }

  const Partition& partition() const { return z_; }
  double log_posterior() const { return total_; }

  void relocate(std::span<const std::size_t> items, Label h) {
    if (items.empty()) return;
    const Label g = z_[items.front()];
    for (std::size_t i : items) {
      const Label old = z_[i];
      for (std::size_t j : spec_->graph.neighbors(i)) bump(old, z_[j], -1);
      z_.assign(i, h);
      for (std::size_t j : spec_->graph.neighbors(i)) bump(h, z_[j], +1);
      --sizes_[old];
      ++sizes_[h];
    }
    for (Label x = 0; x < k_; ++x) {
      refresh(std::min(x, g), std::max(x, g));
      refresh(std::min(x, h), std::max(x, h));
    }
    total();
  }

 private:
  void bump(Label a, Label b, int d) {
    const std::size_t lo = std::min(a, b), hi = std::max(a, b);
    edges_[lo * k_ + hi] = static_cast<std::size_t>(static_cast<long long>(edges_[lo * k_ + hi]) + d);
  }

  void refresh(Label g, Label h) {
    terms_[g * k_ + h] =
        block_log_marginal(edges_[g * k_ + h], block_dyads(sizes_[g], sizes_[h], g == h), spec_->beta_a, spec_->beta_b);
  }

  void total() {
    double sum = detail::prior_total(sizes_, spec_->prior, occupancy_);
    for (Label g = 0; g < k_; ++g) {
      if (sizes_[g] == 0) continue;
      for (Label h = g; h < k_; ++h)
        if (sizes_[h] > 0) sum += terms_[g * k_ + h];
    }
    total_ = sum;
  }

  const SbmSpec* spec_;
  Partition z_;
  std::size_t k_;
  std::vector<std::size_t> sizes_;
  std::vector<std::size_t> edges_;  // upper triangle, edges_[g * K + h] with g <= h
  std::vector<double> terms_;
  std::vector<double> occupancy_;
  double total_ = 0.0;
};

/// Joint row/column state of the latent block model.
class LbmState {
 public:
  LbmState(const LbmSpec& spec, Partition rows, Partition cols)
      : spec_(&spec), r_(std::move(rows)), c_(std::move(cols)), kr_(r_.k_up()), kc_(c_.k_up()) {
    spec.validate();
    if (r_.size() != spec.rows || c_.size() != spec.cols) throw InvalidArgument("allocations do not match the matrix");
    check_label_range(r_.k_up(), spec.row_prior);
    check_label_range(c_.k_up(), spec.col_prior);
    row_occupancy_ = occupancy_table(r_.size(), spec.row_prior);
    col_occupancy_ = occupancy_table(c_.size(), spec.col_prior);
    rsizes_ = r_.group_sizes();
    csizes_ = c_.group_sizes();
    ones_.assign(kr_ * kc_, 0);
    for (std::size_t i = 0; i < spec.rows; ++i)
      for (std::size_t j = 0; j < spec.cols; ++j) ones_[r_[i] * kc_ + c_[j]] += spec.at(i, j);
    terms_.assign(kr_ * kc_, 0.0);
    for (Label g = 0; g < kr_; ++g)
      for (Label h = 0; h < kc_; ++h) refresh(g, h);
    total();
  }

  const Partition& rows() const { return r_; }
  const Partition& cols() const { return c_; }
  double log_posterior() const { return total_; }

  void relocate_rows(std::span<const std::size_t> items, Label h) {
    if (items.empty()) return;
    const Label g = r_[items.front()];
    for (std::size_t i : items) {
      const Label old = r_[i];
      for (std::size_t j = 0; j < spec_->cols; ++j) {
        const std::uint8_t y = spec_->at(i, j);
        ones_[old * kc_ + c_[j]] -= y;
        ones_[h * kc_ + c_[j]] += y;
      }
      r_.assign(i, h);
      --rsizes_[old];
      ++rsizes_[h];
    }
    for (Label x = 0; x < kc_; ++x) {
      refresh(g, x);
      refresh(h, x);
    }
    total();
  }

  void relocate_cols(std::span<const std::size_t> items, Label h) {
    if (items.empty()) return;
    const Label g = c_[items.front()];
    for (std::size_t j : items) {
      const Label old = c_[j];
      for (std::size_t i = 0; i < spec_->rows; ++i) {
        const std::uint8_t y = spec_->at(i, j);
        ones_[r_[i] * kc_ + old] -= y;
        ones_[r_[i] * kc_ + h] += y;
      }
      c_.assign(j, h);
      --csizes_[old];
      ++csizes_[h];
    }
    for (Label x = 0; x < kr_; ++x) {
      refresh(x, g);
      refresh(x, h);
    }
    total();
  }

  /// Adapts one side of the state to the single-partition sampler interface.
  template <bool Rows>
  class Side {
   public:
    explicit Side(LbmState& s) : s_(&s) {}
    const Partition& partition() const { return Rows ? s_->r_ : s_->c_; }
    double log_posterior() const { return s_->total_; }
    void relocate(std::span<const std::size_t> items, Label h) {
      if constexpr (Rows) {
        s_->relocate_rows(items, h);
      } else {
        s_->relocate_cols(items, h);
      }
    }

   private:
    LbmState* s_;
  };

 private:
  void refresh(Label g, Label h) {
    terms_[g * kc_ + h] = block_log_marginal(ones_[g * kc_ + h], rsizes_[g] * csizes_[h], spec_->beta_a, spec_->beta_b);
  }

  void total() {
    double sum = detail::prior_total(rsizes_, spec_->row_prior, row_occupancy_) +
                 detail::prior_total(csizes_, spec_->col_prior, col_occupancy_);
    for (Label g = 0; g < kr_; ++g) {
      if (rsizes_[g] == 0) continue;
      for (Label h = 0; h < kc_; ++h)
        if (csizes_[h] > 0) sum += terms_[g * kc_ + h];
    }
    total_ = sum;
  }

  const LbmSpec* spec_;
  Partition r_, c_;
  std::size_t kr_, kc_;
  std::vector<std::size_t> rsizes_, csizes_;
  std::vector<std::size_t> ones_;
  std::vector<double> terms_;
  std::vector<double> row_occupancy_, col_occupancy_;
  double total_ = 0.0;
};

inline GmmState make_state(const GmmSpec& spec, Partition init) { return GmmState(spec, std::move(init)); }
inline SbmState make_state(const SbmSpec& spec, Partition init) { return SbmState(spec, std::move(init)); }

inline std::size_t model_items(const GmmSpec& m) { return m.data.size(); }
inline std::size_t model_items(const SbmSpec& m) { return m.graph.nodes(); }

// ---------------------------------------------------------------------------
// Chain drivers

struct ChainConfig {
  std::size_t iterations = 1;  // kept draws
  std::size_t burn_in = 0;
  std::size_t thin = 1;
  std::size_t k_up = 2;
  std::uint64_t seed = 0;
  std::optional<Partition> init;  // default: uniform labels in 0..K_up-1
  // Latent block model only: column-side K_up (0 = same as k_up) and start.
  std::size_t k_up_cols = 0;
  std::optional<Partition> init_cols;

  void validate() const {
    if (iterations < 1) throw InvalidArgument("need at least one kept draw");
    if (thin < 1) throw InvalidArgument("thinning lag must be at least 1");
    if (k_up < 2 || (k_up_cols != 0 && k_up_cols < 2)) throw InvalidArgument("the allocation sampler requires K_up >= 2");
  }
};

struct ChainOutput {
  PosteriorSample sample;
  double acceptance_rate = 0.0;
};

namespace detail {

inline std::mt19937_64 chain_rng(std::uint64_t seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
  return std::mt19937_64(seq);
}

template <class Rng>
Partition initial_partition(const std::optional<Partition>& given, std::size_t n, std::size_t k_up, Rng& rng) {
  if (given) {
    if (given->size() != n) throw InvalidArgument("initial partition has the wrong number of items");
    return Partition({given->labels().begin(), given->labels().end()}, k_up);
  }
  std::uniform_int_distribution<Label> pick(0, static_cast<Label>(k_up - 1));
  std::vector<Label> labels(n);
  for (auto& l : labels) l = pick(rng);
  return Partition(std::move(labels), k_up);
}

}  // namespace detail

/// Runs burn_in updates, then keeps every thin-th state until `iterations`
/// draws are stored, each with its log posterior.
template <AllocationState S, class Rng>
ChainOutput run_chain_state(S& state, const ChainConfig& cfg, Rng& rng) {
  cfg.validate();
  if (state.log_posterior() == kLogZero) throw InvalidArgument("initial allocation has zero posterior probability");
  const std::size_t n = state.partition().size();
  std::vector<Label> draws;
  draws.reserve(cfg.iterations * n);
  std::vector<double> trace;
  trace.reserve(cfg.iterations);
  std::size_t accepted = 0, updates = 0;
  auto update = [&] {
    accepted += mh_step(state, cfg.k_up, rng).accepted ? 1 : 0;
    ++updates;
  };
  for (std::size_t u = 0; u < cfg.burn_in; ++u) update();
  for (std::size_t k = 0; k < cfg.iterations; ++k) {
    for (std::size_t u = 0; u < cfg.thin; ++u) update();
    const auto labels = state.partition().labels();
    draws.insert(draws.end(), labels.begin(), labels.end());
    trace.push_back(state.log_posterior());
  }
  return {PosteriorSample(n, cfg.k_up, std::move(draws), std::move(trace)),
          static_cast<double>(accepted) / static_cast<double>(updates)};
}

template <class Spec>
ChainOutput run_chain(const Spec& model, const ChainConfig& cfg) {
  cfg.validate();
  auto rng = detail::chain_rng(cfg.seed);
  auto state = make_state(model, detail::initial_partition(cfg.init, model_items(model), cfg.k_up, rng));
  return run_chain_state(state, cfg, rng);
}

struct LbmChainOutput {
  ChainOutput rows;
  ChainOutput cols;
  std::vector<double> joint_trace;
};

/// Each update flips a fair coin between a row move and a column move; a
/// side with a single item has no valid move and the update leaves the
/// state unchanged.
inline LbmChainOutput run_chain_lbm(const LbmSpec& model, const ChainConfig& cfg) {
  cfg.validate();
  model.validate();
  const std::size_t kc = cfg.k_up_cols ? cfg.k_up_cols : cfg.k_up;
  auto rng = detail::chain_rng(cfg.seed);
  Partition r0 = detail::initial_partition(cfg.init, model.rows, cfg.k_up, rng);
  Partition c0 = detail::initial_partition(cfg.init_cols, model.cols, kc, rng);
  LbmState state(model, std::move(r0), std::move(c0));
  if (state.log_posterior() == kLogZero) throw InvalidArgument("initial allocation has zero posterior probability");
  LbmState::Side<true> row_side(state);
  LbmState::Side<false> col_side(state);

  std::vector<Label> rdraws, cdraws;
  std::vector<double> trace;
  std::size_t accepted = 0, updates = 0;
  auto update = [&] {
    ++updates;
    if (std::bernoulli_distribution(0.5)(rng)) {
      if (model.rows >= 2) accepted += mh_step(row_side, cfg.k_up, rng).accepted ? 1 : 0;
    } else {
      if (model.cols >= 2) accepted += mh_step(col_side, kc, rng).accepted ? 1 : 0;
    }
  };
  for (std::size_t u = 0; u < cfg.burn_in; ++u) update();
  for (std::size_t k = 0; k < cfg.iterations; ++k) {
    for (std::size_t u = 0; u < cfg.thin; ++u) update();
    rdraws.insert(rdraws.end(), state.rows().labels().begin(), state.rows().labels().end());
    cdraws.insert(cdraws.end(), state.cols().labels().begin(), state.cols().labels().end());
    trace.push_back(state.log_posterior());
  }
  const double rate = static_cast<double>(accepted) / static_cast<double>(updates);
  return {ChainOutput{PosteriorSample(model.rows, cfg.k_up, std::move(rdraws), trace), rate},
          ChainOutput{PosteriorSample(model.cols, kc, std::move(cdraws), trace), rate}, trace};
}

}  // namespace gepl
