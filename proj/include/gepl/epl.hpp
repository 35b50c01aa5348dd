#pragma once

// Expected posterior loss (EPL) over a sample of partitions: the plain and
// weighted estimators, sample compression into unique canonical rows, the
// incremental optimizer state, and the posterior summaries (PSM, MAP row,
// K histogram).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gepl/error.hpp"
#include "gepl/losses.hpp"
#include "gepl/partition.hpp"

namespace gepl {

/// T x N matrix of labels, row t being one draw. `log_posterior`, when
/// present, holds the sampler's trace aligned with the rows.
class PosteriorSample {
 public:
  PosteriorSample(std::size_t n_items, std::size_t k_up, std::vector<Label> draws,
                  std::optional<std::vector<double>> log_posterior = std::nullopt)
      : n_items_(n_items), k_up_(k_up), draws_(std::move(draws)), log_posterior_(std::move(log_posterior)) {
    if (n_items_ == 0) throw InvalidArgument("sample rows must have at least one item");
    if (draws_.empty() || draws_.size() % n_items_ != 0) {
      throw InvalidArgument("sample must hold a whole, non-zero number of rows");
    }
    for (std::size_t k = 0; k < draws_.size(); ++k) {
      if (draws_[k] >= k_up_) {
        throw DataError("row " + std::to_string(k / n_items_ + 1) + " has label " + std::to_string(draws_[k] + 1) +
                        " above K_up=" + std::to_string(k_up_));
      }
    }
    if (log_posterior_ && log_posterior_->size() != rows()) {
      throw InvalidArgument("log-posterior trace length does not match the number of rows");
    }
  }

  static PosteriorSample from_partitions(const std::vector<Partition>& rows,
                                         std::optional<std::vector<double>> trace = std::nullopt) {
    if (rows.empty()) throw InvalidArgument("sample must have at least one row");
    std::vector<Label> flat;
    flat.reserve(rows.size() * rows.front().size());
    for (const auto& p : rows) {
      if (p.size() != rows.front().size()) throw InvalidArgument("all rows must have the same length");
      flat.insert(flat.end(), p.labels().begin(), p.labels().end());
    }
    return PosteriorSample(rows.front().size(), rows.front().k_up(), std::move(flat), std::move(trace));
  }

  std::size_t rows() const { return draws_.size() / n_items_; }
  std::size_t n_items() const { return n_items_; }
  std::size_t k_up() const { return k_up_; }
  std::span<const Label> row(std::size_t t) const { return {draws_.data() + t * n_items_, n_items_}; }
  Partition partition(std::size_t t) const { return Partition({row(t).begin(), row(t).end()}, k_up_); }
  std::span<const Label> flat() const { return draws_; }
  const std::optional<std::vector<double>>& log_posterior() const { return log_posterior_; }

  friend bool operator==(const PosteriorSample&, const PosteriorSample&) = default;

 private:
  std::size_t n_items_;
  std::size_t k_up_;
  std::vector<Label> draws_;
  std::optional<std::vector<double>> log_posterior_;
};

/// Unique canonical rows with multiplicities.
struct WeightedSample {
  std::size_t n_items = 0;
  std::size_t k_up = 0;
  std::vector<CanonicalForm> uniques;
  std::vector<std::size_t> weights;

  std::size_t total_weight() const { return std::accumulate(weights.begin(), weights.end(), std::size_t{0}); }
  std::size_t size() const { return uniques.size(); }

  /// Most frequent row; earliest in key order on ties.
  const CanonicalForm& heaviest() const {
    return uniques[static_cast<std::size_t>(std::max_element(weights.begin(), weights.end()) - weights.begin())];
  }
};

/// Canonicalize, sort by canonical key and merge equal neighbours.
inline WeightedSample compress(const PosteriorSample& s) {
  std::vector<CanonicalForm> forms;
  forms.reserve(s.rows());
  for (std::size_t t = 0; t < s.rows(); ++t) forms.push_back(canonicalize(s.row(t)));
  std::sort(forms.begin(), forms.end());
  WeightedSample w{s.n_items(), s.k_up(), {}, {}};
  for (auto& f : forms) {
    if (!w.uniques.empty() && w.uniques.back() == f) {
      ++w.weights.back();
    } else {
      w.uniques.push_back(std::move(f));
      w.weights.push_back(1);
    }
  }
  return w;
}

/// One entry per row, weight 1, no merging; rows keep their sample order.
inline WeightedSample as_weighted(const PosteriorSample& s) {
  WeightedSample w{s.n_items(), s.k_up(), {}, {}};
  for (std::size_t t = 0; t < s.rows(); ++t) {
    w.uniques.push_back(canonicalize(s.row(t)));
    w.weights.push_back(1);
  }
  return w;
}

inline double epl(const Partition& a, const PosteriorSample& s, const LossSpec& loss) {
  if (a.size() != s.n_items()) throw InvalidArgument("candidate and sample rows differ in length");
  double sum = 0.0;
  for (std::size_t t = 0; t < s.rows(); ++t) sum += loss_value(loss, a, s.partition(t));
  return sum / static_cast<double>(s.rows());
}

/// Normalized by the total weight, so it agrees with epl() on the
/// uncompressed sample.
inline double epl_weighted(const Partition& a, const WeightedSample& w, const LossSpec& loss) {
  if (a.size() != w.n_items) throw InvalidArgument("candidate and sample rows differ in length");
  if (w.uniques.empty()) throw InvalidArgument("weighted sample is empty");
  double sum = 0.0;
  for (std::size_t t = 0; t < w.size(); ++t) {
    const Partition z(w.uniques[t].labels, std::max<std::size_t>(w.uniques[t].num_groups(), 1));
    sum += static_cast<double>(w.weights[t]) * loss_value(loss, a, z);
  }
  return sum / static_cast<double>(w.total_weight());
}

namespace detail {

// Tabulated f1, f2, f3 on 0..N, shifted so the tables vanish at 0; the
// f(0) offsets are re-added per occupied group/cell by the caller.
struct LossKernel {
  LossKind kind;
  std::size_t n;
  double log2n;
  std::vector<double> d1, d2, d3;
  double z1 = 0.0, z2 = 0.0, z3 = 0.0;
  CombineFn custom;

  LossKernel(const LossSpec& spec, std::size_t n_items) : kind(spec.kind), n(n_items), log2n(std::log2(double(n_items))) {
    const LossSpec form = spec.kind == LossKind::Custom ? spec : decomposable_form(spec.kind, n_items);
    z1 = form.f1(0);
    z2 = form.f2(0);
    z3 = form.f3(0);
    d1.resize(n + 2);
    d2.resize(n + 2);
    d3.resize(n + 2);
    for (std::size_t c = 0; c <= n + 1; ++c) {
      d1[c] = form.f1(c) - z1;
      d2[c] = form.f2(c) - z2;
      d3[c] = form.f3(c) - z3;
      if (!std::isfinite(d1[c]) || !std::isfinite(d2[c]) || !std::isfinite(d3[c])) {
        throw NumericalError("loss component is not finite at count " + std::to_string(c));
      }
    }
    if (kind == LossKind::Custom) custom = form.f0;
  }

  double combine(double s1, double s2, double s3) const {
    const double dn = static_cast<double>(n);
    switch (kind) {
      case LossKind::Binder: return 0.5 * s2 + 0.5 * s3 - s1;
      case LossKind::VI: return std::max((s2 + s3 - 2.0 * s1) / dn, 0.0);
      case LossKind::NVI: return normalized_info_loss(log2n - (s2 + s3 - s1) / dn, log2n - s1 / dn);
      case LossKind::NID:
        return normalized_info_loss(log2n - (s2 + s3 - s1) / dn, std::max(log2n - s2 / dn, log2n - s3 / dn));
      case LossKind::ZeroOne: return (s1 == s2 && s1 == s3) ? 0.0 : 1.0;
      case LossKind::Custom: {
        const double v = custom(s1, s2, s3);
        if (!std::isfinite(v)) throw NumericalError("custom loss combiner returned a non-finite value");
        return v;
      }
    }
    return 0.0;
  }
};

}  // namespace detail

/// Optimizer state for a candidate partition `a` against a weighted
/// sample: one contingency table per unique draw (K_up rows by the draw's
/// own group count), the per-draw partial sums of the decomposable loss,
/// and the current loss of every draw. Evaluating a single-item move costs
/// O(T~); committing one costs the same.
class EplState {
 public:
  EplState(const WeightedSample& sample, const LossSpec& loss, const Partition& start)
      : kernel_(loss, sample.n_items), n_(sample.n_items), k_up_(start.k_up()), t_(sample.size()) {
    if (sample.uniques.empty()) throw InvalidArgument("cannot optimize against an empty sample");
    if (start.size() != n_) throw InvalidArgument("starting partition has the wrong number of items");
    if (sample.weights.size() != t_) throw InvalidArgument("weights and uniques differ in length");
    weights_.resize(t_);
    total_weight_ = 0.0;
    for (std::size_t t = 0; t < t_; ++t) {
      if (sample.weights[t] == 0) throw InvalidArgument("weights must be positive");
      weights_[t] = static_cast<double>(sample.weights[t]);
      total_weight_ += weights_[t];
    }
    kz_.resize(t_);
    offsets_.resize(t_ + 1, 0);
    z_by_item_.assign(n_ * t_, 0);
    for (std::size_t t = 0; t < t_; ++t) {
      const auto& u = sample.uniques[t];
      if (u.labels.size() != n_) throw InvalidArgument("sample rows differ in length from the candidate");
      kz_[t] = u.num_groups();
      if (kz_[t] > k_up_) {
        throw DataError("sample draw with " + std::to_string(kz_[t]) + " groups exceeds K_up=" + std::to_string(k_up_));
      }
      offsets_[t + 1] = offsets_[t] + k_up_ * kz_[t];
      for (std::size_t i = 0; i < n_; ++i) z_by_item_[i * t_ + t] = u.labels[i];
    }
    counts_.assign(offsets_[t_], 0);
    s1_.assign(t_, 0.0);
    s3_.assign(t_, 0.0);
    loss_.assign(t_, 0.0);
    reset(start);
  }

  /// Rebuilds every cached quantity for a new candidate.
  void reset(const Partition& a) {
    if (a.size() != n_ || a.k_up() != k_up_) throw InvalidArgument("candidate does not match the state dimensions");
    labels_.assign(a.labels().begin(), a.labels().end());
    sizes_.assign(k_up_, 0);
    for (Label l : labels_) ++sizes_[l];
    occupied_ = 0;
    s2_ = 0.0;
    for (std::size_t g = 0; g < k_up_; ++g) {
      if (sizes_[g] > 0) ++occupied_;
      s2_ += kernel_.d2[sizes_[g]];
    }
    std::fill(counts_.begin(), counts_.end(), 0u);
    for (std::size_t t = 0; t < t_; ++t) {
      std::uint32_t* c = counts_.data() + offsets_[t];
      std::vector<std::size_t> zsizes(kz_[t], 0);
      for (std::size_t i = 0; i < n_; ++i) {
        const Label v = z_by_item_[i * t_ + t];
        ++c[labels_[i] * kz_[t] + v];
        ++zsizes[v];
      }
      double s1 = 0.0;
      for (std::size_t k = 0; k < k_up_ * kz_[t]; ++k) s1 += kernel_.d1[c[k]];
      s1_[t] = s1;
      double s3 = 0.0;
      for (std::size_t v = 0; v < kz_[t]; ++v) s3 += kernel_.d3[zsizes[v]];
      s3_[t] = s3 + static_cast<double>(kz_[t]) * kernel_.z3;
    }
    refresh_losses();
  }

  std::size_t n_items() const { return n_; }
  std::size_t k_up() const { return k_up_; }
  std::size_t draws() const { return t_; }
  Label label(std::size_t i) const { return labels_[i]; }
  std::size_t group_size(Label g) const { return sizes_[g]; }
  Partition partition() const { return Partition(labels_, k_up_); }
  double psi() const { return psi_; }
  std::size_t evaluations() const { return evaluations_; }

  /// Cached table of draw t, rows indexed by the candidate's raw labels.
  ContingencyTable table(std::size_t t) const {
    ContingencyTable out(k_up_, kz_[t]);
    const std::uint32_t* c = counts_.data() + offsets_[t];
    for (std::size_t g = 0; g < k_up_; ++g)
      for (std::size_t v = 0; v < kz_[t]; ++v)
        for (std::uint32_t k = 0; k < c[g * kz_[t] + v]; ++k) out.add(g, v);
    return out;
  }

  /// psi(a with item i moved to s) - psi(a). Does not modify the state.
  double delta(std::size_t i, Label s) const {
    check_move(i, s);
    ++evaluations_;
    const Label r = labels_[i];
    if (s == r) return 0.0;
    const MoveTerms m = move_terms(r, s);
    const Label* zi = z_by_item_.data() + i * t_;
    const auto& d1 = kernel_.d1;
    double acc = 0.0;
    for (std::size_t t = 0; t < t_; ++t) {
      const std::size_t kz = kz_[t];
      const std::uint32_t* c = counts_.data() + offsets_[t];
      const std::uint32_t nrv = c[r * kz + zi[t]];
      const std::uint32_t nsv = c[s * kz + zi[t]];
      const double ds1 = (d1[nrv - 1] - d1[nrv]) + (d1[nsv + 1] - d1[nsv]);
      const double s1 = s1_[t] + ds1 + static_cast<double>(m.occupied * kz) * kernel_.z1;
      acc += weights_[t] * (kernel_.combine(s1, m.s2, s3_[t]) - loss_[t]);
    }
    return acc / total_weight_;
  }

  /// Applies the move of item i to group s and updates every cache.
  void commit(std::size_t i, Label s) {
    check_move(i, s);
    const Label r = labels_[i];
    if (s == r) return;
    const MoveTerms m = move_terms(r, s);
    const Label* zi = z_by_item_.data() + i * t_;
    const auto& d1 = kernel_.d1;
    for (std::size_t t = 0; t < t_; ++t) {
      const std::size_t kz = kz_[t];
      std::uint32_t* c = counts_.data() + offsets_[t];
      std::uint32_t& nrv = c[r * kz + zi[t]];
      std::uint32_t& nsv = c[s * kz + zi[t]];
      s1_[t] += (d1[nrv - 1] - d1[nrv]) + (d1[nsv + 1] - d1[nsv]);
      --nrv;
      ++nsv;
    }
    s2_ = m.s2_raw;
    occupied_ = m.occupied;
    --sizes_[r];
    ++sizes_[s];
    labels_[i] = s;
    refresh_losses();
  }

 private:
  struct MoveTerms {
    std::size_t occupied;
    double s2_raw;
    double s2;
  };

  void check_move(std::size_t i, Label s) const {
    if (i >= n_) throw InvalidArgument("item index out of range");
    if (s >= k_up_) throw InvalidArgument("target label exceeds K_up");
  }

  MoveTerms move_terms(Label r, Label s) const {
    const auto& d2 = kernel_.d2;
    const std::size_t nr = sizes_[r], ns = sizes_[s];
    const double s2_raw = s2_ + (d2[nr - 1] - d2[nr]) + (d2[ns + 1] - d2[ns]);
    const std::size_t occ = occupied_ - (nr == 1 ? 1 : 0) + (ns == 0 ? 1 : 0);
    return {occ, s2_raw, s2_raw + static_cast<double>(occ) * kernel_.z2};
  }

  void refresh_losses() {
    const double s2 = s2_ + static_cast<double>(occupied_) * kernel_.z2;
    double acc = 0.0;
    for (std::size_t t = 0; t < t_; ++t) {
      const double s1 = s1_[t] + static_cast<double>(occupied_ * kz_[t]) * kernel_.z1;
      loss_[t] = kernel_.combine(s1, s2, s3_[t]);
      acc += weights_[t] * loss_[t];
    }
    psi_ = acc / total_weight_;
  }

  detail::LossKernel kernel_;
  std::size_t n_, k_up_, t_;
  std::vector<double> weights_;
  double total_weight_ = 0.0;
  std::vector<std::size_t> kz_;
  std::vector<std::size_t> offsets_;
  std::vector<Label> z_by_item_;  // item-major: z_by_item_[i * T~ + t]
  std::vector<std::uint32_t> counts_;
  std::vector<double> s1_, s3_, loss_;
  std::vector<Label> labels_;
  std::vector<std::size_t> sizes_;
  std::size_t occupied_ = 0;
  double s2_ = 0.0;
  double psi_ = 0.0;
  mutable std::size_t evaluations_ = 0;
};

inline double delta_epl(const EplState& state, std::size_t i, Label r, Label s) {
  if (i >= state.n_items() || state.label(i) != r) throw InvalidArgument("item is not in the stated source group");
  return state.delta(i, s);
}

inline void commit_move(EplState& state, std::size_t i, Label r, Label s) {
  if (i >= state.n_items() || state.label(i) != r) throw InvalidArgument("item is not in the stated source group");
  state.commit(i, s);
}

/// Posterior similarity matrix: fraction of draws placing i and j together.
class Psm {
 public:
  explicit Psm(std::size_t n) : n_(n), b_(n * n, 0.0) {}
  std::size_t size() const { return n_; }
  double operator()(std::size_t i, std::size_t j) const { return b_[i * n_ + j]; }
  double& operator()(std::size_t i, std::size_t j) { return b_[i * n_ + j]; }

 private:
  std::size_t n_;
  std::vector<double> b_;
};

inline Psm psm(const PosteriorSample& s) {
  const std::size_t n = s.n_items();
  std::vector<std::size_t> together(n * n, 0);
  for (std::size_t t = 0; t < s.rows(); ++t) {
    const auto z = s.row(t);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        if (z[i] == z[j]) ++together[i * n + j];
  }
  Psm m(n);
  const double rows = static_cast<double>(s.rows());
  for (std::size_t i = 0; i < n; ++i) {
    m(i, i) = 1.0;
    for (std::size_t j = i + 1; j < n; ++j) m(i, j) = m(j, i) = static_cast<double>(together[i * n + j]) / rows;
  }
  return m;
}

/// sum_{i<j} |1(a_i = a_j) - b_ij|, which equals the Binder EPL of `a`
/// when the PSM comes from the same sample.
inline double binder_objective_psm(const Partition& a, const Psm& m) {
  if (a.size() != m.size()) throw InvalidArgument("partition and PSM differ in size");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = i + 1; j < a.size(); ++j) sum += a[i] == a[j] ? 1.0 - m(i, j) : m(i, j);
  return sum;
}

/// Canonical form of the row with the highest recorded log posterior;
/// first occurrence wins ties.
inline Partition map_partition(const PosteriorSample& s) {
  if (!s.log_posterior()) {
    throw DataError("MAP extraction needs the log-posterior trace; re-run the sampler with the trace enabled");
  }
  const auto& lp = *s.log_posterior();
  const std::size_t best = static_cast<std::size_t>(std::max_element(lp.begin(), lp.end()) - lp.begin());
  return canonicalize(s.row(best)).to_partition(s.k_up());
}

/// Relative frequency of the number of occupied groups across draws.
inline std::map<std::size_t, double> k_histogram(const PosteriorSample& s) {
  std::map<std::size_t, std::size_t> counts;
  std::vector<char> seen(s.k_up());
  for (std::size_t t = 0; t < s.rows(); ++t) {
    std::fill(seen.begin(), seen.end(), 0);
    std::size_t k = 0;
    for (Label l : s.row(t)) {
      if (!seen[l]) {
        seen[l] = 1;
        ++k;
      }
    }
    ++counts[k];
  }
  std::map<std::size_t, double> out;
  for (auto [k, c] : counts) out[k] = static_cast<double>(c) / static_cast<double>(s.rows());
  return out;
}

}  // namespace gepl
