#pragma once

// Greedy single-item reallocation minimizing the estimated EPL, with
// multiple restarts.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <numeric>
#include <optional>
#include <random>
#include <thread>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

#include "gepl/epl.hpp"
#include "gepl/error.hpp"
#include "gepl/losses.hpp"
#include "gepl/partition.hpp"

namespace gepl {

/// i.i.d. uniform labels in {0, ..., k0-1}.
struct RandomInit {
  std::size_t k0;
};

/// MAP partition with ceil(fraction * N) random items sent to uniform labels.
struct NoisyMapInit {
  double fraction = 0.1;
};

struct GivenInit {
  Partition partition;
};

using InitStrategy = std::variant<RandomInit, NoisyMapInit, GivenInit>;

struct GreedyConfig {
  std::size_t k_up = 0;
  std::size_t restarts = 10;
  // Unset: even restarts use NoisyMapInit{noise_fraction}, odd ones
  // RandomInit{k_up}.
  std::optional<InitStrategy> init;
  double noise_fraction = 0.1;
  // Used by NoisyMapInit; falls back to the most frequent sampled row.
  std::optional<Partition> map_partition;
  std::size_t max_sweeps = 100;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
};

struct EplReport {
  Partition partition;  // canonical
  double epl = 0.0;
  LossKind loss = LossKind::VI;
  std::size_t evaluations = 0;
};

struct RestartSummary {
  double epl = 0.0;
  std::size_t sweeps = 0;
  bool converged = false;
};

struct GreedyResult {
  EplReport best;
  std::vector<RestartSummary> per_restart;
};

/// A move must lower psi by more than this to be taken; deltas within it of
/// each other count as ties.
inline constexpr double kImprovementTolerance = 1e-12;

struct BestMove {
  Label target;
  double delta;
};

/// Lowest-delta target over all K_up labels, lowest label on ties. Returns
/// the current label with delta 0 when nothing improves. Empty labels are
/// interchangeable, so only the first one is scored.
inline BestMove best_move(const EplState& state, std::size_t i) {
  BestMove best{state.label(i), 0.0};
  bool empty_seen = false;
  for (Label s = 0; s < state.k_up(); ++s) {
    if (s == state.label(i)) continue;
    if (state.group_size(s) == 0) {
      if (empty_seen) continue;
      empty_seen = true;
    }
    const double d = state.delta(i, s);
    if (d < -kImprovementTolerance && d < best.delta - kImprovementTolerance) best = {s, d};
  }
  return best;
}

/// Visits every item once in random order and commits its best move.
/// Returns whether any item changed group.
template <class Rng>
bool sweep(EplState& state, Rng& rng) {
  std::vector<std::size_t> order(state.n_items());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  bool changed = false;
  for (std::size_t i : order) {
    const BestMove m = best_move(state, i);
    if (m.target != state.label(i)) {
      state.commit(i, m.target);
      changed = true;
    }
  }
  return changed;
}

template <class Rng>
Partition init_partition(const InitStrategy& init, std::size_t k_up, std::size_t n_items,
                         const Partition& map_partition, Rng& rng) {
  return std::visit(
      [&](const auto& s) -> Partition {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, RandomInit>) {
          if (s.k0 < 1 || s.k0 > k_up) throw InvalidArgument("random initialization needs 1 <= k0 <= K_up");
          std::uniform_int_distribution<Label> pick(0, static_cast<Label>(s.k0 - 1));
          std::vector<Label> labels(n_items);
          for (auto& l : labels) l = pick(rng);
          return Partition(std::move(labels), k_up);
        } else if constexpr (std::is_same_v<T, NoisyMapInit>) {
          if (!(s.fraction >= 0.0 && s.fraction <= 1.0)) throw InvalidArgument("noise fraction must lie in [0, 1]");
          if (map_partition.size() != n_items) throw InvalidArgument("MAP partition has the wrong number of items");
          std::vector<Label> labels(map_partition.labels().begin(), map_partition.labels().end());
          const auto moved = static_cast<std::size_t>(std::ceil(s.fraction * static_cast<double>(n_items)));
          std::vector<std::size_t> items(n_items);
          std::iota(items.begin(), items.end(), std::size_t{0});
          std::uniform_int_distribution<Label> pick(0, static_cast<Label>(k_up - 1));
          for (std::size_t k = 0; k < std::min(moved, n_items); ++k) {
            std::uniform_int_distribution<std::size_t> j(k, n_items - 1);
            std::swap(items[k], items[j(rng)]);
            labels[items[k]] = pick(rng);
          }
          return Partition(std::move(labels), k_up);
        } else {
          if (s.partition.size() != n_items) {
            throw InvalidArgument("given starting partition has " + std::to_string(s.partition.size()) +
                                  " items, expected " + std::to_string(n_items));
          }
          return Partition({s.partition.labels().begin(), s.partition.labels().end()}, k_up);
        }
      },
      init);
}

namespace detail {

struct RestartOutcome {
  Partition partition;
  RestartSummary summary;
  std::size_t evaluations = 0;
};

inline RestartOutcome run_restart(const WeightedSample& sample, const LossSpec& loss, const GreedyConfig& cfg,
                                  const Partition& map, std::size_t restart) {
  std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                    static_cast<std::uint32_t>(restart)};
  std::mt19937_64 rng(seq);
  const InitStrategy init = cfg.init ? *cfg.init
                                     : (restart % 2 == 0 ? InitStrategy{NoisyMapInit{cfg.noise_fraction}}
                                                         : InitStrategy{RandomInit{cfg.k_up}});
  EplState state(sample, loss, init_partition(init, cfg.k_up, sample.n_items, map, rng));
  RestartOutcome out;
  while (out.summary.sweeps < cfg.max_sweeps) {
    ++out.summary.sweeps;
    if (!sweep(state, rng)) {
      out.summary.converged = true;
      break;
    }
  }
  out.partition = canonicalize(state.partition()).to_partition(cfg.k_up);
  // Reported from scratch so that no incremental rounding leaks out.
  out.summary.epl = epl_weighted(out.partition, sample, loss);
  out.evaluations = state.evaluations();
  return out;
}

}  // namespace detail

inline GreedyResult greedy_minimize(const WeightedSample& sample, const LossSpec& loss, const GreedyConfig& cfg) {
  if (sample.uniques.empty()) throw InvalidArgument("cannot summarize an empty sample");
  if (cfg.k_up < 1) throw InvalidArgument("K_up must be at least 1");
  if (cfg.restarts < 1) throw InvalidArgument("need at least one restart");
  if (cfg.max_sweeps < 1) throw InvalidArgument("max_sweeps must be at least 1");
  for (const auto& u : sample.uniques) {
    if (u.num_groups() > cfg.k_up) {
      throw DataError("sample contains a draw with " + std::to_string(u.num_groups()) + " groups, above K_up=" +
                      std::to_string(cfg.k_up));
    }
  }
  const Partition map = cfg.map_partition ? Partition({cfg.map_partition->labels().begin(),
                                                       cfg.map_partition->labels().end()},
                                                      cfg.k_up)
                                          : sample.heaviest().to_partition(cfg.k_up);

  std::vector<detail::RestartOutcome> outcomes(cfg.restarts);
  const std::size_t workers = std::clamp<std::size_t>(cfg.threads, 1, cfg.restarts);
  if (workers == 1) {
    for (std::size_t r = 0; r < cfg.restarts; ++r) outcomes[r] = detail::run_restart(sample, loss, cfg, map, r);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t r = w; r < cfg.restarts; r += workers)
            outcomes[r] = detail::run_restart(sample, loss, cfg, map, r);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  GreedyResult result;
  std::size_t best = 0;
  std::size_t evaluations = 0;
  for (std::size_t r = 0; r < outcomes.size(); ++r) {
    result.per_restart.push_back(outcomes[r].summary);
    evaluations += outcomes[r].evaluations;
    const auto& o = outcomes[r];
    const auto& b = outcomes[best];
    if (o.summary.epl < b.summary.epl ||
        (o.summary.epl == b.summary.epl && canonicalize(o.partition) < canonicalize(b.partition))) {
      best = r;
    }
  }
  result.best = EplReport{outcomes[best].partition, outcomes[best].summary.epl, loss.kind, evaluations};
  return result;
}

}  // namespace gepl
