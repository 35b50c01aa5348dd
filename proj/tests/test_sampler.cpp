#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "gepl/sampler.hpp"
#include "sampler_oracle.hpp"
#include "test_support.hpp"

using gepl::AllocationPrior;
using gepl::ChainConfig;
using gepl::Label;
using gepl::Partition;
using gepl::ProposalMove;

TEST(Proposal, WorkedExample) {
  const Partition z({0, 0, 1}, 3);
  EXPECT_NEAR(gepl::proposal_log_prob(z, ProposalMove{0, 2, {0}}, 3), std::log(1.0 / 8.0), 1e-14);
}

TEST(Proposal, EmptyTargetWithPairMovesOneItem) {
  const Partition z({0, 0, 1, 1, 1}, 4);
  // r is uniform on {1}: only the subset choice remains
  EXPECT_NEAR(gepl::proposal_log_prob(z, ProposalMove{0, 3, {1}}, 4), std::log(0.5 * 0.25 * 1.0 * 0.5), 1e-14);
  EXPECT_EQ(gepl::proposal_log_prob(z, ProposalMove{0, 3, {0, 1}}, 4), gepl::kLogZero);
}

TEST(Proposal, NormalizesOverEnumeratedMoves) {
  for (std::size_t n = 2; n <= 5; ++n) {
    for (std::size_t k = 2; k <= 4; ++k) {
      for (const auto& z : oracle::all_labelings(n, k)) {
        const Partition p(z, k);
        double total = 0.0, library_total = 0.0;
        for (const auto& em : oracle::all_moves(z, k)) {
          total += em.prob;
          const double lq = gepl::proposal_log_prob(p, em.move, k);
          library_total += std::exp(lq);
          EXPECT_NEAR(lq, std::log(em.prob), 1e-12);
        }
        EXPECT_NEAR(total, 1.0, 1e-12);
        EXPECT_NEAR(library_total, 1.0, 1e-12);
      }
    }
  }
}

TEST(Proposal, SampledMovesFollowTheRecipe) {
  std::mt19937_64 rng(61);
  const std::vector<Label> z{0, 0, 0, 1, 2, 2};
  const auto moves = oracle::all_moves(z, 5);
  std::map<std::tuple<Label, Label, std::vector<std::size_t>>, double> expected, seen;
  for (const auto& em : moves) expected[{em.move.from, em.move.to, em.move.items}] = em.prob;
  const int draws = 400000;
  for (int d = 0; d < draws; ++d) {
    const auto m = gepl::propose_move(Partition(z, 5), 5, rng);
    seen[{m.from, m.to, m.items}] += 1.0 / draws;
  }
  double tv = 0.0;
  for (const auto& [key, p] : expected) tv += std::abs(p - (seen.count(key) ? seen[key] : 0.0));
  for (const auto& [key, p] : seen) EXPECT_TRUE(expected.count(key));
  EXPECT_LT(0.5 * tv, 0.01);
}

TEST(Proposal, SingleGroupForcesTheOtherLabels) {
  std::mt19937_64 rng(62);
  const Partition z({1, 1, 1, 1}, 4);
  std::vector<int> hits(4, 0);
  for (int d = 0; d < 30000; ++d) {
    const auto m = gepl::propose_move(z, 4, rng);
    EXPECT_EQ(m.from, 1u);
    ++hits[m.to];
  }
  EXPECT_EQ(hits[1], 0);
  for (Label h : {0u, 2u, 3u}) EXPECT_NEAR(hits[h] / 30000.0, 1.0 / 3.0, 0.02);
  EXPECT_NEAR(gepl::proposal_log_prob(z, ProposalMove{1, 3, {2}}, 4), std::log(1.0 / 3.0 * 0.5 * 0.25), 1e-14);
}

TEST(Proposal, RefusesDegenerateInputs) {
  std::mt19937_64 rng(63);
  EXPECT_THROW(gepl::propose_move(Partition({0}, 2), 2, rng), gepl::InvalidArgument);
  EXPECT_THROW(gepl::propose_move(Partition({0, 0}, 1), 1, rng), gepl::InvalidArgument);
  const Partition z({0, 0, 1}, 3);
  EXPECT_THROW(gepl::proposal_log_prob(z, ProposalMove{0, 0, {0}}, 3), gepl::InvalidArgument);
  EXPECT_THROW(gepl::proposal_log_prob(z, ProposalMove{0, 2, {2}}, 3), gepl::InvalidArgument);
  EXPECT_THROW(gepl::proposal_log_prob(z, ProposalMove{0, 2, {}}, 3), gepl::InvalidArgument);
  EXPECT_THROW(gepl::proposal_log_prob(z, ProposalMove{0, 2, {0, 0}}, 3), gepl::InvalidArgument);
}

TEST(Proposal, ZeroReverseOnlyWhenEmptyingIntoSmallerHalf) {
  // the reverse of a move that empties g is drawn from ceil(N_h'/2); it can
  // exceed that range, in which case MH must reject
  for (std::size_t n = 2; n <= 5; ++n) {
    for (std::size_t k = 2; k <= 4; ++k) {
      for (const auto& z : oracle::all_labelings(n, k)) {
        const Partition p(z, k);
        const auto sizes = p.group_sizes();
        for (const auto& em : oracle::all_moves(z, k)) {
          const Partition next = gepl::apply(p, em.move);
          const double back = gepl::proposal_log_prob(next, em.move.reversed(), k);
          const bool empties = em.move.count() == sizes[em.move.from];
          const std::size_t n_h = sizes[em.move.to] + em.move.count();
          const bool too_big = empties && em.move.count() > (n_h + 1) / 2;
          EXPECT_EQ(back == gepl::kLogZero, too_big);
        }
      }
    }
  }
}

TEST(MhKernel, DetailedBalanceAndStationarity) {
  gepl::GmmSpec g;
  g.data = {-1.0, 0.4, 2.2, 2.5};
  g.prior = {1.0, 3};
  const auto target = [&](const std::vector<Label>& z) { return gepl::log_posterior(g, Partition(z, 3)); };
  const auto P = oracle::mh_kernel(4, 3, target);
  const auto states = oracle::all_labelings(4, 3);
  std::vector<double> pi(states.size());
  double total = 0.0;
  for (std::size_t a = 0; a < states.size(); ++a) total += pi[a] = std::exp(target(states[a]));
  for (auto& v : pi) v /= total;
  for (std::size_t a = 0; a < states.size(); ++a) {
    double row = 0.0, flow = 0.0;
    for (std::size_t b = 0; b < states.size(); ++b) {
      row += P[a][b];
      flow += pi[b] * P[b][a];
      EXPECT_NEAR(pi[a] * P[a][b], pi[b] * P[b][a], 1e-14);
      EXPECT_GE(P[a][b], 0.0);
    }
    EXPECT_NEAR(row, 1.0, 1e-12);
    EXPECT_NEAR(flow, pi[a], 1e-12);
  }
}

namespace {

// Test target with a fixed log density and optional structural zeros.
struct FlatState {
  Partition z;
  std::size_t max_groups = 0;  // 0 = no restriction
  const Partition& partition() const { return z; }
  double log_posterior() const { return max_groups && z.occupied() > max_groups ? gepl::kLogZero : 0.0; }
  void relocate(std::span<const std::size_t> items, Label h) {
    for (auto i : items) z.assign(i, h);
  }
};

}  // namespace

TEST(MhStep, ConstantTargetWithSymmetricMovesAlwaysAccepts) {
  // two items, K_up = 2: forward and reverse probabilities are both 1/2
  std::mt19937_64 rng(64);
  FlatState s{Partition({0, 1}, 2)};
  for (int k = 0; k < 50; ++k) EXPECT_TRUE(gepl::mh_step(s, 2, rng).accepted);
}

TEST(MhStep, RejectsImpossibleTargets) {
  std::mt19937_64 rng(65);
  FlatState s{Partition({0, 0, 0}, 2), 1};
  for (int k = 0; k < 200; ++k) {
    const auto r = gepl::mh_step(s, 2, rng);
    EXPECT_FALSE(r.accepted);
    EXPECT_EQ(s.partition().occupied(), 1u);
  }
}

TEST(MhStep, RejectionRestoresPosteriorExactly) {
  std::mt19937_64 rng(66);
  gepl::GmmSpec g;
  for (int i = 0; i < 30; ++i) g.data.push_back(std::normal_distribution<double>(i % 3 * 4.0, 1.0)(rng));
  g.prior = {1.0, 6};
  gepl::GmmState s(g, Partition(oracle::random_labels(30, 6, rng), 6));
  for (int k = 0; k < 3000; ++k) {
    const double before = s.log_posterior();
    const auto part = s.partition();
    const auto r = gepl::mh_step(s, 6, rng);
    if (!r.accepted) {
      EXPECT_EQ(s.log_posterior(), before);
      EXPECT_EQ(s.partition(), part);
    }
  }
}

TEST(Chain, TraceMatchesRecomputedPosterior) {
  std::mt19937_64 rng(67);
  gepl::GmmSpec g;
  for (int i = 0; i < 25; ++i) g.data.push_back(std::normal_distribution<double>(i % 2 * 5.0, 1.0)(rng));
  g.prior = {2.0, 8};
  ChainConfig cfg;
  cfg.iterations = 300;
  cfg.thin = 7;
  cfg.burn_in = 100;
  cfg.k_up = 8;
  cfg.seed = 5;
  const auto out = gepl::run_chain(g, cfg);
  ASSERT_EQ(out.sample.rows(), 300u);
  EXPECT_GE(out.acceptance_rate, 0.0);
  EXPECT_LE(out.acceptance_rate, 1.0);
  for (std::size_t t = 0; t < out.sample.rows(); ++t)
    EXPECT_NEAR((*out.sample.log_posterior())[t], gepl::log_posterior(g, out.sample.partition(t)), 1e-9);

  gepl::SbmSpec s;
  s.graph = gepl::Graph(12);
  for (std::size_t i = 0; i < 12; ++i)
    for (std::size_t j = i + 1; j < 12; ++j)
      if ((i / 4 == j / 4) ? rng() % 10 < 7 : rng() % 10 < 1) s.graph.add_edge(i, j);
  s.prior = {0.5, 4};
  cfg.k_up = 4;
  const auto so = gepl::run_chain(s, cfg);
  for (std::size_t t = 0; t < so.sample.rows(); ++t)
    EXPECT_NEAR((*so.sample.log_posterior())[t], gepl::log_posterior(s, so.sample.partition(t)), 1e-9);
}

TEST(Chain, ConsecutiveStatesWithoutThinning) {
  gepl::GmmSpec g;
  g.data = {0.0, 1.0, 2.0, 3.0};
  g.prior = {1.0, 3};
  ChainConfig cfg;
  cfg.iterations = 5;
  cfg.k_up = 3;
  cfg.seed = 11;
  const auto out = gepl::run_chain(g, cfg);
  ASSERT_EQ(out.sample.rows(), 5u);
  // replay by hand with the same stream
  auto rng = gepl::detail::chain_rng(11);
  gepl::GmmState st(g, gepl::detail::initial_partition(std::nullopt, 4, 3, rng));
  for (std::size_t t = 0; t < 5; ++t) {
    gepl::mh_step(st, 3, rng);
    EXPECT_EQ(out.sample.partition(t), st.partition());
  }
}

TEST(Chain, SameSeedIsBitIdentical) {
  gepl::GmmSpec g;
  g.data = {0.1, 0.3, 4.0, 4.4, 9.0};
  g.prior = {1.0, 4};
  ChainConfig cfg;
  cfg.iterations = 500;
  cfg.thin = 3;
  cfg.k_up = 4;
  cfg.seed = 1234;
  const auto a = gepl::run_chain(g, cfg), b = gepl::run_chain(g, cfg);
  EXPECT_TRUE(std::ranges::equal(a.sample.flat(), b.sample.flat()));
  EXPECT_EQ(*a.sample.log_posterior(), *b.sample.log_posterior());
  EXPECT_EQ(a.acceptance_rate, b.acceptance_rate);
  cfg.seed = 1235;
  const auto c = gepl::run_chain(g, cfg);
  EXPECT_FALSE(std::ranges::equal(a.sample.flat(), c.sample.flat()));
}

TEST(Chain, ConfigValidation) {
  gepl::GmmSpec g;
  g.data = {0.1, 0.3};
  g.prior = {1.0, 2};
  ChainConfig cfg;
  cfg.k_up = 2;
  cfg.iterations = 0;
  EXPECT_THROW(gepl::run_chain(g, cfg), gepl::InvalidArgument);
  cfg.iterations = 1;
  cfg.thin = 0;
  EXPECT_THROW(gepl::run_chain(g, cfg), gepl::InvalidArgument);
  cfg.thin = 1;
  cfg.k_up = 1;
  EXPECT_THROW(gepl::run_chain(g, cfg), gepl::InvalidArgument);
  cfg.k_up = 2;
  cfg.init = Partition({0, 1, 1}, 2);
  EXPECT_THROW(gepl::run_chain(g, cfg), gepl::InvalidArgument);
}

namespace {

ChainConfig exactness_config(std::size_t k_up, std::uint64_t seed) {
  ChainConfig cfg;
  cfg.iterations = 100000;
  cfg.thin = 5;
  cfg.burn_in = 1000;
  cfg.k_up = k_up;
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST(ChainExactness, PriorOnly) {
  const AllocationPrior p{0.8, 3};
  oracle::PriorState st(p, Partition({0, 0, 0, 0}, 3));
  auto rng = gepl::detail::chain_rng(71);
  const auto out = gepl::run_chain_state(st, exactness_config(3, 71), rng);
  const auto exact = oracle::canonical_posterior(4, 3, [&](const auto& z) { return gepl::log_alloc_prior(Partition(z, 3), p); });
  EXPECT_LT(oracle::total_variation(oracle::empirical(out.sample), exact), 0.02);
}

TEST(ChainExactness, TinyGmm) {
  gepl::GmmSpec g;
  g.data = {-0.5, 0.1, 1.7};
  g.tau = 0.5;
  g.prior = {1.0, 2};
  const auto out = gepl::run_chain(g, exactness_config(2, 72));
  const auto exact = oracle::canonical_posterior(3, 2, [&](const auto& z) { return gepl::log_posterior(g, Partition(z, 2)); });
  EXPECT_EQ(exact.size(), 4u);
  EXPECT_LT(oracle::total_variation(oracle::empirical(out.sample), exact), 0.02);
}

TEST(ChainExactness, TinySbm) {
  gepl::SbmSpec s;
  s.graph = gepl::Graph(5);
  s.graph.add_edge(0, 1);
  s.graph.add_edge(1, 2);
  s.graph.add_edge(0, 2);
  s.graph.add_edge(3, 4);
  s.prior = {1.0, 3};
  const auto out = gepl::run_chain(s, exactness_config(3, 73));
  const auto exact = oracle::canonical_posterior(5, 3, [&](const auto& z) { return gepl::log_posterior(s, Partition(z, 3)); });
  EXPECT_LT(oracle::total_variation(oracle::empirical(out.sample), exact), 0.02);
}

TEST(ChainExactness, TinyLbm) {
  gepl::LbmSpec m{2, 2, {1, 0, 1, 1}, 0.5, 0.5, {1.0, 2}, {1.0, 2}};
  const auto out = gepl::run_chain_lbm(m, exactness_config(2, 74));
  const auto exact = oracle::lbm_posterior(m, 2, 2);
  EXPECT_LT(oracle::total_variation(oracle::empirical_pairs(out.rows.sample, out.cols.sample), exact), 0.03);
  for (std::size_t t = 0; t < 100; ++t)
    EXPECT_NEAR(out.joint_trace[t],
                gepl::log_posterior(m, out.rows.sample.partition(t), out.cols.sample.partition(t)), 1e-9);
}

TEST(ChainExactness, OneByOneLbmIsFrozen) {
  gepl::LbmSpec m{1, 1, {1}, 0.5, 0.5, {1.0, 2}, {1.0, 2}};
  ChainConfig cfg;
  cfg.iterations = 50;
  cfg.k_up = 2;
  cfg.init = Partition({1}, 2);
  cfg.init_cols = Partition({0}, 2);
  const auto out = gepl::run_chain_lbm(m, cfg);
  for (std::size_t t = 0; t < 50; ++t) {
    EXPECT_EQ(out.rows.sample.row(t)[0], 1u);
    EXPECT_EQ(out.cols.sample.row(t)[0], 0u);
  }
  EXPECT_EQ(out.rows.acceptance_rate, 0.0);
}

TEST(ChainExactness, LbmSameSeedIsBitIdentical) {
  gepl::LbmSpec m{3, 4, {1, 0, 1, 1, 0, 0, 1, 0, 1, 1, 1, 0}, 0.5, 0.5, {1.0, 3}, {1.0, 3}};
  ChainConfig cfg;
  cfg.iterations = 200;
  cfg.k_up = 3;
  cfg.seed = 8;
  const auto a = gepl::run_chain_lbm(m, cfg), b = gepl::run_chain_lbm(m, cfg);
  EXPECT_TRUE(std::ranges::equal(a.rows.sample.flat(), b.rows.sample.flat()));
  EXPECT_TRUE(std::ranges::equal(a.cols.sample.flat(), b.cols.sample.flat()));
  EXPECT_EQ(a.joint_trace, b.joint_trace);
}
