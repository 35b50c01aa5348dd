#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "gepl/epl.hpp"
#include "test_support.hpp"

using gepl::EplState;
using gepl::Label;
using gepl::LossKind;
using gepl::LossSpec;
using gepl::Partition;
using gepl::PosteriorSample;

namespace {

PosteriorSample sample_of(const std::vector<oracle::Labels>& rows, std::size_t k_up) {
  std::vector<Partition> ps;
  for (const auto& r : rows) ps.emplace_back(r, k_up);
  return PosteriorSample::from_partitions(ps);
}

constexpr LossKind kAll[] = {LossKind::Binder, LossKind::VI, LossKind::NVI, LossKind::NID, LossKind::ZeroOne};

}  // namespace

TEST(Epl, HandExamples) {
  const auto s = sample_of({{0, 0, 1}, {0, 0, 0}}, 3);
  EXPECT_NEAR(gepl::epl(Partition({0, 0, 0}, 3), s, LossSpec::builtin(LossKind::VI)), 0.9182958340544896 / 2, 1e-12);
  const auto same = sample_of({{0, 1, 1}, {1, 0, 0}, {0, 1, 1}}, 2);
  for (LossKind k : kAll) EXPECT_EQ(gepl::epl(Partition({0, 1, 1}, 2), same, LossSpec::builtin(k)), 0.0);
  const auto mixed = sample_of({{0, 1, 1}, {0, 0, 1}, {1, 0, 0}, {0, 0, 0}}, 2);
  EXPECT_DOUBLE_EQ(gepl::epl(Partition({0, 1, 1}, 2), mixed, LossSpec::builtin(LossKind::ZeroOne)), 1.0 - 2.0 / 4.0);
}

TEST(Epl, MatchesOracle) {
  std::mt19937_64 rng(21);
  for (int rep = 0; rep < 50; ++rep) {
    const std::size_t n = 2 + rng() % 8;
    const auto draws = oracle::random_draws(n, 1 + rng() % 30, rng);
    const auto s = sample_of(draws, n);
    const auto a = oracle::random_labels(n, n, rng);
    for (LossKind k : kAll)
      EXPECT_NEAR(gepl::epl(Partition(a, n), s, LossSpec::builtin(k)), oracle::epl(k, a, draws), 1e-12);
  }
}

TEST(Epl, DimensionMismatchThrows) {
  const auto s = sample_of({{0, 0, 1}}, 2);
  EXPECT_THROW(gepl::epl(Partition({0, 1}, 2), s, LossSpec::builtin(LossKind::VI)), gepl::InvalidArgument);
}

TEST(Compress, MergesLabelSwaps) {
  const auto s = sample_of({{0, 0, 1}, {1, 1, 0}, {0, 1, 1}}, 2);
  const auto w = gepl::compress(s);
  ASSERT_EQ(w.size(), 2u);
  EXPECT_EQ(w.uniques[0].labels, (std::vector<Label>{0, 0, 1}));
  EXPECT_EQ(w.weights[0], 2u);
  EXPECT_EQ(w.uniques[1].labels, (std::vector<Label>{0, 1, 1}));
  EXPECT_EQ(w.weights[1], 1u);
  EXPECT_EQ(w.total_weight(), 3u);
}

TEST(Compress, Extremes) {
  const auto same = gepl::compress(sample_of({{0, 1}, {0, 1}, {1, 0}, {0, 1}}, 2));
  EXPECT_EQ(same.size(), 1u);
  EXPECT_EQ(same.weights[0], 4u);
  const auto distinct = gepl::compress(sample_of({{0, 0, 0}, {0, 0, 1}, {0, 1, 2}}, 3));
  EXPECT_EQ(distinct.size(), 3u);
  for (auto w : distinct.weights) EXPECT_EQ(w, 1u);
}

TEST(Compress, UniquesSortedAndDistinct) {
  std::mt19937_64 rng(22);
  for (int rep = 0; rep < 50; ++rep) {
    const std::size_t n = 2 + rng() % 6;
    const auto s = sample_of(oracle::random_draws(n, 1 + rng() % 60, rng), n);
    const auto w = gepl::compress(s);
    EXPECT_EQ(w.total_weight(), s.rows());
    for (std::size_t t = 1; t < w.size(); ++t) EXPECT_LT(w.uniques[t - 1], w.uniques[t]);
  }
}

TEST(Compress, WeightedEplEqualsPlainEpl) {
  std::mt19937_64 rng(23);
  for (int rep = 0; rep < 100; ++rep) {
    const std::size_t n = 2 + rng() % 9;
    const auto s = sample_of(oracle::random_draws(n, 1 + rng() % 80, rng), n);
    const auto w = gepl::compress(s);
    const Partition a(oracle::random_labels(n, n, rng), n);
    for (LossKind k : kAll) {
      const auto spec = LossSpec::builtin(k);
      EXPECT_NEAR(gepl::epl_weighted(a, w, spec), gepl::epl(a, s, spec), 1e-12);
    }
  }
}

TEST(EplState, InitialPsiMatchesEpl) {
  std::mt19937_64 rng(24);
  for (LossKind k : kAll) {
    const auto s = sample_of(oracle::random_draws(7, 40, rng), 7);
    const auto w = gepl::compress(s);
    const Partition a(oracle::random_labels(7, 5, rng), 7);
    EplState st(w, LossSpec::builtin(k), a);
    EXPECT_NEAR(st.psi(), gepl::epl(a, s, LossSpec::builtin(k)), 1e-12);
  }
}

TEST(EplState, DeltaMatchesFullRecompute) {
  std::mt19937_64 rng(25);
  for (int rep = 0; rep < 400; ++rep) {
    const LossKind k = kAll[rep % 5];
    const std::size_t n = 2 + rng() % 29;
    const auto s = sample_of(oracle::random_draws(n, 1 + rng() % 200, rng), n);
    const auto w = gepl::compress(s);
    const std::size_t ku = n;
    const Partition a(oracle::random_labels(n, ku, rng), ku);
    EplState st(w, LossSpec::builtin(k), a);
    const std::size_t i = rng() % n;
    const Label to = static_cast<Label>(rng() % ku);
    const double expect = gepl::epl(gepl::apply_move(a, i, to), s, LossSpec::builtin(k)) - gepl::epl(a, s, LossSpec::builtin(k));
    EXPECT_NEAR(gepl::delta_epl(st, i, a[i], to), expect, 1e-10) << gepl::loss_name(k);
  }
}

TEST(EplState, NoOpAndReverseMoves) {
  std::mt19937_64 rng(26);
  const auto w = gepl::compress(sample_of(oracle::random_draws(9, 50, rng), 9));
  for (LossKind k : kAll) {
    EplState st(w, LossSpec::builtin(k), Partition(oracle::random_labels(9, 9, rng), 9));
    for (int rep = 0; rep < 50; ++rep) {
      const std::size_t i = rng() % 9;
      const Label r = st.label(i), s = static_cast<Label>(rng() % 9);
      EXPECT_EQ(st.delta(i, r), 0.0);
      const double forward = st.delta(i, s);
      const double psi = st.psi();
      st.commit(i, s);
      EXPECT_NEAR(st.psi() - psi, forward, 1e-12);
      EXPECT_NEAR(forward + st.delta(i, r), 0.0, 1e-12);
    }
  }
}

TEST(EplState, CommitsAgreeWithRebuild) {
  std::mt19937_64 rng(27);
  const auto s = sample_of(oracle::random_draws(12, 80, rng), 12);
  const auto w = gepl::compress(s);
  for (LossKind k : kAll) {
    EplState st(w, LossSpec::builtin(k), Partition(oracle::random_labels(12, 12, rng), 12));
    for (int rep = 0; rep < 300; ++rep) {
      const std::size_t i = rng() % 12;
      commit_move(st, i, st.label(i), static_cast<Label>(rng() % 12));
    }
    EplState rebuilt(w, LossSpec::builtin(k), st.partition());
    for (std::size_t t = 0; t < w.size(); ++t) EXPECT_EQ(st.table(t), rebuilt.table(t));
    EXPECT_NEAR(st.psi(), gepl::epl(st.partition(), s, LossSpec::builtin(k)), 1e-10);
    EXPECT_NEAR(st.psi(), rebuilt.psi(), 1e-10);
  }
}

TEST(EplState, TablesMatchContingency) {
  std::mt19937_64 rng(28);
  const auto w = gepl::compress(sample_of(oracle::random_draws(6, 20, rng), 6));
  const Partition a(oracle::random_labels(6, 6, rng), 6);
  EplState st(w, LossSpec::builtin(LossKind::VI), a);
  for (std::size_t t = 0; t < w.size(); ++t) {
    // the state's table keeps raw label order
    EXPECT_EQ(st.table(t).compact(), gepl::contingency_raw(a, w.uniques[t].to_partition(6)).compact());
  }
}

TEST(EplState, WrongSourceGroupThrows) {
  const auto w = gepl::compress(sample_of({{0, 1}}, 2));
  EplState st(w, LossSpec::builtin(LossKind::VI), Partition({0, 1}, 2));
  EXPECT_THROW(gepl::delta_epl(st, 0, 1, 0), gepl::InvalidArgument);
}

TEST(Psm, Counts) {
  const auto m = gepl::psm(sample_of({{0, 0, 1}, {0, 1, 1}}, 2));
  EXPECT_EQ(m(0, 1), 0.5);
  EXPECT_EQ(m(1, 2), 0.5);
  EXPECT_EQ(m(0, 2), 0.0);
  EXPECT_EQ(m(1, 1), 1.0);
  const auto one = gepl::psm(sample_of({{0, 0, 1}}, 2));
  EXPECT_EQ(one(0, 1), 1.0);
  EXPECT_EQ(one(0, 2), 0.0);
}

TEST(Psm, SymmetricWithUnitDiagonal) {
  std::mt19937_64 rng(29);
  const auto m = gepl::psm(sample_of(oracle::random_draws(10, 30, rng), 10));
  for (std::size_t i = 0; i < 10; ++i) {
    EXPECT_EQ(m(i, i), 1.0);
    for (std::size_t j = 0; j < 10; ++j) EXPECT_EQ(m(i, j), m(j, i));
  }
}

TEST(BinderPsm, HandExample) {
  gepl::Psm m(3);
  for (std::size_t i = 0; i < 3; ++i) m(i, i) = 1.0;
  m(0, 1) = m(1, 0) = 0.5;
  EXPECT_DOUBLE_EQ(gepl::binder_objective_psm(Partition({0, 0, 1}), m), 0.5);
}

TEST(BinderPsm, EqualsBinderEpl) {
  std::mt19937_64 rng(30);
  for (int rep = 0; rep < 30; ++rep) {
    const std::size_t n = 2 + rng() % 6;
    const auto s = sample_of(oracle::random_draws(n, 1 + rng() % 40, rng), n);
    const auto m = gepl::psm(s);
    for (int k = 0; k < 20; ++k) {
      const Partition a(oracle::random_labels(n, n, rng), n);
      EXPECT_NEAR(gepl::binder_objective_psm(a, m), gepl::epl(a, s, LossSpec::builtin(LossKind::Binder)), 1e-9);
    }
  }
}

TEST(Map, ArgmaxAndTies) {
  const auto s = PosteriorSample(3, 2, {0, 0, 0, 1, 1, 0, 0, 1, 1}, std::vector<double>{-5, -3, -4});
  EXPECT_EQ(gepl::map_partition(s), Partition({0, 0, 1}, 2));
  const auto tied = PosteriorSample(3, 2, {0, 1, 1, 0, 0, 1}, std::vector<double>{-1, -1});
  EXPECT_EQ(gepl::map_partition(tied), Partition({0, 1, 1}, 2));
  const auto equiv = PosteriorSample(3, 2, {1, 1, 0, 0, 0, 1}, std::vector<double>{-2, -2});
  EXPECT_EQ(gepl::map_partition(equiv), Partition({0, 0, 1}, 2));
  EXPECT_THROW(gepl::map_partition(PosteriorSample(3, 2, {0, 1, 1})), gepl::DataError);
}

TEST(Map, ZeroOneModeProperty) {
  std::mt19937_64 rng(31);
  for (int rep = 0; rep < 20; ++rep) {
    const auto draws = oracle::random_draws(6, 50, rng);
    // trace proportional to the empirical frequency of each canonical row
    std::map<oracle::Labels, int> freq;
    for (const auto& d : draws) ++freq[oracle::canonical(d)];
    std::vector<double> trace;
    for (const auto& d : draws) trace.push_back(std::log(double(freq[oracle::canonical(d)])));
    std::vector<Partition> rows;
    for (const auto& d : draws) rows.emplace_back(d, 6);
    const auto s = PosteriorSample::from_partitions(rows, trace);
    const auto zero_one = LossSpec::builtin(LossKind::ZeroOne);
    const double at_map = gepl::epl(gepl::map_partition(s), s, zero_one);
    for (const auto& r : rows) EXPECT_LE(at_map, gepl::epl(r, s, zero_one));
  }
}

TEST(KHistogram, Examples) {
  const auto h = gepl::k_histogram(sample_of({{0, 0, 1}, {0, 0, 0}}, 2));
  EXPECT_EQ(h.at(1), 0.5);
  EXPECT_EQ(h.at(2), 0.5);
  const auto singles = gepl::k_histogram(sample_of({{0, 1, 2, 3}, {3, 2, 1, 0}}, 4));
  ASSERT_EQ(singles.size(), 1u);
  EXPECT_EQ(singles.at(4), 1.0);
}

TEST(Sample, RejectsLabelAboveKup) {
  EXPECT_THROW(PosteriorSample(2, 2, {0, 2}), gepl::DataError);
  EXPECT_THROW(PosteriorSample(2, 2, {0, 1}, std::vector<double>{1.0, 2.0}), gepl::InvalidArgument);
}
