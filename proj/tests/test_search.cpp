#include <gtest/gtest.h>

#include "gtnn/search.hpp"
#include "instances.hpp"
#include "oracles.hpp"

using namespace gtnn;

namespace {

VectorStore four_vectors() {
  VectorStore s(2);
  s.append(normalize({1.0, 0.0}));
  s.append(normalize({0.0, 1.0}));
  s.append(normalize({0.7071, 0.7071}));
  s.append(normalize({0.6, 0.8}));
  return s;
}

std::vector<Index> as_ids(const std::vector<std::size_t>& v) { return {v.begin(), v.end()}; }

}  // namespace

TEST(Search, FourVectorExample) {
  const auto s = four_vectors();
  const std::vector<float> q{1.0f, 0.0f};
  const auto sum = SumIndex::build(s);
  const auto max = MaxIndex::build(s);
  const std::vector<Index> expect{1, 3};
  EXPECT_EQ(search_sum(sum, q, 0.7).ids(), expect);
  EXPECT_EQ(search_max(max, q, 0.7).ids(), expect);
  EXPECT_EQ(search_exhaustive(s, q, 0.7).ids(), expect);
}

TEST(Search, ThresholdAboveOneIsEmpty) {
  oracle::Rng rng(31);
  const auto s = oracle::random_store(rng, 50, 6);
  const auto q = s.row(7);
  EXPECT_TRUE(search_sum(SumIndex::build(s), q, 1.01).neighbors.empty());
  EXPECT_TRUE(search_max(MaxIndex::build(s), q, 1.01).neighbors.empty());
  EXPECT_TRUE(search_exhaustive(s, q, 1.01).neighbors.empty());
}

TEST(Search, SingleVectorStore) {
  VectorStore s(3);
  s.append(normalize({1.0, 2.0, 3.0}));
  const auto q = s.row(1);
  const std::vector<Index> one{1};
  EXPECT_EQ(search_max(MaxIndex::build(s), q, 0.5).ids(), one);
  EXPECT_EQ(search_sum(SumIndex::build(s), q, 0.5).ids(), one);
  const auto ex = search_exhaustive(s, q, 0.9);
  EXPECT_EQ(ex.ids(), one);
  EXPECT_EQ(ex.stats.dot_products, 1u);
  EXPECT_EQ(search_sum(SumIndex::build(s), q, 0.5).stats.rounds.size(), 1u);
}

TEST(Search, ExhaustiveCountsN) {
  oracle::Rng rng(32);
  const auto s = oracle::random_store(rng, 123, 5);
  EXPECT_EQ(search_exhaustive(s, s.row(1), 0.5).stats.dot_products, 123u);
}

TEST(Search, AppendedVectorsAreSearchable) {
  oracle::Rng rng(33);
  VectorStore s(10);
  s.append(oracle::random_unit(rng, 10));
  auto idx = SumIndex::build(s);
  for (int k = 0; k < 100; ++k) {
    const auto v = oracle::random_unit(rng, 10, 0.3);
    s.append(v);
    idx.append(v);
  }
  for (int t = 0; t < 20; ++t) {
    const auto q = oracle::random_unit(rng, 10, 0.3);
    EXPECT_EQ(search_sum(idx, q, 0.6).ids(), as_ids(oracle::brute_force(s, q.values(), 0.6)));
  }
}

TEST(Search, Errors) {
  const auto s = four_vectors();
  const auto sum = SumIndex::build(s);
  const auto max = MaxIndex::build(s);
  const std::vector<float> wrong{1.0f, 0.0f, 0.0f};
  EXPECT_THROW(search_sum(sum, wrong, 0.5), Error);
  EXPECT_THROW(search_max(max, wrong, 0.5), Error);
  EXPECT_THROW(search_exhaustive(s, wrong, 0.5), Error);
  const std::vector<float> negative{0.6f, -0.8f};
  try {
    search_max(max, negative, 0.5);
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kUnsupportedNegativeQuery);
  }
}

TEST(Search, NegativeValuesWithMinVectors) {
  oracle::Rng rng(34);
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 1 + rng() % 200, d = 2 + rng() % 20;
    const auto s = oracle::random_store(rng, n, d, 0.6, true);
    const auto idx = MaxIndex::build(s);
    const auto q = oracle::random_unit(rng, d, 0.8, true);
    for (double rho : {0.1, 0.3, 0.6}) {
      EXPECT_EQ(search_max(idx, q, rho).ids(), as_ids(oracle::brute_force(s, q.values(), rho)));
    }
  }
}

TEST(Search, ExactTieIsNeighbor) {
  VectorStore s(2);
  s.append(normalize({1.0, 0.0}));
  s.append(normalize({0.0, 1.0}));
  s.append(normalize({1.0, 0.0}));
  const std::vector<float> q{1.0f, 0.0f};
  const std::vector<Index> expect{1, 3};
  EXPECT_EQ(search_sum(SumIndex::build(s), q, 1.0).ids(), expect);
  EXPECT_EQ(search_max(MaxIndex::build(s), q, 1.0).ids(), expect);
}

TEST(Search, TraversalOrderIsLeftFirst) {
  oracle::Rng rng(35);
  const auto s = oracle::random_store(rng, 37, 4, 1.0);
  const auto idx = SumIndex::build(s);
  std::vector<Index> starts;
  SearchOptions opt;
  opt.on_visit = [&](const Pool& p) {
    if (p.members() > 2) starts.push_back(p.si);
  };
  search_sum(idx, s.row(1), 0.01, opt);  // nothing pruned: full tree
  ASSERT_FALSE(starts.empty());
  EXPECT_EQ(starts.front(), 1u);
  // Pre-order over a left-first tree visits multi-member pools by start index.
  EXPECT_TRUE(std::is_sorted(starts.begin(), starts.end()));
}

// Property suite over randomized instances: exactness, pruning safety,
// dot-product accounting, round range, histogram mass, ρ-monotonicity.
TEST(SearchProperty, RandomInstances) {
  oracle::Rng rng(36);
  for (int trial = 0; trial < 400; ++trial) {
    const auto inst = oracle::random_instance(rng);
    const auto& s = inst.store;
    const std::size_t n = s.size();
    const auto q = inst.query.values();
    const auto truth = as_ids(oracle::brute_force(s, q, inst.rho));
    const auto qd = oracle::widen(q);
    const auto sum = SumIndex::build(s);
    const auto max = MaxIndex::build(s);

    for (int variant = 0; variant < 2; ++variant) {
      SearchOptions opt;
      std::uint64_t pruned_seen = 0;
      opt.on_visit = [&](const Pool& p) {
        double best = -1e300;
        for (Index i = p.si; i <= p.ei; ++i) best = std::max(best, oracle::dot(qd, s.row(i)));
        if (variant == 1) {
          EXPECT_GE(p.sim, best - 1e-12);
        }
        if (p.members() > 1 && p.sim < inst.rho - default_guard(n)) {
          ++pruned_seen;
          EXPECT_LT(best, inst.rho) << "pruned pool holds a neighbor";
        }
      };
      const auto r = variant == 0 ? search_sum(sum, q, inst.rho, opt) : search_max(max, q, inst.rho, opt);
      ASSERT_EQ(r.ids(), truth) << "trial " << trial << " variant " << variant;
      const auto& st = r.stats;
      EXPECT_EQ(st.rounds.size(), ceil_log2(n) + 1);
      const auto expanded = st.total(&RoundCounts::expanded);
      EXPECT_EQ(st.total(&RoundCounts::pruned), pruned_seen);
      EXPECT_EQ(st.visited_pools,
                st.total(&RoundCounts::pruned) + expanded + st.total(&RoundCounts::leaves));
      if (variant == 0) {
        EXPECT_EQ(st.dot_products, 1 + expanded + st.boundary_rechecks);
      } else {
        EXPECT_EQ(st.dot_products, 1 + 2 * expanded);
        EXPECT_EQ(st.boundary_rechecks, 0u);
      }
      EXPECT_LE(st.dot_products, 2 * n - 1);
      for (const auto& nb : r.neighbors) EXPECT_NEAR(nb.similarity, oracle::dot(qd, s.row(nb.id)), 1e-9);
    }

    // Raising ρ can only shrink the result and the number of expansions.
    const double higher = inst.rho + 0.05;
    const auto a = search_sum(sum, q, inst.rho);
    const auto b = search_sum(sum, q, higher);
    const auto ia = a.ids(), ib = b.ids();
    EXPECT_TRUE(std::includes(ia.begin(), ia.end(), ib.begin(), ib.end()));
    EXPECT_LE(b.stats.dot_products - b.stats.boundary_rechecks, a.stats.dot_products - a.stats.boundary_rechecks);
  }
}

TEST(SearchProperty, SumPrunesAtLeastAsMuchAsNeeded) {
  // Sum pools prune exactly when the pool sum is below threshold, so a pool
  // whose members all score zero is always pruned.
  VectorStore s(4);
  for (int k = 0; k < 64; ++k) s.append(normalize({0.0, 1.0, 0.0, 0.0}));
  s.append(normalize({1.0, 0.0, 0.0, 0.0}));
  const std::vector<float> q{1.0f, 0.0f, 0.0f, 0.0f};
  const auto r = search_sum(SumIndex::build(s), q, 0.9);
  EXPECT_EQ(r.ids(), std::vector<Index>{65});
  EXPECT_LT(r.stats.dot_products, 20u);
}
