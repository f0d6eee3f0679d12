#include <gtest/gtest.h>

#include <sstream>

#include "gtnn/index_max.hpp"
#include "gtnn/index_sum.hpp"
#include "oracles.hpp"

using namespace gtnn;

namespace {

Errc code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no gtnn::Error thrown";
  return Errc::kIo;
}

VectorStore two_axes() {
  VectorStore s(2);
  s.append(normalize({1.0, 0.0}));
  s.append(normalize({0.0, 1.0}));
  return s;
}

}  // namespace

TEST(SumIndex, TwoVectorPrefix) {
  const auto s = two_axes();
  const auto idx = SumIndex::build(s);
  EXPECT_EQ(idx.prefix(0)[0], 0.0);
  EXPECT_EQ(idx.prefix(1)[0], 1.0);
  EXPECT_EQ(idx.prefix(1)[1], 0.0);
  EXPECT_EQ(idx.prefix(2)[0], 1.0);
  EXPECT_EQ(idx.prefix(2)[1], 1.0);
}

TEST(SumIndex, CopiesAccumulate) {
  VectorStore s(2);
  for (int k = 0; k < 7; ++k) s.append(normalize({1.0, 0.0}));
  const auto idx = SumIndex::build(s);
  EXPECT_EQ(idx.prefix(7)[0], 7.0);
  EXPECT_EQ(idx.prefix(7)[1], 0.0);
}

TEST(SumIndex, MatchesNaiveRunningSum) {
  oracle::Rng rng(21);
  const auto s = oracle::random_store(rng, 16, 8);
  const auto idx = SumIndex::build(s);
  for (Index i = 1; i <= 16; ++i) {
    const auto naive = oracle::range_sum(s, 1, i);
    for (std::size_t j = 0; j < 8; ++j) EXPECT_NEAR(idx.prefix(i)[j], naive[j], 1e-12);
  }
  EXPECT_LT(idx.max_recurrence_error(), 1e-5);
}

TEST(SumIndex, PoolDotEqualsMemberSum) {
  oracle::Rng rng(22);
  const auto s = oracle::random_store(rng, 10, 5);
  const auto idx = SumIndex::build(s);
  const auto q = oracle::random_unit(rng, 5);
  const auto qd = oracle::widen(q.values());
  double expect = 0.0;
  for (Index i = 3; i <= 7; ++i) expect += oracle::dot(qd, s.row(i));
  EXPECT_NEAR(idx.pool_dot(q.values(), 3, 7), expect, 1e-9);
  EXPECT_NEAR(idx.pool_dot(q.values(), 4, 4), oracle::dot(qd, s.row(4)), 1e-12);
  EXPECT_NEAR(idx.pool_dot(q.values(), 1, 10), oracle::dot(qd, std::vector<float>(idx.prefix(10).begin(),
                                                                                   idx.prefix(10).end())),
              1e-6);
  EXPECT_EQ(code_of([&] { idx.pool_dot(q.values(), 0, 3); }), Errc::kRangeOutOfBounds);
  EXPECT_EQ(code_of([&] { idx.pool_dot(q.values(), 5, 4); }), Errc::kRangeOutOfBounds);
  EXPECT_EQ(code_of([&] { idx.pool_dot(q.values(), 5, 11); }), Errc::kRangeOutOfBounds);
  EXPECT_EQ(code_of([&] { idx.pool_dot(std::vector<float>{1.0f}, 1, 1); }), Errc::kDimensionMismatch);
}

TEST(SumIndex, PropertyRangesAndDecomposition) {
  oracle::Rng rng(23);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t n = 1 + rng() % 300;
    const std::size_t d = 2 + rng() % 40;
    const auto s = oracle::random_store(rng, n, d);
    const auto idx = SumIndex::build(s);
    const auto q = oracle::random_unit(rng, d);
    const auto qd = oracle::widen(q.values());
    for (int k = 0; k < 20; ++k) {
      Index si = 1 + rng() % n, ei = 1 + rng() % n;
      if (si > ei) std::swap(si, ei);
      double expect = 0.0;
      for (Index i = si; i <= ei; ++i) expect += oracle::dot(qd, s.row(i));
      const double got = idx.pool_dot(q.values(), si, ei);
      EXPECT_NEAR(got, expect, 1e-4 * static_cast<double>(ei - si + 1));
      if (ei > si) {
        const Index mid = si + (ei - si + 1) / 2 - 1;
        EXPECT_NEAR(got, idx.pool_dot(q.values(), si, mid) + idx.pool_dot(q.values(), mid + 1, ei), 1e-4);
      }
    }
  }
}

TEST(SumIndex, AppendMatchesRebuildAndCountsAdditions) {
  oracle::Rng rng(24);
  const std::size_t d = 12;
  VectorStore s(d);
  s.append(oracle::random_unit(rng, d));
  auto idx = SumIndex::build(s);
  EXPECT_EQ(idx.additions(), 0u);
  for (int k = 0; k < 100; ++k) {
    const auto v = oracle::random_unit(rng, d);
    const auto before = idx.additions();
    s.append(v);
    idx.append(v);
    EXPECT_EQ(idx.additions() - before, d);
  }
  idx.check_fresh();
  const auto rebuilt = SumIndex::build(s);
  for (Index i = 0; i <= s.size(); ++i) {
    for (std::size_t j = 0; j < d; ++j) EXPECT_NEAR(idx.prefix(i)[j], rebuilt.prefix(i)[j], 1e-5);
  }
}

TEST(SumIndex, Errors) {
  VectorStore empty(3);
  EXPECT_EQ(code_of([&] { SumIndex::build(empty); }), Errc::kEmptyStore);
  VectorStore signed_store(2, true);
  signed_store.append(normalize({1.0, -1.0}, true));
  EXPECT_EQ(code_of([&] { SumIndex::build(signed_store); }), Errc::kNegativeValue);
  auto s = two_axes();
  auto idx = SumIndex::build(s);
  EXPECT_EQ(code_of([&] { idx.append(normalize({1.0, 1.0, 1.0})); }), Errc::kDimensionMismatch);
  s.append(normalize({1.0, 1.0}));
  EXPECT_EQ(code_of([&] { idx.check_fresh(); }), Errc::kStaleIndex);
}

TEST(SumIndex, PersistenceRoundTrip) {
  oracle::Rng rng(25);
  const auto s = oracle::random_store(rng, 33, 7);
  const auto idx = SumIndex::build(s);
  std::stringstream buf(std::ios::in | std::ios::out | std::ios::binary);
  idx.save(buf);
  EXPECT_EQ(buf.str().substr(0, 4), "GTNS");
  const auto back = SumIndex::load(buf, s);
  for (Index i = 0; i <= 33; ++i) {
    for (std::size_t j = 0; j < 7; ++j) EXPECT_EQ(back.prefix(i)[j], idx.prefix(i)[j]);
  }
  const auto other = oracle::random_store(rng, 32, 7);
  std::istringstream again(buf.str(), std::ios::binary);
  EXPECT_EQ(code_of([&] { SumIndex::load(again, other); }), Errc::kStaleIndex);
  std::istringstream cut(buf.str().substr(0, 40), std::ios::binary);
  EXPECT_EQ(code_of([&] { SumIndex::load(cut, s); }), Errc::kTruncatedFile);
}

TEST(MaxIndex, RootOfTwoAxes) {
  const auto s = two_axes();
  const auto idx = MaxIndex::build(s);
  EXPECT_EQ(idx.max_vec(idx.root())[0], 1.0f);
  EXPECT_EQ(idx.max_vec(idx.root())[1], 1.0f);
  EXPECT_TRUE(idx.node(idx.root()).is_leaf());
}

TEST(MaxIndex, IdenticalVectorsGiveIdenticalNodes) {
  VectorStore s(3);
  const auto v = normalize({1.0, 2.0, 2.0});
  for (int k = 0; k < 11; ++k) s.append(v);
  const auto idx = MaxIndex::build(s);
  for (NodeId id = 0; id < idx.node_total(); ++id) {
    for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(idx.max_vec(id)[j], v[j]);
  }
}

TEST(MaxIndex, NodesMatchBruteForceAndShape) {
  oracle::Rng rng(26);
  for (std::size_t n : {1u, 2u, 3u, 5u, 16u, 17u, 100u}) {
    const auto s = oracle::random_store(rng, n, 8, 0.6, n % 2 == 1);
    const auto idx = MaxIndex::build(s);
    EXPECT_LE(idx.node_total(), 2 * n - 1);
    EXPECT_EQ(idx.has_min(), s.allow_negative());
    for (NodeId id = 0; id < idx.node_total(); ++id) {
      const auto& node = idx.node(id);
      const auto brute = oracle::range_max(s, node.si, node.ei);
      for (std::size_t j = 0; j < 8; ++j) EXPECT_EQ(idx.max_vec(id)[j], static_cast<float>(brute[j]));
      if (node.is_leaf()) {
        EXPECT_LE(node.members(), 2u);
      } else {
        EXPECT_GT(node.members(), 2u);
        const auto& l = idx.node(node.left);
        const auto& r = idx.node(node.right);
        EXPECT_EQ(l.si, node.si);
        EXPECT_EQ(l.members(), node.members() / 2);
        EXPECT_EQ(r.si, l.ei + 1);
        EXPECT_EQ(r.ei, node.ei);
        for (std::size_t j = 0; j < 8; ++j) {
          EXPECT_EQ(idx.max_vec(id)[j], std::max(idx.max_vec(node.left)[j], idx.max_vec(node.right)[j]));
        }
      }
    }
  }
}

TEST(MaxIndex, TwoMemberBound) {
  VectorStore s(2);
  s.append(normalize({0.6, 0.8}));
  s.append(normalize({0.8, 0.6}));
  const auto idx = MaxIndex::build(s);
  const std::vector<float> q{1.0f, 0.0f};
  EXPECT_NEAR(idx.pool_bound_dot(q, idx.root()), 0.8, 1e-7);
}

TEST(MaxIndex, BoundDominatesMembersIncludingNegatives) {
  oracle::Rng rng(27);
  for (int trial = 0; trial < 40; ++trial) {
    const bool neg = trial % 2 == 1;
    const std::size_t n = 1 + rng() % 200, d = 2 + rng() % 30;
    const auto s = oracle::random_store(rng, n, d, 0.5, neg);
    const auto idx = MaxIndex::build(s);
    const auto q = oracle::random_unit(rng, d, 0.7, neg);
    const auto qd = oracle::widen(q.values());
    for (NodeId id = 0; id < idx.node_total(); ++id) {
      const auto& node = idx.node(id);
      double best = -1e300;
      for (Index i = node.si; i <= node.ei; ++i) best = std::max(best, oracle::dot(qd, s.row(i)));
      const double bound = idx.pool_bound_dot(q.values(), id);
      EXPECT_GE(bound, best - 1e-12);
      if (node.members() == 1) {
        EXPECT_NEAR(bound, best, 1e-12);
      }
      if (!neg) {
        // Each term q_j·max_i f_ij is at most one member's full dot.
        const double cap = static_cast<double>(std::min(d, node.members()));
        EXPECT_LE(bound, cap * best + 1e-9);
      }
    }
  }
}

TEST(MaxIndex, NegativeQueryNeedsMinVectors) {
  const auto s = two_axes();
  const auto idx = MaxIndex::build(s);
  const std::vector<float> q{0.6f, -0.8f};
  EXPECT_EQ(code_of([&] { idx.pool_bound_dot(q, 0); }), Errc::kUnsupportedNegativeQuery);
  EXPECT_EQ(code_of([&] { idx.min_vec(0); }), Errc::kUnsupportedNegativeQuery);
  VectorStore empty(2);
  EXPECT_EQ(code_of([&] { MaxIndex::build(empty); }), Errc::kEmptyStore);
}

TEST(MaxIndex, PersistenceRoundTrip) {
  oracle::Rng rng(28);
  for (bool neg : {false, true}) {
    const auto s = oracle::random_store(rng, 41, 6, 0.5, neg);
    const auto idx = MaxIndex::build(s);
    std::stringstream buf(std::ios::in | std::ios::out | std::ios::binary);
    idx.save(buf);
    EXPECT_EQ(buf.str().substr(0, 4), "GTNM");
    const auto back = MaxIndex::load(buf, s);
    ASSERT_EQ(back.node_total(), idx.node_total());
    for (NodeId id = 0; id < idx.node_total(); ++id) {
      EXPECT_EQ(back.node(id).si, idx.node(id).si);
      EXPECT_EQ(back.node(id).left, idx.node(id).left);
      for (std::size_t j = 0; j < 6; ++j) {
        EXPECT_EQ(back.max_vec(id)[j], idx.max_vec(id)[j]);
        if (neg) {
          EXPECT_EQ(back.min_vec(id)[j], idx.min_vec(id)[j]);
        }
      }
    }
  }
}
