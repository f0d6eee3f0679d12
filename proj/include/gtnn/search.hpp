#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "gtnn/error.hpp"
#include "gtnn/index_max.hpp"
#include "gtnn/index_sum.hpp"
#include "gtnn/vecstore.hpp"

namespace gtnn {

/// ⌈log₂ n⌉ for n ≥ 1.
constexpr std::uint32_t ceil_log2(std::size_t n) {
  return n <= 1 ? 0 : static_cast<std::uint32_t>(std::bit_width(n - 1));
}

/// Per-round pool outcomes. A round is a depth in the implicit splitting tree
/// (root = round 0).
struct RoundCounts {
  std::uint64_t pruned = 0;    // multi-member pools below the threshold
  std::uint64_t expanded = 0;  // multi-member pools that were split
  std::uint64_t leaves = 0;    // singletons whose membership was decided
};

struct SearchStats {
  std::uint64_t dot_products = 0;     // d-dimensional inner products, all kinds
  std::uint64_t visited_pools = 0;    // pools whose similarity became known
  std::uint64_t boundary_rechecks = 0;  // derived singleton values re-measured directly
  std::vector<RoundCounts> rounds;

  std::uint64_t total(std::uint64_t RoundCounts::*field) const {
    std::uint64_t acc = 0;
    for (const auto& r : rounds) acc += r.*field;
    return acc;
  }
};

struct Neighbor {
  Index id = 0;
  double similarity = 0.0;
};

struct QueryResult {
  std::vector<Neighbor> neighbors;  // ascending id
  SearchStats stats;

  std::vector<Index> ids() const {
    std::vector<Index> out;
    out.reserve(neighbors.size());
    for (const auto& n : neighbors) out.push_back(n.id);
    return out;
  }
};

/// A contiguous member range [si, ei] with its (bound on the) similarity.
struct Pool {
  Index si = 0;
  Index ei = 0;
  double sim = 0.0;
  NodeId node = kNoNode;
  std::uint32_t depth = 0;
  bool exact = true;  // false when `sim` came from a subtraction

  std::size_t members() const noexcept { return ei - si + 1; }
};

/// What the splitting driver needs from a pooling scheme.
template <typename P>
concept PoolProvider = requires(const P& p, const Pool& pool, Index i, SearchStats& stats) {
  { p.size() } -> std::convertible_to<std::size_t>;
  { p.root(stats) } -> std::same_as<Pool>;
  { p.split(pool, stats) } -> std::same_as<std::pair<Pool, Pool>>;
  { p.member_dot(i, stats) } -> std::same_as<double>;
};

struct SearchOptions {
  /// Pools are pruned only when sim < ρ − guard. Negative means the default
  /// 1e-6·log₂N. Singletons whose subtracted similarity falls within ±guard of
  /// ρ are re-measured directly before deciding.
  double guard = -1.0;
  /// Called for every visited pool, in visiting order.
  std::function<void(const Pool&)> on_visit;
};

inline double default_guard(std::size_t n) { return n <= 1 ? 0.0 : 1e-6 * std::log2(static_cast<double>(n)); }

/// Iterative binary splitting over any pool provider. Pools are taken from a
/// stack; a pool at or above the threshold is split into a left half of
/// ⌊n/2⌋ members and the rest, right pushed before left. Two-member pools are
/// resolved in place (right member first), singletons are neighbors iff their
/// similarity reaches ρ.
template <PoolProvider P>
QueryResult binary_split(const P& pools, double rho, const SearchOptions& options = {}) {
  const std::size_t n = pools.size();
  if (n == 0) throw Error(Errc::kEmptyStore, "nothing to search");
  const double guard = options.guard < 0.0 ? default_guard(n) : options.guard;

  QueryResult result;
  SearchStats& stats = result.stats;
  stats.rounds.resize(ceil_log2(n) + 1);

  auto visit = [&](const Pool& p) {
    ++stats.visited_pools;
    if (options.on_visit) options.on_visit(p);
  };
  auto resolve_singleton = [&](const Pool& p) {
    double sim = p.sim;
    if (!p.exact && sim >= rho - guard && sim < rho + guard) {
      sim = pools.member_dot(p.si, stats);
      ++stats.boundary_rechecks;
    }
    ++stats.rounds[p.depth].leaves;
    if (sim >= rho) result.neighbors.push_back({p.si, sim});
  };

  std::vector<Pool> stack;
  stack.reserve(2 * (ceil_log2(n) + 2));
  stack.push_back(pools.root(stats));
  while (!stack.empty()) {
    const Pool pool = stack.back();
    stack.pop_back();
    visit(pool);
    const std::size_t members = pool.members();
    if (members == 1) {
      resolve_singleton(pool);
      continue;
    }
    if (pool.sim < rho - guard) {
      ++stats.rounds[pool.depth].pruned;
      continue;
    }
    ++stats.rounds[pool.depth].expanded;
    auto [left, right] = pools.split(pool, stats);
    if (members > 2) {
      stack.push_back(right);
      stack.push_back(left);
    } else {
      visit(right);
      resolve_singleton(right);
      visit(left);
      resolve_singleton(left);
    }
  }
  std::sort(result.neighbors.begin(), result.neighbors.end(),
            [](const Neighbor& a, const Neighbor& b) { return a.id < b.id; });
  return result;
}

/// Sum pools from cumulative sums: one inner product per split, the left
/// half's value is the parent's minus the right's.
class SumPools {
 public:
  SumPools(const SumIndex& index, std::span<const float> q) : index_(index), store_(index.store()), q_(q) {
    if (q.size() != index.dim()) throw Error(Errc::kDimensionMismatch, "query dim " + std::to_string(q.size()));
    for (const float x : q) {
      if (x < 0.0f) throw Error(Errc::kNegativeValue, "sum pooling needs a non-negative query");
    }
    index.check_fresh();
  }

  std::size_t size() const { return index_.size(); }

  Pool root(SearchStats& stats) const {
    ++stats.dot_products;
    return {1, size(), index_.pool_dot(q_, 1, size()), kNoNode, 0, size() == 1};
  }

  std::pair<Pool, Pool> split(const Pool& p, SearchStats& stats) const {
    ++stats.dot_products;
    const Index mid = split_point(p.si, p.ei);
    const std::uint32_t depth = p.depth + 1;
    // A right singleton is measured on the raw vector: same single product,
    // no cancellation.
    const bool right_single = p.ei == mid + 1;
    const double rsim = right_single ? dot(q_, store_.row(p.ei)) : index_.pool_dot(q_, mid + 1, p.ei);
    return {Pool{p.si, mid, p.sim - rsim, kNoNode, depth, false}, Pool{mid + 1, p.ei, rsim, kNoNode, depth, true}};
  }

  double member_dot(Index i, SearchStats& stats) const {
    ++stats.dot_products;
    return dot(q_, store_.row(i));
  }

 private:
  const SumIndex& index_;
  const VectorStore& store_;
  std::span<const float> q_;
};

/// Max pools from the interval tree: both halves need their own bound.
class MaxPools {
 public:
  MaxPools(const MaxIndex& index, std::span<const float> q) : index_(index), store_(index.store()), q_(q) {
    if (q.size() != index.dim()) throw Error(Errc::kDimensionMismatch, "query dim " + std::to_string(q.size()));
    if (!index.has_min()) {
      for (const float x : q) {
        if (x < 0.0f) throw Error(Errc::kUnsupportedNegativeQuery, "negative query needs an index with min vectors");
      }
    }
    index.check_fresh();
  }

  std::size_t size() const { return index_.size(); }

  Pool root(SearchStats& stats) const {
    ++stats.dot_products;
    return {1, size(), index_.pool_bound_dot(q_, index_.root()), index_.root(), 0, true};
  }

  std::pair<Pool, Pool> split(const Pool& p, SearchStats& stats) const {
    stats.dot_products += 2;
    const auto& node = index_.node(p.node);
    const std::uint32_t depth = p.depth + 1;
    if (node.is_leaf()) {  // two members
      return {Pool{p.si, p.si, member(p.si), kNoNode, depth, true},
              Pool{p.ei, p.ei, member(p.ei), kNoNode, depth, true}};
    }
    const auto& l = index_.node(node.left);
    const auto& r = index_.node(node.right);
    return {Pool{l.si, l.ei, index_.pool_bound_dot(q_, node.left), node.left, depth, true},
            Pool{r.si, r.ei, index_.pool_bound_dot(q_, node.right), node.right, depth, true}};
  }

  double member_dot(Index i, SearchStats& stats) const {
    ++stats.dot_products;
    return member(i);
  }

 private:
  // A singleton's max/min bound is the member itself.
  double member(Index i) const { return dot(q_, store_.row(i)); }

  const MaxIndex& index_;
  const VectorStore& store_;
  std::span<const float> q_;
};

inline QueryResult search_sum(const SumIndex& index, std::span<const float> q, double rho,
                              const SearchOptions& options = {}) {
  return binary_split(SumPools(index, q), rho, options);
}

inline QueryResult search_sum(const SumIndex& index, const FeatureVector& q, double rho,
                              const SearchOptions& options = {}) {
  return search_sum(index, q.values(), rho, options);
}

inline QueryResult search_max(const MaxIndex& index, std::span<const float> q, double rho,
                              const SearchOptions& options = {}) {
  return binary_split(MaxPools(index, q), rho, options);
}

inline QueryResult search_max(const MaxIndex& index, const FeatureVector& q, double rho,
                              const SearchOptions& options = {}) {
  return search_max(index, q.values(), rho, options);
}

/// Ground truth: one inner product per stored vector.
inline QueryResult search_exhaustive(const VectorStore& store, std::span<const float> q, double rho) {
  if (q.size() != store.dim()) throw Error(Errc::kDimensionMismatch, "query dim " + std::to_string(q.size()));
  QueryResult result;
  result.stats.rounds.resize(1);
  for (Index i = 1; i <= store.size(); ++i) {
    const double sim = dot(q, store.row(i));
    if (sim >= rho) result.neighbors.push_back({i, sim});
  }
  result.stats.dot_products = store.size();
  result.stats.visited_pools = store.size();
  result.stats.rounds[0].leaves = store.size();
  return result;
}

inline QueryResult search_exhaustive(const VectorStore& store, const FeatureVector& q, double rho) {
  return search_exhaustive(store, q.values(), rho);
}

}  // namespace gtnn
