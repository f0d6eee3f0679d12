#pragma once

// Cost model for binary splitting when query-to-database similarities are
// i.i.d. truncated normalized exponential (TNE) on [0, 1]:
//
//   p(x; λ) = λ e^{−λx} / (1 − e^{−λ}),  0 ≤ x ≤ 1.
//
// A pool of L members is pruned with probability p_L(ρ) = P(sum < ρ). The
// expected pool count per round follows Q_2 = 2(1 − p_N), Q_k = 2(1 −
// p_{N/2^{k−2}}) Q_{k−1}, and the expected dot products per query are
// E(ρ) = 1 + ½ Σ_{k=2}^{⌈log₂N⌉+1} Q_k for sum pools. For max pools the bound
// p_n ≥ F(ρ/c)^n gives E ≤ 1 + Σ Q_k (both halves are measured on a split).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>
#include <boost/math/tools/roots.hpp>

#include "gtnn/error.hpp"
#include "gtnn/index_max.hpp"
#include "gtnn/random.hpp"
#include "gtnn/search.hpp"
#include "gtnn/vecstore.hpp"

namespace gtnn::theory {

inline void check_lambda(double lambda) {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) {
    throw Error(Errc::kInvalidLambda, "lambda must be positive and finite, got " + std::to_string(lambda));
  }
}

inline double tne_pdf(double x, double lambda) {
  check_lambda(lambda);
  if (x < 0.0 || x > 1.0) return 0.0;
  return lambda * std::exp(-lambda * x) / -std::expm1(-lambda);
}

inline double tne_cdf(double x, double lambda) {
  check_lambda(lambda);
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  return std::expm1(-lambda * x) / std::expm1(-lambda);
}

/// Inverse CDF; u in [0, 1].
inline double tne_quantile(double u, double lambda) {
  check_lambda(lambda);
  return -std::log1p(u * std::expm1(-lambda)) / lambda;
}

inline double tne_sample(Rng& rng, double lambda) { return tne_quantile(uniform01(rng), lambda); }

struct Moments {
  double mean = 0.0;
  double variance = 0.0;
};

/// mean = 1/λ + 1/(1 − e^λ), variance = 1/λ² − e^λ/(e^λ − 1)². Small λ uses the
/// Bernoulli-number series to avoid cancellation.
inline Moments tne_moments(double lambda) {
  check_lambda(lambda);
  if (lambda < 1e-2) {
    const double l2 = lambda * lambda;
    return {0.5 - lambda / 12.0 + lambda * l2 / 720.0 - lambda * l2 * l2 / 30240.0,
            1.0 / 12.0 - l2 / 240.0 + l2 * l2 / 6048.0};
  }
  const double em = std::exp(-lambda);
  const double denom = std::expm1(-lambda);  // −(1 − e^{−λ})
  return {1.0 / lambda + em / denom, 1.0 / (lambda * lambda) - em / (denom * denom)};
}

/// Standard normal CDF.
inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

enum class PruneModel {
  /// Exact law of a sum of L TNE draws (alternating Erlang series).
  kTruncatedErlang,
  /// Gaussian approximation for L ≥ 6, Erlang renormalized on [0, L] below.
  kCentralLimit,
};

inline constexpr double kCltMinPool = 6.0;

/// p_L(ρ): probability that a pool of L members (L may be fractional) sums
/// below ρ. Result is clamped to [0, 1].
inline double prune_prob(double pool_size, double rho, double lambda,
                         PruneModel model = PruneModel::kTruncatedErlang) {
  check_lambda(lambda);
  if (!(pool_size >= 1.0) || !std::isfinite(pool_size)) {
    throw Error(Errc::kInvalidArgument, "pool size must be >= 1");
  }
  if (rho <= 0.0) return 0.0;
  if (rho >= pool_size) return 1.0;
  if (pool_size == 1.0) return tne_cdf(rho, lambda);
  double p = 0.0;
  if (model == PruneModel::kTruncatedErlang) {
    // The joint TNE density depends only on the sum, so P(sum < ρ) is the
    // Erlang law restricted to the cube [0, 1]^L. Inclusion-exclusion over
    // members exceeding 1 gives an alternating series with ⌊ρ⌋ + 1 terms.
    const double log_norm = pool_size * std::log(-std::expm1(-lambda));
    const double lg_l = std::lgamma(pool_size + 1.0);
    for (int k = 0; k <= static_cast<int>(std::floor(rho)) && k < pool_size; ++k) {
      const double g = boost::math::gamma_p(pool_size, lambda * (rho - k));
      if (g <= 0.0) continue;
      const double log_binom = lg_l - std::lgamma(k + 1.0) - std::lgamma(pool_size - k + 1.0);
      const double term = std::exp(log_binom - k * lambda + std::log(g) - log_norm);
      p += (k % 2 == 0) ? term : -term;
    }
  } else if (pool_size < kCltMinPool) {
    p = boost::math::gamma_p(pool_size, lambda * rho) / boost::math::gamma_p(pool_size, lambda * pool_size);
  } else {
    const auto m = tne_moments(lambda);
    p = normal_cdf((rho - pool_size * m.mean) / std::sqrt(pool_size * m.variance));
  }
  return std::clamp(std::isfinite(p) ? p : 1.0, 0.0, 1.0);
}

enum class CostVariant { kSum, kMaxUpperBound };

struct CostPrediction {
  CostVariant variant = CostVariant::kSum;
  double n = 0;
  double rho = 0;
  double lambda = 0;
  double c = 1;
  double expected_tests = 1;
  std::vector<double> per_round_pools;  // Q_2 .. Q_{⌈log₂N⌉+1}
};

namespace detail {

inline void check_cost_inputs(std::uint64_t n, double rho, double lambda) {
  check_lambda(lambda);
  if (n < 2) throw Error(Errc::kInvalidN, "N must be at least 2");
  if (!(rho > 0.0) || !std::isfinite(rho)) throw Error(Errc::kInvalidArgument, "rho must be positive");
}

template <typename PruneAt>
CostPrediction recurse(std::uint64_t n, double rho, double lambda, double test_factor, PruneAt prune_at) {
  CostPrediction out;
  out.n = static_cast<double>(n);
  out.rho = rho;
  out.lambda = lambda;
  const std::uint32_t last_round = ceil_log2(n) + 1;
  double q = 1.0;
  double total = 0.0;
  for (std::uint32_t k = 2; k <= last_round; ++k) {
    const double parent_size = out.n / std::ldexp(1.0, static_cast<int>(k) - 2);
    q = 2.0 * (1.0 - prune_at(std::max(parent_size, 1.0))) * q;
    out.per_round_pools.push_back(q);
    total += q;
  }
  out.expected_tests = 1.0 + test_factor * total;
  return out;
}

}  // namespace detail

/// Expected dot products per query for sum pools.
inline CostPrediction expected_tests_sum(std::uint64_t n, double rho, double lambda,
                                         PruneModel model = PruneModel::kTruncatedErlang) {
  detail::check_cost_inputs(n, rho, lambda);
  auto out = detail::recurse(n, rho, lambda, 0.5, [&](double size) { return prune_prob(size, rho, lambda, model); });
  out.variant = CostVariant::kSum;
  return out;
}

/// Upper-bound model for max pools, with c bounding pool/best-member similarity.
inline CostPrediction expected_tests_max_ub(std::uint64_t n, double rho, double lambda, double c) {
  detail::check_cost_inputs(n, rho, lambda);
  if (!(c >= 1.0) || !std::isfinite(c)) throw Error(Errc::kInvalidC, "c must be >= 1");
  const double f = tne_cdf(rho / c, lambda);
  auto out = detail::recurse(n, rho, lambda, 1.0, [&](double size) { return std::pow(f, size); });
  out.variant = CostVariant::kMaxUpperBound;
  out.c = c;
  return out;
}

struct TneModel {
  double lambda = 1.0;
};

inline constexpr double kLambdaMin = 1e-6;
inline constexpr double kLambdaMax = 1e4;

/// λ whose TNE mean equals the sample mean (the maximum-likelihood estimate
/// for this family), by bisection on [1e-6, 1e4].
inline TneModel fit_lambda(std::span<const double> samples) {
  if (samples.size() < 100) throw Error(Errc::kDegenerateSamples, "need at least 100 samples");
  double sum = 0.0;
  for (const double x : samples) {
    if (!(x >= 0.0 && x <= 1.0)) throw Error(Errc::kOutOfRange, "sample outside [0, 1]: " + std::to_string(x));
    sum += x;
  }
  const double target = sum / static_cast<double>(samples.size());
  auto residual = [&](double lambda) { return tne_moments(lambda).mean - target; };
  if (!(target > 0.0 && target < 0.5) || residual(kLambdaMin) <= 0.0 || residual(kLambdaMax) >= 0.0) {
    throw Error(Errc::kDegenerateSamples, "sample mean " + std::to_string(target) + " has no TNE fit in range");
  }
  std::uintmax_t iterations = 200;
  const auto [lo, hi] = boost::math::tools::bisect(residual, kLambdaMin, kLambdaMax,
                                                   boost::math::tools::eps_tolerance<double>(52), iterations);
  const double lambda = std::abs(residual(lo)) <= std::abs(residual(hi)) ? lo : hi;
  if (std::abs(residual(lambda)) >= 1e-9) throw Error(Errc::kDegenerateSamples, "bisection did not converge");
  return {lambda};
}

inline TneModel fit_lambda(const std::vector<double>& samples) { return fit_lambda(std::span<const double>(samples)); }

/// Linear-interpolated percentile (pct in (0, 100)) of unsorted values.
inline double percentile(std::vector<double> values, double pct) {
  if (values.empty()) throw Error(Errc::kNoValidPools, "no values");
  if (!(pct > 0.0 && pct < 100.0)) throw Error(Errc::kInvalidArgument, "percentile must be in (0, 100)");
  std::sort(values.begin(), values.end());
  const double pos = pct / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

/// For one query: ratio of each visited max pool's bound to its best
/// member's similarity, over pools whose best member similarity is positive.
inline std::vector<double> c_ratios(const MaxIndex& index, std::span<const float> q, double rho) {
  const auto& store = index.store();
  std::vector<double> member(store.size() + 1, 0.0);
  for (Index i = 1; i <= store.size(); ++i) member[i] = dot(q, store.row(i));
  // Node ids are pre-order, so children come after parents.
  std::vector<double> best(index.node_total(), 0.0);
  for (std::size_t id = index.node_total(); id-- > 0;) {
    const auto& node = index.node(static_cast<NodeId>(id));
    if (node.is_leaf()) {
      best[id] = std::max(member[node.si], member[node.ei]);
    } else {
      best[id] = std::max(best[node.left], best[node.right]);
    }
  }
  std::vector<double> ratios;
  SearchOptions options;
  options.on_visit = [&](const Pool& p) {
    const double top = p.node == kNoNode ? member[p.si] : best[p.node];
    if (top > 0.0) ratios.push_back(p.sim / top);
  };
  search_max(index, q, rho, options);
  return ratios;
}

/// pct-th percentile of the c ratio over all pools visited by max-pool
/// searches of every query in `queries` at threshold ρ.
inline double c_percentile(const MaxIndex& index, const VectorStore& queries, double rho, double pct) {
  std::vector<double> all;
  for (Index i = 1; i <= queries.size(); ++i) {
    auto r = c_ratios(index, queries.row(i), rho);
    all.insert(all.end(), r.begin(), r.end());
  }
  if (all.empty()) throw Error(Errc::kNoValidPools, "no visited pool has a positive best-member similarity");
  return percentile(std::move(all), pct);
}

/// Scalar stand-in for SumPools: members are plain similarity values.
class ScalarSumPools {
 public:
  explicit ScalarSumPools(std::span<const double> values) : values_(values), prefix_(values.size() + 1, 0.0) {
    std::partial_sum(values.begin(), values.end(), prefix_.begin() + 1);
  }

  std::size_t size() const { return values_.size(); }

  Pool root(SearchStats& stats) const {
    ++stats.dot_products;
    return {1, size(), prefix_[size()], kNoNode, 0, true};
  }

  std::pair<Pool, Pool> split(const Pool& p, SearchStats& stats) const {
    ++stats.dot_products;
    const Index mid = split_point(p.si, p.ei);
    const double rsim = prefix_[p.ei] - prefix_[mid];
    return {Pool{p.si, mid, p.sim - rsim, kNoNode, p.depth + 1, true},
            Pool{mid + 1, p.ei, rsim, kNoNode, p.depth + 1, true}};
  }

  double member_dot(Index i, SearchStats& stats) const {
    ++stats.dot_products;
    return values_[i - 1];
  }

 private:
  std::span<const double> values_;
  std::vector<double> prefix_;
};

/// Scalar max pools: a pool's value is c times its largest member.
class ScalarMaxPools {
 public:
  ScalarMaxPools(std::span<const double> values, double c) : values_(values), c_(c) {}

  std::size_t size() const { return values_.size(); }

  Pool root(SearchStats& stats) const {
    ++stats.dot_products;
    return {1, size(), value(1, size()), kNoNode, 0, true};
  }

  std::pair<Pool, Pool> split(const Pool& p, SearchStats& stats) const {
    stats.dot_products += 2;
    const Index mid = split_point(p.si, p.ei);
    return {Pool{p.si, mid, value(p.si, mid), kNoNode, p.depth + 1, true},
            Pool{mid + 1, p.ei, value(mid + 1, p.ei), kNoNode, p.depth + 1, true}};
  }

  double member_dot(Index i, SearchStats& stats) const {
    ++stats.dot_products;
    return values_[i - 1];
  }

 private:
  double value(Index si, Index ei) const {
    if (si == ei) return values_[si - 1];
    return c_ * *std::max_element(values_.begin() + (si - 1), values_.begin() + ei);
  }

  std::span<const double> values_;
  double c_;
};

namespace detail {

template <typename MakePools>
double mean_trial_cost(std::uint64_t n, double rho, double lambda, std::uint64_t trials, std::uint64_t seed,
                       unsigned jobs, MakePools make_pools) {
  check_lambda(lambda);
  if (n < 1) throw Error(Errc::kInvalidN, "N must be positive");
  if (trials < 1) throw Error(Errc::kInvalidArgument, "need at least one trial");
  jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(trials)));
  std::vector<std::uint64_t> totals(jobs, 0);
  auto work = [&](unsigned worker) {
    std::vector<double> values(n);
    SearchOptions options;
    options.guard = 0.0;
    for (std::uint64_t t = worker; t < trials; t += jobs) {
      auto rng = substream(seed, t, 0x5EED);
      for (auto& v : values) v = tne_sample(rng, lambda);
      totals[worker] += binary_split(make_pools(values), rho, options).stats.dot_products;
    }
  };
  if (jobs == 1) {
    work(0);
  } else {
    std::vector<std::jthread> threads;
    for (unsigned w = 0; w < jobs; ++w) threads.emplace_back(work, w);
  }
  return static_cast<double>(std::accumulate(totals.begin(), totals.end(), std::uint64_t{0})) /
         static_cast<double>(trials);
}

}  // namespace detail

/// Monte-Carlo mean dot-product count of sum-pool splitting over N i.i.d. TNE
/// similarities. Trial t uses its own substream, so results do not depend on `jobs`.
inline double simulate_splitting(std::uint64_t n, double rho, double lambda, std::uint64_t trials,
                                 std::uint64_t seed = 0, unsigned jobs = 1) {
  return detail::mean_trial_cost(n, rho, lambda, trials, seed, jobs,
                                 [](const std::vector<double>& v) { return ScalarSumPools(v); });
}

/// Same for max pools whose value is c·(largest member).
inline double simulate_splitting_max(std::uint64_t n, double rho, double lambda, double c, std::uint64_t trials,
                                     std::uint64_t seed = 0, unsigned jobs = 1) {
  if (!(c >= 1.0)) throw Error(Errc::kInvalidC, "c must be >= 1");
  return detail::mean_trial_cost(n, rho, lambda, trials, seed, jobs,
                                 [c](const std::vector<double>& v) { return ScalarMaxPools(v, c); });
}

/// key=value lines for downstream tools.
inline void write_record(std::ostream& out, const CostPrediction& p, const std::string& prefix = "") {
  const auto old = out.precision(std::numeric_limits<double>::max_digits10);
  out << prefix << "variant=" << (p.variant == CostVariant::kSum ? "sum" : "max_upper_bound") << '\n'
      << prefix << "n=" << static_cast<std::uint64_t>(p.n) << '\n'
      << prefix << "rho=" << p.rho << '\n'
      << prefix << "lambda=" << p.lambda << '\n';
  if (p.variant == CostVariant::kMaxUpperBound) out << prefix << "c=" << p.c << '\n';
  out << prefix << "expected_tests=" << p.expected_tests << '\n';
  for (std::size_t i = 0; i < p.per_round_pools.size(); ++i) {
    out << prefix << "q" << (i + 2) << '=' << p.per_round_pools[i] << '\n';
  }
  out.precision(old);
}

}  // namespace gtnn::theory
