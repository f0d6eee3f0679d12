#pragma once

// Synthetic softmax-like data: symmetric Dirichlet draws, L2-normalized. Small
// concentrations give near-one-hot vectors, so most cross similarities are
// close to zero and a few planted rows act as true neighbors.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "gtnn/error.hpp"
#include "gtnn/random.hpp"
#include "gtnn/vecstore.hpp"

namespace gtnn::datagen {

struct Planted {
  Index query_id = 1;      // 1-based row of gen_queries(spec, ...)
  std::size_t count = 1;   // store rows overwritten with neighbors of that query
  double similarity = 0.9;  // target cosine, in (0, 1]
};

struct GenSpec {
  std::size_t n = 1000;
  std::size_t d = 128;
  double concentration = 0.05;
  std::vector<Planted> planted;
  std::uint64_t seed = 0;
};

inline constexpr double kDefaultBand = 0.02;
inline constexpr std::size_t kBlockRows = 1024;

namespace detail {

enum Tag : std::uint32_t { kStoreTag = 1, kQueryTag = 2, kPlantTag = 3 };

inline void check_spec(const GenSpec& spec) {
  if (spec.n == 0) throw Error(Errc::kInvalidSpec, "N must be positive");
  if (spec.d == 0) throw Error(Errc::kInvalidSpec, "d must be positive");
  if (!(spec.concentration > 0.0) || !std::isfinite(spec.concentration)) {
    throw Error(Errc::kInvalidSpec, "concentration must be positive and finite");
  }
  std::size_t total = 0;
  for (const auto& p : spec.planted) {
    if (p.query_id < 1) throw Error(Errc::kInvalidSpec, "planted query ids are 1-based");
    if (!(p.similarity > 0.0 && p.similarity <= 1.0)) throw Error(Errc::kInvalidSpec, "planted similarity must be in (0, 1]");
    if (p.count > spec.n) throw Error(Errc::kInvalidSpec, "planted count exceeds N");
    total += p.count;
  }
  if (total > spec.n) throw Error(Errc::kInvalidSpec, "more planted neighbors than store rows");
}

/// One symmetric Dirichlet(a) draw, L2-normalized. Gamma variates are formed
/// in log space, log G = log G' + log(U)/a with G' ~ Gamma(a+1), which stays
/// finite for tiny a where direct gamma draws underflow to zero.
inline FeatureVector dirichlet_unit(Rng& rng, std::size_t d, double a) {
  std::gamma_distribution<double> gamma(a + 1.0, 1.0);
  std::vector<double> logs(d);
  for (auto& x : logs) {
    double u = uniform01(rng);
    while (u == 0.0) u = uniform01(rng);
    x = std::log(gamma(rng)) + std::log(u) / a;
  }
  const double top = *std::max_element(logs.begin(), logs.end());
  std::vector<double> w(d);
  for (std::size_t j = 0; j < d; ++j) w[j] = std::exp(logs[j] - top);
  return normalize(w);
}

inline VectorStore dirichlet_rows(std::size_t rows, std::size_t d, double a, std::uint64_t seed, std::uint32_t tag) {
  VectorStore store(d);
  store.reserve(rows);
  for (std::size_t start = 0; start < rows; start += kBlockRows) {
    auto rng = substream(seed, start / kBlockRows, tag);
    const std::size_t end = std::min(rows, start + kBlockRows);
    for (std::size_t i = start; i < end; ++i) store.append(dirichlet_unit(rng, d, a));
  }
  return store;
}

}  // namespace detail

/// Returns a unit vector v ≥ 0 with base·v in [s, s + band], by bisecting the
/// weight w of normalize((1 − w)·base + w·r) for a random non-negative unit r.
inline FeatureVector plant_neighbor(const FeatureVector& base, double s, Rng& rng, double concentration = 1.0,
                                    double band = kDefaultBand) {
  if (!(s > 0.0 && s <= 1.0)) throw Error(Errc::kInvalidArgument, "target similarity must be in (0, 1]");
  if (!(band > 0.0)) throw Error(Errc::kInvalidArgument, "band must be positive");
  if (base.has_negative()) throw Error(Errc::kNegativeValue, "base must be non-negative");
  if (s == 1.0) return base;
  const std::size_t d = base.dim();
  auto cosine = [&](const FeatureVector& v) { return dot(base.values(), v.values()); };

  FeatureVector r;
  bool found = false;
  for (int attempt = 0; attempt < 32 && !found; ++attempt) {
    r = detail::dirichlet_unit(rng, d, concentration);
    found = cosine(r) < s;
  }
  if (!found) {
    // Fall back to the axis where base is smallest.
    const auto j = static_cast<std::size_t>(std::min_element(base.values().begin(), base.values().end()) -
                                            base.values().begin());
    std::vector<float> axis(d, 0.0f);
    axis[j] = 1.0f;
    r = FeatureVector::from_unit(std::move(axis));
    if (cosine(r) >= s) throw Error(Errc::kInfeasibleTarget, "no direction below the target similarity");
  }

  std::vector<double> mix(d);
  auto blend = [&](double w) {
    for (std::size_t j = 0; j < d; ++j) mix[j] = (1.0 - w) * base[j] + w * r[j];
    return normalize(mix);
  };
  double lo = 0.0;  // cosine(blend(lo)) > s + band
  double hi = 1.0;  // cosine(blend(hi)) < s
  for (int step = 0; step < 64; ++step) {
    const double w = 0.5 * (lo + hi);
    auto v = blend(w);
    const double c = cosine(v);
    if (c >= s && c <= s + band) return v;
    (c > s + band ? lo : hi) = w;
  }
  throw Error(Errc::kInfeasibleTarget, "cannot reach similarity " + std::to_string(s));
}

/// Query vectors for a spec, from a substream separate from the store's.
inline VectorStore gen_queries(const GenSpec& spec, std::size_t count) {
  detail::check_spec(spec);
  if (count == 0) throw Error(Errc::kInvalidSpec, "need at least one query");
  return detail::dirichlet_rows(count, spec.d, spec.concentration, spec.seed, detail::kQueryTag);
}

/// N random rows; each planted entry overwrites `count` distinct random rows
/// with neighbors of query `query_id` at its target similarity.
inline VectorStore gen_store(const GenSpec& spec) {
  detail::check_spec(spec);
  auto store = detail::dirichlet_rows(spec.n, spec.d, spec.concentration, spec.seed, detail::kStoreTag);
  if (spec.planted.empty()) return store;

  Index max_query = 0;
  for (const auto& p : spec.planted) max_query = std::max(max_query, p.query_id);
  const auto queries = gen_queries(spec, max_query);
  auto rng = substream(spec.seed, 0, detail::kPlantTag);
  std::vector<Index> slots(spec.n);
  std::iota(slots.begin(), slots.end(), Index{1});
  std::shuffle(slots.begin(), slots.end(), rng);

  VectorStore out(spec.d);
  std::vector<FeatureVector> replaced(spec.n + 1);
  std::size_t next = 0;
  for (const auto& p : spec.planted) {
    const auto base = queries.vector(p.query_id);
    for (std::size_t k = 0; k < p.count; ++k) replaced[slots[next++]] = plant_neighbor(base, p.similarity, rng);
  }
  out.reserve(spec.n);
  for (Index i = 1; i <= spec.n; ++i) out.append(replaced[i].dim() ? replaced[i] : store.vector(i));
  return out;
}

}  // namespace gtnn::datagen
