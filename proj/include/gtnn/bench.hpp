#pragma once

// Measurement harness: per-query dot-product counts and timings for each
// search variant, exactness against an exhaustive scan, per-round prune
// histograms, the streaming append/query protocol, and theory comparison.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "gtnn/datagen.hpp"
#include "gtnn/error.hpp"
#include "gtnn/index_max.hpp"
#include "gtnn/index_sum.hpp"
#include "gtnn/random.hpp"
#include "gtnn/search.hpp"
#include "gtnn/theory.hpp"
#include "gtnn/vecstore.hpp"

namespace gtnn::bench {

enum class Variant { kSum, kMax, kExhaustive };

inline std::string to_string(Variant v) {
  switch (v) {
    case Variant::kSum: return "sum";
    case Variant::kMax: return "max";
    case Variant::kExhaustive: return "exhaustive";
  }
  return "?";
}

inline Variant parse_variant(const std::string& s) {
  if (s == "sum") return Variant::kSum;
  if (s == "max") return Variant::kMax;
  if (s == "exhaustive") return Variant::kExhaustive;
  throw Error(Errc::kInvalidArgument, "unknown variant '" + s + "'");
}

struct QueryRecord {
  Index query_id = 0;
  Variant variant = Variant::kSum;
  std::uint64_t dot_products = 0;
  std::uint64_t visited_pools = 0;
  std::uint64_t boundary_rechecks = 0;
  std::size_t result_size = 0;
  double wall_time_s = 0.0;
  double precision = 1.0;
  double recall = 1.0;
};

struct VariantSummary {
  Variant variant = Variant::kSum;
  std::size_t queries = 0;
  double mean_dot_products = 0.0;
  double mean_query_time_s = 0.0;
  double precision = 1.0;  // mean over queries
  double recall = 1.0;
  bool exact = true;  // every query's result set equals the oracle's
  std::vector<RoundCounts> histogram;
  std::uint64_t visited_pools = 0;
};

struct TheoryComparison {
  double lambda = 0.0;
  double empirical_sum = 0.0;
  double expected_sum = 0.0;
  double empirical_max = 0.0;
  double c90 = 1.0;
  double expected_max_ub = 0.0;
  double sum_ratio() const { return empirical_sum / expected_sum; }
  double max_ratio() const { return empirical_max / expected_max_ub; }
};

struct StreamingSummary {
  std::size_t initial_size = 0;
  std::size_t final_size = 0;
  std::size_t batch = 0;
  std::size_t queries = 0;
  double mean_insert_time_s = 0.0;  // per appended point
  std::uint64_t min_additions_per_point = 0;
  std::uint64_t max_additions_per_point = 0;
};

struct BenchReport {
  std::size_t n = 0;
  std::size_t d = 0;
  double rho = 0.0;
  std::vector<QueryRecord> records;
  std::vector<VariantSummary> summaries;
  std::optional<TheoryComparison> theory;
  std::optional<StreamingSummary> streaming;

  /// True when every sum and max query matched the exhaustive oracle.
  bool exact() const {
    return std::all_of(summaries.begin(), summaries.end(), [](const VariantSummary& s) { return s.exact; });
  }

  const VariantSummary* summary(Variant v) const {
    for (const auto& s : summaries) {
      if (s.variant == v) return &s;
    }
    return nullptr;
  }
};

struct SetScore {
  double precision = 1.0;
  double recall = 1.0;
  bool identical = true;
};

/// Precision and recall of `got` against `truth`, both ascending id lists.
/// An empty side scores 1 on the ratio it would otherwise divide by.
inline SetScore score(const std::vector<Index>& got, const std::vector<Index>& truth) {
  std::vector<Index> common;
  std::set_intersection(got.begin(), got.end(), truth.begin(), truth.end(), std::back_inserter(common));
  SetScore s;
  s.precision = got.empty() ? 1.0 : static_cast<double>(common.size()) / static_cast<double>(got.size());
  s.recall = truth.empty() ? 1.0 : static_cast<double>(common.size()) / static_cast<double>(truth.size());
  s.identical = got == truth;
  return s;
}

namespace detail {

inline void add_histogram(std::vector<RoundCounts>& into, const std::vector<RoundCounts>& from) {
  if (into.size() < from.size()) into.resize(from.size());
  for (std::size_t r = 0; r < from.size(); ++r) {
    into[r].pruned += from[r].pruned;
    into[r].expanded += from[r].expanded;
    into[r].leaves += from[r].leaves;
  }
}

template <typename Fn>
void parallel_for(std::size_t count, unsigned jobs, Fn fn) {
  jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(std::max<std::size_t>(count, 1))));
  if (jobs == 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::jthread> threads;
  for (unsigned w = 0; w < jobs; ++w) {
    threads.emplace_back([&, w] {
      for (std::size_t i = w; i < count; i += jobs) fn(i);
    });
  }
}

inline VariantSummary summarize(Variant v, const std::vector<QueryRecord>& records,
                                const std::vector<SearchStats>& stats, const std::vector<bool>& identical) {
  VariantSummary s;
  s.variant = v;
  s.queries = records.size();
  double dots = 0.0, time = 0.0, precision = 0.0, recall = 0.0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    dots += static_cast<double>(records[i].dot_products);
    time += records[i].wall_time_s;
    precision += records[i].precision;
    recall += records[i].recall;
    s.exact = s.exact && identical[i];
    s.visited_pools += stats[i].visited_pools;
    add_histogram(s.histogram, stats[i].rounds);
  }
  if (!records.empty()) {
    const auto q = static_cast<double>(records.size());
    s.mean_dot_products = dots / q;
    s.mean_query_time_s = time / q;
    s.precision = precision / q;
    s.recall = recall / q;
  }
  return s;
}

}  // namespace detail

/// Runs every query through each requested variant and scores the results
/// against an exhaustive scan. Indexes are built here, outside the timings.
inline BenchReport run_static(const VectorStore& store, const VectorStore& queries, double rho,
                              const std::vector<Variant>& variants, unsigned jobs = 1) {
  if (queries.dim() != store.dim()) throw Error(Errc::kDimensionMismatch, "queries and store differ in dimension");
  BenchReport report;
  report.n = store.size();
  report.d = store.dim();
  report.rho = rho;

  const std::size_t nq = queries.size();
  std::vector<std::vector<Index>> truth(nq);
  detail::parallel_for(nq, jobs, [&](std::size_t i) {
    truth[i] = search_exhaustive(store, queries.row(i + 1), rho).ids();
  });

  std::optional<SumIndex> sum;
  std::optional<MaxIndex> max;
  for (const auto v : variants) {
    if (v == Variant::kSum && !sum) sum = SumIndex::build(store);
    if (v == Variant::kMax && !max) max = MaxIndex::build(store);
  }

  for (const auto v : variants) {
    std::vector<QueryRecord> records(nq);
    std::vector<SearchStats> stats(nq);
    std::vector<bool> identical(nq);
    std::vector<char> same(nq);
    detail::parallel_for(nq, jobs, [&](std::size_t i) {
      const auto q = queries.row(i + 1);
      const auto start = std::chrono::steady_clock::now();
      QueryResult r = v == Variant::kSum   ? search_sum(*sum, q, rho)
                      : v == Variant::kMax ? search_max(*max, q, rho)
                                           : search_exhaustive(store, q, rho);
      const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
      const auto s = score(r.ids(), truth[i]);
      records[i] = {i + 1, v, r.stats.dot_products, r.stats.visited_pools, r.stats.boundary_rechecks,
                    r.neighbors.size(), elapsed.count(), s.precision, s.recall};
      same[i] = s.identical;
      stats[i] = std::move(r.stats);
    });
    for (std::size_t i = 0; i < nq; ++i) identical[i] = same[i] != 0;
    report.summaries.push_back(detail::summarize(v, records, stats, identical));
    report.records.insert(report.records.end(), records.begin(), records.end());
  }
  return report;
}

struct StreamingOptions {
  double initial_fraction = 0.8;
  std::size_t batch = 100;
  double rho = 0.9;
  double query_similarity = 0.95;  // queries are perturbed copies of a fresh point
  std::uint64_t seed = 0;
};

/// Streaming protocol: index the first ⌊f·N⌋ rows, then repeatedly append a
/// batch to store and sum index and fire one query, a perturbed copy of the
/// most recent point, checked against an exhaustive scan of the current store.
inline BenchReport run_streaming(const VectorStore& full, const StreamingOptions& opt) {
  if (!(opt.initial_fraction > 0.0 && opt.initial_fraction < 1.0)) {
    throw Error(Errc::kInvalidArgument, "initial fraction must be in (0, 1)");
  }
  if (opt.batch < 1) throw Error(Errc::kInvalidArgument, "batch must be at least 1");
  if (full.size() < 2) throw Error(Errc::kEmptyStore, "streaming needs at least two rows");

  const std::size_t n = full.size();
  const auto initial = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::floor(opt.initial_fraction * static_cast<double>(n))), 1, n - 1);
  VectorStore store(full.dim(), full.allow_negative());
  store.reserve(n);
  for (Index i = 1; i <= initial; ++i) store.append(full.vector(i));
  auto index = SumIndex::build(store);

  BenchReport report;
  report.n = n;
  report.d = full.dim();
  report.rho = opt.rho;
  StreamingSummary ss;
  ss.initial_size = initial;
  ss.batch = opt.batch;
  ss.min_additions_per_point = std::numeric_limits<std::uint64_t>::max();

  std::vector<SearchStats> stats;
  std::vector<bool> identical;
  double insert_time = 0.0;
  Index next = initial + 1;
  while (next <= n) {
    const Index stop = std::min<Index>(n, next + opt.batch - 1);
    for (; next <= stop; ++next) {
      const auto v = full.vector(next);
      const auto before = index.additions();
      const auto start = std::chrono::steady_clock::now();
      store.append(v);
      index.append(v);
      insert_time += std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      const auto added = index.additions() - before;
      ss.min_additions_per_point = std::min(ss.min_additions_per_point, added);
      ss.max_additions_per_point = std::max(ss.max_additions_per_point, added);
    }
    auto rng = substream(opt.seed, ss.queries, 0xA11);
    const auto q = datagen::plant_neighbor(store.vector(store.size()), opt.query_similarity, rng);
    const auto start = std::chrono::steady_clock::now();
    auto r = search_sum(index, q, opt.rho);
    const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
    const auto s = score(r.ids(), search_exhaustive(store, q, opt.rho).ids());
    ++ss.queries;
    report.records.push_back({ss.queries, Variant::kSum, r.stats.dot_products, r.stats.visited_pools,
                              r.stats.boundary_rechecks, r.neighbors.size(), elapsed.count(), s.precision,
                              s.recall});
    identical.push_back(s.identical);
    stats.push_back(std::move(r.stats));
  }
  ss.final_size = store.size();
  ss.mean_insert_time_s = insert_time / static_cast<double>(n - initial);
  report.summaries.push_back(detail::summarize(Variant::kSum, report.records, stats, identical));
  report.streaming = ss;
  return report;
}

/// Query–store similarities for random (query, row) pairs, clamped to [0, 1].
inline std::vector<double> sample_dots(const VectorStore& store, const VectorStore& queries, std::size_t samples,
                                       std::uint64_t seed) {
  if (store.empty() || queries.empty()) throw Error(Errc::kEmptyStore, "nothing to sample");
  auto rng = substream(seed, 0, 0xF17);
  std::uniform_int_distribution<Index> row(1, store.size());
  std::uniform_int_distribution<Index> query(1, queries.size());
  std::vector<double> out(samples);
  for (auto& x : out) x = std::clamp(dot(queries.row(query(rng)), store.row(row(rng))), 0.0, 1.0);
  return out;
}

struct TheoryOptions {
  std::size_t samples = 100000;
  double c_percentile = 90.0;
  std::uint64_t seed = 0;
};

/// Empirical mean dot products of both pooled variants next to the TNE model
/// fitted on sampled similarities.
inline TheoryComparison compare_theory(const VectorStore& store, const VectorStore& queries, double rho,
                                       const TheoryOptions& opt = {}) {
  TheoryComparison t;
  t.lambda = theory::fit_lambda(sample_dots(store, queries, opt.samples, opt.seed)).lambda;
  const auto sum = SumIndex::build(store);
  const auto max = MaxIndex::build(store);
  double sum_dots = 0.0, max_dots = 0.0;
  for (Index i = 1; i <= queries.size(); ++i) {
    sum_dots += static_cast<double>(search_sum(sum, queries.row(i), rho).stats.dot_products);
    max_dots += static_cast<double>(search_max(max, queries.row(i), rho).stats.dot_products);
  }
  t.empirical_sum = sum_dots / static_cast<double>(queries.size());
  t.empirical_max = max_dots / static_cast<double>(queries.size());
  t.expected_sum = theory::expected_tests_sum(store.size(), rho, t.lambda).expected_tests;
  t.c90 = theory::c_percentile(max, queries, rho, opt.c_percentile);
  t.expected_max_ub = theory::expected_tests_max_ub(store.size(), rho, t.lambda, std::max(1.0, t.c90)).expected_tests;
  return t;
}

inline constexpr const char* kCsvHeader =
    "query_id,variant,dot_products,visited_pools,boundary_rechecks,result_size,wall_time_us,precision,recall";

inline void write_csv(std::ostream& out, const BenchReport& report) {
  out << kCsvHeader << '\n';
  for (const auto& r : report.records) {
    out << r.query_id << ',' << to_string(r.variant) << ',' << r.dot_products << ',' << r.visited_pools << ','
        << r.boundary_rechecks << ',' << r.result_size << ',' << std::fixed << std::setprecision(3)
        << r.wall_time_s * 1e6 << std::defaultfloat << std::setprecision(6) << ',' << r.precision << ','
        << r.recall << '\n';
  }
}

/// key=value summary block.
inline void write_summary(std::ostream& out, const BenchReport& report) {
  const auto old = out.precision(10);
  out << "n=" << report.n << "\nd=" << report.d << "\nrho=" << report.rho << '\n';
  for (const auto& s : report.summaries) {
    const std::string p = to_string(s.variant) + ".";
    out << p << "queries=" << s.queries << '\n'
        << p << "mean_dot_products=" << s.mean_dot_products << '\n'
        << p << "speedup=" << static_cast<double>(report.n) / std::max(s.mean_dot_products, 1.0) << '\n'
        << p << "mean_query_time_us=" << s.mean_query_time_s * 1e6 << '\n'
        << p << "precision=" << s.precision << '\n'
        << p << "recall=" << s.recall << '\n'
        << p << "exact=" << (s.exact ? 1 : 0) << '\n'
        << p << "visited_pools=" << s.visited_pools << '\n';
    for (std::size_t r = 0; r < s.histogram.size(); ++r) {
      const auto& h = s.histogram[r];
      out << p << "round" << r << "=" << h.pruned << ',' << h.expanded << ',' << h.leaves << '\n';
    }
  }
  if (report.streaming) {
    const auto& ss = *report.streaming;
    out << "streaming.initial_size=" << ss.initial_size << "\nstreaming.final_size=" << ss.final_size
        << "\nstreaming.batch=" << ss.batch << "\nstreaming.queries=" << ss.queries
        << "\nstreaming.mean_insert_time_us=" << ss.mean_insert_time_s * 1e6
        << "\nstreaming.min_additions_per_point=" << ss.min_additions_per_point
        << "\nstreaming.max_additions_per_point=" << ss.max_additions_per_point << '\n';
  }
  if (report.theory) {
    const auto& t = *report.theory;
    out << "theory.lambda=" << t.lambda << "\ntheory.empirical_sum=" << t.empirical_sum
        << "\ntheory.expected_sum=" << t.expected_sum << "\ntheory.sum_ratio=" << t.sum_ratio()
        << "\ntheory.empirical_max=" << t.empirical_max << "\ntheory.c90=" << t.c90
        << "\ntheory.expected_max_ub=" << t.expected_max_ub << "\ntheory.max_ratio=" << t.max_ratio() << '\n';
  }
  out.precision(old);
}

}  // namespace gtnn::bench
