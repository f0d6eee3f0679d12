#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "gtnn/container.hpp"
#include "gtnn/error.hpp"
#include "gtnn/vecstore.hpp"

namespace gtnn {

/// Cumulative sums f̃_i = f_1 + ... + f_i over a store, kept in double.
///
/// Any contiguous pool sum is f̃_ei − f̃_{si−1}; f̃_0 is stored explicitly as
/// the zero row so ranges starting at 1 need no special case.
///
/// The index keeps a non-owning pointer to the store it was built from (the
/// search reads individual members through it). The store must outlive the
/// index, and both must see the same appends.
class SumIndex {
 public:
  static SumIndex build(const VectorStore& store) {
    if (store.empty()) throw Error(Errc::kEmptyStore, "cannot index an empty store");
    if (store.allow_negative()) {
      throw Error(Errc::kNegativeValue, "sum pooling needs non-negative data; use the max index");
    }
    SumIndex index(store);
    index.prefix_.reserve((store.size() + 1) * store.dim());
    for (Index i = 1; i <= store.size(); ++i) index.accumulate(store.row(i));
    index.additions_ = 0;
    return index;
  }

  std::size_t size() const noexcept { return count_; }
  std::size_t dim() const noexcept { return dim_; }
  const VectorStore& store() const noexcept { return *store_; }

  /// f̃_i for i in [0, size()].
  std::span<const double> prefix(Index i) const {
    if (i > count_) throw Error(Errc::kRangeOutOfBounds, "prefix " + std::to_string(i));
    return {prefix_.data() + i * dim_, dim_};
  }

  /// q · (f̃_ei − f̃_{si−1}), i.e. the summed similarity of members si..ei.
  double pool_dot(std::span<const float> q, Index si, Index ei) const {
    if (q.size() != dim_) throw Error(Errc::kDimensionMismatch, "query dim " + std::to_string(q.size()));
    if (si < 1 || si > ei || ei > count_) {
      throw Error(Errc::kRangeOutOfBounds,
                  "pool [" + std::to_string(si) + ", " + std::to_string(ei) + "] of " + std::to_string(count_));
    }
    const double* hi = prefix_.data() + ei * dim_;
    const double* lo = prefix_.data() + (si - 1) * dim_;
    double acc = 0.0;
    for (std::size_t j = 0; j < dim_; ++j) acc += static_cast<double>(q[j]) * (hi[j] - lo[j]);
    return acc;
  }

  /// Adds f̃_{N+1} = f̃_N + v. Existing rows are untouched. The caller appends
  /// `v` to the backing store as well.
  void append(const FeatureVector& v) {
    if (v.dim() != dim_) throw Error(Errc::kDimensionMismatch, "vector dim " + std::to_string(v.dim()));
    if (v.has_negative()) throw Error(Errc::kNegativeValue, "sum index only accepts non-negative vectors");
    accumulate(v.values());
  }

  /// Vector-element additions performed by `append` since build.
  std::uint64_t additions() const noexcept { return additions_; }

  /// Throws StaleIndex unless the index covers exactly the store's rows.
  void check_fresh() const {
    if (store_->size() != count_) {
      throw Error(Errc::kStaleIndex, "index covers " + std::to_string(count_) + " rows, store has " +
                                         std::to_string(store_->size()));
    }
  }

  /// Largest |f̃_i − (f̃_{i−1} + f_i)| against the backing store.
  double max_recurrence_error() const {
    double worst = 0.0;
    for (Index i = 1; i <= count_; ++i) {
      auto f = store_->row(i);
      auto cur = prefix(i);
      auto prev = prefix(i - 1);
      for (std::size_t j = 0; j < dim_; ++j) worst = std::max(worst, std::abs(cur[j] - (prev[j] + f[j])));
    }
    return worst;
  }

  /// Persisted form: container magic "GTNS", f64 payload of rows f̃_1..f̃_N.
  void save(std::ostream& out) const {
    container::Header h;
    h.magic = container::kSumIndexMagic;
    h.flags = container::kFlagWidePayload;
    h.dim = static_cast<std::uint32_t>(dim_);
    h.count = count_;
    container::write_header(out, h);
    container::write_f64(out, std::span<const double>(prefix_).subspan(dim_));
    if (!out) throw Error(Errc::kIo, "write failed");
  }

  void save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::kIo, "cannot open '" + path.string() + "' for writing");
    save(out);
  }

  /// Loads a persisted index and binds it to `store`, which must match it.
  static SumIndex load(std::istream& in, const VectorStore& store) {
    const auto h = container::read_header(in, container::kSumIndexMagic);
    if ((h.flags & container::kFlagWidePayload) == 0) throw Error(Errc::kVersionMismatch, "expected f64 payload");
    if (h.dim != store.dim()) throw Error(Errc::kDimensionMismatch, "index dim differs from store dim");
    if (h.count != store.size()) throw Error(Errc::kStaleIndex, "index row count differs from store");
    if (h.count == 0) throw Error(Errc::kEmptyStore, "persisted index is empty");
    SumIndex index(store);
    index.count_ = h.count;
    index.prefix_.assign(container::payload_elements(h, h.count + 1), 0.0);
    container::read_f64(in, std::span<double>(index.prefix_).subspan(index.dim_));
    return index;
  }

  static SumIndex load(const std::filesystem::path& path, const VectorStore& store) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::kIo, "cannot open '" + path.string() + "'");
    return load(in, store);
  }

 private:
  explicit SumIndex(const VectorStore& store) : store_(&store), dim_(store.dim()), prefix_(store.dim(), 0.0) {}

  void accumulate(std::span<const float> v) {
    const std::size_t base = prefix_.size() - dim_;
    prefix_.resize(prefix_.size() + dim_);
    double* prev = prefix_.data() + base;
    double* next = prev + dim_;
    for (std::size_t j = 0; j < dim_; ++j) {
      next[j] = prev[j] + static_cast<double>(v[j]);
      ++additions_;
    }
    ++count_;
  }

  const VectorStore* store_;
  std::size_t dim_;
  std::size_t count_ = 0;
  std::vector<double> prefix_;
  std::uint64_t additions_ = 0;
};

}  // namespace gtnn
