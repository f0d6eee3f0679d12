#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "gtnn/container.hpp"
#include "gtnn/error.hpp"
#include "gtnn/vecstore.hpp"

namespace gtnn {

using NodeId = std::uint32_t;
inline constexpr NodeId kNoNode = std::numeric_limits<NodeId>::max();

/// Left half of an n-member range [si, ei] ends at si + ⌊n/2⌋ − 1.
constexpr Index split_point(Index si, Index ei) { return si + (ei - si + 1) / 2 - 1; }

/// Binary interval tree over a store. Node [si, ei] with n > 2 members has
/// children [si, mid] and [mid+1, ei], mid = split_point(si, ei); ranges of
/// one or two members are leaves. Every node holds the coordinate-wise max of
/// its members and, for stores that allow negatives, the coordinate-wise min.
///
/// Immutable after build. Like SumIndex, keeps a non-owning pointer to its store.
class MaxIndex {
 public:
  struct Node {
    Index si = 0;
    Index ei = 0;
    NodeId left = kNoNode;
    NodeId right = kNoNode;

    std::size_t members() const noexcept { return ei - si + 1; }
    bool is_leaf() const noexcept { return left == kNoNode; }
  };

  static MaxIndex build(const VectorStore& store) {
    if (store.empty()) throw Error(Errc::kEmptyStore, "cannot index an empty store");
    MaxIndex index(store);
    const std::size_t nodes = node_count(store.size());
    if (nodes >= kNoNode) throw Error(Errc::kInvalidArgument, "store too large for 32-bit node ids");
    index.nodes_.reserve(nodes);
    index.max_.resize(nodes * index.dim_);
    if (index.has_min_) index.min_.resize(nodes * index.dim_);
    index.build_node(1, store.size());
    return index;
  }

  /// Nodes the tree has for n members.
  static std::size_t node_count(std::size_t n) {
    if (n <= 2) return 1;
    return 1 + node_count(n / 2) + node_count(n - n / 2);
  }

  std::size_t size() const noexcept { return count_; }
  std::size_t dim() const noexcept { return dim_; }
  bool has_min() const noexcept { return has_min_; }
  const VectorStore& store() const noexcept { return *store_; }

  NodeId root() const noexcept { return 0; }
  std::size_t node_total() const noexcept { return nodes_.size(); }
  const Node& node(NodeId id) const { return nodes_.at(id); }

  std::span<const float> max_vec(NodeId id) const { return {max_.data() + std::size_t{id} * dim_, dim_}; }
  std::span<const float> min_vec(NodeId id) const {
    if (!has_min_) throw Error(Errc::kUnsupportedNegativeQuery, "index was built without min vectors");
    return {min_.data() + std::size_t{id} * dim_, dim_};
  }

  /// Upper bound on q·f_i over the node's members: Σ_j q_j·max_j for q_j ≥ 0
  /// and q_j·min_j for q_j < 0.
  double pool_bound_dot(std::span<const float> q, NodeId id) const {
    if (q.size() != dim_) throw Error(Errc::kDimensionMismatch, "query dim " + std::to_string(q.size()));
    if (id >= nodes_.size()) throw Error(Errc::kRangeOutOfBounds, "node " + std::to_string(id));
    const float* hi = max_.data() + std::size_t{id} * dim_;
    if (!has_min_) {
      double acc = 0.0;
      for (std::size_t j = 0; j < dim_; ++j) {
        if (q[j] < 0.0f) throw Error(Errc::kUnsupportedNegativeQuery, "negative query needs min vectors");
        acc += static_cast<double>(q[j]) * static_cast<double>(hi[j]);
      }
      return acc;
    }
    const float* lo = min_.data() + std::size_t{id} * dim_;
    double acc = 0.0;
    for (std::size_t j = 0; j < dim_; ++j) {
      const float bound = q[j] < 0.0f ? lo[j] : hi[j];
      acc += static_cast<double>(q[j]) * static_cast<double>(bound);
    }
    return acc;
  }

  /// Persisted form: container magic "GTNM", count = store rows, f32 payload of
  /// all node max vectors in node order followed by all min vectors (if any).
  void save(std::ostream& out) const {
    container::Header h;
    h.magic = container::kMaxIndexMagic;
    h.flags = has_min_ ? container::kFlagHasMin : 0;
    h.dim = static_cast<std::uint32_t>(dim_);
    h.count = count_;
    container::write_header(out, h);
    container::write_f32(out, max_);
    if (has_min_) container::write_f32(out, min_);
    if (!out) throw Error(Errc::kIo, "write failed");
  }

  void save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::kIo, "cannot open '" + path.string() + "' for writing");
    save(out);
  }

  static MaxIndex load(std::istream& in, const VectorStore& store) {
    const auto h = container::read_header(in, container::kMaxIndexMagic);
    if (h.dim != store.dim()) throw Error(Errc::kDimensionMismatch, "index dim differs from store dim");
    if (h.count != store.size()) throw Error(Errc::kStaleIndex, "index row count differs from store");
    if (h.count == 0) throw Error(Errc::kEmptyStore, "persisted index is empty");
    if (((h.flags & container::kFlagHasMin) != 0) != store.allow_negative()) {
      throw Error(Errc::kVersionMismatch, "min-vector flag does not match the store");
    }
    MaxIndex index(store);
    const std::size_t nodes = node_count(store.size());
    index.nodes_.reserve(nodes);
    index.layout(1, store.size());
    index.max_.resize(container::payload_elements(h, nodes));
    container::read_f32(in, index.max_);
    if (index.has_min_) {
      index.min_.resize(index.max_.size());
      container::read_f32(in, index.min_);
    }
    return index;
  }

  static MaxIndex load(const std::filesystem::path& path, const VectorStore& store) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::kIo, "cannot open '" + path.string() + "'");
    return load(in, store);
  }

  /// Throws StaleIndex if the store grew since build (no streaming support).
  void check_fresh() const {
    if (store_->size() != count_) throw Error(Errc::kStaleIndex, "max index must be rebuilt after appends");
  }

 private:
  explicit MaxIndex(const VectorStore& store)
      : store_(&store), dim_(store.dim()), count_(store.size()), has_min_(store.allow_negative()) {}

  // Creates the node skeleton in pre-order without touching vectors.
  NodeId layout(Index si, Index ei) {
    const auto id = static_cast<NodeId>(nodes_.size());
    nodes_.push_back({si, ei, kNoNode, kNoNode});
    if (ei - si + 1 > 2) {
      const Index mid = split_point(si, ei);
      const NodeId l = layout(si, mid);
      const NodeId r = layout(mid + 1, ei);
      nodes_[id].left = l;
      nodes_[id].right = r;
    }
    return id;
  }

  NodeId build_node(Index si, Index ei) {
    const auto id = static_cast<NodeId>(nodes_.size());
    nodes_.push_back({si, ei, kNoNode, kNoNode});
    float* hi = max_.data() + std::size_t{id} * dim_;
    float* lo = has_min_ ? min_.data() + std::size_t{id} * dim_ : nullptr;
    if (ei - si + 1 <= 2) {
      auto first = store_->row(si);
      std::copy(first.begin(), first.end(), hi);
      if (lo) std::copy(first.begin(), first.end(), lo);
      if (ei != si) merge(hi, lo, store_->row(ei), store_->row(ei));
      return id;
    }
    const Index mid = split_point(si, ei);
    const NodeId l = build_node(si, mid);
    const NodeId r = build_node(mid + 1, ei);
    nodes_[id].left = l;
    nodes_[id].right = r;
    std::copy_n(max_.data() + std::size_t{l} * dim_, dim_, hi);
    if (lo) std::copy_n(min_.data() + std::size_t{l} * dim_, dim_, lo);
    merge(hi, lo, max_vec(r), has_min_ ? min_vec(r) : std::span<const float>{});
    return id;
  }

  void merge(float* hi, float* lo, std::span<const float> other_hi, std::span<const float> other_lo) const {
    for (std::size_t j = 0; j < dim_; ++j) hi[j] = std::max(hi[j], other_hi[j]);
    if (lo) {
      for (std::size_t j = 0; j < dim_; ++j) lo[j] = std::min(lo[j], other_lo[j]);
    }
  }

  const VectorStore* store_;
  std::size_t dim_;
  std::size_t count_;
  bool has_min_;
  std::vector<Node> nodes_;
  std::vector<float> max_;
  std::vector<float> min_;
};

}  // namespace gtnn
