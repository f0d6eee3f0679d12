#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "gtnn/container.hpp"
#include "gtnn/error.hpp"

namespace gtnn {

/// 1-based position of a vector in a store.
using Index = std::size_t;

/// Inner product accumulated in double. Every similarity in the library goes
/// through this function so that equal inputs give bit-identical results.
template <typename A, typename B>
double dot(std::span<const A> a, std::span<const B> b) {
  double acc = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    acc += static_cast<double>(a[j]) * static_cast<double>(b[j]);
  }
  return acc;
}

inline double dot(std::span<const float> a, std::span<const float> b) { return dot<float, float>(a, b); }

/// Tolerance on |‖v‖₂ − 1| for stored vectors.
inline constexpr double kNormTolerance = 1e-6;

/// A unit-L2-norm vector in single precision. Instances only come out of
/// `normalize` or out of a store, so the norm invariant always holds.
class FeatureVector {
 public:
  FeatureVector() = default;

  std::size_t dim() const noexcept { return values_.size(); }
  std::span<const float> values() const noexcept { return values_; }
  float operator[](std::size_t j) const { return values_[j]; }
  bool has_negative() const {
    return std::any_of(values_.begin(), values_.end(), [](float x) { return x < 0.0f; });
  }

  friend bool operator==(const FeatureVector&, const FeatureVector&) = default;

  /// Wraps values already known to be unit norm (within kNormTolerance).
  static FeatureVector from_unit(std::vector<float> values) {
    FeatureVector v;
    v.values_ = std::move(values);
    return v;
  }

 private:
  std::vector<float> values_;
};

/// Scales `v` to unit L2 norm. Throws ZeroVector or, unless `allow_negative`,
/// NegativeValue.
template <typename T>
FeatureVector normalize(std::span<const T> v, bool allow_negative = false) {
  if (v.empty()) throw Error(Errc::kDimensionMismatch, "vector has dimension 0");
  double sq = 0.0;
  for (const T x : v) {
    const double xd = static_cast<double>(x);
    if (!std::isfinite(xd)) throw Error(Errc::kInvalidArgument, "non-finite coordinate");
    if (!allow_negative && xd < 0.0) throw Error(Errc::kNegativeValue, "negative coordinate in non-negative mode");
    sq += xd * xd;
  }
  if (sq == 0.0) throw Error(Errc::kZeroVector, "cannot normalize a zero vector");
  const double norm = std::sqrt(sq);
  std::vector<float> out(v.size());
  for (std::size_t j = 0; j < v.size(); ++j) out[j] = static_cast<float>(static_cast<double>(v[j]) / norm);
  return FeatureVector::from_unit(std::move(out));
}

inline FeatureVector normalize(std::initializer_list<double> v, bool allow_negative = false) {
  return normalize(std::span<const double>(v.begin(), v.size()), allow_negative);
}

inline FeatureVector normalize(const std::vector<double>& v, bool allow_negative = false) {
  return normalize(std::span<const double>(v), allow_negative);
}

inline FeatureVector normalize(const std::vector<float>& v, bool allow_negative = false) {
  return normalize(std::span<const float>(v), allow_negative);
}

/// Append-only, row-major collection of unit vectors of one dimension.
///
/// Single writer, many readers: concurrent reads are safe, `append` needs
/// exclusive access.
class VectorStore {
 public:
  explicit VectorStore(std::size_t dim, bool allow_negative = false)
      : dim_(dim), allow_negative_(allow_negative) {
    if (dim == 0) throw Error(Errc::kDimensionMismatch, "store dimension must be positive");
    if (dim > std::numeric_limits<std::uint32_t>::max()) {
      throw Error(Errc::kDimensionMismatch, "store dimension exceeds u32");
    }
  }

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return data_.size() / dim_; }
  bool empty() const noexcept { return data_.empty(); }
  bool allow_negative() const noexcept { return allow_negative_; }

  /// Row `i` (1-based).
  std::span<const float> row(Index i) const {
    if (i < 1 || i > size()) throw Error(Errc::kRangeOutOfBounds, "row " + std::to_string(i) + " of " + std::to_string(size()));
    return {data_.data() + (i - 1) * dim_, dim_};
  }

  FeatureVector vector(Index i) const {
    auto r = row(i);
    return FeatureVector::from_unit({r.begin(), r.end()});
  }

  std::span<const float> values() const noexcept { return data_; }

  void reserve(std::size_t rows) { data_.reserve(rows * dim_); }

  /// Throws unless `v` may be stored here.
  void validate(const FeatureVector& v) const {
    if (v.dim() != dim_) {
      throw Error(Errc::kDimensionMismatch, "vector dim " + std::to_string(v.dim()) + " != store dim " + std::to_string(dim_));
    }
    if (!allow_negative_ && v.has_negative()) throw Error(Errc::kNegativeValue, "store does not allow negative values");
  }

  /// Appends and returns the new 1-based index (= new size).
  Index append(const FeatureVector& v) {
    validate(v);
    data_.insert(data_.end(), v.values().begin(), v.values().end());
    return size();
  }

  /// Normalizes raw values under this store's rules, then appends.
  template <typename T>
  Index append_raw(std::span<const T> raw) {
    if (raw.size() != dim_) throw Error(Errc::kDimensionMismatch, "raw vector has wrong dimension");
    return append(normalize(raw, allow_negative_));
  }

  friend bool operator==(const VectorStore&, const VectorStore&) = default;

  void save(std::ostream& out) const {
    container::Header h;
    h.magic = container::kStoreMagic;
    h.flags = allow_negative_ ? container::kFlagAllowNegative : 0;
    h.dim = static_cast<std::uint32_t>(dim_);
    h.count = size();
    container::write_header(out, h);
    container::write_f32(out, data_);
    if (!out) throw Error(Errc::kIo, "write failed");
  }

  void save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::kIo, "cannot open '" + path.string() + "' for writing");
    save(out);
  }

  /// Reads a store. Rows whose norm is off by more than kNormTolerance are
  /// re-normalized; zero rows and disallowed negatives are rejected.
  static VectorStore load(std::istream& in) {
    const auto h = container::read_header(in, container::kStoreMagic);
    if (h.dim == 0) throw Error(Errc::kDimensionMismatch, "stored dimension is 0");
    VectorStore store(h.dim, (h.flags & container::kFlagAllowNegative) != 0);
    const std::size_t n = container::payload_elements(h, h.count);
    check_remaining(in, n * 4);
    store.data_.resize(n);
    container::read_f32(in, store.data_);
    for (std::size_t i = 0; i < h.count; ++i) store.repair_row(i);
    return store;
  }

  static VectorStore load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::kIo, "cannot open '" + path.string() + "'");
    return load(in);
  }

  /// Plain-text import: one vector per line, whitespace-separated decimals.
  /// Blank lines and lines starting with '#' are skipped. `dim` = 0 infers the
  /// dimension from the first vector.
  static VectorStore import_text(std::istream& in, bool allow_negative = false, std::size_t dim = 0) {
    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto first = line.find_first_not_of(" \t\r");
      if (first == std::string::npos || line[first] == '#') continue;
      std::istringstream ls(line);
      std::vector<double> row;
      std::string tok;
      while (ls >> tok) {
        try {
          std::size_t used = 0;
          row.push_back(std::stod(tok, &used));
          if (used != tok.size()) throw std::invalid_argument(tok);
        } catch (const std::exception&) {
          throw Error(Errc::kParse, "line " + std::to_string(lineno) + ": bad number '" + tok + "'");
        }
      }
      if (dim == 0) dim = row.size();
      if (row.size() != dim) {
        throw Error(Errc::kDimensionMismatch, "line " + std::to_string(lineno) + " has " + std::to_string(row.size()) +
                                                  " values, expected " + std::to_string(dim));
      }
      rows.push_back(std::move(row));
    }
    if (dim == 0) throw Error(Errc::kParse, "no vectors in text input");
    VectorStore store(dim, allow_negative);
    store.reserve(rows.size());
    for (const auto& r : rows) store.append_raw(std::span<const double>(r));
    return store;
  }

  /// Loads either format, chosen by the leading magic bytes.
  static VectorStore read_any(const std::filesystem::path& path, bool allow_negative = false) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::kIo, "cannot open '" + path.string() + "'");
    std::array<char, 4> head{};
    in.read(head.data(), head.size());
    const bool binary = in.gcount() == 4 && head == container::kStoreMagic;
    in.clear();
    in.seekg(0);
    if (binary) return load(in);
    return import_text(in, allow_negative);
  }

 private:
  static void check_remaining(std::istream& in, std::size_t bytes) {
    const auto here = in.tellg();
    if (here < 0) return;
    in.seekg(0, std::ios::end);
    const auto end = in.tellg();
    in.seekg(here);
    if (end >= here && static_cast<std::size_t>(end - here) < bytes) {
      throw Error(Errc::kTruncatedFile, "payload shorter than header declares");
    }
  }

  void repair_row(std::size_t r) {
    auto* p = data_.data() + r * dim_;
    double sq = 0.0;
    for (std::size_t j = 0; j < dim_; ++j) {
      if (!std::isfinite(p[j])) throw Error(Errc::kInvalidArgument, "non-finite value in row " + std::to_string(r + 1));
      if (!allow_negative_ && p[j] < 0.0f) {
        throw Error(Errc::kNegativeValue, "negative value in row " + std::to_string(r + 1));
      }
      sq += static_cast<double>(p[j]) * p[j];
    }
    if (sq == 0.0) throw Error(Errc::kZeroVector, "zero row " + std::to_string(r + 1));
    const double norm = std::sqrt(sq);
    if (std::abs(norm - 1.0) > kNormTolerance) {
      for (std::size_t j = 0; j < dim_; ++j) p[j] = static_cast<float>(p[j] / norm);
    }
  }

  std::size_t dim_;
  bool allow_negative_;
  std::vector<float> data_;
};

}  // namespace gtnn
