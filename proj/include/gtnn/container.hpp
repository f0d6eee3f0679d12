#pragma once

// Binary container shared by the store ("GTNN") and the persisted indexes
// ("GTNS", "GTNM"). All integers and floats are little-endian.
//
//   offset  size  field
//   0       4     magic
//   4       4     u32 version (= 1)
//   8       1     u8 flags
//   9       4     u32 dim
//   13      8     u64 count
//   21      ...   payload

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gtnn/error.hpp"

namespace gtnn::container {

inline constexpr std::uint32_t kVersion = 1;
inline constexpr std::size_t kHeaderBytes = 21;

using Magic = std::array<char, 4>;

inline constexpr Magic kStoreMagic{'G', 'T', 'N', 'N'};
inline constexpr Magic kSumIndexMagic{'G', 'T', 'N', 'S'};
inline constexpr Magic kMaxIndexMagic{'G', 'T', 'N', 'M'};

inline constexpr std::uint8_t kFlagAllowNegative = 0x1;
inline constexpr std::uint8_t kFlagWidePayload = 0x2;  // f64 payload instead of f32
inline constexpr std::uint8_t kFlagHasMin = 0x4;

struct Header {
  Magic magic{};
  std::uint32_t version = kVersion;
  std::uint8_t flags = 0;
  std::uint32_t dim = 0;
  std::uint64_t count = 0;
};

namespace detail {

template <typename U>
void put_le(std::ostream& out, U value) {
  std::array<char, sizeof(U)> bytes{};
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    bytes[i] = static_cast<char>((value >> (8 * i)) & 0xFF);
  }
  out.write(bytes.data(), bytes.size());
}

template <typename U>
U get_le(const unsigned char* p) {
  U value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    value |= static_cast<U>(p[i]) << (8 * i);
  }
  return value;
}

inline void read_exact(std::istream& in, void* dst, std::size_t bytes, std::string_view what) {
  in.read(static_cast<char*>(dst), static_cast<std::streamsize>(bytes));
  if (static_cast<std::size_t>(in.gcount()) != bytes) {
    throw Error(Errc::kTruncatedFile, "unexpected end of file while reading " + std::string(what));
  }
}

}  // namespace detail

inline void write_header(std::ostream& out, const Header& h) {
  out.write(h.magic.data(), h.magic.size());
  detail::put_le<std::uint32_t>(out, h.version);
  detail::put_le<std::uint8_t>(out, h.flags);
  detail::put_le<std::uint32_t>(out, h.dim);
  detail::put_le<std::uint64_t>(out, h.count);
}

/// Reads and validates a header. Throws BadMagic, VersionMismatch or TruncatedFile.
inline Header read_header(std::istream& in, const Magic& expected) {
  std::array<unsigned char, kHeaderBytes> raw{};
  in.read(reinterpret_cast<char*>(raw.data()), raw.size());
  const auto got = static_cast<std::size_t>(in.gcount());
  if (got >= 4 && std::memcmp(raw.data(), expected.data(), 4) != 0) {
    throw Error(Errc::kBadMagic, "expected magic '" + std::string(expected.data(), 4) + "'");
  }
  if (got != raw.size()) {
    throw Error(Errc::kTruncatedFile, "file shorter than the container header");
  }
  Header h;
  std::memcpy(h.magic.data(), raw.data(), 4);
  h.version = detail::get_le<std::uint32_t>(raw.data() + 4);
  h.flags = raw[8];
  h.dim = detail::get_le<std::uint32_t>(raw.data() + 9);
  h.count = detail::get_le<std::uint64_t>(raw.data() + 13);
  if (h.version != kVersion) {
    throw Error(Errc::kVersionMismatch, "unsupported container version " + std::to_string(h.version));
  }
  return h;
}

inline void write_f32(std::ostream& out, std::span<const float> values) {
  std::vector<char> buf(values.size() * 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto bits = std::bit_cast<std::uint32_t>(values[i]);
    for (std::size_t b = 0; b < 4; ++b) buf[4 * i + b] = static_cast<char>((bits >> (8 * b)) & 0xFF);
  }
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

inline void write_f64(std::ostream& out, std::span<const double> values) {
  std::vector<char> buf(values.size() * 8);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto bits = std::bit_cast<std::uint64_t>(values[i]);
    for (std::size_t b = 0; b < 8; ++b) buf[8 * i + b] = static_cast<char>((bits >> (8 * b)) & 0xFF);
  }
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

inline void read_f32(std::istream& in, std::span<float> dst) {
  std::vector<unsigned char> buf(dst.size() * 4);
  detail::read_exact(in, buf.data(), buf.size(), "f32 payload");
  for (std::size_t i = 0; i < dst.size(); ++i) {
    dst[i] = std::bit_cast<float>(detail::get_le<std::uint32_t>(buf.data() + 4 * i));
  }
}

inline void read_f64(std::istream& in, std::span<double> dst) {
  std::vector<unsigned char> buf(dst.size() * 8);
  detail::read_exact(in, buf.data(), buf.size(), "f64 payload");
  for (std::size_t i = 0; i < dst.size(); ++i) {
    dst[i] = std::bit_cast<double>(detail::get_le<std::uint64_t>(buf.data() + 8 * i));
  }
}

/// Payload element count as size_t, rejecting headers whose N*d cannot be addressed.
inline std::size_t payload_elements(const Header& h, std::size_t rows) {
  if (h.dim != 0 && rows > SIZE_MAX / h.dim) {
    throw Error(Errc::kTruncatedFile, "header declares an impossible payload size");
  }
  return rows * h.dim;
}

}  // namespace gtnn::container
