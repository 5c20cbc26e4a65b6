#pragma once

// Binary feature-vector container ("FGATFEAT").
//
//   bytes 0..7   magic "FGATFEAT"
//   u32          version (1)
//   u32          record count
//   u32          dim
//   count x { u64 item_id, dim x f32 }
//
// All integers and floats little-endian. Floats are copied bit-for-bit, so
// write -> read -> write is byte-identical.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "fgat/core.hpp"

namespace fgat {

inline constexpr std::array<char, 8> kFeatureMagic = {'F', 'G', 'A', 'T', 'F', 'E', 'A', 'T'};
inline constexpr std::uint32_t kFeatureVersion = 1;

struct FeatureTable {
  std::uint32_t dim = 0;
  std::vector<std::pair<Id, std::vector<float>>> rows;

  bool operator==(const FeatureTable&) const = default;
};

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

inline void put_f32(std::string& out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }

/// Bounds-checked little-endian reader over an in-memory buffer.
class ByteReader {
 public:
  ByteReader(const std::string& bytes, std::string source)
      : bytes_(bytes), source_(std::move(source)) {}

  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) {
      throw DataError(ErrorKind::Malformed, source_ + ": truncated at byte " + std::to_string(pos_));
    }
  }

  std::string raw(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }

  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }

  float f32() { return std::bit_cast<float>(u32()); }

  bool done() const { return pos_ == bytes_.size(); }
  std::size_t pos() const { return pos_; }
  const std::string& source() const { return source_; }

 private:
  const std::string& bytes_;
  std::string source_;
  std::size_t pos_ = 0;
};

inline std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(ErrorKind::Io, "cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file_bytes(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError(ErrorKind::Io, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError(ErrorKind::Io, "write failed for " + path.string());
}

}  // namespace detail

inline std::string encode_features(const FeatureTable& table) {
  std::string out(kFeatureMagic.begin(), kFeatureMagic.end());
  detail::put_u32(out, kFeatureVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(table.rows.size()));
  detail::put_u32(out, table.dim);
  for (const auto& [id, values] : table.rows) {
    if (values.size() != table.dim) {
      throw DataError(ErrorKind::DimensionMismatch,
                      "feature row for id " + std::to_string(id) + " has " +
                          std::to_string(values.size()) + " values, table dim is " +
                          std::to_string(table.dim));
    }
    detail::put_u64(out, id);
    for (float f : values) detail::put_f32(out, f);
  }
  return out;
}

inline FeatureTable decode_features(const std::string& bytes, const std::string& source = "<memory>") {
  detail::ByteReader in(bytes, source);
  const std::string magic = in.raw(kFeatureMagic.size());
  if (std::memcmp(magic.data(), kFeatureMagic.data(), kFeatureMagic.size()) != 0) {
    throw DataError(ErrorKind::Malformed, source + ": bad magic, expected FGATFEAT");
  }
  const std::uint32_t version = in.u32();
  if (version != kFeatureVersion) {
    throw DataError(ErrorKind::Malformed, source + ": unsupported version " + std::to_string(version));
  }
  const std::uint32_t count = in.u32();
  FeatureTable table;
  table.dim = in.u32();
  table.rows.reserve(count);
  for (std::uint32_t r = 0; r < count; ++r) {
    const Id id = in.u64();
    std::vector<float> values(table.dim);
    for (auto& v : values) v = in.f32();
    table.rows.emplace_back(id, std::move(values));
  }
  if (!in.done()) {
    throw DataError(ErrorKind::Malformed, source + ": trailing bytes after record " + std::to_string(count));
  }
  return table;
}

inline void write_features(const std::filesystem::path& path, const FeatureTable& table) {
  detail::write_file_bytes(path, encode_features(table));
}

inline FeatureTable read_features(const std::filesystem::path& path) {
  return decode_features(detail::read_file_bytes(path), path.string());
}

}  // namespace fgat
