#pragma once

// Named-section tensor files.
//
//   magic (8 bytes), u32 version, u32 section count, then per section:
//   u32 name length, name bytes, u32 rows, u32 cols, rows*cols values
//   (row-major, little-endian).
//
// "FGATCKPT" checkpoints carry f32 payloads; "FGATSTAT" training-state files
// carry f64 payloads so a resumed run continues from the exact state.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "fgat/feature_file.hpp"
#include "fgat/model.hpp"

namespace fgat {

inline constexpr std::array<char, 8> kCheckpointMagic = {'F', 'G', 'A', 'T', 'C', 'K', 'P', 'T'};
inline constexpr std::array<char, 8> kStateMagic = {'F', 'G', 'A', 'T', 'S', 'T', 'A', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Section {
  std::string name;
  Matrix value;
};

enum class Precision { F32, F64 };

inline std::string encode_sections(const std::array<char, 8>& magic, const std::vector<Section>& sections,
                                   Precision precision) {
  std::string out(magic.begin(), magic.end());
  detail::put_u32(out, kCheckpointVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(sections.size()));
  for (const auto& s : sections) {
    detail::put_u32(out, static_cast<std::uint32_t>(s.name.size()));
    out += s.name;
    detail::put_u32(out, static_cast<std::uint32_t>(s.value.rows()));
    detail::put_u32(out, static_cast<std::uint32_t>(s.value.cols()));
    for (Eigen::Index k = 0; k < s.value.size(); ++k) {
      const double v = s.value.data()[k];
      if (precision == Precision::F32) {
        detail::put_f32(out, static_cast<float>(v));
      } else {
        detail::put_u64(out, std::bit_cast<std::uint64_t>(v));
      }
    }
  }
  return out;
}

inline std::vector<Section> decode_sections(const std::array<char, 8>& magic, const std::string& bytes,
                                            Precision precision, const std::string& source) {
  detail::ByteReader in(bytes, source);
  const std::string head = in.raw(magic.size());
  if (std::memcmp(head.data(), magic.data(), magic.size()) != 0) {
    throw DataError(ErrorKind::Malformed, source + ": bad magic, expected " + std::string(magic.begin(), magic.end()));
  }
  const std::uint32_t version = in.u32();
  if (version != kCheckpointVersion) {
    throw DataError(ErrorKind::Malformed, source + ": unsupported version " + std::to_string(version));
  }
  const std::uint32_t count = in.u32();
  std::vector<Section> sections;
  for (std::uint32_t s = 0; s < count; ++s) {
    Section sec;
    sec.name = in.raw(in.u32());
    const auto rows = static_cast<Eigen::Index>(in.u32());
    const auto cols = static_cast<Eigen::Index>(in.u32());
    in.need(static_cast<std::size_t>(rows * cols) * (precision == Precision::F32 ? 4 : 8));
    sec.value.resize(rows, cols);
    for (Eigen::Index k = 0; k < sec.value.size(); ++k) {
      sec.value.data()[k] = precision == Precision::F32 ? static_cast<double>(in.f32())
                                                        : std::bit_cast<double>(in.u64());
    }
    sections.push_back(std::move(sec));
  }
  if (!in.done()) throw DataError(ErrorKind::Malformed, source + ": trailing bytes");
  return sections;
}

inline std::vector<Section> model_sections(const ModelState& m) {
  std::vector<Section> out;
  for (const auto& p : m.params()) out.push_back({p.name, p.value});
  return out;
}

/// Recovers the architecture from section names and shapes.
inline ModelDims infer_dims(const std::vector<Section>& sections) {
  auto get = [&](const std::string& name) -> const Matrix& {
    for (const auto& s : sections) {
      if (s.name == name) return s.value;
    }
    throw DataError(ErrorKind::Malformed, "checkpoint lacks section " + name);
  };
  ModelDims d;
  d.n_users = static_cast<std::size_t>(get("embed.user").rows());
  d.embed_dim = static_cast<std::size_t>(get("embed.user").cols());
  d.n_outfits = static_cast<std::size_t>(get("embed.outfit").rows());
  d.visual_hidden = static_cast<std::size_t>(get("fuse.visual.w1").rows());
  d.visual_dim = static_cast<std::size_t>(get("fuse.visual.w1").cols());
  d.reduced_dim = static_cast<std::size_t>(get("fuse.visual.w2").rows());
  d.text_dim = static_cast<std::size_t>(get("fuse.text.w").cols());
  d.views = static_cast<std::size_t>(get("rview.attention.outer").rows());
  d.view_hidden = static_cast<std::size_t>(get("rview.attention.outer").cols());
  d.heads = 0;
  d.n_categories = 0;
  for (const auto& s : sections) {
    if (s.name.starts_with("prop.item_item.head") && s.name.ends_with(".transform")) ++d.heads;
    if (s.name.starts_with("fuse.category") && s.name.ends_with(".w")) ++d.n_categories;
  }
  d.category_aware = d.n_categories > 0;
  return d;
}

inline ModelState model_from_sections(const std::vector<Section>& sections, const std::string& source) {
  ModelState m(infer_dims(sections));
  if (sections.size() != m.params().size()) {
    throw DataError(ErrorKind::Malformed, source + ": section count does not match the architecture");
  }
  for (std::size_t i = 0; i < sections.size(); ++i) {
    auto& p = m.param(i);
    if (sections[i].name != p.name || sections[i].value.rows() != p.value.rows() ||
        sections[i].value.cols() != p.value.cols()) {
      throw DataError(ErrorKind::Malformed, source + ": unexpected section " + sections[i].name);
    }
    p.value = sections[i].value;
  }
  return m;
}

inline std::string encode_checkpoint(const ModelState& m) {
  return encode_sections(kCheckpointMagic, model_sections(m), Precision::F32);
}

inline ModelState decode_checkpoint(const std::string& bytes, const std::string& source = "<memory>") {
  return model_from_sections(decode_sections(kCheckpointMagic, bytes, Precision::F32, source), source);
}

inline void save_checkpoint(const std::filesystem::path& path, const ModelState& m) {
  detail::write_file_bytes(path, encode_checkpoint(m));
}

inline ModelState load_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw DataError(ErrorKind::NotFound, "checkpoint " + path.string() + " not found");
  return decode_checkpoint(detail::read_file_bytes(path), path.string());
}

}  // namespace fgat
