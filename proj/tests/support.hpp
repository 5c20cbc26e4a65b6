#pragma once

// Small hand-built datasets and helpers shared by the test binaries.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fgat/fgat.hpp"

namespace fgat::test {

inline ItemRecord random_item(std::uint32_t category, std::size_t dv, std::size_t dt, Rng& rng) {
  ItemRecord item;
  item.category = category;
  for (std::size_t k = 0; k < dv; ++k) item.visual.push_back(static_cast<float>(rng.normal()));
  for (std::size_t k = 0; k < dt; ++k) item.textual.push_back(static_cast<float>(rng.normal()));
  return item;
}

/// Categories pants(0), shirt(1), shoes(2). Items 1..5 with categories
/// shirt, pants, shoes, shirt, pants. Outfits 10 = {1,2}, 11 = {3,4,5},
/// 12 = {1,3}. Users 100 and 200 with four interactions in total.
inline Dataset hand_dataset(std::size_t dv = 4, std::size_t dt = 3, std::uint64_t seed = 1) {
  Rng rng(seed);
  Dataset ds;
  ds.categories = {"pants", "shirt", "shoes"};
  const std::uint32_t cats[] = {1, 0, 2, 1, 0};
  for (Id i = 1; i <= 5; ++i) ds.items.emplace(i, random_item(cats[i - 1], dv, dt, rng));
  ds.outfits = {{10, {1, 2}}, {11, {3, 4, 5}}, {12, {1, 3}}};
  ds.users = {100, 200};
  ds.interactions = {{100, 10}, {100, 11}, {200, 11}, {200, 12}};
  return ds;
}

/// A deliberately tiny synthetic set for gradient and invariant checks.
inline SyntheticConfig tiny_synthetic_config() {
  SyntheticConfig c;
  c.users = 4;
  c.outfits = 8;
  c.items = 12;
  c.categories = 3;
  c.clusters = 2;
  c.visual_dim = 6;
  c.text_dim = 5;
  c.min_outfit_size = 2;
  c.max_outfit_size = 3;
  c.interactions_per_user = 5;
  c.purity = 0.8;
  c.unused_items = 2;
  return c;
}

inline TrainConfig small_train_config(std::size_t embed_dim = 8, std::size_t heads = 2, std::size_t views = 3) {
  TrainConfig tc;
  tc.embed_dim = embed_dim;
  tc.heads = heads;
  tc.views = views;
  return tc;
}

/// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("fgat_" + tag + "_" + std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  detail::write_file_bytes(path, text);
}

}  // namespace fgat::test
