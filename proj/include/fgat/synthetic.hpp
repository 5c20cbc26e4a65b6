#pragma once

// Planted-structure dataset generator for desk-scale experiments.
//
// Users, outfits and "styled" items are split into `clusters` style groups.
// An outfit draws distinct categories and, for each, an item of its own
// style. A user interacts mostly with outfits of its style; the cross-style
// share is exactly floor((1 - purity) * interactions_per_user).
//
// Item features are style mean + category mean + isotropic noise, so outfit
// compatibility is recoverable from features. The last `unused_items` items
// belong to no outfit and get an off-style mean: they play the part of
// catalogue items that never appear in a purchased outfit.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <set>
#include <string>
#include <vector>

#include "fgat/dataset.hpp"
#include "fgat/rng.hpp"

namespace fgat {

struct SyntheticConfig {
  std::size_t users = 20;
  std::size_t outfits = 40;
  std::size_t items = 60;
  std::size_t categories = 6;
  std::size_t clusters = 2;
  std::size_t visual_dim = 64;
  std::size_t text_dim = 32;
  std::size_t min_outfit_size = 3;
  std::size_t max_outfit_size = 4;
  std::size_t interactions_per_user = 10;
  double purity = 0.9;
  std::size_t unused_items = 12;
  /// Stddev of the per-style and per-category mean vectors.
  double separation = 1.0;
  /// Stddev of per-item feature noise.
  double noise = 1.0;
};

/// Style of user/outfit index `i`.
inline std::size_t synthetic_cluster(std::size_t i, std::size_t clusters) { return i % clusters; }

inline void check_config(const SyntheticConfig& cfg) {
  auto fail = [](const std::string& msg) { throw DataError(ErrorKind::InvalidArgument, "synthetic config: " + msg); };
  if (cfg.clusters == 0) fail("clusters must be positive");
  if (cfg.users == 0 || cfg.outfits == 0 || cfg.items == 0 || cfg.categories == 0) fail("counts must be positive");
  if (cfg.items < cfg.categories) fail("fewer items than categories");
  if (cfg.unused_items >= cfg.items) fail("unused_items must leave styled items");
  if (cfg.items - cfg.unused_items < cfg.clusters * cfg.categories) {
    fail("need at least clusters * categories styled items");
  }
  if (cfg.outfits < cfg.clusters || cfg.users < cfg.clusters) fail("every cluster needs users and outfits");
  if (cfg.min_outfit_size < 2 || cfg.min_outfit_size > cfg.max_outfit_size) fail("outfit size range invalid");
  if (cfg.max_outfit_size > cfg.categories) fail("outfit size exceeds category count");
  if (cfg.visual_dim == 0 || cfg.text_dim == 0) fail("feature dims must be positive");
  if (!(cfg.purity >= 0.0 && cfg.purity <= 1.0)) fail("purity must lie in [0, 1]");
  const std::size_t off = static_cast<std::size_t>(
      std::floor((1.0 - cfg.purity) * static_cast<double>(cfg.interactions_per_user) + 1e-9));
  const std::size_t smallest_cluster = cfg.outfits / cfg.clusters;
  if (cfg.interactions_per_user == 0) fail("interactions_per_user must be positive");
  if (cfg.interactions_per_user - off > smallest_cluster) fail("too many in-cluster interactions per user");
  if (off > cfg.outfits - smallest_cluster) fail("too many cross-cluster interactions per user");
}

inline Dataset generate_synthetic(const SyntheticConfig& cfg, std::uint64_t seed) {
  check_config(cfg);
  Rng rng(derive_seed(seed, "synthetic"));
  Dataset ds;
  for (std::size_t c = 0; c < cfg.categories; ++c) {
    char name[32];
    std::snprintf(name, sizeof name, "category_%02zu", c);
    ds.categories.emplace_back(name);
  }

  auto draw_means = [&](std::size_t count, std::size_t dim) {
    std::vector<std::vector<double>> means(count, std::vector<double>(dim));
    for (auto& m : means) {
      for (auto& x : m) x = rng.normal(0.0, cfg.separation);
    }
    return means;
  };
  // Index `clusters` is the off-style mean used by unused items.
  const auto style_visual = draw_means(cfg.clusters + 1, cfg.visual_dim);
  const auto style_text = draw_means(cfg.clusters + 1, cfg.text_dim);
  const auto category_visual = draw_means(cfg.categories, cfg.visual_dim);
  const auto category_text = draw_means(cfg.categories, cfg.text_dim);

  const std::size_t styled = cfg.items - cfg.unused_items;
  // pool[cluster][category] -> item ids
  std::vector<std::vector<std::vector<Id>>> pool(cfg.clusters, std::vector<std::vector<Id>>(cfg.categories));
  for (std::size_t i = 0; i < cfg.items; ++i) {
    const Id id = i + 1;
    const bool is_styled = i < styled;
    const std::size_t style = is_styled ? i % cfg.clusters : cfg.clusters;
    const std::size_t category = is_styled ? (i / cfg.clusters) % cfg.categories : (i - styled) % cfg.categories;
    ItemRecord item;
    item.category = static_cast<std::uint32_t>(category);
    item.visual.resize(cfg.visual_dim);
    item.textual.resize(cfg.text_dim);
    for (std::size_t k = 0; k < cfg.visual_dim; ++k) {
      item.visual[k] = static_cast<float>(style_visual[style][k] + category_visual[category][k] + rng.normal(0.0, cfg.noise));
    }
    for (std::size_t k = 0; k < cfg.text_dim; ++k) {
      item.textual[k] = static_cast<float>(style_text[style][k] + category_text[category][k] + rng.normal(0.0, cfg.noise));
    }
    ds.items.emplace(id, std::move(item));
    if (is_styled) pool[style][category].push_back(id);
  }

  std::set<std::vector<Id>> seen;
  std::vector<std::vector<Id>> cluster_outfits(cfg.clusters);
  for (std::size_t o = 0; o < cfg.outfits; ++o) {
    const std::size_t style = synthetic_cluster(o, cfg.clusters);
    std::vector<Id> members;
    for (int attempt = 0; attempt < 1000; ++attempt) {
      const std::size_t size =
          cfg.min_outfit_size + rng.index(cfg.max_outfit_size - cfg.min_outfit_size + 1);
      std::vector<std::size_t> cats(cfg.categories);
      for (std::size_t c = 0; c < cfg.categories; ++c) cats[c] = c;
      rng.shuffle(cats);
      members.clear();
      for (std::size_t k = 0; k < size; ++k) {
        const auto& choices = pool[style][cats[k]];
        members.push_back(choices[rng.index(choices.size())]);
      }
      std::vector<Id> key = members;
      std::sort(key.begin(), key.end());
      if (seen.insert(key).second) break;
      members.clear();
    }
    if (members.empty()) {
      throw DataError(ErrorKind::InvalidArgument, "synthetic config: cannot draw enough distinct outfits");
    }
    const Id id = o + 1;
    ds.outfits.emplace(id, std::move(members));
    cluster_outfits[style].push_back(id);
  }

  const std::size_t off = static_cast<std::size_t>(
      std::floor((1.0 - cfg.purity) * static_cast<double>(cfg.interactions_per_user) + 1e-9));
  for (std::size_t u = 0; u < cfg.users; ++u) {
    const Id user = u + 1;
    ds.users.push_back(user);
    const std::size_t style = synthetic_cluster(u, cfg.clusters);
    std::vector<Id> own = cluster_outfits[style];
    std::vector<Id> other;
    for (std::size_t c = 0; c < cfg.clusters; ++c) {
      if (c != style) other.insert(other.end(), cluster_outfits[c].begin(), cluster_outfits[c].end());
    }
    rng.shuffle(own);
    rng.shuffle(other);
    for (std::size_t k = 0; k < cfg.interactions_per_user - off; ++k) ds.interactions.emplace(user, own[k]);
    for (std::size_t k = 0; k < off; ++k) ds.interactions.emplace(user, other[k]);
  }

  validate(ds);
  return ds;
}

}  // namespace fgat
