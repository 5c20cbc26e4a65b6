#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "fgat/core.hpp"
#include "fgat/feature_file.hpp"

namespace fgat {

struct ItemRecord {
  std::uint32_t category = 0;  // index into Dataset::categories
  std::vector<float> visual;
  std::vector<float> textual;

  bool operator==(const ItemRecord&) const = default;
};

/// Users, outfits, items and the user-outfit interaction set, keyed by the
/// external 64-bit ids. Category names are kept sorted so that a dataset
/// written to disk and loaded back compares equal.
struct Dataset {
  std::vector<std::string> categories;
  std::vector<Id> users;
  std::map<Id, std::vector<Id>> outfits;
  std::map<Id, ItemRecord> items;
  std::set<std::pair<Id, Id>> interactions;  // (user, outfit)

  bool operator==(const Dataset&) const = default;
};

struct DatasetPaths {
  std::filesystem::path interactions;
  std::filesystem::path outfits;
  std::filesystem::path items;
  std::filesystem::path visual_features;
  std::filesystem::path textual_features;

  static DatasetPaths in_directory(const std::filesystem::path& dir) {
    return {dir / "interactions.tsv", dir / "outfits.tsv", dir / "items.tsv",
            dir / "visual.feat", dir / "textual.feat"};
  }
};

/// Throws DataError on the first broken invariant.
inline void validate(const Dataset& ds) {
  if (!std::is_sorted(ds.categories.begin(), ds.categories.end()) ||
      std::adjacent_find(ds.categories.begin(), ds.categories.end()) != ds.categories.end()) {
    throw DataError(ErrorKind::Malformed, "category names must be sorted and unique");
  }
  std::size_t visual_dim = 0;
  std::size_t text_dim = 0;
  bool first = true;
  for (const auto& [id, item] : ds.items) {
    if (item.category >= ds.categories.size()) {
      throw DataError(ErrorKind::DanglingReference,
                      "item " + std::to_string(id) + " references unknown category index " +
                          std::to_string(item.category));
    }
    if (first) {
      visual_dim = item.visual.size();
      text_dim = item.textual.size();
      first = false;
      if (visual_dim == 0 || text_dim == 0) {
        throw DataError(ErrorKind::DimensionMismatch, "item " + std::to_string(id) + " has empty features");
      }
    }
    if (item.visual.size() != visual_dim) {
      throw DataError(ErrorKind::DimensionMismatch,
                      "item " + std::to_string(id) + " visual dim " + std::to_string(item.visual.size()) +
                          " differs from corpus dim " + std::to_string(visual_dim));
    }
    if (item.textual.size() != text_dim) {
      throw DataError(ErrorKind::DimensionMismatch,
                      "item " + std::to_string(id) + " textual dim " + std::to_string(item.textual.size()) +
                          " differs from corpus dim " + std::to_string(text_dim));
    }
  }
  for (const auto& [oid, members] : ds.outfits) {
    if (members.size() < 2) {
      throw DataError(ErrorKind::Malformed, "outfit " + std::to_string(oid) + " has fewer than 2 items");
    }
    std::set<Id> seen;
    for (Id item : members) {
      if (!ds.items.contains(item)) {
        throw DataError(ErrorKind::DanglingReference,
                        "outfit " + std::to_string(oid) + " references missing item " + std::to_string(item));
      }
      if (!seen.insert(item).second) {
        throw DataError(ErrorKind::Malformed,
                        "outfit " + std::to_string(oid) + " lists item " + std::to_string(item) + " twice");
      }
    }
  }
  if (!std::is_sorted(ds.users.begin(), ds.users.end()) ||
      std::adjacent_find(ds.users.begin(), ds.users.end()) != ds.users.end()) {
    throw DataError(ErrorKind::Malformed, "user ids must be sorted and unique");
  }
  for (const auto& [user, outfit] : ds.interactions) {
    if (!std::binary_search(ds.users.begin(), ds.users.end(), user)) {
      throw DataError(ErrorKind::DanglingReference, "interaction references missing user " + std::to_string(user));
    }
    if (!ds.outfits.contains(outfit)) {
      throw DataError(ErrorKind::DanglingReference,
                      "interaction references missing outfit " + std::to_string(outfit));
    }
  }
}

namespace detail {

inline std::string location(const std::filesystem::path& path, std::size_t line) {
  return path.string() + ":" + std::to_string(line);
}

inline Id parse_id(std::string_view text, const std::filesystem::path& path, std::size_t line) {
  Id value = 0;
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (text.empty() || ec != std::errc() || ptr != end) {
    throw DataError(ErrorKind::Malformed,
                    location(path, line) + ": expected unsigned 64-bit id, got '" + std::string(text) + "'");
  }
  return value;
}

/// Calls fn(line_number, left, right) for every non-empty `left<TAB>right` line.
template <typename Fn>
void for_each_tab_line(const std::filesystem::path& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) throw DataError(ErrorKind::Io, "cannot open " + path.string());
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos) {
      throw DataError(ErrorKind::Malformed, location(path, number) + ": expected exactly two tab-separated fields");
    }
    fn(number, std::string_view(line).substr(0, tab), std::string_view(line).substr(tab + 1));
  }
}

inline std::map<Id, std::vector<float>> features_by_id(const FeatureTable& table,
                                                       const std::filesystem::path& path) {
  std::map<Id, std::vector<float>> out;
  for (const auto& [id, values] : table.rows) {
    if (!out.emplace(id, values).second) {
      throw DataError(ErrorKind::Malformed, path.string() + ": duplicate record for item " + std::to_string(id));
    }
  }
  return out;
}

}  // namespace detail

inline Dataset load_dataset(const DatasetPaths& paths) {
  Dataset ds;

  std::map<Id, std::string> item_category;
  detail::for_each_tab_line(paths.items, [&](std::size_t line, std::string_view id, std::string_view name) {
    const Id item = detail::parse_id(id, paths.items, line);
    if (name.empty()) {
      throw DataError(ErrorKind::Malformed, detail::location(paths.items, line) + ": empty category name");
    }
    if (!item_category.emplace(item, std::string(name)).second) {
      throw DataError(ErrorKind::Malformed,
                      detail::location(paths.items, line) + ": duplicate item " + std::to_string(item));
    }
  });
  std::set<std::string> names;
  for (const auto& [_, name] : item_category) names.insert(name);
  ds.categories.assign(names.begin(), names.end());

  const auto visual = detail::features_by_id(read_features(paths.visual_features), paths.visual_features);
  const auto textual = detail::features_by_id(read_features(paths.textual_features), paths.textual_features);
  for (const auto* table : {&visual, &textual}) {
    for (const auto& [id, _] : *table) {
      if (!item_category.contains(id)) {
        throw DataError(ErrorKind::DanglingReference, "feature record for unknown item " + std::to_string(id));
      }
    }
  }
  for (const auto& [id, name] : item_category) {
    auto v = visual.find(id);
    auto t = textual.find(id);
    if (v == visual.end() || t == textual.end()) {
      throw DataError(ErrorKind::DanglingReference, "item " + std::to_string(id) + " has no " +
                                                        (v == visual.end() ? "visual" : "textual") + " features");
    }
    const auto cat = std::lower_bound(ds.categories.begin(), ds.categories.end(), name) - ds.categories.begin();
    ds.items.emplace(id, ItemRecord{static_cast<std::uint32_t>(cat), v->second, t->second});
  }

  detail::for_each_tab_line(paths.outfits, [&](std::size_t line, std::string_view id, std::string_view list) {
    const Id outfit = detail::parse_id(id, paths.outfits, line);
    std::vector<Id> members;
    std::size_t start = 0;
    while (start <= list.size()) {
      const auto comma = std::min(list.find(',', start), list.size());
      members.push_back(detail::parse_id(list.substr(start, comma - start), paths.outfits, line));
      start = comma + 1;
    }
    if (members.size() < 2) {
      throw DataError(ErrorKind::Malformed, detail::location(paths.outfits, line) + ": outfit " +
                                                std::to_string(outfit) + " has fewer than 2 items");
    }
    for (Id item : members) {
      if (!ds.items.contains(item)) {
        throw DataError(ErrorKind::DanglingReference, detail::location(paths.outfits, line) + ": outfit " +
                                                          std::to_string(outfit) + " references missing item " +
                                                          std::to_string(item));
      }
    }
    if (!ds.outfits.emplace(outfit, std::move(members)).second) {
      throw DataError(ErrorKind::Malformed,
                      detail::location(paths.outfits, line) + ": duplicate outfit " + std::to_string(outfit));
    }
  });

  std::set<Id> users;
  detail::for_each_tab_line(paths.interactions, [&](std::size_t line, std::string_view u, std::string_view o) {
    const Id user = detail::parse_id(u, paths.interactions, line);
    const Id outfit = detail::parse_id(o, paths.interactions, line);
    if (!ds.outfits.contains(outfit)) {
      throw DataError(ErrorKind::DanglingReference, detail::location(paths.interactions, line) +
                                                        ": interaction references missing outfit " +
                                                        std::to_string(outfit));
    }
    users.insert(user);
    ds.interactions.emplace(user, outfit);
  });
  ds.users.assign(users.begin(), users.end());

  validate(ds);
  return ds;
}

/// Writes the five files named by `paths`. Every user must have at least one
/// interaction, since the text formats carry users only through interactions.
inline void write_dataset(const Dataset& ds, const DatasetPaths& paths) {
  validate(ds);
  {
    std::ofstream out(paths.interactions, std::ios::trunc);
    if (!out) throw DataError(ErrorKind::Io, "cannot write " + paths.interactions.string());
    for (const auto& [user, outfit] : ds.interactions) out << user << '\t' << outfit << '\n';
  }
  {
    std::ofstream out(paths.outfits, std::ios::trunc);
    if (!out) throw DataError(ErrorKind::Io, "cannot write " + paths.outfits.string());
    for (const auto& [id, members] : ds.outfits) {
      out << id << '\t';
      for (std::size_t i = 0; i < members.size(); ++i) out << (i ? "," : "") << members[i];
      out << '\n';
    }
  }
  {
    std::ofstream out(paths.items, std::ios::trunc);
    if (!out) throw DataError(ErrorKind::Io, "cannot write " + paths.items.string());
    for (const auto& [id, item] : ds.items) out << id << '\t' << ds.categories[item.category] << '\n';
  }
  FeatureTable visual;
  FeatureTable textual;
  if (!ds.items.empty()) {
    visual.dim = static_cast<std::uint32_t>(ds.items.begin()->second.visual.size());
    textual.dim = static_cast<std::uint32_t>(ds.items.begin()->second.textual.size());
  }
  for (const auto& [id, item] : ds.items) {
    visual.rows.emplace_back(id, item.visual);
    textual.rows.emplace_back(id, item.textual);
  }
  write_features(paths.visual_features, visual);
  write_features(paths.textual_features, textual);
}

/// Dense 0-based view of a Dataset: ids in ascending order, per-item
/// categories, outfit membership and feature matrices.
struct Catalog {
  std::vector<Id> user_ids;
  std::vector<Id> outfit_ids;
  std::vector<Id> item_ids;
  std::unordered_map<Id, std::uint32_t> user_index;
  std::unordered_map<Id, std::uint32_t> outfit_index;
  std::unordered_map<Id, std::uint32_t> item_index;

  std::size_t n_categories = 0;
  std::vector<std::uint32_t> item_category;
  std::vector<std::vector<std::uint32_t>> outfit_items;  // outfit order preserved
  std::vector<std::vector<std::uint32_t>> user_outfits;  // all interactions, ascending
  Matrix visual;   // n_items x d_v
  Matrix textual;  // n_items x d_t

  std::size_t n_users() const { return user_ids.size(); }
  std::size_t n_outfits() const { return outfit_ids.size(); }
  std::size_t n_items() const { return item_ids.size(); }

  std::uint32_t user(Id id) const { return lookup(user_index, id, "user"); }
  std::uint32_t outfit(Id id) const { return lookup(outfit_index, id, "outfit"); }
  std::uint32_t item(Id id) const { return lookup(item_index, id, "item"); }

  static Catalog build(const Dataset& ds) {
    Catalog c;
    c.n_categories = ds.categories.size();
    c.user_ids = ds.users;
    for (const auto& [id, _] : ds.outfits) c.outfit_ids.push_back(id);
    for (const auto& [id, _] : ds.items) c.item_ids.push_back(id);
    for (std::uint32_t i = 0; i < c.user_ids.size(); ++i) c.user_index.emplace(c.user_ids[i], i);
    for (std::uint32_t i = 0; i < c.outfit_ids.size(); ++i) c.outfit_index.emplace(c.outfit_ids[i], i);
    for (std::uint32_t i = 0; i < c.item_ids.size(); ++i) c.item_index.emplace(c.item_ids[i], i);

    const std::size_t dv = ds.items.empty() ? 0 : ds.items.begin()->second.visual.size();
    const std::size_t dt = ds.items.empty() ? 0 : ds.items.begin()->second.textual.size();
    c.visual.resize(static_cast<Eigen::Index>(c.n_items()), static_cast<Eigen::Index>(dv));
    c.textual.resize(static_cast<Eigen::Index>(c.n_items()), static_cast<Eigen::Index>(dt));
    std::uint32_t row = 0;
    for (const auto& [id, item] : ds.items) {
      c.item_category.push_back(item.category);
      for (std::size_t k = 0; k < dv; ++k) c.visual(row, static_cast<Eigen::Index>(k)) = item.visual[k];
      for (std::size_t k = 0; k < dt; ++k) c.textual(row, static_cast<Eigen::Index>(k)) = item.textual[k];
      ++row;
    }
    for (const auto& [id, members] : ds.outfits) {
      std::vector<std::uint32_t> dense;
      for (Id item : members) dense.push_back(c.item_index.at(item));
      c.outfit_items.push_back(std::move(dense));
    }
    c.user_outfits.resize(c.n_users());
    for (const auto& [user, outfit] : ds.interactions) {
      c.user_outfits[c.user_index.at(user)].push_back(c.outfit_index.at(outfit));
    }
    for (auto& list : c.user_outfits) std::sort(list.begin(), list.end());
    return c;
  }

 private:
  static std::uint32_t lookup(const std::unordered_map<Id, std::uint32_t>& map, Id id, const char* what) {
    auto it = map.find(id);
    if (it == map.end()) throw DataError(ErrorKind::NotFound, std::string("unknown ") + what + " id " + std::to_string(id));
    return it->second;
  }
};

}  // namespace fgat
