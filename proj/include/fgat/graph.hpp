#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <ostream>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "fgat/dataset.hpp"
#include "fgat/splits.hpp"

namespace fgat {

/// Three-level adjacency over dense catalog indices.
struct FashionGraph {
  std::size_t n_users = 0;
  std::size_t n_outfits = 0;
  std::size_t n_items = 0;
  std::vector<std::vector<std::uint32_t>> user_outfits;  // N_u, ascending
  std::vector<std::vector<std::uint32_t>> outfit_users;  // ascending
  std::vector<std::vector<std::uint32_t>> outfit_items;  // N_o, outfit order
  std::vector<std::vector<std::uint32_t>> item_outfits;  // ascending

  std::size_t node_count() const { return n_users + n_outfits + n_items; }

  std::size_t edge_count() const {
    std::size_t e = 0;
    for (const auto& l : user_outfits) e += l.size();
    for (const auto& l : outfit_items) e += l.size();
    return e;
  }
};

/// Builds the graph. With `splits`, user-outfit edges come from the training
/// partition only; without, from every interaction.
inline FashionGraph build_fashion_graph(const Catalog& catalog, const Splits* splits = nullptr) {
  FashionGraph g;
  g.n_users = catalog.n_users();
  g.n_outfits = catalog.n_outfits();
  g.n_items = catalog.n_items();
  g.user_outfits = splits != nullptr ? splits->train : catalog.user_outfits;
  g.user_outfits.resize(g.n_users);
  g.outfit_users.assign(g.n_outfits, {});
  for (std::uint32_t u = 0; u < g.n_users; ++u) {
    for (auto o : g.user_outfits[u]) g.outfit_users[o].push_back(u);
  }
  g.outfit_items = catalog.outfit_items;
  g.item_outfits.assign(g.n_items, {});
  for (std::uint32_t o = 0; o < g.n_outfits; ++o) {
    for (auto i : g.outfit_items[o]) g.item_outfits[i].push_back(o);
  }
  return g;
}

/// Directional category co-occurrence weights:
///   w(ci, cj) = (co(ci,cj) / o(cj)) / sum_k (co(ci,ck) / o(ck))
/// co counts outfits containing both categories (two distinct items of the
/// same category for ci == cj); o(cj) counts outfits containing cj.
struct CategoryGraph {
  std::size_t n_categories = 0;
  std::vector<std::vector<std::uint64_t>> co_counts;
  std::vector<std::uint64_t> cat_counts;
  Matrix weights;  // zero where co_counts == 0

  double weight(std::uint32_t ci, std::uint32_t cj) const { return weights(ci, cj); }
  bool has_weight(std::uint32_t ci, std::uint32_t cj) const { return co_counts[ci][cj] > 0; }
};

inline CategoryGraph category_cooccurrence_weights(const Catalog& catalog) {
  CategoryGraph cg;
  const std::size_t n = catalog.n_categories;
  cg.n_categories = n;
  cg.co_counts.assign(n, std::vector<std::uint64_t>(n, 0));
  cg.cat_counts.assign(n, 0);
  for (const auto& members : catalog.outfit_items) {
    std::vector<std::uint32_t> per_cat(n, 0);
    for (auto i : members) ++per_cat[catalog.item_category[i]];
    for (std::size_t a = 0; a < n; ++a) {
      if (per_cat[a] == 0) continue;
      ++cg.cat_counts[a];
      for (std::size_t b = 0; b < n; ++b) {
        if (per_cat[b] == 0) continue;
        if (a == b && per_cat[a] < 2) continue;
        ++cg.co_counts[a][b];
      }
    }
  }
  cg.weights = Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t a = 0; a < n; ++a) {
    double total = 0.0;
    for (std::size_t b = 0; b < n; ++b) {
      if (cg.co_counts[a][b] > 0) {
        total += static_cast<double>(cg.co_counts[a][b]) / static_cast<double>(cg.cat_counts[b]);
      }
    }
    if (total == 0.0) continue;
    for (std::size_t b = 0; b < n; ++b) {
      if (cg.co_counts[a][b] > 0) {
        cg.weights(a, b) =
            static_cast<double>(cg.co_counts[a][b]) / static_cast<double>(cg.cat_counts[b]) / total;
      }
    }
  }
  return cg;
}

struct ItemEdge {
  std::uint32_t first;   // catalog item index
  std::uint32_t second;  // catalog item index
  double weight;         // w(c_first, c_second)
};

/// Complete graph over one outfit's items; edges in outfit order (a < b).
struct ItemSubgraph {
  std::uint32_t outfit = 0;
  std::vector<std::uint32_t> items;
  std::vector<ItemEdge> edges;
};

inline ItemSubgraph outfit_item_subgraph(std::uint32_t outfit, const Catalog& catalog, const CategoryGraph& cg) {
  if (outfit >= catalog.n_outfits()) {
    throw DataError(ErrorKind::NotFound, "unknown outfit index " + std::to_string(outfit));
  }
  ItemSubgraph sg;
  sg.outfit = outfit;
  sg.items = catalog.outfit_items[outfit];
  for (std::size_t a = 0; a < sg.items.size(); ++a) {
    for (std::size_t b = a + 1; b < sg.items.size(); ++b) {
      const auto i = sg.items[a];
      const auto j = sg.items[b];
      sg.edges.push_back({i, j, cg.weight(catalog.item_category[i], catalog.item_category[j])});
    }
  }
  return sg;
}

/// Directed item-item attention edges: for each target item, the union of its
/// co-outfit items over every outfit containing it (self excluded), ascending.
struct ItemNeighborhoods {
  std::vector<std::uint32_t> target;
  std::vector<std::uint32_t> source;
  std::vector<double> weight;  // w(c_target, c_source)
};

inline ItemNeighborhoods item_neighborhoods(const Catalog& catalog, const FashionGraph& graph,
                                            const CategoryGraph& cg) {
  ItemNeighborhoods nb;
  for (std::uint32_t i = 0; i < graph.n_items; ++i) {
    std::vector<std::uint32_t> nbrs;
    for (auto o : graph.item_outfits[i]) {
      for (auto j : graph.outfit_items[o]) {
        if (j != i) nbrs.push_back(j);
      }
    }
    std::sort(nbrs.begin(), nbrs.end());
    nbrs.erase(std::unique(nbrs.begin(), nbrs.end()), nbrs.end());
    for (auto j : nbrs) {
      nb.target.push_back(i);
      nb.source.push_back(j);
      nb.weight.push_back(cg.weight(catalog.item_category[i], catalog.item_category[j]));
    }
  }
  return nb;
}

/// `src<TAB>dst<TAB>weight` lines for the three-level graph; nodes are
/// labelled u:<id>, o:<id>, i:<id>.
inline void write_graph_edges(std::ostream& out, const FashionGraph& graph, const Catalog& catalog) {
  for (std::uint32_t u = 0; u < graph.n_users; ++u) {
    for (auto o : graph.user_outfits[u]) {
      out << "u:" << catalog.user_ids[u] << "\to:" << catalog.outfit_ids[o] << "\t1\n";
    }
  }
  for (std::uint32_t o = 0; o < graph.n_outfits; ++o) {
    for (auto i : graph.outfit_items[o]) {
      out << "o:" << catalog.outfit_ids[o] << "\ti:" << catalog.item_ids[i] << "\t1\n";
    }
  }
}

/// `src<TAB>dst<TAB>weight` lines for every directed category weight.
inline void write_category_edges(std::ostream& out, const CategoryGraph& cg,
                                 const std::vector<std::string>& names) {
  char buf[64];
  for (std::uint32_t a = 0; a < cg.n_categories; ++a) {
    for (std::uint32_t b = 0; b < cg.n_categories; ++b) {
      if (!cg.has_weight(a, b)) continue;
      std::snprintf(buf, sizeof buf, "%.9g", cg.weight(a, b));
      out << names[a] << '\t' << names[b] << '\t' << buf << '\n';
    }
  }
}

/// Most frequent unordered pairs of distinct categories by co-occurrence
/// count; ties by ascending (a, b).
inline std::vector<std::tuple<std::uint32_t, std::uint32_t, std::uint64_t>> top_category_pairs(
    const CategoryGraph& cg, std::size_t limit) {
  std::vector<std::tuple<std::uint32_t, std::uint32_t, std::uint64_t>> pairs;
  for (std::uint32_t a = 0; a < cg.n_categories; ++a) {
    for (std::uint32_t b = a + 1; b < cg.n_categories; ++b) {
      if (cg.co_counts[a][b] > 0) pairs.emplace_back(a, b, cg.co_counts[a][b]);
    }
  }
  std::stable_sort(pairs.begin(), pairs.end(),
                   [](const auto& x, const auto& y) { return std::get<2>(x) > std::get<2>(y); });
  if (pairs.size() > limit) pairs.resize(limit);
  return pairs;
}

}  // namespace fgat
