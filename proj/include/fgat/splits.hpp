#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "fgat/dataset.hpp"
#include "fgat/rng.hpp"

namespace fgat {

enum class SplitScheme {
  /// 20% of each user's interactions to test, then 10% of the rest to validation.
  PerUser80_20,
  /// 80/10/10 per user.
  PerUser80_10_10,
};

inline SplitScheme parse_split_scheme(const std::string& name) {
  if (name == "80_20") return SplitScheme::PerUser80_20;
  if (name == "80_10_10") return SplitScheme::PerUser80_10_10;
  throw DataError(ErrorKind::InvalidArgument, "unknown split scheme '" + name + "' (expected 80_20 or 80_10_10)");
}

struct SplitSizes {
  std::size_t train = 0;
  std::size_t val = 0;
  std::size_t test = 0;
};

/// Per-user partition sizes. Users with a single interaction keep it for
/// training; everyone else gets at least one test interaction and keeps at
/// least one training interaction.
inline SplitSizes split_sizes(std::size_t n, SplitScheme scheme = SplitScheme::PerUser80_20) {
  if (n < 2) return {n, 0, 0};
  SplitSizes s;
  if (scheme == SplitScheme::PerUser80_20) {
    s.test = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(0.2 * static_cast<double>(n) + 1e-9)));
    const std::size_t rest = n - s.test;
    const auto val = static_cast<std::size_t>(std::ceil(0.1 * static_cast<double>(rest) - 1e-9));
    s.val = std::min(val, rest - 1);
  } else {
    const auto tenth = static_cast<std::size_t>(std::floor(0.1 * static_cast<double>(n) + 1e-9));
    s.test = std::max<std::size_t>(1, tenth);
    s.val = std::min(tenth, n - s.test - 1);
  }
  s.train = n - s.test - s.val;
  return s;
}

/// Dense (catalog-index) interaction partition. Each per-user list is sorted.
struct Splits {
  std::vector<std::vector<std::uint32_t>> train;
  std::vector<std::vector<std::uint32_t>> val;
  std::vector<std::vector<std::uint32_t>> test;
  /// Items that belong to no outfit with a training interaction, ascending.
  std::vector<std::uint32_t> compat_negative_pool;

  bool operator==(const Splits&) const = default;

  /// Outfits with at least one training interaction, ascending.
  std::vector<std::uint32_t> train_outfits(std::size_t n_outfits) const { return collect(train, n_outfits); }
  /// Outfits with at least one test interaction, ascending.
  std::vector<std::uint32_t> test_outfits(std::size_t n_outfits) const { return collect(test, n_outfits); }

  std::size_t train_size() const {
    std::size_t n = 0;
    for (const auto& l : train) n += l.size();
    return n;
  }

 private:
  static std::vector<std::uint32_t> collect(const std::vector<std::vector<std::uint32_t>>& lists,
                                            std::size_t n_outfits) {
    std::vector<bool> seen(n_outfits, false);
    for (const auto& l : lists) {
      for (auto o : l) seen[o] = true;
    }
    std::vector<std::uint32_t> out;
    for (std::uint32_t o = 0; o < n_outfits; ++o) {
      if (seen[o]) out.push_back(o);
    }
    return out;
  }
};

inline Splits split_interactions(const Catalog& catalog, std::uint64_t seed,
                                 SplitScheme scheme = SplitScheme::PerUser80_20) {
  Rng rng(derive_seed(seed, "split"));
  Splits s;
  const std::size_t n_users = catalog.n_users();
  s.train.resize(n_users);
  s.val.resize(n_users);
  s.test.resize(n_users);
  for (std::size_t u = 0; u < n_users; ++u) {
    std::vector<std::uint32_t> order = catalog.user_outfits[u];
    rng.shuffle(order);
    const SplitSizes sizes = split_sizes(order.size(), scheme);
    auto it = order.begin();
    s.test[u].assign(it, it + static_cast<std::ptrdiff_t>(sizes.test));
    it += static_cast<std::ptrdiff_t>(sizes.test);
    s.val[u].assign(it, it + static_cast<std::ptrdiff_t>(sizes.val));
    it += static_cast<std::ptrdiff_t>(sizes.val);
    s.train[u].assign(it, order.end());
    std::sort(s.test[u].begin(), s.test[u].end());
    std::sort(s.val[u].begin(), s.val[u].end());
    std::sort(s.train[u].begin(), s.train[u].end());
  }
  std::vector<bool> used(catalog.n_items(), false);
  for (auto o : s.train_outfits(catalog.n_outfits())) {
    for (auto i : catalog.outfit_items[o]) used[i] = true;
  }
  for (std::uint32_t i = 0; i < catalog.n_items(); ++i) {
    if (!used[i]) s.compat_negative_pool.push_back(i);
  }
  return s;
}

}  // namespace fgat
