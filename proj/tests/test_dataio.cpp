#include <gtest/gtest.h>

#include <bit>
#include <cmath>
#include <limits>
#include <set>

#include "support.hpp"

using namespace fgat;
using fgat::test::TempDir;
using fgat::test::write_text;

namespace {

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const DataError& e) {
    return e.kind();
  }
  ADD_FAILURE() << "expected a DataError";
  return ErrorKind::Io;
}

std::string message_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const DataError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST(FeatureFile, ByteLayoutOfOneRecord) {
  FeatureTable t;
  t.dim = 1;
  t.rows.push_back({0x0102030405060708ULL, {1.0f}});
  const std::string bytes = encode_features(t);
  const std::string expected = std::string("FGATFEAT") + std::string("\x01\x00\x00\x00", 4) +
                               std::string("\x01\x00\x00\x00", 4) + std::string("\x01\x00\x00\x00", 4) +
                               std::string("\x08\x07\x06\x05\x04\x03\x02\x01", 8) +
                               std::string("\x00\x00\x80\x3f", 4);
  EXPECT_EQ(bytes, expected);
}

TEST(FeatureFile, RoundTripIsBitExact) {
  FeatureTable t;
  t.dim = 5;
  const float odd[] = {-0.0f, std::numeric_limits<float>::denorm_min(), std::numeric_limits<float>::max(),
                       std::bit_cast<float>(0x7fc12345u), 1.0f / 3.0f};
  t.rows.push_back({7, {odd, odd + 5}});
  t.rows.push_back({std::numeric_limits<Id>::max(), {1, 2, 3, 4, 5}});
  TempDir dir("feat");
  write_features(dir / "x.feat", t);
  const FeatureTable back = read_features(dir / "x.feat");
  ASSERT_EQ(back.rows.size(), 2u);
  EXPECT_EQ(back.dim, 5u);
  for (std::size_t r = 0; r < 2; ++r) {
    EXPECT_EQ(back.rows[r].first, t.rows[r].first);
    for (std::size_t k = 0; k < 5; ++k) {
      EXPECT_EQ(std::bit_cast<std::uint32_t>(back.rows[r].second[k]), std::bit_cast<std::uint32_t>(t.rows[r].second[k]));
    }
  }
  EXPECT_EQ(encode_features(back), encode_features(t));
}

TEST(FeatureFile, RejectsCorruptInput) {
  FeatureTable t;
  t.dim = 2;
  t.rows.push_back({1, {1, 2}});
  const std::string good = encode_features(t);
  std::string bad_magic = good;
  bad_magic[0] = 'X';
  EXPECT_EQ(kind_of([&] { decode_features(bad_magic); }), ErrorKind::Malformed);
  std::string bad_version = good;
  bad_version[8] = 2;
  EXPECT_EQ(kind_of([&] { decode_features(bad_version); }), ErrorKind::Malformed);
  EXPECT_EQ(kind_of([&] { decode_features(good.substr(0, good.size() - 1)); }), ErrorKind::Malformed);
  EXPECT_EQ(kind_of([&] { decode_features(good + "x"); }), ErrorKind::Malformed);
  FeatureTable ragged = t;
  ragged.rows.push_back({2, {1}});
  EXPECT_EQ(kind_of([&] { encode_features(ragged); }), ErrorKind::DimensionMismatch);
}

TEST(Dataset, HandFixtureRoundTrips) {
  const Dataset ds = test::hand_dataset();
  TempDir dir("ds");
  const auto paths = DatasetPaths::in_directory(dir.path());
  write_dataset(ds, paths);
  const Dataset back = load_dataset(paths);
  EXPECT_EQ(back.interactions.size(), 4u);
  EXPECT_EQ(back.users.size(), 2u);
  EXPECT_EQ(back.outfits.size(), 3u);
  EXPECT_EQ(back.items.size(), 5u);
  EXPECT_EQ(back, ds);
}

TEST(Dataset, OutfitOrderIsPreserved) {
  Dataset ds = test::hand_dataset();
  ds.outfits[11] = {5, 3, 4};
  TempDir dir("order");
  const auto paths = DatasetPaths::in_directory(dir.path());
  write_dataset(ds, paths);
  EXPECT_EQ(load_dataset(paths).outfits.at(11), (std::vector<Id>{5, 3, 4}));
}

TEST(Dataset, DanglingItemIsReported) {
  const Dataset ds = test::hand_dataset();
  TempDir dir("dangle");
  const auto paths = DatasetPaths::in_directory(dir.path());
  write_dataset(ds, paths);
  write_text(paths.outfits, "10\t1,2\n11\t3,4,99\n12\t1,3\n");
  EXPECT_EQ(kind_of([&] { load_dataset(paths); }), ErrorKind::DanglingReference);
  EXPECT_NE(message_of([&] { load_dataset(paths); }).find(":2"), std::string::npos);
}

TEST(Dataset, DanglingOutfitInInteractions) {
  const Dataset ds = test::hand_dataset();
  TempDir dir("dangle2");
  const auto paths = DatasetPaths::in_directory(dir.path());
  write_dataset(ds, paths);
  write_text(paths.interactions, "100\t10\n100\t77\n");
  EXPECT_EQ(kind_of([&] { load_dataset(paths); }), ErrorKind::DanglingReference);
}

TEST(Dataset, FeatureDimensionMismatch) {
  Dataset ds = test::hand_dataset(16, 3);
  EXPECT_NO_THROW(validate(ds));
  ds.items.at(3).visual.resize(8);
  EXPECT_EQ(kind_of([&] { validate(ds); }), ErrorKind::DimensionMismatch);
  // A feature file cannot hold ragged rows, so on disk the mismatch shows up
  // as one file disagreeing with the other about the item set or as a
  // rejected encoding.
  FeatureTable t;
  t.dim = 16;
  for (const auto& [id, item] : ds.items) t.rows.push_back({id, item.visual});
  EXPECT_EQ(kind_of([&] { encode_features(t); }), ErrorKind::DimensionMismatch);
}

TEST(Dataset, MalformedRowsReportLineNumbers) {
  const Dataset ds = test::hand_dataset();
  TempDir dir("malformed");
  const auto paths = DatasetPaths::in_directory(dir.path());
  write_dataset(ds, paths);
  write_text(paths.interactions, "100\t10\n200 11\n");
  EXPECT_EQ(kind_of([&] { load_dataset(paths); }), ErrorKind::Malformed);
  EXPECT_NE(message_of([&] { load_dataset(paths); }).find("interactions.tsv:2"), std::string::npos);

  write_dataset(ds, paths);
  write_text(paths.items, "1\tshirt\n2\tpants\nthree\tshoes\n");
  EXPECT_NE(message_of([&] { load_dataset(paths); }).find("items.tsv:3"), std::string::npos);

  write_dataset(ds, paths);
  write_text(paths.outfits, "10\t1,2\n11\t3\n");
  EXPECT_EQ(kind_of([&] { load_dataset(paths); }), ErrorKind::Malformed);
  EXPECT_NE(message_of([&] { load_dataset(paths); }).find("outfits.tsv:2"), std::string::npos);
}

TEST(Dataset, MissingFileIsAnIoError) {
  TempDir dir("missing");
  EXPECT_EQ(kind_of([&] { load_dataset(DatasetPaths::in_directory(dir.path())); }), ErrorKind::Io);
}

TEST(Dataset, DuplicateItemInsideOutfitRejected) {
  Dataset ds = test::hand_dataset();
  ds.outfits[10] = {1, 1};
  EXPECT_EQ(kind_of([&] { validate(ds); }), ErrorKind::Malformed);
}

TEST(Catalog, UnknownIdsAreNotFound) {
  const Catalog c = Catalog::build(test::hand_dataset());
  EXPECT_EQ(c.user(200), 1u);
  EXPECT_EQ(kind_of([&] { c.user(5); }), ErrorKind::NotFound);
  EXPECT_EQ(kind_of([&] { c.outfit(99); }), ErrorKind::NotFound);
}

TEST(Splits, SizesForTenInteractions) {
  const SplitSizes s = split_sizes(10);
  EXPECT_EQ(s.train, 7u);
  EXPECT_EQ(s.val, 1u);
  EXPECT_EQ(s.test, 2u);
}

TEST(Splits, SingleInteractionStaysInTraining) {
  const SplitSizes s = split_sizes(1);
  EXPECT_EQ(s.train, 1u);
  EXPECT_EQ(s.val, 0u);
  EXPECT_EQ(s.test, 0u);
}

TEST(Splits, SizeRuleHoldsForEveryCount) {
  for (std::size_t n = 2; n <= 200; ++n) {
    const SplitSizes s = split_sizes(n);
    EXPECT_EQ(s.train + s.val + s.test, n);
    EXPECT_EQ(s.test, std::max<std::size_t>(1, n / 5)) << n;
    const std::size_t rest = n - s.test;
    EXPECT_EQ(s.val, std::min((rest + 9) / 10, rest - 1)) << n;
    EXPECT_GE(s.train, 1u);
  }
}

TEST(Splits, EightyTenTenScheme) {
  EXPECT_EQ(parse_split_scheme("80_10_10"), SplitScheme::PerUser80_10_10);
  const SplitSizes s = split_sizes(10, SplitScheme::PerUser80_10_10);
  EXPECT_EQ(s.train, 8u);
  EXPECT_EQ(s.val, 1u);
  EXPECT_EQ(s.test, 1u);
  for (std::size_t n = 2; n <= 100; ++n) {
    const SplitSizes t = split_sizes(n, SplitScheme::PerUser80_10_10);
    EXPECT_EQ(t.train + t.val + t.test, n);
    EXPECT_GE(t.train, 1u);
    EXPECT_GE(t.test, 1u);
  }
  EXPECT_THROW(parse_split_scheme("70_30"), DataError);
}

TEST(Splits, PartitionInvariantsAndDeterminism) {
  const Dataset ds = generate_synthetic(SyntheticConfig{}, 3);
  const Catalog c = Catalog::build(ds);
  const Splits a = split_interactions(c, 11);
  const Splits b = split_interactions(c, 11);
  EXPECT_EQ(a, b);
  bool any_difference = false;
  const Splits other = split_interactions(c, 12);
  for (std::uint32_t u = 0; u < c.n_users(); ++u) {
    std::vector<std::uint32_t> all;
    for (const auto* part : {&a.train[u], &a.val[u], &a.test[u]}) all.insert(all.end(), part->begin(), part->end());
    std::sort(all.begin(), all.end());
    EXPECT_EQ(all, c.user_outfits[u]);  // union is everything, and sizes add up so parts are disjoint
    const SplitSizes s = split_sizes(c.user_outfits[u].size());
    EXPECT_EQ(a.train[u].size(), s.train);
    EXPECT_EQ(a.val[u].size(), s.val);
    EXPECT_EQ(a.test[u].size(), s.test);
    any_difference = any_difference || other.test[u] != a.test[u];
  }
  EXPECT_TRUE(any_difference);
}

TEST(Splits, NegativePoolIsItemsOutsideTrainingOutfits) {
  const Dataset ds = generate_synthetic(SyntheticConfig{}, 5);
  const Catalog c = Catalog::build(ds);
  const Splits s = split_interactions(c, 5);
  std::set<std::uint32_t> in_training;
  for (const auto& list : s.train) {
    for (auto o : list) in_training.insert(c.outfit_items[o].begin(), c.outfit_items[o].end());
  }
  std::vector<std::uint32_t> expected;
  for (std::uint32_t i = 0; i < c.n_items(); ++i) {
    if (!in_training.contains(i)) expected.push_back(i);
  }
  EXPECT_EQ(s.compat_negative_pool, expected);
  EXPECT_FALSE(expected.empty());
}

TEST(Synthetic, DefaultConfigPassesInvariants) {
  const Dataset ds = generate_synthetic(SyntheticConfig{}, 1);
  EXPECT_NO_THROW(validate(ds));
  EXPECT_EQ(ds.users.size(), 20u);
  EXPECT_EQ(ds.outfits.size(), 40u);
  EXPECT_EQ(ds.items.size(), 60u);
  EXPECT_EQ(ds.categories.size(), 6u);
  EXPECT_EQ(generate_synthetic(SyntheticConfig{}, 1), ds);
}

TEST(Synthetic, ClusterPurityByCounting) {
  SyntheticConfig cfg;
  for (std::uint64_t seed : {1, 2, 3}) {
    const Dataset ds = generate_synthetic(cfg, seed);
    std::size_t own = 0;
    for (const auto& [user, outfit] : ds.interactions) {
      own += synthetic_cluster(user - 1, cfg.clusters) == synthetic_cluster(outfit - 1, cfg.clusters) ? 1 : 0;
    }
    EXPECT_GE(static_cast<double>(own) / static_cast<double>(ds.interactions.size()), 0.9);
    // Outfits only use items of their own style.
    for (const auto& [outfit, items] : ds.outfits) {
      for (Id i : items) EXPECT_EQ(synthetic_cluster(i - 1, cfg.clusters), synthetic_cluster(outfit - 1, cfg.clusters));
    }
  }
}

TEST(Synthetic, InconsistentCountsAreRejected) {
  SyntheticConfig cfg;
  cfg.clusters = 0;
  EXPECT_EQ(kind_of([&] { generate_synthetic(cfg, 1); }), ErrorKind::InvalidArgument);
  cfg = SyntheticConfig{};
  cfg.items = 4;
  EXPECT_EQ(kind_of([&] { generate_synthetic(cfg, 1); }), ErrorKind::InvalidArgument);
}
