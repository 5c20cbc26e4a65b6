#include <gtest/gtest.h>

#include <sstream>

#include "oracles.hpp"
#include "support.hpp"

using namespace fgat;
using test::brute_force;
using test::pairwise_auc;
using test::OracleMetrics;
using test::scores_as_embeddings;

namespace {

std::string report_text(const RankingReport& r) {
  std::ostringstream out;
  write_report(out, r);
  write_per_user(out, r);
  return out.str();
}

std::unique_ptr<Workspace> synthetic_workspace(std::uint64_t seed) {
  return prepare_workspace(generate_synthetic(SyntheticConfig{}, seed), seed, SplitScheme::PerUser80_10_10);
}

}  // namespace

TEST(Ranking, OrderAndTies) {
  const std::vector<double> s = {0.9, 0.1, 0.5};
  EXPECT_EQ(rank_by_score(s, {}), (std::vector<std::uint32_t>{0, 2, 1}));
  const std::vector<double> tied = {0.3, 0.7, 0.3, 0.7};
  EXPECT_EQ(rank_by_score(tied, {}), (std::vector<std::uint32_t>{1, 3, 0, 2}));
  EXPECT_EQ(rank_by_score(tied, {false, true, false, false}), (std::vector<std::uint32_t>{3, 0, 2}));
}

TEST(TopK, Examples) {
  const std::vector<std::uint32_t> ranking = {4, 2, 7, 1, 0, 3, 5, 6, 8, 9, 10};
  const std::vector<std::uint32_t> first = {4};
  TopKMetrics m = topk_metrics(ranking, first, 10);
  EXPECT_EQ(m.hr, 1.0);
  EXPECT_EQ(m.recall, 1.0);
  EXPECT_DOUBLE_EQ(m.precision, 0.1);
  EXPECT_EQ(m.ndcg, 1.0);
  const std::vector<std::uint32_t> second = {2};
  EXPECT_NEAR(topk_metrics(ranking, second, 10).ndcg, 1.0 / std::log2(3.0), 1e-15);
  EXPECT_NEAR(topk_metrics(ranking, second, 10).ndcg, 0.6309, 1e-4);
  const std::vector<std::uint32_t> last = {10};
  m = topk_metrics(ranking, last, 10);
  EXPECT_EQ(m.hr + m.recall + m.precision + m.ndcg, 0.0);
  EXPECT_THROW(topk_metrics(ranking, first, 0), DataError);
  EXPECT_THROW(topk_metrics(ranking, std::vector<std::uint32_t>{}, 10), DataError);
}

TEST(TopK, MatchesBruteForceOnRandomInstances) {
  Rng rng(2024);
  for (int instance = 0; instance < 100; ++instance) {
    const std::size_t n_users = 1 + rng.index(10);
    const std::size_t n_outfits = 3 + rng.index(18);
    const std::size_t k = 1 + rng.index(12);
    std::vector<std::vector<double>> scores(n_users, std::vector<double>(n_outfits));
    for (auto& row : scores) {
      for (auto& v : row) v = std::round(rng.normal() * 3.0) / 3.0;  // coarse grid, many ties
    }
    Splits splits;
    splits.train.resize(n_users);
    splits.val.resize(n_users);
    splits.test.resize(n_users);
    for (std::size_t u = 0; u < n_users; ++u) {
      std::vector<std::uint32_t> order(n_outfits);
      std::iota(order.begin(), order.end(), 0U);
      rng.shuffle(order);
      const std::size_t n_train = rng.index(n_outfits - 1);
      const std::size_t n_val = rng.index(std::max<std::size_t>(1, (n_outfits - n_train) / 3));
      const std::size_t n_test = 1 + rng.index(n_outfits - n_train - n_val);
      splits.train[u].assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
      splits.val[u].assign(order.begin() + static_cast<std::ptrdiff_t>(n_train),
                           order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
      splits.test[u].assign(order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val),
                            order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val + n_test));
    }
    const PropagationOutput prop = scores_as_embeddings(scores);
    for (std::uint32_t u = 0; u < n_users; ++u) {
      std::vector<bool> excluded(n_outfits, false);
      for (auto o : splits.train[u]) excluded[o] = true;
      for (auto o : splits.val[u]) excluded[o] = true;
      const auto ranking = rank_outfits(u, prop, splits);
      EXPECT_EQ(ranking.size(), static_cast<std::size_t>(std::count(excluded.begin(), excluded.end(), false)));
      const TopKMetrics got = topk_metrics(ranking, splits.test[u], k);
      const OracleMetrics want = brute_force(scores[u], excluded, splits.test[u], k);
      EXPECT_EQ(got.hr, want.hr) << instance;
      EXPECT_EQ(got.recall, want.recall) << instance;
      EXPECT_EQ(got.precision, want.precision) << instance;
      EXPECT_EQ(got.ndcg, want.ndcg) << instance;
      EXPECT_LE(got.ndcg, 1.0);
    }
    std::vector<double> pos;
    std::vector<double> neg;
    const std::size_t np = 1 + rng.index(15);
    const std::size_t nn = 1 + rng.index(15);
    for (std::size_t q = 0; q < np; ++q) pos.push_back(std::round(rng.normal() * 2.0) / 2.0);
    for (std::size_t q = 0; q < nn; ++q) neg.push_back(std::round(rng.normal() * 2.0) / 2.0);
    EXPECT_EQ(auc(pos, neg), pairwise_auc(pos, neg)) << instance;
  }
}

TEST(TopK, ValidationPartitionKeepsTestOutfitsAsCandidates) {
  Splits splits;
  splits.train = {{0}};
  splits.val = {{1}};
  splits.test = {{2}};
  const PropagationOutput prop = scores_as_embeddings({{0.5, 0.4, 0.9, 0.1}});
  EXPECT_EQ(rank_outfits(0, prop, splits, EvalPartition::Validation), (std::vector<std::uint32_t>{2, 1, 3}));
  EXPECT_EQ(rank_outfits(0, prop, splits, EvalPartition::Test), (std::vector<std::uint32_t>{2, 3}));
}

TEST(TopK, OracleScoresArePerfect) {
  Splits splits;
  splits.train = {{0, 1}, {2}};
  splits.val = {{}, {}};
  splits.test = {{3, 5}, {0, 1, 4}};
  std::vector<std::vector<double>> s(2, std::vector<double>(8, 0.0));
  for (std::uint32_t u = 0; u < 2; ++u) {
    for (auto o : splits.test[u]) s[u][o] = 1.0;
  }
  const PropagationOutput prop = scores_as_embeddings(s);
  for (std::uint32_t u = 0; u < 2; ++u) {
    const TopKMetrics m = topk_metrics(rank_outfits(u, prop, splits), splits.test[u], 10);
    EXPECT_EQ(m.hr, 1.0);
    EXPECT_EQ(m.ndcg, 1.0);
    EXPECT_EQ(m.recall, 1.0);
  }
}

TEST(Auc, Examples) {
  const std::vector<double> high = {0.9, 0.8};
  const std::vector<double> low = {0.1, 0.3, 0.2};
  EXPECT_EQ(auc(high, low), 1.0);
  EXPECT_EQ(auc(low, high), 0.0);
  const std::vector<double> same(4, 0.5);
  EXPECT_EQ(auc(same, same), 0.5);
  EXPECT_EQ(auc(std::vector<double>{0.9}, std::vector<double>{0.8, 0.95}), 0.5);
  EXPECT_THROW(auc(std::vector<double>{}, low), DataError);
  EXPECT_THROW(auc(low, std::vector<double>{}), DataError);
}

TEST(Auc, InvariantUnderIncreasingTransforms) {
  Rng rng(5);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<double> pos(12);
    std::vector<double> neg(9);
    for (auto& v : pos) v = std::round(rng.normal() * 4.0) / 4.0;
    for (auto& v : neg) v = std::round(rng.normal() * 4.0) / 4.0;
    const double base = auc(pos, neg);
    for (auto f : std::vector<double (*)(double)>{[](double x) { return std::exp(x); },
                                                   [](double x) { return x * x * x + 2.0 * x; },
                                                   [](double x) { return 3.0 * x - 7.0; },
                                                   [](double x) { return std::atan(x); }}) {
      std::vector<double> tp;
      std::vector<double> tn;
      for (double v : pos) tp.push_back(f(v));
      for (double v : neg) tn.push_back(f(v));
      EXPECT_EQ(auc(tp, tn), base);
    }
  }
}

TEST(RandomBaseline, MatchesSubsetEnumeration) {
  // Fraction of k-subsets of n positions that contain one of r relevant ones.
  for (std::size_t n = 1; n <= 12; ++n) {
    for (std::size_t r = 1; r <= n; ++r) {
      for (std::size_t k = 1; k <= n; ++k) {
        std::size_t subsets = 0;
        std::size_t hits = 0;
        for (std::uint32_t mask = 0; mask < (1U << n); ++mask) {
          if (static_cast<std::size_t>(std::popcount(mask)) != k) continue;
          ++subsets;
          hits += (mask & ((1U << r) - 1)) != 0 ? 1 : 0;
        }
        EXPECT_NEAR(random_hr_baseline(n, r, k), static_cast<double>(hits) / static_cast<double>(subsets), 1e-12);
      }
    }
  }
}

TEST(Fltb, ArgmaxAndTieRule) {
  EXPECT_EQ(argmax_first(std::vector<double>{0.8, 0.1, 0.2, 0.3}), 0u);
  EXPECT_EQ(argmax_first(std::vector<double>{0.4, 0.4, 0.4, 0.4}), 0u);
  EXPECT_EQ(argmax_first(std::vector<double>{0.1, 0.5, 0.5, 0.2}), 1u);
}

TEST(Fltb, TrialConstruction) {
  auto ws = synthetic_workspace(3);
  const Catalog& c = ws->catalog;
  for (std::uint32_t o = 0; o < c.n_outfits(); ++o) {
    const FltbTrial t = make_fltb_trial(o, c, ws->splits, 11);
    const auto& items = c.outfit_items[o];
    EXPECT_EQ(t.candidates[t.truth], items[t.masked]);
    std::set<std::uint32_t> distinct(t.candidates.begin(), t.candidates.end());
    EXPECT_EQ(distinct.size(), 4u);
    std::size_t same_available = 0;
    for (auto i : ws->splits.compat_negative_pool) {
      same_available += c.item_category[i] == c.item_category[items[t.masked]] &&
                        std::count(items.begin(), items.end(), i) == 0;
    }
    std::size_t same_drawn = 0;
    for (std::size_t s = 0; s < 4; ++s) {
      if (s == t.truth) continue;
      EXPECT_FALSE(std::count(items.begin(), items.end(), t.candidates[s]));
      same_drawn += c.item_category[t.candidates[s]] == c.item_category[items[t.masked]];
    }
    EXPECT_EQ(same_drawn, std::min<std::size_t>(3, same_available));
    const FltbTrial again = make_fltb_trial(o, c, ws->splits, 11);
    EXPECT_EQ(again.candidates, t.candidates);
    EXPECT_EQ(again.masked, t.masked);
  }
  Dataset ds = test::hand_dataset();
  ds.outfits.emplace(13, std::vector<Id>{5});
  const Catalog small = Catalog::build(ds);
  EXPECT_THROW(make_fltb_trial(small.outfit(13), small, Splits{}, 1), DataError);
}

TEST(Fltb, ConstantScorerHitsAQuarter) {
  // Every candidate scores 0, so slot 0 always wins and accuracy is the
  // frequency of the true item landing in slot 0.
  auto ws = synthetic_workspace(4);
  ModelState m = init_model(model_dims_for(ws->catalog, test::small_train_config()), 1);
  m.value(m.view_compat_outer).setZero();
  const PropagationOutput prop = forward(ws->plan, m);
  std::size_t correct = 0;
  std::size_t trials = 0;
  for (std::uint64_t seed = 0; trials < 1000; ++seed) {
    for (std::uint32_t o = 0; o < ws->catalog.n_outfits() && trials < 1000; ++o, ++trials) {
      const FltbResult r = fltb(make_fltb_trial(o, ws->catalog, ws->splits, seed), ws->catalog, prop, m);
      EXPECT_EQ(r.chosen, 0u);
      correct += r.correct ? 1 : 0;
    }
  }
  const double p = static_cast<double>(correct) / 1000.0;
  const double half_width = 2.576 * std::sqrt(0.25 * 0.75 / 1000.0);  // 99% interval
  EXPECT_NEAR(p, 0.25, half_width);
}

TEST(Fltb, UntrainedModelNearChance) {
  auto ws = synthetic_workspace(6);
  std::size_t correct = 0;
  std::size_t trials = 0;
  for (std::uint64_t seed = 0; trials < 1000; ++seed) {
    const ModelState m = init_model(model_dims_for(ws->catalog, TrainConfig{}), derive_seed(seed, "init"));
    const PropagationOutput prop = forward(ws->plan, m);
    for (std::uint32_t o = 0; o < ws->catalog.n_outfits() && trials < 1000; ++o, ++trials) {
      correct += fltb(make_fltb_trial(o, ws->catalog, ws->splits, seed), ws->catalog, prop, m).correct ? 1 : 0;
    }
  }
  EXPECT_NEAR(static_cast<double>(correct) / 1000.0, 0.25, 0.05);
}

TEST(Evaluate, UntrainedHitRateNearRandomBaseline) {
  double hr = 0.0;
  double baseline = 0.0;
  const int runs = 20;
  for (int r = 0; r < runs; ++r) {
    auto ws = synthetic_workspace(100 + static_cast<std::uint64_t>(r));
    const ModelState m = init_model(model_dims_for(ws->catalog, TrainConfig{}), derive_seed(r, "init"));
    EvalConfig cfg;
    cfg.compatibility = false;
    const RankingReport rep = evaluate(m, ws->plan, ws->splits, cfg);
    hr += rep.mean.hr / runs;
    baseline += rep.baseline_hr / runs;
  }
  RecordProperty("untrained_hr", std::to_string(hr));
  RecordProperty("random_baseline", std::to_string(baseline));
  EXPECT_NEAR(hr, baseline, 0.08);
}

TEST(Evaluate, DeterministicAndThreadInvariant) {
  auto ws = synthetic_workspace(7);
  const ModelState m = init_model(model_dims_for(ws->catalog, test::small_train_config()), 3);
  EvalConfig cfg;
  cfg.seed = 9;
  const std::string one = report_text(evaluate(m, ws->plan, ws->splits, cfg));
  EXPECT_EQ(report_text(evaluate(m, ws->plan, ws->splits, cfg)), one);
  cfg.threads = 4;
  EXPECT_EQ(report_text(evaluate(m, ws->plan, ws->splits, cfg)), one);
  cfg.threads = 3;
  cfg.partition = EvalPartition::Validation;
  const std::string val3 = report_text(evaluate(m, ws->plan, ws->splits, cfg));
  cfg.threads = 1;
  EXPECT_EQ(report_text(evaluate(m, ws->plan, ws->splits, cfg)), val3);
}

TEST(Evaluate, ReportFormatAndBounds) {
  auto ws = synthetic_workspace(8);
  const ModelState m = init_model(model_dims_for(ws->catalog, test::small_train_config()), 3);
  const RankingReport rep = evaluate(m, ws->plan, ws->splits, {});
  EXPECT_EQ(rep.users_evaluated + rep.users_skipped, ws->catalog.n_users());
  EXPECT_EQ(rep.per_user.size(), rep.users_evaluated);
  for (const auto& u : rep.per_user) {
    EXPECT_TRUE(u.metrics.hr == 0.0 || u.metrics.hr == 1.0);
    EXPECT_LE(u.metrics.recall, 1.0);
    EXPECT_LE(u.metrics.precision, 1.0);
    EXPECT_GE(u.metrics.ndcg, 0.0);
    EXPECT_LE(u.metrics.ndcg, 1.0);
  }
  EXPECT_GE(rep.auc, 0.0);
  EXPECT_LE(rep.auc, 1.0);
  std::ostringstream out;
  write_report(out, rep);
  std::map<std::string, std::string> kv;
  std::istringstream in(out.str());
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq != std::string::npos && line.find(' ') == std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  for (const char* key : {"k", "hr@10", "recall@10", "precision@10", "ndcg@10", "auc", "fltb_accuracy", "users_evaluated"}) {
    EXPECT_TRUE(kv.contains(key)) << key;
  }
  EXPECT_EQ(kv["k"], "10");
  EXPECT_EQ(std::stod(kv["hr@10"]), std::stod(format_number(rep.mean.hr)));
  std::ostringstream rows;
  write_per_user(rows, rep);
  std::istringstream rin(rows.str());
  std::size_t n = 0;
  while (std::getline(rin, line)) {
    ++n;
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 4);
  }
  EXPECT_EQ(n, rep.users_evaluated);
}
