#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "fgat/dataset.hpp"
#include "fgat/model.hpp"
#include "fgat/propagate.hpp"
#include "fgat/rng.hpp"
#include "fgat/score.hpp"
#include "fgat/splits.hpp"
#include "fgat/train.hpp"

namespace fgat {

/// Orders candidate outfits by score descending, ties by ascending index.
/// `exclude` flags outfits that are not candidates.
inline std::vector<std::uint32_t> rank_by_score(std::span<const double> scores, const std::vector<bool>& exclude) {
  std::vector<std::uint32_t> order;
  for (std::uint32_t o = 0; o < scores.size(); ++o) {
    if (exclude.empty() || !exclude[o]) order.push_back(o);
  }
  std::stable_sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) { return scores[a] > scores[b]; });
  return order;
}

enum class EvalPartition { Validation, Test };

/// Candidate outfits for `user`: everything outside the training set, and
/// outside the validation set too when ranking for the test partition.
inline std::vector<std::uint32_t> rank_outfits(std::uint32_t user, const PropagationOutput& prop, const Splits& splits,
                                               EvalPartition part = EvalPartition::Test) {
  const auto n = static_cast<std::size_t>(prop.outfit_star.rows());
  std::vector<bool> exclude(n, false);
  for (auto o : splits.train[user]) exclude[o] = true;
  if (part == EvalPartition::Test) {
    for (auto o : splits.val[user]) exclude[o] = true;
  }
  const Vector scores = prop.outfit_star * prop.user_star.row(user).transpose();
  return rank_by_score(std::span<const double>(scores.data(), n), exclude);
}

struct TopKMetrics {
  double hr = 0.0;
  double recall = 0.0;
  double precision = 0.0;
  double ndcg = 0.0;
};

inline TopKMetrics topk_metrics(std::span<const std::uint32_t> ranking, std::span<const std::uint32_t> relevant,
                                std::size_t k) {
  if (k == 0) throw DataError(ErrorKind::InvalidArgument, "k must be at least 1");
  if (relevant.empty()) throw DataError(ErrorKind::InvalidArgument, "no relevant outfits");
  std::vector<std::uint32_t> rel(relevant.begin(), relevant.end());
  std::sort(rel.begin(), rel.end());
  std::size_t hits = 0;
  double dcg = 0.0;
  for (std::size_t r = 0; r < std::min(k, ranking.size()); ++r) {
    if (std::binary_search(rel.begin(), rel.end(), ranking[r])) {
      ++hits;
      dcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
    }
  }
  double idcg = 0.0;
  for (std::size_t r = 0; r < std::min(k, rel.size()); ++r) idcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
  TopKMetrics m;
  m.hr = hits > 0 ? 1.0 : 0.0;
  m.recall = static_cast<double>(hits) / static_cast<double>(rel.size());
  m.precision = static_cast<double>(hits) / static_cast<double>(k);
  m.ndcg = dcg / idcg;
  return m;
}

/// Probability that a random positive outscores a random negative, ties
/// counted half. Computed from mid-ranks of the pooled scores.
inline double auc(std::span<const double> pos, std::span<const double> neg) {
  if (pos.empty() || neg.empty()) throw DataError(ErrorKind::InvalidArgument, "AUC needs positive and negative scores");
  std::vector<std::pair<double, bool>> all;
  for (double s : pos) all.emplace_back(s, true);
  for (double s : neg) all.emplace_back(s, false);
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  // Sum of 2*rank over positives, so tied groups stay integral.
  double rank_sum2 = 0.0;
  for (std::size_t i = 0; i < all.size();) {
    std::size_t j = i;
    while (j < all.size() && all[j].first == all[i].first) ++j;
    const double mid2 = static_cast<double>(i + j + 1);  // 2 * average of ranks i+1..j
    for (std::size_t q = i; q < j; ++q) {
      if (all[q].second) rank_sum2 += mid2;
    }
    i = j;
  }
  const double np = static_cast<double>(pos.size());
  const double nn = static_cast<double>(neg.size());
  return (rank_sum2 - np * (np + 1.0)) / (2.0 * np * nn);
}

/// Expected HR@k of a uniformly random ranking: 1 - C(n-r, k) / C(n, k).
inline double random_hr_baseline(std::size_t n_candidates, std::size_t n_relevant, std::size_t k) {
  if (n_relevant == 0) return 0.0;
  if (k >= n_candidates) return 1.0;
  double miss = 1.0;
  for (std::size_t j = 0; j < k; ++j) {
    miss *= static_cast<double>(n_candidates - n_relevant - j) / static_cast<double>(n_candidates - j);
    if (miss <= 0.0) return 1.0;
  }
  return 1.0 - miss;
}

struct FltbTrial {
  std::uint32_t outfit = 0;
  std::size_t masked = 0;
  std::array<std::uint32_t, 4> candidates{};
  std::size_t truth = 0;  // slot holding the masked item
};

/// Masks one item of `outfit` and draws three distractors: from the
/// negative pool and same category when possible, then anywhere in the pool,
/// then from any item outside the outfit.
inline FltbTrial make_fltb_trial(std::uint32_t outfit, const Catalog& catalog, const Splits& splits,
                                 std::uint64_t seed) {
  const auto& items = catalog.outfit_items.at(outfit);
  if (items.size() < 2) throw DataError(ErrorKind::InvalidArgument, "FLTB needs an outfit with at least 2 items");
  Rng rng(derive_seed(seed, "fltb", outfit));
  FltbTrial trial;
  trial.outfit = outfit;
  trial.masked = rng.index(items.size());
  const std::uint32_t truth = items[trial.masked];
  const auto category = catalog.item_category[truth];

  auto usable = [&](std::uint32_t i, const std::vector<std::uint32_t>& taken) {
    return std::find(items.begin(), items.end(), i) == items.end() &&
           std::find(taken.begin(), taken.end(), i) == taken.end();
  };
  std::vector<std::uint32_t> distractors;
  auto draw_from = [&](const std::vector<std::uint32_t>& pool) {
    std::vector<std::uint32_t> left;
    for (auto i : pool) {
      if (usable(i, distractors)) left.push_back(i);
    }
    while (distractors.size() < 3 && !left.empty()) {
      const std::size_t k = rng.index(left.size());
      distractors.push_back(left[k]);
      left.erase(left.begin() + static_cast<std::ptrdiff_t>(k));
    }
  };
  std::vector<std::uint32_t> same;
  for (auto i : splits.compat_negative_pool) {
    if (catalog.item_category[i] == category) same.push_back(i);
  }
  draw_from(same);
  draw_from(splits.compat_negative_pool);
  if (distractors.size() < 3) {
    std::vector<std::uint32_t> everything(catalog.n_items());
    std::iota(everything.begin(), everything.end(), 0U);
    draw_from(everything);
  }
  if (distractors.size() < 3) throw DataError(ErrorKind::InvalidArgument, "not enough items for FLTB distractors");

  std::array<std::uint32_t, 4> cands{truth, distractors[0], distractors[1], distractors[2]};
  rng.shuffle(cands);
  trial.candidates = cands;
  trial.truth = static_cast<std::size_t>(std::find(cands.begin(), cands.end(), truth) - cands.begin());
  return trial;
}

/// Index of the highest score; the earliest slot wins ties.
inline std::size_t argmax_first(std::span<const double> scores) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] > scores[best]) best = i;
  }
  return best;
}

struct FltbResult {
  std::size_t chosen = 0;
  bool correct = false;
  std::array<double, 4> scores{};
};

inline FltbResult fltb(const FltbTrial& trial, const Catalog& catalog, const PropagationOutput& prop,
                       const ModelState& m) {
  FltbResult r;
  std::vector<std::uint32_t> items = catalog.outfit_items.at(trial.outfit);
  for (std::size_t s = 0; s < 4; ++s) {
    items[trial.masked] = trial.candidates[s];
    r.scores[s] = score_items(items, prop, m);
  }
  r.chosen = argmax_first(r.scores);
  r.correct = r.chosen == trial.truth;
  return r;
}

struct UserMetrics {
  Id user = 0;
  TopKMetrics metrics;
};

struct RankingReport {
  std::size_t k = 10;
  EvalPartition partition = EvalPartition::Test;
  TopKMetrics mean;
  double baseline_hr = 0.0;  // mean expected HR@k of a random ranking
  std::size_t users_evaluated = 0;
  std::size_t users_skipped = 0;
  std::vector<UserMetrics> per_user;
  double auc = 0.0;
  std::size_t auc_positives = 0;
  std::size_t auc_negatives = 0;
  double fltb_accuracy = 0.0;
  std::size_t fltb_trials = 0;
};

struct EvalConfig {
  std::size_t k = 10;
  EvalPartition partition = EvalPartition::Test;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  bool compatibility = true;  // AUC and FLTB over the partition's outfits
};

namespace detail {

/// Runs fn(i) for i in [0, n) on up to `threads` workers. Results must be
/// written to per-index slots so the outcome is independent of scheduling.
template <class Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      for (std::size_t i = t; i < n; i += threads) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace detail

/// Ranking metrics per user plus compatibility AUC and FLTB over the outfits
/// of the chosen partition. Deterministic for a given seed and any thread count.
inline RankingReport evaluate(const ModelState& m, const PropagationPlan& plan, const Splits& splits,
                              const EvalConfig& cfg) {
  const Catalog& catalog = *plan.catalog;
  const PropagationOutput prop = forward(plan, m);
  RankingReport rep;
  rep.k = cfg.k;
  rep.partition = cfg.partition;
  const auto& target = cfg.partition == EvalPartition::Test ? splits.test : splits.val;

  const std::size_t n_users = splits.train.size();
  std::vector<std::optional<TopKMetrics>> per(n_users);
  std::vector<double> baseline(n_users, 0.0);
  detail::parallel_for(n_users, cfg.threads, [&](std::size_t u) {
    if (target[u].empty()) return;
    const auto ranking = rank_outfits(static_cast<std::uint32_t>(u), prop, splits, cfg.partition);
    per[u] = topk_metrics(ranking, target[u], cfg.k);
    baseline[u] = random_hr_baseline(ranking.size(), target[u].size(), cfg.k);
  });
  for (std::size_t u = 0; u < n_users; ++u) {
    if (!per[u]) {
      ++rep.users_skipped;
      continue;
    }
    ++rep.users_evaluated;
    rep.per_user.push_back({catalog.user_ids[u], *per[u]});
    rep.mean.hr += per[u]->hr;
    rep.mean.recall += per[u]->recall;
    rep.mean.precision += per[u]->precision;
    rep.mean.ndcg += per[u]->ndcg;
    rep.baseline_hr += baseline[u];
  }
  if (rep.users_evaluated > 0) {
    const auto n = static_cast<double>(rep.users_evaluated);
    rep.mean.hr /= n;
    rep.mean.recall /= n;
    rep.mean.precision /= n;
    rep.mean.ndcg /= n;
    rep.baseline_hr /= n;
  }
  if (!cfg.compatibility) return rep;

  std::vector<bool> in_part(catalog.n_outfits(), false);
  for (const auto& list : target) {
    for (auto o : list) in_part[o] = true;
  }
  std::vector<std::uint32_t> outfits;
  for (std::uint32_t o = 0; o < catalog.n_outfits(); ++o) {
    if (in_part[o]) outfits.push_back(o);
  }
  const auto existing = outfit_keys(catalog);
  const auto by_category = items_by_category(catalog);
  std::vector<double> pos(outfits.size());
  std::vector<std::optional<double>> neg(outfits.size());
  std::vector<std::optional<bool>> hit(outfits.size());
  detail::parallel_for(outfits.size(), cfg.threads, [&](std::size_t q) {
    const std::uint32_t o = outfits[q];
    pos[q] = score_items(catalog.outfit_items[o], prop, m);
    Rng rng(derive_seed(cfg.seed, "auc", o));
    const auto corrupted = corrupt_outfit(catalog.outfit_items[o], catalog, by_category, existing, rng);
    if (!corrupted.empty()) neg[q] = score_items(corrupted, prop, m);
    hit[q] = fltb(make_fltb_trial(o, catalog, splits, cfg.seed), catalog, prop, m).correct;
  });
  std::vector<double> negatives;
  std::size_t correct = 0;
  for (std::size_t q = 0; q < outfits.size(); ++q) {
    if (neg[q]) negatives.push_back(*neg[q]);
    correct += *hit[q] ? 1 : 0;
  }
  rep.auc_positives = pos.size();
  rep.auc_negatives = negatives.size();
  if (!pos.empty() && !negatives.empty()) rep.auc = auc(pos, negatives);
  rep.fltb_trials = outfits.size();
  if (!outfits.empty()) rep.fltb_accuracy = static_cast<double>(correct) / static_cast<double>(outfits.size());
  return rep;
}

inline std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

inline void write_report(std::ostream& out, const RankingReport& r) {
  const std::string k = std::to_string(r.k);
  out << "evaluation on the " << (r.partition == EvalPartition::Test ? "test" : "validation") << " partition\n";
  out << "users evaluated: " << r.users_evaluated << " (skipped without held-out outfits: " << r.users_skipped << ")\n";
  out << "  HR@" << k << "        " << format_number(r.mean.hr) << "  (random ranking " << format_number(r.baseline_hr) << ")\n";
  out << "  Recall@" << k << "    " << format_number(r.mean.recall) << '\n';
  out << "  Precision@" << k << " " << format_number(r.mean.precision) << '\n';
  out << "  NDCG@" << k << "      " << format_number(r.mean.ndcg) << '\n';
  out << "  AUC          " << format_number(r.auc) << "  (" << r.auc_positives << " outfits vs " << r.auc_negatives
      << " corrupted)\n";
  out << "  FLTB         " << format_number(r.fltb_accuracy) << "  (" << r.fltb_trials << " trials)\n";
  out << '\n';
  out << "k=" << k << '\n';
  out << "users_evaluated=" << r.users_evaluated << '\n';
  out << "users_skipped=" << r.users_skipped << '\n';
  out << "hr@" << k << '=' << format_number(r.mean.hr) << '\n';
  out << "recall@" << k << '=' << format_number(r.mean.recall) << '\n';
  out << "precision@" << k << '=' << format_number(r.mean.precision) << '\n';
  out << "ndcg@" << k << '=' << format_number(r.mean.ndcg) << '\n';
  out << "random_hr@" << k << '=' << format_number(r.baseline_hr) << '\n';
  out << "auc=" << format_number(r.auc) << '\n';
  out << "auc_positives=" << r.auc_positives << '\n';
  out << "auc_negatives=" << r.auc_negatives << '\n';
  out << "fltb_accuracy=" << format_number(r.fltb_accuracy) << '\n';
  out << "fltb_trials=" << r.fltb_trials << '\n';
}

inline void write_per_user(std::ostream& out, const RankingReport& r) {
  for (const auto& u : r.per_user) {
    out << u.user << ',' << format_number(u.metrics.hr) << ',' << format_number(u.metrics.recall) << ','
        << format_number(u.metrics.precision) << ',' << format_number(u.metrics.ndcg) << '\n';
  }
}

}  // namespace fgat
