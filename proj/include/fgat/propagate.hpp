#pragma once

// Three first-order attention stages over the fashion graph:
//
//   item -> item    h_i* = h_i + LeakyReLU(sum_j a_ij W1 (h_i . h_j))
//   item -> outfit  h_o* = h_o + LeakyReLU(sum_i a_io W2 h_i*)
//   outfit -> user  h_u* = h_u + LeakyReLU(sum_o a_ou W3 h_o*)
//
// with per-head logits e = LeakyReLU(a^T [W x || W y]) softmax-normalised over
// each target's neighbourhood, and head outputs averaged. Item-item logits
// also carry ln(w(c_i, c_j) + 1e-8), the category co-occurrence prior.
// Targets without neighbours keep their input row bit-for-bit.

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <ostream>
#include <span>
#include <vector>

#include "fgat/autodiff.hpp"
#include "fgat/dataset.hpp"
#include "fgat/graph.hpp"
#include "fgat/model.hpp"
#include "fgat/rng.hpp"

namespace fgat {

inline constexpr double kCooccurrenceEpsilon = 1e-8;

/// Directed attention edges of one level, grouped by target.
struct LevelPlan {
  std::size_t n_targets = 0;
  std::vector<std::uint32_t> target;
  std::vector<std::uint32_t> source;
  std::shared_ptr<const std::vector<std::size_t>> target_rows;
  std::shared_ptr<const std::vector<std::size_t>> source_rows;
  std::shared_ptr<const ad::Segments> segments;
  std::shared_ptr<const std::vector<bool>> has_neighbors;
  Matrix bias;  // edges x 1 log-prior, empty when the level has none

  std::size_t edge_count() const { return target.size(); }
};

inline LevelPlan make_level_plan(std::size_t n_targets, std::vector<std::uint32_t> target,
                                 std::vector<std::uint32_t> source, std::span<const double> prior = {}) {
  LevelPlan p;
  p.n_targets = n_targets;
  auto trows = std::make_shared<std::vector<std::size_t>>(target.begin(), target.end());
  auto srows = std::make_shared<std::vector<std::size_t>>(source.begin(), source.end());
  auto seg = std::make_shared<ad::Segments>();
  seg->ids = *trows;
  seg->count = n_targets;
  auto has = std::make_shared<std::vector<bool>>(n_targets, false);
  for (auto t : target) (*has)[t] = true;
  if (!prior.empty()) {
    p.bias.resize(static_cast<Eigen::Index>(prior.size()), 1);
    for (std::size_t e = 0; e < prior.size(); ++e) p.bias(static_cast<Eigen::Index>(e), 0) = std::log(prior[e] + kCooccurrenceEpsilon);
  }
  p.target = std::move(target);
  p.source = std::move(source);
  p.target_rows = std::move(trows);
  p.source_rows = std::move(srows);
  p.segments = std::move(seg);
  p.has_neighbors = std::move(has);
  return p;
}

/// Everything the forward pass needs besides parameters. Holds a pointer to
/// the catalog's feature matrices; the catalog must outlive the plan.
struct PropagationPlan {
  const Catalog* catalog = nullptr;
  std::array<LevelPlan, 3> levels;

  const LevelPlan& level(Level l) const { return levels[static_cast<std::size_t>(l)]; }
};

inline PropagationPlan make_plan(const Catalog& catalog, const FashionGraph& graph, const CategoryGraph& cg) {
  PropagationPlan plan;
  plan.catalog = &catalog;
  const ItemNeighborhoods nb = item_neighborhoods(catalog, graph, cg);
  plan.levels[0] = make_level_plan(graph.n_items, nb.target, nb.source, nb.weight);
  std::vector<std::uint32_t> t;
  std::vector<std::uint32_t> s;
  for (std::uint32_t o = 0; o < graph.n_outfits; ++o) {
    for (auto i : graph.outfit_items[o]) {
      t.push_back(o);
      s.push_back(i);
    }
  }
  plan.levels[1] = make_level_plan(graph.n_outfits, t, s);
  t.clear();
  s.clear();
  for (std::uint32_t u = 0; u < graph.n_users; ++u) {
    for (auto o : graph.user_outfits[u]) {
      t.push_back(u);
      s.push_back(o);
    }
  }
  plan.levels[2] = make_level_plan(graph.n_users, t, s);
  return plan;
}

struct ForwardOptions {
  bool training = false;
  double embed_dropout = 0.0;
  double attention_dropout = 0.0;
  std::uint64_t dropout_seed = 0;
  Activations act;
};

namespace detail {

/// Inverted-dropout mask: entries are 0 or 1 / (1 - p).
inline Matrix dropout_mask(Eigen::Index rows, Eigen::Index cols, double p, Rng& rng) {
  Matrix mask(rows, cols);
  const double keep = 1.0 / (1.0 - p);
  for (Eigen::Index k = 0; k < mask.size(); ++k) mask.data()[k] = rng.bernoulli(p) ? 0.0 : keep;
  return mask;
}

/// 0/1 edge mask that never drops every edge of a target.
inline Matrix edge_mask(const LevelPlan& plan, double p, Rng& rng) {
  Matrix mask(static_cast<Eigen::Index>(plan.edge_count()), 1);
  std::vector<bool> kept(plan.n_targets, false);
  for (std::size_t e = 0; e < plan.edge_count(); ++e) {
    const bool keep = !rng.bernoulli(p);
    mask(static_cast<Eigen::Index>(e), 0) = keep ? 1.0 : 0.0;
    if (keep) kept[plan.target[e]] = true;
  }
  for (std::size_t e = 0; e < plan.edge_count(); ++e) {
    if (!kept[plan.target[e]]) mask(static_cast<Eigen::Index>(e), 0) = 1.0;
  }
  return mask;
}

}  // namespace detail

/// Per-edge attention of one head: softmax over each target's neighbours of
/// LeakyReLU(a^T [W x || W y]) (+ log prior). For the item-item level the
/// target comes first in the concatenation; for the two upward levels the
/// source (the lower-level node) does. `kept` (0/1 per edge) drops edges
/// from the softmax; dropping in logit space keeps saturated heads finite.
inline ad::Var attention_coefficients(BoundModel& bm, const LevelPlan& plan, Level level, std::size_t head,
                                      ad::Var h_target, ad::Var h_source, Activations act = {},
                                      const Matrix* kept = nullptr) {
  auto& t = bm.tape();
  const ModelState& m = bm.model();
  const auto lv = static_cast<std::size_t>(level);
  auto is_kept = [&](std::size_t e) { return kept == nullptr || (*kept)(static_cast<Eigen::Index>(e), 0) != 0.0; };
  if (act.linear) {
    Matrix uniform = Matrix::Zero(static_cast<Eigen::Index>(plan.edge_count()), 1);
    std::vector<double> degree(plan.n_targets, 0.0);
    for (std::size_t e = 0; e < plan.edge_count(); ++e) degree[plan.target[e]] += is_kept(e) ? 1.0 : 0.0;
    for (std::size_t e = 0; e < plan.edge_count(); ++e) {
      if (is_kept(e)) uniform(static_cast<Eigen::Index>(e), 0) = 1.0 / degree[plan.target[e]];
    }
    return t.constant(std::move(uniform));
  }
  const auto d = static_cast<Eigen::Index>(m.dims().embed_dim);
  ad::Var w = bm(m.levels[lv].transform[head]);
  ad::Var a = bm(m.levels[lv].attention[head]);
  const bool target_first = level == Level::ItemItem;
  ad::Var a_target = t.cols(a, target_first ? 0 : d, d);
  ad::Var a_source = t.cols(a, target_first ? d : 0, d);
  ad::Var zt = t.matmul_nt(h_target, w);
  ad::Var zs = h_target.id == h_source.id ? zt : t.matmul_nt(h_source, w);
  ad::Var st = t.matmul_nt(zt, a_target);
  ad::Var ss = t.matmul_nt(zs, a_source);
  ad::Var e = t.leaky_relu(t.add(t.gather_rows(st, plan.target_rows), t.gather_rows(ss, plan.source_rows)), act.slope());
  if (plan.bias.size() > 0) e = t.add(e, t.constant(plan.bias));
  if (kept != nullptr) {
    Matrix off = Matrix::Zero(static_cast<Eigen::Index>(plan.edge_count()), 1);
    for (std::size_t e = 0; e < plan.edge_count(); ++e) {
      if (!is_kept(e)) off(static_cast<Eigen::Index>(e), 0) = -std::numeric_limits<double>::infinity();
    }
    e = t.add(e, t.constant(std::move(off)));
  }
  return t.segment_softmax(e, plan.segments);
}

struct LevelVars {
  ad::Var output;
  std::vector<ad::Var> alpha;  // per head, edges x 1
};

/// One level: h* = h + LeakyReLU(mean over heads of sum alpha * message).
/// `messages` holds one row per edge.
inline LevelVars propagate_level(BoundModel& bm, const LevelPlan& plan, Level level, ad::Var h_target,
                                 ad::Var h_source, ad::Var messages, const ForwardOptions& opt, Rng* drop_rng) {
  auto& t = bm.tape();
  const std::size_t heads = bm.model().dims().heads;
  LevelVars out;
  if (plan.edge_count() == 0) {
    out.output = h_target;
    out.alpha.resize(heads, t.constant(Matrix(0, 1)));
    return out;
  }
  std::optional<ad::Var> total;
  for (std::size_t k = 0; k < heads; ++k) {
    std::optional<Matrix> kept;
    if (opt.training && opt.attention_dropout > 0.0 && drop_rng != nullptr) {
      kept = detail::edge_mask(plan, opt.attention_dropout, *drop_rng);
    }
    ad::Var alpha = attention_coefficients(bm, plan, level, k, h_target, h_source, opt.act, kept ? &*kept : nullptr);
    out.alpha.push_back(alpha);
    ad::Var head_out = t.leaky_relu(t.segment_sum(t.scale_rows(messages, alpha), plan.segments), opt.act.slope());
    total = total ? t.add(*total, head_out) : head_out;
  }
  ad::Var mean = t.scale(*total, 1.0 / static_cast<double>(heads));
  out.output = t.masked_add(h_target, mean, plan.has_neighbors);
  return out;
}

inline LevelVars propagate_item_item(BoundModel& bm, const LevelPlan& plan, ad::Var h_item,
                                     const ForwardOptions& opt = {}, Rng* drop_rng = nullptr) {
  auto& t = bm.tape();
  const ModelState& m = bm.model();
  ad::Var pair = t.hadamard(t.gather_rows(h_item, plan.target_rows), t.gather_rows(h_item, plan.source_rows));
  ad::Var messages = t.matmul_nt(pair, bm(m.levels[0].message));
  return propagate_level(bm, plan, Level::ItemItem, h_item, h_item, messages, opt, drop_rng);
}

inline LevelVars propagate_item_outfit(BoundModel& bm, const LevelPlan& plan, ad::Var h_item_star, ad::Var h_outfit,
                                       const ForwardOptions& opt = {}, Rng* drop_rng = nullptr) {
  auto& t = bm.tape();
  ad::Var messages = t.gather_rows(t.matmul_nt(h_item_star, bm(bm.model().levels[1].message)), plan.source_rows);
  return propagate_level(bm, plan, Level::ItemOutfit, h_outfit, h_item_star, messages, opt, drop_rng);
}

inline LevelVars propagate_outfit_user(BoundModel& bm, const LevelPlan& plan, ad::Var h_outfit_star, ad::Var h_user,
                                       const ForwardOptions& opt = {}, Rng* drop_rng = nullptr) {
  auto& t = bm.tape();
  ad::Var messages = t.gather_rows(t.matmul_nt(h_outfit_star, bm(bm.model().levels[2].message)), plan.source_rows);
  return propagate_level(bm, plan, Level::OutfitUser, h_user, h_outfit_star, messages, opt, drop_rng);
}

struct ForwardVars {
  ad::Var item_initial;
  ad::Var item_star;
  ad::Var outfit_star;
  ad::Var user_star;
  std::array<std::vector<ad::Var>, 3> alpha;
};

/// Fusion of every item followed by the three stages, on an existing tape.
inline ForwardVars forward_vars(BoundModel& bm, const PropagationPlan& plan, const ForwardOptions& opt = {}) {
  auto& t = bm.tape();
  const ModelState& m = bm.model();
  const Catalog& c = *plan.catalog;
  const FusedItems fused = fuse_items(bm, t.constant(c.visual), t.constant(c.textual), c.item_category, opt.act);

  Rng drop_rng(derive_seed(opt.dropout_seed, "dropout"));
  const bool embed_drop = opt.training && opt.embed_dropout > 0.0;
  auto dropped = [&](ad::Var h) {
    if (!embed_drop) return h;
    const Matrix& v = t.value(h);
    return t.hadamard(h, t.constant(detail::dropout_mask(v.rows(), v.cols(), opt.embed_dropout, drop_rng)));
  };
  ad::Var h_item = dropped(fused.fused);
  ad::Var h_outfit = dropped(bm(m.outfit_table));
  ad::Var h_user = dropped(bm(m.user_table));

  ForwardVars fv;
  fv.item_initial = h_item;
  LevelVars items = propagate_item_item(bm, plan.levels[0], h_item, opt, &drop_rng);
  LevelVars outfits = propagate_item_outfit(bm, plan.levels[1], items.output, h_outfit, opt, &drop_rng);
  LevelVars users = propagate_outfit_user(bm, plan.levels[2], outfits.output, h_user, opt, &drop_rng);
  fv.item_star = items.output;
  fv.outfit_star = outfits.output;
  fv.user_star = users.output;
  fv.alpha = {items.alpha, outfits.alpha, users.alpha};
  return fv;
}

/// Updated embeddings plus the attention actually used on every edge.
struct PropagationOutput {
  Matrix item_initial;
  Matrix item_star;    // n_items x d
  Matrix outfit_star;  // n_outfits x d
  Matrix user_star;    // n_users x d
  /// attention[level][head](edge) with edges ordered as in the plan.
  std::array<std::vector<Vector>, 3> attention;
  std::array<std::vector<std::uint32_t>, 3> targets;
  std::array<std::vector<std::uint32_t>, 3> sources;
};

inline PropagationOutput forward(const PropagationPlan& plan, const ModelState& m, const ForwardOptions& opt = {}) {
  ad::Tape tape;
  BoundModel bm(tape, m);
  const ForwardVars fv = forward_vars(bm, plan, opt);
  PropagationOutput out;
  out.item_initial = tape.value(fv.item_initial);
  out.item_star = tape.value(fv.item_star);
  out.outfit_star = tape.value(fv.outfit_star);
  out.user_star = tape.value(fv.user_star);
  for (std::size_t l = 0; l < 3; ++l) {
    for (auto a : fv.alpha[l]) out.attention[l].push_back(tape.value(a).col(0));
    out.targets[l] = plan.levels[l].target;
    out.sources[l] = plan.levels[l].source;
  }
  return out;
}

/// Standalone attention for one level and head over explicit edges.
/// `prior` (optional, one per edge) adds ln(prior + 1e-8) to each logit.
inline Vector attention_weights(Level level, const std::vector<std::uint32_t>& targets,
                                const std::vector<std::uint32_t>& sources, const Matrix& h_target,
                                const Matrix& h_source, const ModelState& m, std::size_t head,
                                std::span<const double> prior = {}) {
  if (targets.size() != sources.size() || (!prior.empty() && prior.size() != targets.size())) {
    throw DataError(ErrorKind::DimensionMismatch, "edge arrays differ in length");
  }
  if (head >= m.dims().heads) throw DataError(ErrorKind::InvalidArgument, "head index out of range");
  const LevelPlan plan = make_level_plan(static_cast<std::size_t>(h_target.rows()), targets, sources, prior);
  ad::Tape tape;
  BoundModel bm(tape, m);
  ad::Var ht = tape.constant(h_target);
  ad::Var hs = level == Level::ItemItem && &h_target == &h_source ? ht : tape.constant(h_source);
  return tape.value(attention_coefficients(bm, plan, level, head, ht, hs)).col(0);
}

/// `level<TAB>target<TAB>source<TAB>head<TAB>alpha`, external ids.
inline void write_attention_dump(std::ostream& out, const PropagationOutput& prop, const Catalog& catalog) {
  const std::array<const std::vector<Id>*, 3> target_ids = {&catalog.item_ids, &catalog.outfit_ids, &catalog.user_ids};
  const std::array<const std::vector<Id>*, 3> source_ids = {&catalog.item_ids, &catalog.item_ids, &catalog.outfit_ids};
  char buf[64];
  for (std::size_t l = 0; l < 3; ++l) {
    for (std::size_t k = 0; k < prop.attention[l].size(); ++k) {
      for (std::size_t e = 0; e < prop.targets[l].size(); ++e) {
        std::snprintf(buf, sizeof buf, "%.9g", prop.attention[l][k](static_cast<Eigen::Index>(e)));
        out << kLevelNames[l] << '\t' << (*target_ids[l])[prop.targets[l][e]] << '\t'
            << (*source_ids[l])[prop.sources[l][e]] << '\t' << k << '\t' << buf << '\n';
      }
    }
  }
}

}  // namespace fgat
