#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "fgat/autodiff.hpp"
#include "fgat/model.hpp"
#include "fgat/propagate.hpp"

namespace fgat {

/// User-outfit preference: inner product of the final embeddings.
inline double rec_score(const Eigen::Ref<const RowVector>& user_star, const Eigen::Ref<const RowVector>& outfit_star) {
  if (user_star.size() != outfit_star.size()) throw DataError(ErrorKind::DimensionMismatch, "embedding sizes differ");
  return user_star.dot(outfit_star);
}

/// R-view attention A and compatibility C for a batch of outfits.
///
/// Rows of `item_rows` index into `h_items`; rows sharing a segment id form
/// one outfit. Both results are (total rows) x R: entry (r, v) is item r's
/// weight (resp. compatibility) in view v, i.e. the transpose of the R x n
/// per-outfit matrices. Softmax runs over each outfit's items per view.
struct ViewVars {
  ad::Var attention;
  ad::Var compat;
};

inline ViewVars rview_vars(BoundModel& bm, ad::Var items, std::shared_ptr<const ad::Segments> outfits,
                           Activations act = {}) {
  auto& t = bm.tape();
  const ModelState& m = bm.model();
  ad::Var logits = t.matmul_nt(t.leaky_relu(t.matmul_nt(items, bm(m.view_attention_inner)), act.slope()),
                               bm(m.view_attention_outer));
  ad::Var attention;
  if (act.linear) {
    std::vector<double> size(outfits->count, 0.0);
    for (auto s : outfits->ids) size[s] += 1.0;
    Matrix uniform(static_cast<Eigen::Index>(outfits->ids.size()), static_cast<Eigen::Index>(m.dims().views));
    for (std::size_t r = 0; r < outfits->ids.size(); ++r) uniform.row(static_cast<Eigen::Index>(r)).setConstant(1.0 / size[outfits->ids[r]]);
    attention = t.constant(std::move(uniform));
  } else {
    attention = t.segment_softmax(logits, outfits);
  }
  ad::Var pre = t.matmul_nt(t.leaky_relu(t.matmul_nt(items, bm(m.view_compat_inner)), act.slope()),
                            bm(m.view_compat_outer));
  ad::Var compat = act.linear ? pre : t.tanh(pre);
  return {attention, compat};
}

/// Per-outfit compatibility, (1/R) sum_v a_v . c_v, as an (outfits x 1) column.
inline ad::Var compat_scores_var(BoundModel& bm, ad::Var h_items, const std::vector<std::vector<std::uint32_t>>& outfits,
                                 Activations act = {}) {
  auto& t = bm.tape();
  auto rows = std::make_shared<std::vector<std::size_t>>();
  auto seg = std::make_shared<ad::Segments>();
  seg->count = outfits.size();
  for (std::size_t o = 0; o < outfits.size(); ++o) {
    for (auto i : outfits[o]) {
      rows->push_back(i);
      seg->ids.push_back(o);
    }
  }
  const ViewVars v = rview_vars(bm, t.gather_rows(h_items, rows), seg, act);
  ad::Var per_item = t.row_sum(t.hadamard(v.attention, v.compat));
  return t.scale(t.segment_sum(per_item, seg), 1.0 / static_cast<double>(bm.model().dims().views));
}

struct RViewResult {
  Matrix attention;  // R x n, rows sum to 1
  Matrix compat;     // R x n, entries in (-1, 1)
  double score = 0.0;
};

namespace detail {

inline void check_outfit_matrix(const Matrix& outfit, const ModelState& m) {
  if (outfit.rows() < 1) throw DataError(ErrorKind::InvalidArgument, "outfit matrix has no rows");
  if (static_cast<std::size_t>(outfit.cols()) != m.dims().embed_dim) {
    throw DataError(ErrorKind::DimensionMismatch, "outfit matrix width differs from embedding dim");
  }
}

inline ViewVars single_outfit_views(BoundModel& bm, const Matrix& outfit) {
  auto seg = std::make_shared<ad::Segments>();
  seg->ids.assign(static_cast<std::size_t>(outfit.rows()), 0);
  seg->count = 1;
  return rview_vars(bm, bm.tape().constant(outfit), seg);
}

}  // namespace detail

/// A = row-softmax(W4 LeakyReLU(W5 O^T)) for an n x d outfit matrix O.
inline Matrix rview_attention(const Matrix& outfit, const ModelState& m) {
  detail::check_outfit_matrix(outfit, m);
  ad::Tape tape;
  BoundModel bm(tape, m);
  return tape.value(detail::single_outfit_views(bm, outfit).attention).transpose();
}

/// C = tanh(W6 LeakyReLU(W7 O^T)) for an n x d outfit matrix O.
inline Matrix rview_compat(const Matrix& outfit, const ModelState& m) {
  detail::check_outfit_matrix(outfit, m);
  ad::Tape tape;
  BoundModel bm(tape, m);
  return tape.value(detail::single_outfit_views(bm, outfit).compat).transpose();
}

/// Mean over views of a_r . c_r.
inline double outfit_compat_score(const Matrix& attention, const Matrix& compat) {
  if (attention.rows() != compat.rows() || attention.cols() != compat.cols() || attention.rows() == 0) {
    throw DataError(ErrorKind::DimensionMismatch, "attention and compatibility shapes differ");
  }
  return attention.cwiseProduct(compat).sum() / static_cast<double>(attention.rows());
}

inline RViewResult rview_score(const Matrix& outfit, const ModelState& m) {
  RViewResult r;
  r.attention = rview_attention(outfit, m);
  r.compat = rview_compat(outfit, m);
  r.score = outfit_compat_score(r.attention, r.compat);
  return r;
}

/// Stacks the updated embeddings of `items` (catalog indices) in order.
inline Matrix outfit_matrix(const std::vector<std::uint32_t>& items, const PropagationOutput& prop) {
  Matrix o(static_cast<Eigen::Index>(items.size()), prop.item_star.cols());
  for (std::size_t r = 0; r < items.size(); ++r) o.row(static_cast<Eigen::Index>(r)) = prop.item_star.row(items[r]);
  return o;
}

inline double score_items(const std::vector<std::uint32_t>& items, const PropagationOutput& prop, const ModelState& m) {
  return rview_score(outfit_matrix(items, prop), m).score;
}

inline double score_outfit(std::uint32_t outfit, const Catalog& catalog, const PropagationOutput& prop,
                           const ModelState& m) {
  if (outfit >= catalog.n_outfits()) throw DataError(ErrorKind::NotFound, "unknown outfit index " + std::to_string(outfit));
  return score_items(catalog.outfit_items[outfit], prop, m);
}

}  // namespace fgat
