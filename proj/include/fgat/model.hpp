#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fgat/autodiff.hpp"
#include "fgat/core.hpp"
#include "fgat/rng.hpp"

namespace fgat {

struct ModelDims {
  std::size_t n_users = 0;
  std::size_t n_outfits = 0;
  std::size_t n_categories = 0;
  std::size_t visual_dim = 2048;
  std::size_t text_dim = 768;
  std::size_t embed_dim = 64;       // d
  std::size_t visual_hidden = 256;  // hidden width of the visual MLP
  std::size_t reduced_dim = 32;     // width of each reduced modality
  std::size_t heads = 4;
  std::size_t views = 6;            // R
  std::size_t view_hidden = 32;     // v
  bool category_aware = false;

  bool operator==(const ModelDims&) const = default;
};

enum class Level : std::size_t { ItemItem = 0, ItemOutfit = 1, OutfitUser = 2 };
inline constexpr std::array<const char*, 3> kLevelNames = {"item_item", "item_outfit", "outfit_user"};

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
};

/// Slot indices of one propagation level: per-head transform W and attention
/// vector a (1 x 2d), plus the level's message transform.
struct LevelSlots {
  std::vector<std::size_t> transform;
  std::vector<std::size_t> attention;
  std::size_t message = 0;
};

/// Every learnable tensor, each with a gradient slot of the same shape.
/// Copying a ModelState copies all values; no storage is shared.
class ModelState {
 public:
  ModelState() = default;

  explicit ModelState(const ModelDims& dims) : dims_(dims) {
    const auto d = dims.embed_dim;
    const auto r = dims.reduced_dim;
    user_table = add("embed.user", dims.n_users, d);
    outfit_table = add("embed.outfit", dims.n_outfits, d);
    visual_w1 = add("fuse.visual.w1", dims.visual_hidden, dims.visual_dim);
    visual_b1 = add("fuse.visual.b1", 1, dims.visual_hidden);
    visual_w2 = add("fuse.visual.w2", r, dims.visual_hidden);
    visual_b2 = add("fuse.visual.b2", 1, r);
    if (dims.category_aware) {
      for (std::size_t c = 0; c < dims.n_categories; ++c) {
        category_w.push_back(add("fuse.category" + std::to_string(c) + ".w", r, r));
        category_b.push_back(add("fuse.category" + std::to_string(c) + ".b", 1, r));
      }
    }
    text_w = add("fuse.text.w", r, dims.text_dim);
    text_b = add("fuse.text.b", 1, r);
    fusion_w = add("fuse.out.w", d, 2 * r);
    fusion_b = add("fuse.out.b", 1, d);
    for (std::size_t l = 0; l < levels.size(); ++l) {
      const std::string prefix = std::string("prop.") + kLevelNames[l];
      for (std::size_t k = 0; k < dims.heads; ++k) {
        levels[l].transform.push_back(add(prefix + ".head" + std::to_string(k) + ".transform", d, d));
        levels[l].attention.push_back(add(prefix + ".head" + std::to_string(k) + ".attention", 1, 2 * d));
      }
      levels[l].message = add(prefix + ".message", d, d);
    }
    view_attention_outer = add("rview.attention.outer", dims.views, dims.view_hidden);
    view_attention_inner = add("rview.attention.inner", dims.view_hidden, d);
    view_compat_outer = add("rview.compat.outer", dims.views, dims.view_hidden);
    view_compat_inner = add("rview.compat.inner", dims.view_hidden, d);
  }

  const ModelDims& dims() const { return dims_; }

  std::vector<Parameter>& params() { return params_; }
  const std::vector<Parameter>& params() const { return params_; }
  Parameter& param(std::size_t slot) { return params_[slot]; }
  const Parameter& param(std::size_t slot) const { return params_[slot]; }
  Matrix& value(std::size_t slot) { return params_[slot].value; }
  const Matrix& value(std::size_t slot) const { return params_[slot].value; }

  std::optional<std::size_t> find(std::string_view name) const {
    for (std::size_t i = 0; i < params_.size(); ++i) {
      if (params_[i].name == name) return i;
    }
    return std::nullopt;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
    return n;
  }

  void zero_grads() {
    for (auto& p : params_) p.grad.setZero();
  }

  double squared_norm() const {
    double s = 0.0;
    for (const auto& p : params_) s += p.value.squaredNorm();
    return s;
  }

  /// Concatenation of every parameter in slot order, row-major within each.
  std::vector<double> flat_values() const { return flatten(&Parameter::value); }
  std::vector<double> flat_grads() const { return flatten(&Parameter::grad); }

  void set_flat_values(std::span<const double> flat) {
    if (flat.size() != parameter_count()) {
      throw DataError(ErrorKind::DimensionMismatch, "flat parameter view has wrong length");
    }
    std::size_t pos = 0;
    for (auto& p : params_) {
      std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(pos), p.value.size(), p.value.data());
      pos += static_cast<std::size_t>(p.value.size());
    }
  }

  std::size_t user_table = 0;
  std::size_t outfit_table = 0;
  std::size_t visual_w1 = 0;
  std::size_t visual_b1 = 0;
  std::size_t visual_w2 = 0;
  std::size_t visual_b2 = 0;
  std::vector<std::size_t> category_w;
  std::vector<std::size_t> category_b;
  std::size_t text_w = 0;
  std::size_t text_b = 0;
  std::size_t fusion_w = 0;
  std::size_t fusion_b = 0;
  std::array<LevelSlots, 3> levels;
  std::size_t view_attention_outer = 0;  // R x v
  std::size_t view_attention_inner = 0;  // v x d
  std::size_t view_compat_outer = 0;     // R x v
  std::size_t view_compat_inner = 0;     // v x d

 private:
  std::size_t add(std::string name, std::size_t rows, std::size_t cols) {
    const auto r = static_cast<Eigen::Index>(rows);
    const auto c = static_cast<Eigen::Index>(cols);
    params_.push_back({std::move(name), Matrix::Zero(r, c), Matrix::Zero(r, c)});
    return params_.size() - 1;
  }

  std::vector<double> flatten(Matrix Parameter::*field) const {
    std::vector<double> out;
    out.reserve(parameter_count());
    for (const auto& p : params_) {
      const Matrix& m = p.*field;
      out.insert(out.end(), m.data(), m.data() + m.size());
    }
    return out;
  }

  ModelDims dims_;
  std::vector<Parameter> params_;
};

inline bool is_bias(const Parameter& p) { return p.name.ends_with(".b") || p.name.ends_with(".b1") || p.name.ends_with(".b2"); }
inline bool is_id_table(const Parameter& p) { return p.name.starts_with("embed."); }

/// Glorot-uniform weights, zero biases, N(0, 0.01) id tables.
inline ModelState init_model(const ModelDims& dims, std::uint64_t seed) {
  if (dims.embed_dim == 0 || dims.visual_dim == 0 || dims.text_dim == 0 || dims.heads == 0 || dims.views == 0 ||
      dims.view_hidden == 0 || dims.visual_hidden == 0 || dims.reduced_dim == 0) {
    throw DataError(ErrorKind::InvalidArgument, "model dimensions must be positive");
  }
  ModelState m(dims);
  Rng rng(derive_seed(seed, "init"));
  for (auto& p : m.params()) {
    if (is_bias(p)) continue;
    if (is_id_table(p)) {
      for (Eigen::Index k = 0; k < p.value.size(); ++k) p.value.data()[k] = rng.normal(0.0, 0.01);
      continue;
    }
    const auto fan_out = static_cast<double>(p.value.rows());
    const auto fan_in = static_cast<double>(p.value.cols());
    const double s = std::sqrt(6.0 / (fan_in + fan_out));
    for (Eigen::Index k = 0; k < p.value.size(); ++k) p.value.data()[k] = rng.uniform(-s, s);
  }
  return m;
}

/// Binds model parameters to tape leaves, one leaf per slot per tape. With
/// `grads` set, backward() accumulates into the parameters' gradient slots.
class BoundModel {
 public:
  BoundModel(ad::Tape& tape, const ModelState& model, ModelState* grads = nullptr)
      : tape_(tape), model_(model), grads_(grads), leaves_(model.params().size()) {}

  ad::Var operator()(std::size_t slot) {
    if (!leaves_[slot]) {
      Matrix* sink = grads_ != nullptr ? &grads_->param(slot).grad : nullptr;
      leaves_[slot] = tape_.leaf(model_.value(slot), sink);
    }
    return *leaves_[slot];
  }

  ad::Tape& tape() { return tape_; }
  const ModelState& model() const { return model_; }

 private:
  ad::Tape& tape_;
  const ModelState& model_;
  ModelState* grads_;
  std::vector<std::optional<ad::Var>> leaves_;
};

/// Activation switches. `linear` replaces LeakyReLU/tanh by the identity and
/// attention softmax by a uniform average, leaving a polynomial network.
struct Activations {
  bool linear = false;

  double slope() const { return linear ? 1.0 : kLeakySlope; }
};

struct FusedItems {
  ad::Var visual;  // n x reduced_dim
  ad::Var textual; // n x reduced_dim
  ad::Var fused;   // n x d
};

/// Visual MLP, textual projection and fusion layer over a batch of items.
inline FusedItems fuse_items(BoundModel& bm, ad::Var visual, ad::Var textual,
                             const std::vector<std::uint32_t>& categories, Activations act = {}) {
  auto& t = bm.tape();
  const ModelState& m = bm.model();
  const auto r = static_cast<Eigen::Index>(m.dims().reduced_dim);
  ad::Var hidden = t.leaky_relu(t.add_bias(t.matmul_nt(visual, bm(m.visual_w1)), bm(m.visual_b1)), act.slope());
  ad::Var ev = t.add_bias(t.matmul_nt(hidden, bm(m.visual_w2)), bm(m.visual_b2));
  if (m.dims().category_aware) {
    std::optional<ad::Var> acc;
    const auto n = static_cast<std::size_t>(t.value(ev).rows());
    for (std::size_t c = 0; c < m.category_w.size(); ++c) {
      auto rows = std::make_shared<std::vector<std::size_t>>();
      auto seg = std::make_shared<ad::Segments>();
      seg->count = n;
      for (std::size_t i = 0; i < n; ++i) {
        if (categories.at(i) == c) {
          rows->push_back(i);
          seg->ids.push_back(i);
        }
      }
      if (rows->empty()) continue;
      ad::Var part = t.add_bias(t.matmul_nt(t.gather_rows(ev, rows), bm(m.category_w[c])), bm(m.category_b[c]));
      ad::Var placed = t.segment_sum(part, seg);
      acc = acc ? t.add(*acc, placed) : placed;
    }
    if (acc) ev = *acc;
  }
  ad::Var et = t.add_bias(t.matmul_nt(textual, bm(m.text_w)), bm(m.text_b));
  ad::Var fw = bm(m.fusion_w);
  ad::Var em = t.add(t.matmul_nt(ev, t.cols(fw, 0, r)), t.matmul_nt(et, t.cols(fw, r, r)));
  em = t.add_bias(em, bm(m.fusion_b));
  return {ev, et, em};
}

struct ItemEmbedding {
  Vector visual;   // reduced visual, reduced_dim
  Vector textual;  // reduced textual, reduced_dim
  Vector fused;    // d; the item's initial node embedding
};

/// Fused embedding of a single item.
inline ItemEmbedding fuse_item(const Vector& visual, const Vector& textual, const ModelState& m,
                               std::uint32_t category = 0) {
  if (static_cast<std::size_t>(visual.size()) != m.dims().visual_dim ||
      static_cast<std::size_t>(textual.size()) != m.dims().text_dim) {
    throw DataError(ErrorKind::DimensionMismatch, "feature dims do not match the model");
  }
  ad::Tape tape;
  BoundModel bm(tape, m);
  const FusedItems f = fuse_items(bm, tape.constant(visual.transpose()), tape.constant(textual.transpose()), {category});
  return {tape.value(f.visual).row(0).transpose(), tape.value(f.textual).row(0).transpose(),
          tape.value(f.fused).row(0).transpose()};
}

}  // namespace fgat
