#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <filesystem>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "fgat/autodiff.hpp"
#include "fgat/checkpoint.hpp"
#include "fgat/dataset.hpp"
#include "fgat/model.hpp"
#include "fgat/propagate.hpp"
#include "fgat/rng.hpp"
#include "fgat/score.hpp"
#include "fgat/splits.hpp"

namespace fgat {

struct TrainConfig {
  std::size_t embed_dim = 64;
  std::size_t batch_size = 512;
  double lr = 0.001;
  double embed_dropout = 0.2;
  double attention_dropout = 0.3;
  double l2 = 1e-4;
  std::size_t heads = 4;
  std::size_t views = 6;
  std::size_t epochs = 100;
  std::uint64_t seed = 0;
  double lambda_rec = 1.0;
  double lambda_comp = 1.0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  void validate() const {
    auto fail = [](const std::string& msg) { throw DataError(ErrorKind::InvalidArgument, "train config: " + msg); };
    if (embed_dim == 0 || batch_size == 0 || heads == 0 || views == 0) fail("sizes must be positive");
    if (!(lr >= 0.0) || !(l2 >= 0.0)) fail("lr and l2 must be non-negative");
    if (!(embed_dropout >= 0.0 && embed_dropout < 1.0) || !(attention_dropout >= 0.0 && attention_dropout < 1.0)) {
      fail("dropout must lie in [0, 1)");
    }
    if (!(lambda_rec >= 0.0) || !(lambda_comp >= 0.0)) fail("loss weights must be non-negative");
  }
};

/// -ln sigmoid(diff), computed as softplus(-diff) without overflow.
inline double bpr_loss(double diff) {
  const double x = -diff;
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

inline double bpr_rec_loss(double pos, double neg) { return bpr_loss(pos - neg); }
inline double bpr_comp_loss(double pos, double neg) { return bpr_loss(pos - neg); }

struct RecTriple {
  std::uint32_t user;
  std::uint32_t positive;
  std::uint32_t negative;
};

struct CompatPair {
  std::uint32_t positive;                  // outfit index
  std::vector<std::uint32_t> negative;     // item indices of the corrupted outfit
};

struct TripleBatch {
  std::vector<RecTriple> rec;
  std::vector<CompatPair> compat;
  std::size_t skipped_users = 0;
  std::size_t skipped_outfits = 0;
};

/// Sorted item lists of every catalog outfit, for membership tests.
inline std::set<std::vector<std::uint32_t>> outfit_keys(const Catalog& catalog) {
  std::set<std::vector<std::uint32_t>> keys;
  for (auto members : catalog.outfit_items) {
    std::sort(members.begin(), members.end());
    keys.insert(std::move(members));
  }
  return keys;
}

/// Items grouped by category.
inline std::vector<std::vector<std::uint32_t>> items_by_category(const Catalog& catalog) {
  std::vector<std::vector<std::uint32_t>> by(catalog.n_categories);
  for (std::uint32_t i = 0; i < catalog.n_items(); ++i) by[catalog.item_category[i]].push_back(i);
  return by;
}

/// Keeps `positive`'s category template and replaces every item with a
/// different item of the same category (any item when the category has no
/// other). Never repeats an item and never returns an existing outfit; gives
/// up after `attempts` draws and returns an empty list.
inline std::vector<std::uint32_t> corrupt_outfit(const std::vector<std::uint32_t>& positive, const Catalog& catalog,
                                                 const std::vector<std::vector<std::uint32_t>>& by_category,
                                                 const std::set<std::vector<std::uint32_t>>& existing, Rng& rng,
                                                 int attempts = 100) {
  for (int attempt = 0; attempt < attempts; ++attempt) {
    std::vector<std::uint32_t> out;
    for (auto item : positive) {
      std::vector<std::uint32_t> choices;
      for (auto c : by_category[catalog.item_category[item]]) {
        if (c != item && std::find(out.begin(), out.end(), c) == out.end()) choices.push_back(c);
      }
      if (choices.empty()) {
        for (std::uint32_t c = 0; c < catalog.n_items(); ++c) {
          if (c != item && std::find(out.begin(), out.end(), c) == out.end()) choices.push_back(c);
        }
      }
      if (choices.empty()) return {};
      out.push_back(choices[rng.index(choices.size())]);
    }
    std::vector<std::uint32_t> key = out;
    std::sort(key.begin(), key.end());
    if (!existing.contains(key)) return out;
  }
  return {};
}

/// One negative per positive in `positives` (per dense user). Recommendation
/// negatives are uniform over the outfits the user never interacted with in
/// any partition; compatibility negatives corrupt each positive outfit via
/// corrupt_outfit().
inline TripleBatch sample_negatives(const Catalog& catalog, const std::vector<std::vector<std::uint32_t>>& positives,
                                    std::uint64_t seed) {
  TripleBatch batch;
  Rng rng(derive_seed(seed, "negatives"));
  const std::size_t n_outfits = catalog.n_outfits();
  std::vector<bool> used(n_outfits, false);
  for (std::uint32_t u = 0; u < positives.size(); ++u) {
    if (positives[u].empty()) continue;
    std::vector<bool> seen(n_outfits, false);
    for (auto o : catalog.user_outfits[u]) seen[o] = true;
    std::vector<std::uint32_t> unseen;
    for (std::uint32_t o = 0; o < n_outfits; ++o) {
      if (!seen[o]) unseen.push_back(o);
    }
    for (auto o : positives[u]) used[o] = true;
    if (unseen.empty()) {
      ++batch.skipped_users;
      continue;
    }
    for (auto o : positives[u]) batch.rec.push_back({u, o, unseen[rng.index(unseen.size())]});
  }
  const auto existing = outfit_keys(catalog);
  const auto by_category = items_by_category(catalog);
  for (std::uint32_t o = 0; o < n_outfits; ++o) {
    if (!used[o]) continue;
    auto negative = corrupt_outfit(catalog.outfit_items[o], catalog, by_category, existing, rng);
    if (negative.empty()) {
      ++batch.skipped_outfits;
      continue;
    }
    batch.compat.push_back({o, std::move(negative)});
  }
  return batch;
}

inline TripleBatch sample_negatives(const Catalog& catalog, const Splits& splits, std::uint64_t seed) {
  return sample_negatives(catalog, splits.train, seed);
}

/// Adam with bias correction; one moment pair per parameter tensor.
class Adam {
 public:
  Adam() = default;
  Adam(const ModelState& m, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const auto& p : m.params()) {
      first_.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
      second_.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
    }
  }

  void step(ModelState& m) {
    ++steps_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(steps_));
    for (std::size_t i = 0; i < m.params().size(); ++i) {
      auto& p = m.param(i);
      first_[i] = beta1_ * first_[i] + (1.0 - beta1_) * p.grad;
      second_[i] = beta2_ * second_[i] + (1.0 - beta2_) * p.grad.cwiseAbs2();
      p.value.array() -= lr_ * (first_[i].array() / c1) / ((second_[i].array() / c2).sqrt() + eps_);
    }
  }

  std::uint64_t steps() const { return steps_; }
  std::vector<Matrix>& first_moments() { return first_; }
  std::vector<Matrix>& second_moments() { return second_; }
  void set_steps(std::uint64_t s) { steps_ = s; }

 private:
  double lr_ = 0.001;
  double beta1_ = 0.9;
  double beta2_ = 0.999;
  double eps_ = 1e-8;
  std::uint64_t steps_ = 0;
  std::vector<Matrix> first_;
  std::vector<Matrix> second_;
};

inline ModelDims model_dims_for(const Catalog& catalog, const TrainConfig& cfg, bool category_aware = false) {
  ModelDims d;
  d.n_users = catalog.n_users();
  d.n_outfits = catalog.n_outfits();
  d.n_categories = catalog.n_categories;
  d.visual_dim = static_cast<std::size_t>(catalog.visual.cols());
  d.text_dim = static_cast<std::size_t>(catalog.textual.cols());
  d.embed_dim = cfg.embed_dim;
  d.heads = cfg.heads;
  d.views = cfg.views;
  d.category_aware = category_aware;
  return d;
}

struct LossVars {
  ad::Var rec;
  ad::Var comp;
  ad::Var l2;
  ad::Var total;
};

/// Builds L_total = lambda_rec L_rec + lambda_comp L_comp + l2 * ||theta||^2
/// on `bm`'s tape. Each BPR term is the mean over its slice of the batch.
inline LossVars build_losses(BoundModel& bm, const PropagationPlan& plan, std::span<const RecTriple> rec,
                             std::span<const CompatPair> compat, const TrainConfig& cfg,
                             const ForwardOptions& opt) {
  auto& t = bm.tape();
  const ModelState& m = bm.model();
  const ForwardVars fv = forward_vars(bm, plan, opt);
  LossVars out;
  out.rec = t.constant(Matrix::Zero(1, 1));
  out.comp = t.constant(Matrix::Zero(1, 1));
  if (!rec.empty()) {
    auto users = std::make_shared<std::vector<std::size_t>>();
    auto pos = std::make_shared<std::vector<std::size_t>>();
    auto neg = std::make_shared<std::vector<std::size_t>>();
    for (const auto& r : rec) {
      users->push_back(r.user);
      pos->push_back(r.positive);
      neg->push_back(r.negative);
    }
    ad::Var u = t.gather_rows(fv.user_star, users);
    ad::Var diff = t.sub(t.row_dot(u, t.gather_rows(fv.outfit_star, pos)), t.row_dot(u, t.gather_rows(fv.outfit_star, neg)));
    out.rec = t.mean(t.softplus(t.scale(diff, -1.0)));
  }
  if (!compat.empty()) {
    std::vector<std::vector<std::uint32_t>> outfits;
    for (const auto& c : compat) outfits.push_back(plan.catalog->outfit_items[c.positive]);
    for (const auto& c : compat) outfits.push_back(c.negative);
    ad::Var scores = compat_scores_var(bm, fv.item_star, outfits, opt.act);
    auto first = std::make_shared<std::vector<std::size_t>>();
    auto second = std::make_shared<std::vector<std::size_t>>();
    for (std::size_t k = 0; k < compat.size(); ++k) {
      first->push_back(k);
      second->push_back(k + compat.size());
    }
    ad::Var diff = t.sub(t.gather_rows(scores, first), t.gather_rows(scores, second));
    out.comp = t.mean(t.softplus(t.scale(diff, -1.0)));
  }
  std::optional<ad::Var> sq;
  for (std::size_t i = 0; i < m.params().size(); ++i) {
    ad::Var s = t.sum_squares(bm(i));
    sq = sq ? t.add(*sq, s) : s;
  }
  out.l2 = t.scale(*sq, cfg.l2);
  out.total = t.add(t.add(t.scale(out.rec, cfg.lambda_rec), t.scale(out.comp, cfg.lambda_comp)), out.l2);
  return out;
}

struct LossValues {
  double rec = 0.0;
  double comp = 0.0;
  double l2 = 0.0;
  double total = 0.0;
};

/// Loss values without gradients (evaluation mode unless `opt` says otherwise).
inline LossValues evaluate_losses(const ModelState& m, const PropagationPlan& plan, const TripleBatch& batch,
                                  const TrainConfig& cfg, const ForwardOptions& opt = {}) {
  ad::Tape tape;
  BoundModel bm(tape, m);
  const LossVars lv = build_losses(bm, plan, batch.rec, batch.compat, cfg, opt);
  return {tape.scalar(lv.rec), tape.scalar(lv.comp), tape.scalar(lv.l2), tape.scalar(lv.total)};
}

/// Loss values and gradients; gradients are written into m's gradient slots.
inline LossValues compute_gradients(ModelState& m, const PropagationPlan& plan, std::span<const RecTriple> rec,
                                    std::span<const CompatPair> compat, const TrainConfig& cfg,
                                    const ForwardOptions& opt) {
  m.zero_grads();
  ad::Tape tape;
  BoundModel bm(tape, m, &m);
  const LossVars lv = build_losses(bm, plan, rec, compat, cfg, opt);
  tape.backward(lv.total);
  return {tape.scalar(lv.rec), tape.scalar(lv.comp), tape.scalar(lv.l2), tape.scalar(lv.total)};
}

struct EpochStats {
  double rec = 0.0;
  double comp = 0.0;
  double total = 0.0;
  std::size_t batches = 0;
  std::size_t skipped_users = 0;
};

inline std::string parameter_norms(const ModelState& m) {
  std::ostringstream out;
  for (const auto& p : m.params()) out << ' ' << p.name << '=' << p.value.norm();
  return out.str();
}

/// One pass over freshly sampled, shuffled triples. Randomness comes from
/// cfg.seed and the epoch number only.
inline EpochStats train_epoch(ModelState& m, Adam& opt, const PropagationPlan& plan, const Splits& splits,
                              const TrainConfig& cfg, std::size_t epoch) {
  TripleBatch batch = sample_negatives(*plan.catalog, splits, derive_seed(cfg.seed, "sampling", epoch));
  Rng rng(derive_seed(cfg.seed, "shuffle", epoch));
  rng.shuffle(batch.rec);
  rng.shuffle(batch.compat);

  const std::size_t n_rec = batch.rec.size();
  const std::size_t n_comp = batch.compat.size();
  const std::size_t driver = n_rec > 0 ? n_rec : n_comp;
  const std::size_t n_batches = std::max<std::size_t>(1, (driver + cfg.batch_size - 1) / cfg.batch_size);

  EpochStats stats;
  stats.skipped_users = batch.skipped_users;
  for (std::size_t b = 0; b < n_batches; ++b) {
    const std::size_t r0 = std::min(n_rec, b * cfg.batch_size);
    const std::size_t r1 = std::min(n_rec, (b + 1) * cfg.batch_size);
    const std::size_t c0 = n_comp * b / n_batches;
    const std::size_t c1 = n_comp * (b + 1) / n_batches;
    ForwardOptions fo;
    fo.training = true;
    fo.embed_dropout = cfg.embed_dropout;
    fo.attention_dropout = cfg.attention_dropout;
    fo.dropout_seed = derive_seed(cfg.seed, "dropout", epoch * 1'000'003ULL + b);
    const LossValues lv = compute_gradients(m, plan, std::span(batch.rec).subspan(r0, r1 - r0),
                                            std::span(batch.compat).subspan(c0, c1 - c0), cfg, fo);
    bool finite = std::isfinite(lv.total);
    for (const auto& p : m.params()) finite = finite && p.grad.allFinite();
    if (!finite) {
      throw TrainingError("non-finite loss or gradient at epoch " + std::to_string(epoch) + " batch " +
                          std::to_string(b) + " (L_rec=" + std::to_string(lv.rec) + ", L_comp=" +
                          std::to_string(lv.comp) + "); parameter norms:" + parameter_norms(m));
    }
    opt.step(m);
    stats.rec += lv.rec;
    stats.comp += lv.comp;
    stats.total += lv.total;
    ++stats.batches;
  }
  stats.rec /= static_cast<double>(stats.batches);
  stats.comp /= static_cast<double>(stats.batches);
  stats.total /= static_cast<double>(stats.batches);
  return stats;
}

struct GradientCheckResult {
  double max_rel_error = 0.0;
  std::string worst_group;
  std::vector<std::pair<std::string, double>> groups;  // worst error per parameter tensor
  std::size_t coordinates = 0;
};

struct GradientCheckOptions {
  double step = 1e-5;
  /// Coordinates probed per tensor (all when the tensor is no larger); the
  /// largest-gradient coordinate and one random direction are always added.
  std::size_t coordinates_per_group = 12;
  std::uint64_t seed = 0;
  Activations act;
};

/// Compares tape gradients of L_total against central differences in 64-bit,
/// dropout off. Error per probe is |ga - gn| / max(1, |ga|, |gn|).
inline GradientCheckResult gradient_check(ModelState m, const PropagationPlan& plan, const TripleBatch& sample,
                                          const TrainConfig& cfg, const GradientCheckOptions& gopt = {}) {
  ForwardOptions fo;
  fo.act = gopt.act;
  compute_gradients(m, plan, sample.rec, sample.compat, cfg, fo);
  const ModelState analytic = m;
  auto loss = [&]() { return evaluate_losses(m, plan, sample, cfg, fo).total; };
  auto rel = [](double a, double n) { return std::abs(a - n) / std::max({1.0, std::abs(a), std::abs(n)}); };

  GradientCheckResult res;
  Rng rng(derive_seed(gopt.seed, "gradient-check"));
  const double h = gopt.step;
  for (std::size_t slot = 0; slot < m.params().size(); ++slot) {
    Matrix& value = m.value(slot);
    const Matrix& grad = analytic.param(slot).grad;
    const auto size = static_cast<std::size_t>(value.size());
    std::vector<std::size_t> coords;
    if (size <= gopt.coordinates_per_group) {
      for (std::size_t k = 0; k < size; ++k) coords.push_back(k);
    } else {
      for (std::size_t k = 0; k < gopt.coordinates_per_group; ++k) coords.push_back(rng.index(size));
      Eigen::Index arg = 0;
      grad.cwiseAbs().reshaped<Eigen::RowMajor>().maxCoeff(&arg);
      coords.push_back(static_cast<std::size_t>(arg));
    }
    double worst = 0.0;
    for (auto k : coords) {
      const double orig = value.data()[k];
      value.data()[k] = orig + h;
      const double up = loss();
      value.data()[k] = orig - h;
      const double down = loss();
      value.data()[k] = orig;
      worst = std::max(worst, rel(grad.data()[k], (up - down) / (2.0 * h)));
      ++res.coordinates;
    }
    Matrix dir(value.rows(), value.cols());
    for (Eigen::Index k = 0; k < dir.size(); ++k) dir.data()[k] = rng.normal();
    dir /= dir.norm();
    const Matrix orig = value;
    value = orig + h * dir;
    const double up = loss();
    value = orig - h * dir;
    const double down = loss();
    value = orig;
    worst = std::max(worst, rel(grad.cwiseProduct(dir).sum(), (up - down) / (2.0 * h)));
    ++res.coordinates;

    res.groups.emplace_back(m.param(slot).name, worst);
    if (worst >= res.max_rel_error) {
      res.max_rel_error = worst;
      res.worst_group = m.param(slot).name;
    }
  }
  return res;
}

/// Everything a resumed run needs: exact parameters, Adam moments and the
/// bookkeeping of the run so far. Stored as an f64 "FGATSTAT" file.
struct TrainingState {
  ModelState model;
  Adam optimizer;
  std::size_t epochs_done = 0;
  std::size_t best_epoch = 0;
  double best_val_loss = std::numeric_limits<double>::infinity();
};

inline void save_training_state(const std::filesystem::path& path, TrainingState& st) {
  std::vector<Section> sections = model_sections(st.model);
  for (std::size_t i = 0; i < st.model.params().size(); ++i) {
    sections.push_back({"adam.m/" + st.model.param(i).name, st.optimizer.first_moments()[i]});
    sections.push_back({"adam.v/" + st.model.param(i).name, st.optimizer.second_moments()[i]});
  }
  Matrix meta(1, 4);
  meta << static_cast<double>(st.epochs_done), static_cast<double>(st.optimizer.steps()),
      static_cast<double>(st.best_epoch), st.best_val_loss;
  sections.push_back({"state.meta", meta});
  detail::write_file_bytes(path, encode_sections(kStateMagic, sections, Precision::F64));
}

inline TrainingState load_training_state(const std::filesystem::path& path, const TrainConfig& cfg) {
  if (!std::filesystem::exists(path)) throw DataError(ErrorKind::NotFound, "training state " + path.string() + " not found");
  auto sections = decode_sections(kStateMagic, detail::read_file_bytes(path), Precision::F64, path.string());
  std::vector<Section> params;
  std::vector<Section> extra;
  for (auto& s : sections) {
    (s.name.starts_with("adam.") || s.name.starts_with("state.") ? extra : params).push_back(std::move(s));
  }
  TrainingState st{model_from_sections(params, path.string()), {}, 0, 0, 0.0};
  st.optimizer = Adam(st.model, cfg.lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
  const std::size_t n = st.model.params().size();
  if (extra.size() != 2 * n + 1) throw DataError(ErrorKind::Malformed, path.string() + ": optimizer sections missing");
  for (std::size_t i = 0; i < n; ++i) {
    st.optimizer.first_moments()[i] = extra[2 * i].value;
    st.optimizer.second_moments()[i] = extra[2 * i + 1].value;
  }
  const Matrix& meta = extra.back().value;
  if (meta.size() != 4) throw DataError(ErrorKind::Malformed, path.string() + ": bad state.meta section");
  st.epochs_done = static_cast<std::size_t>(meta(0, 0));
  st.optimizer.set_steps(static_cast<std::uint64_t>(meta(0, 1)));
  st.best_epoch = static_cast<std::size_t>(meta(0, 2));
  st.best_val_loss = meta(0, 3);
  return st;
}

}  // namespace fgat
