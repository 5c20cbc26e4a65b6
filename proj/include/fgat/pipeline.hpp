#pragma once

// End-to-end runs: dataset preparation, the training loop with per-epoch
// validation, and the files a run leaves in its output directory.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <string>

#include "fgat/checkpoint.hpp"
#include "fgat/config.hpp"
#include "fgat/dataset.hpp"
#include "fgat/eval.hpp"
#include "fgat/graph.hpp"
#include "fgat/propagate.hpp"
#include "fgat/splits.hpp"
#include "fgat/synthetic.hpp"
#include "fgat/train.hpp"

namespace fgat {

/// Dataset, split and training graph of one run. Not movable: the plan
/// points into the catalog.
struct Workspace {
  Dataset dataset;
  Catalog catalog;
  Splits splits;
  FashionGraph graph;
  CategoryGraph categories;
  PropagationPlan plan;

  Workspace() = default;
  Workspace(const Workspace&) = delete;
  Workspace& operator=(const Workspace&) = delete;
};

inline std::unique_ptr<Workspace> prepare_workspace(Dataset ds, std::uint64_t seed, SplitScheme scheme) {
  auto ws = std::make_unique<Workspace>();
  ws->dataset = std::move(ds);
  ws->catalog = Catalog::build(ws->dataset);
  ws->splits = split_interactions(ws->catalog, seed, scheme);
  ws->graph = build_fashion_graph(ws->catalog, &ws->splits);
  ws->categories = category_cooccurrence_weights(ws->catalog);
  ws->plan = make_plan(ws->catalog, ws->graph, ws->categories);
  return ws;
}

inline Dataset load_configured_dataset(const RunConfig& cfg) {
  return cfg.synthetic ? generate_synthetic(cfg.synth, cfg.root_seed()) : load_dataset(cfg.resolved_paths());
}

inline std::unique_ptr<Workspace> prepare_workspace(const RunConfig& cfg) {
  return prepare_workspace(load_configured_dataset(cfg), cfg.root_seed(), cfg.split_scheme);
}

/// Files written under the output directory.
struct RunFiles {
  std::filesystem::path checkpoint;  // best-validation model, f32
  std::filesystem::path state;       // exact state after the last epoch, for --resume
  std::filesystem::path log;
  std::filesystem::path report;
  std::filesystem::path per_user;

  static RunFiles in(const std::filesystem::path& dir) {
    return {dir / "model.ckpt", dir / "train_state.bin", dir / "train.log", dir / "report.txt", dir / "per_user.csv"};
  }
};

inline std::string log_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

struct TrainSummary {
  std::size_t epochs_run = 0;
  std::size_t best_epoch = 0;
  double best_val_loss = 0.0;
};

/// Runs epochs until cfg.train.epochs are done. Each epoch appends
/// `epoch,L_rec,L_comp,L_total,val_HR@10,val_NDCG@10` to the log. The
/// checkpoint keeps the epoch with the lowest validation loss
/// (lambda_rec L_rec + lambda_comp L_comp on the validation interactions and
/// their outfits, fixed negatives, no dropout; earlier epochs win ties).
/// Without validation interactions it follows the latest epoch.
inline TrainSummary run_training(const RunConfig& cfg, Workspace& ws, bool resume,
                                 const std::function<void(const std::string&)>& progress = {}) {
  cfg.validate();
  std::filesystem::create_directories(cfg.out_dir);
  const RunFiles files = RunFiles::in(cfg.out_dir);
  TrainConfig tc = cfg.train;
  tc.seed = cfg.root_seed();

  TrainingState st;
  if (resume) {
    st = load_training_state(files.state, tc);
    const ModelDims want = model_dims_for(ws.catalog, tc, cfg.category_aware);
    const ModelDims& got = st.model.dims();
    if (got.n_users != want.n_users || got.n_outfits != want.n_outfits || got.embed_dim != want.embed_dim ||
        got.heads != want.heads || got.views != want.views || got.visual_dim != want.visual_dim ||
        got.text_dim != want.text_dim) {
      throw DataError(ErrorKind::DimensionMismatch, "saved training state does not match this dataset and config");
    }
  } else {
    st.model = init_model(model_dims_for(ws.catalog, tc, cfg.category_aware), tc.seed);
    st.optimizer = Adam(st.model, tc.lr, tc.adam_beta1, tc.adam_beta2, tc.adam_eps);
    std::ofstream(files.log, std::ios::trunc);
  }
  std::ofstream log(files.log, std::ios::app);
  if (!log) throw DataError(ErrorKind::Io, "cannot write " + files.log.string());

  const TripleBatch val_batch = sample_negatives(ws.catalog, ws.splits.val, derive_seed(tc.seed, "validation"));
  const bool has_val = !val_batch.rec.empty() || !val_batch.compat.empty();

  EvalConfig ec;
  ec.k = 10;
  ec.partition = EvalPartition::Validation;
  ec.seed = tc.seed;
  ec.threads = cfg.threads;
  ec.compatibility = false;

  TrainSummary summary;
  while (st.epochs_done < tc.epochs) {
    const std::size_t epoch = st.epochs_done;
    const EpochStats es = train_epoch(st.model, st.optimizer, ws.plan, ws.splits, tc, epoch);
    std::string hr = "nan";
    std::string ndcg = "nan";
    bool better = !has_val;
    if (has_val) {
      const RankingReport rep = evaluate(st.model, ws.plan, ws.splits, ec);
      hr = log_number(rep.mean.hr);
      ndcg = log_number(rep.mean.ndcg);
      const LossValues lv = evaluate_losses(st.model, ws.plan, val_batch, tc);
      const double val_loss = tc.lambda_rec * lv.rec + tc.lambda_comp * lv.comp;
      better = val_loss < st.best_val_loss;
      if (better) st.best_val_loss = val_loss;
    }
    if (better) {
      st.best_epoch = epoch + 1;
      save_checkpoint(files.checkpoint, st.model);
    }
    const std::string line = std::to_string(epoch + 1) + ',' + log_number(es.rec) + ',' + log_number(es.comp) + ',' +
                             log_number(es.total) + ',' + hr + ',' + ndcg;
    log << line << '\n';
    log.flush();
    ++st.epochs_done;
    save_training_state(files.state, st);
    ++summary.epochs_run;
    if (progress) progress(line);
  }
  if (!std::filesystem::exists(files.checkpoint)) save_checkpoint(files.checkpoint, st.model);
  summary.best_epoch = st.best_epoch;
  summary.best_val_loss = st.best_val_loss;
  return summary;
}

}  // namespace fgat
