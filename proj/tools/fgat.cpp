// fgat: ingest, train, evaluate, recommend, fltb, export-embeddings.
//
// Exit codes: 0 success, 1 invalid input or configuration, 2 runtime failure.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fgat/fgat.hpp"

namespace fs = std::filesystem;
using namespace fgat;

namespace {

struct Common {
  fs::path config_file;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> data_dir;
  std::optional<std::string> out_dir;
  bool synthetic = false;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_file, "key=value config file");
  cmd->add_option("--set", c.overrides, "override one config entry, key=value (repeatable)");
  cmd->add_option("--seed", c.seed, "root seed");
  cmd->add_option("--data", c.data_dir, "dataset directory");
  cmd->add_option("--out", c.out_dir, "output directory");
  cmd->add_flag("--synthetic", c.synthetic, "use the planted-cluster synthetic dataset");
}

RunConfig resolve(const Common& c) {
  RunConfig cfg;
  if (!c.config_file.empty()) read_config_file(cfg, c.config_file);
  for (const auto& o : c.overrides) apply_assignment(cfg, o);
  if (c.seed) cfg.seed = *c.seed;
  if (c.data_dir) cfg.data_dir = *c.data_dir;
  if (c.out_dir) cfg.out_dir = *c.out_dir;
  if (c.synthetic) cfg.synthetic = true;
  cfg.validate();
  return cfg;
}

ModelState load_matching_checkpoint(const fs::path& path, const Workspace& ws) {
  ModelState m = load_checkpoint(path);
  if (m.dims().n_users != ws.catalog.n_users() || m.dims().n_outfits != ws.catalog.n_outfits() ||
      m.dims().visual_dim != static_cast<std::size_t>(ws.catalog.visual.cols()) ||
      m.dims().text_dim != static_cast<std::size_t>(ws.catalog.textual.cols())) {
    throw DataError(ErrorKind::DimensionMismatch, path.string() + " was trained on a different dataset");
  }
  return m;
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError(ErrorKind::Io, "cannot write " + path.string());
  return out;
}

std::string fixed(double v, int digits = 6) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

int cmd_ingest(const Common& c, const std::string& edges, const std::string& category_edges) {
  RunConfig cfg = resolve(c);
  const auto ws = prepare_workspace(cfg);
  const Catalog& cat = ws->catalog;
  std::cout << "users " << cat.n_users() << "\noutfits " << cat.n_outfits() << "\nitems " << cat.n_items()
            << "\ninteractions " << ws->dataset.interactions.size() << "\ncategories " << cat.n_categories
            << "\nvisual_dim " << cat.visual.cols() << "\ntextual_dim " << cat.textual.cols() << '\n';
  std::vector<std::size_t> hist(cat.n_categories, 0);
  for (auto c2 : cat.item_category) ++hist[c2];
  std::cout << "\ncategory histogram\n";
  for (std::size_t k = 0; k < cat.n_categories; ++k) std::cout << "  " << ws->dataset.categories[k] << ' ' << hist[k] << '\n';
  std::cout << "\ntop co-occurring category pairs\n";
  for (const auto& [a, b, n] : top_category_pairs(ws->categories, 5)) {
    std::cout << "  " << ws->dataset.categories[a] << " + " << ws->dataset.categories[b] << ' ' << n << '\n';
  }
  double worst = 0.0;
  for (Eigen::Index r = 0; r < ws->categories.weights.rows(); ++r) {
    const double s = ws->categories.weights.row(r).sum();
    if (s != 0.0) worst = std::max(worst, std::abs(s - 1.0));
  }
  std::cout << "\nmax |row sum - 1| of category weights " << worst << '\n';
  std::cout << "split: train " << ws->splits.train_size() << ", negative pool " << ws->splits.compat_negative_pool.size()
            << " items\n";
  if (!edges.empty()) {
    auto out = open_out(edges);
    write_graph_edges(out, ws->graph, cat);
  }
  if (!category_edges.empty()) {
    auto out = open_out(category_edges);
    write_category_edges(out, ws->categories, ws->dataset.categories);
  }
  return 0;
}

int cmd_train(const Common& c, std::optional<std::size_t> epochs, bool resume, bool quiet) {
  RunConfig cfg = resolve(c);
  if (epochs) cfg.train.epochs = *epochs;
  const auto ws = prepare_workspace(cfg);
  const auto summary = run_training(cfg, *ws, resume, [&](const std::string& line) {
    if (!quiet) std::cout << line << std::endl;
  });
  std::cout << "trained " << summary.epochs_run << " epoch(s); checkpoint from epoch " << summary.best_epoch
            << " in " << RunFiles::in(cfg.out_dir).checkpoint.string() << '\n';
  return 0;
}

int cmd_evaluate(const Common& c, fs::path checkpoint, const std::string& split, fs::path report, fs::path per_user,
                 const std::string& attention_dump) {
  RunConfig cfg = resolve(c);
  const RunFiles files = RunFiles::in(cfg.out_dir);
  if (checkpoint.empty()) checkpoint = files.checkpoint;
  if (report.empty()) report = files.report;
  const auto ws = prepare_workspace(cfg);
  const ModelState m = load_matching_checkpoint(checkpoint, *ws);
  EvalConfig ec;
  ec.k = cfg.k;
  ec.seed = cfg.root_seed();
  ec.threads = cfg.threads;
  if (split == "validation") {
    ec.partition = EvalPartition::Validation;
  } else if (split != "test") {
    throw DataError(ErrorKind::InvalidArgument, "--split must be test or validation");
  }
  const RankingReport rep = evaluate(m, ws->plan, ws->splits, ec);
  {
    auto out = open_out(report);
    write_report(out, rep);
  }
  if (!per_user.empty()) {
    auto out = open_out(per_user);
    write_per_user(out, rep);
  }
  if (!attention_dump.empty()) {
    auto out = open_out(attention_dump);
    write_attention_dump(out, forward(ws->plan, m), ws->catalog);
  }
  write_report(std::cout, rep);
  return 0;
}

int cmd_recommend(const Common& c, fs::path checkpoint, Id user, std::size_t k) {
  RunConfig cfg = resolve(c);
  if (checkpoint.empty()) checkpoint = RunFiles::in(cfg.out_dir).checkpoint;
  const auto ws = prepare_workspace(cfg);
  const std::uint32_t u = ws->catalog.user(user);
  const ModelState m = load_matching_checkpoint(checkpoint, *ws);
  const PropagationOutput prop = forward(ws->plan, m);
  // Everything the user already interacted with is excluded, whatever its partition.
  std::vector<bool> exclude(ws->catalog.n_outfits(), false);
  for (auto o : ws->catalog.user_outfits[u]) exclude[o] = true;
  const Vector scores = prop.outfit_star * prop.user_star.row(u).transpose();
  const auto order = rank_by_score(std::span<const double>(scores.data(), static_cast<std::size_t>(scores.size())), exclude);
  for (std::size_t r = 0; r < std::min(k, order.size()); ++r) {
    std::cout << ws->catalog.outfit_ids[order[r]] << '\t' << fixed(scores(order[r]), 9) << '\n';
  }
  return 0;
}

int cmd_fltb(const Common& c, fs::path checkpoint) {
  RunConfig cfg = resolve(c);
  if (checkpoint.empty()) checkpoint = RunFiles::in(cfg.out_dir).checkpoint;
  const auto ws = prepare_workspace(cfg);
  const ModelState m = load_matching_checkpoint(checkpoint, *ws);
  const PropagationOutput prop = forward(ws->plan, m);
  std::size_t correct = 0;
  const auto outfits = ws->splits.test_outfits(ws->catalog.n_outfits());
  for (auto o : outfits) {
    correct += fltb(make_fltb_trial(o, ws->catalog, ws->splits, cfg.root_seed()), ws->catalog, prop, m).correct ? 1 : 0;
  }
  const double acc = outfits.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(outfits.size());
  std::cout << "fltb_accuracy=" << fixed(acc) << "\nfltb_trials=" << outfits.size() << '\n';
  return 0;
}

FeatureTable table_from(const Matrix& rows, const std::vector<Id>& ids) {
  FeatureTable t;
  t.dim = static_cast<std::uint32_t>(rows.cols());
  for (std::size_t r = 0; r < ids.size(); ++r) {
    std::vector<float> v(static_cast<std::size_t>(rows.cols()));
    for (Eigen::Index j = 0; j < rows.cols(); ++j) v[static_cast<std::size_t>(j)] = static_cast<float>(rows(static_cast<Eigen::Index>(r), j));
    t.rows.emplace_back(ids[r], std::move(v));
  }
  return t;
}

int cmd_export(const Common& c, fs::path checkpoint, fs::path dir) {
  RunConfig cfg = resolve(c);
  if (checkpoint.empty()) checkpoint = RunFiles::in(cfg.out_dir).checkpoint;
  if (dir.empty()) dir = cfg.out_dir / "embeddings";
  const auto ws = prepare_workspace(cfg);
  const ModelState m = load_matching_checkpoint(checkpoint, *ws);
  const PropagationOutput prop = forward(ws->plan, m);
  fs::create_directories(dir);
  write_features(dir / "items.feat", table_from(prop.item_star, ws->catalog.item_ids));
  write_features(dir / "outfits.feat", table_from(prop.outfit_star, ws->catalog.outfit_ids));
  write_features(dir / "users.feat", table_from(prop.user_star, ws->catalog.user_ids));
  std::cout << "wrote items.feat, outfits.feat, users.feat to " << dir.string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical graph-attention outfit recommendation"};
  app.require_subcommand(1);
  Common common;

  auto* ingest = app.add_subcommand("ingest", "validate a dataset and summarise it");
  std::string edges;
  std::string category_edges;
  add_common(ingest, common);
  ingest->add_option("--edges", edges, "write the user/outfit/item edge list here");
  ingest->add_option("--category-edges", category_edges, "write the category weight edge list here");

  auto* train = app.add_subcommand("train", "train and keep the best-validation checkpoint");
  std::optional<std::size_t> epochs;
  bool resume = false;
  bool quiet = false;
  add_common(train, common);
  train->add_option("--epochs", epochs, "number of epochs in total");
  train->add_flag("--resume", resume, "continue from the saved training state in the output directory");
  train->add_flag("--quiet", quiet, "do not echo log lines");

  std::string checkpoint;
  auto* eval = app.add_subcommand("evaluate", "ranking metrics, AUC and FLTB accuracy");
  std::string split = "test";
  std::string report;
  std::string per_user;
  std::string attention_dump;
  add_common(eval, common);
  eval->add_option("--checkpoint", checkpoint, "model checkpoint (default <out>/model.ckpt)");
  eval->add_option("--split", split, "test or validation");
  eval->add_option("--report", report, "report path (default <out>/report.txt)");
  eval->add_option("--per-user", per_user, "write user_id,HR,Recall,Precision,NDCG rows here");
  eval->add_option("--attention-dump", attention_dump, "write every attention coefficient here");

  auto* rec = app.add_subcommand("recommend", "top-k outfits for one user");
  Id user = 0;
  std::size_t k = 5;
  add_common(rec, common);
  rec->add_option("--checkpoint", checkpoint, "model checkpoint (default <out>/model.ckpt)");
  rec->add_option("--user", user, "user id")->required();
  rec->add_option("-k", k, "number of outfits");

  auto* fl = app.add_subcommand("fltb", "fill-in-the-blank accuracy over the test outfits");
  add_common(fl, common);
  fl->add_option("--checkpoint", checkpoint, "model checkpoint (default <out>/model.ckpt)");

  auto* exp = app.add_subcommand("export-embeddings", "write propagated embeddings as feature files");
  std::string export_dir;
  add_common(exp, common);
  exp->add_option("--checkpoint", checkpoint, "model checkpoint (default <out>/model.ckpt)");
  exp->add_option("--dir", export_dir, "output directory (default <out>/embeddings)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (ingest->parsed()) return cmd_ingest(common, edges, category_edges);
    if (train->parsed()) return cmd_train(common, epochs, resume, quiet);
    if (eval->parsed()) return cmd_evaluate(common, checkpoint, split, report, per_user, attention_dump);
    if (rec->parsed()) return cmd_recommend(common, checkpoint, user, k);
    if (fl->parsed()) return cmd_fltb(common, checkpoint);
    if (exp->parsed()) return cmd_export(common, checkpoint, export_dir);
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
