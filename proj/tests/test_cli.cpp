#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <sstream>

#include "support.hpp"

using namespace fgat;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string out;
};

/// Runs the CLI with `args`, capturing stdout and stderr together.
Result run(const std::string& args) {
  const std::string cmd = std::string(FGAT_CLI) + " " + args + " 2>&1";
  Result r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (pipe == nullptr) return r;
  char buf[4096];
  std::size_t n = 0;
  while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) out.push_back(line);
  return out;
}

std::string bytes(const fs::path& p) { return detail::read_file_bytes(p); }

std::string synth(const fs::path& out, std::uint64_t seed = 3) {
  return "--synthetic --seed " + std::to_string(seed) + " --out " + out.string();
}

const fs::path kTiny = fs::path(FGAT_SOURCE_DIR) / "data" / "tiny";

}  // namespace

TEST(Cli, TrainSmokeRun) {
  test::TempDir dir("cli_smoke");
  const Result r = run("train " + synth(dir.path()) + " --epochs 2 --quiet");
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_TRUE(fs::exists(dir / "model.ckpt"));
  EXPECT_TRUE(fs::exists(dir / "train_state.bin"));
  const auto log = lines_of(bytes(dir / "train.log"));
  ASSERT_EQ(log.size(), 2u);
  for (std::size_t e = 0; e < log.size(); ++e) {
    EXPECT_EQ(std::count(log[e].begin(), log[e].end(), ','), 5) << log[e];
    EXPECT_EQ(log[e].substr(0, log[e].find(',')), std::to_string(e + 1));
  }
}

TEST(Cli, ResumedRunEqualsUninterruptedRun) {
  test::TempDir whole("cli_whole");
  test::TempDir split("cli_split");
  ASSERT_EQ(run("train " + synth(whole.path()) + " --epochs 4 --quiet").code, 0);
  ASSERT_EQ(run("train " + synth(split.path()) + " --epochs 2 --quiet").code, 0);
  const Result resumed = run("train " + synth(split.path()) + " --epochs 4 --resume --quiet");
  ASSERT_EQ(resumed.code, 0) << resumed.out;
  for (const char* f : {"model.ckpt", "train_state.bin", "train.log"}) {
    EXPECT_EQ(bytes(whole / f), bytes(split / f)) << f;
  }
}

TEST(Cli, ZeroLearningRateKeepsInitialParameters) {
  test::TempDir dir("cli_lr0");
  ASSERT_EQ(run("train " + synth(dir.path(), 8) + " --epochs 2 --quiet --set lr=0").code, 0);
  auto ws = prepare_workspace(generate_synthetic(SyntheticConfig{}, 8), 8, SplitScheme::PerUser80_20);
  const ModelState init = init_model(model_dims_for(ws->catalog, TrainConfig{}), 8);
  const ModelState saved = load_checkpoint(dir / "model.ckpt");
  ASSERT_EQ(saved.params().size(), init.params().size());
  for (std::size_t i = 0; i < init.params().size(); ++i) {
    EXPECT_EQ(saved.value(i), init.value(i).cast<float>().cast<double>()) << init.param(i).name;
  }
}

TEST(Cli, FullRunsAreByteIdentical) {
  test::TempDir a("cli_a");
  test::TempDir b("cli_b");
  for (const auto* dir : {&a, &b}) {
    ASSERT_EQ(run("train " + synth(dir->path(), 11) + " --epochs 3 --quiet").code, 0);
    const Result r = run("evaluate " + synth(dir->path(), 11) + " --per-user " + (dir->path() / "per_user.csv").string());
    ASSERT_EQ(r.code, 0) << r.out;
  }
  for (const char* f : {"model.ckpt", "train.log", "report.txt", "per_user.csv"}) {
    EXPECT_EQ(bytes(a / f), bytes(b / f)) << f;
  }
  const Result threaded = run("evaluate " + synth(a.path(), 11) + " --set threads=4 --report " + (a / "r4.txt").string());
  ASSERT_EQ(threaded.code, 0) << threaded.out;
  EXPECT_EQ(bytes(a / "r4.txt"), bytes(a / "report.txt"));
  EXPECT_NE(bytes(a / "report.txt").find("hr@10="), std::string::npos);
}

TEST(Cli, EvaluateFailsOnMissingOrCorruptCheckpoint) {
  test::TempDir dir("cli_ckpt");
  EXPECT_EQ(run("evaluate " + synth(dir.path())).code, 1);
  test::write_text(dir / "model.ckpt", "FGATCKPT but not really");
  EXPECT_EQ(run("evaluate " + synth(dir.path())).code, 1);
  EXPECT_EQ(run("evaluate " + synth(dir.path()) + " --checkpoint " + (dir / "nope.ckpt").string()).code, 1);
}

TEST(Cli, CheckpointFromAnotherDatasetIsRejected) {
  test::TempDir dir("cli_other");
  ASSERT_EQ(run("train --data " + kTiny.string() + " --seed 1 --out " + dir.path().string() + " --epochs 1 --quiet").code, 0);
  EXPECT_EQ(run("evaluate " + synth(dir.path())).code, 1);
}

TEST(Cli, RecommendTopFive) {
  test::TempDir dir("cli_rec");
  ASSERT_EQ(run("train " + synth(dir.path(), 5) + " --epochs 3 --quiet").code, 0);
  const Dataset ds = generate_synthetic(SyntheticConfig{}, 5);
  const Id user = *ds.users.begin();
  const Result r = run("recommend " + synth(dir.path(), 5) + " --user " + std::to_string(user) + " -k 5");
  ASSERT_EQ(r.code, 0) << r.out;
  const auto rows = lines_of(r.out);
  ASSERT_EQ(rows.size(), 5u);
  double prev = std::numeric_limits<double>::infinity();
  for (const auto& row : rows) {
    std::istringstream in(row);
    Id outfit = 0;
    double score = 0.0;
    ASSERT_TRUE(in >> outfit >> score) << row;
    EXPECT_LE(score, prev);
    prev = score;
    EXPECT_FALSE(ds.interactions.contains({user, outfit})) << "already interacted: " << outfit;
  }
  EXPECT_EQ(run("recommend " + synth(dir.path(), 5) + " --user 999999").code, 1);
  EXPECT_EQ(run("recommend " + synth(dir.path(), 5)).code, 1);  // --user is required
}

TEST(Cli, FltbIsReproducible) {
  test::TempDir dir("cli_fltb");
  ASSERT_EQ(run("train " + synth(dir.path(), 6) + " --epochs 2 --quiet").code, 0);
  const Result a = run("fltb " + synth(dir.path(), 6));
  const Result b = run("fltb " + synth(dir.path(), 6));
  ASSERT_EQ(a.code, 0) << a.out;
  EXPECT_EQ(a.out, b.out);
  EXPECT_NE(a.out.find("fltb_accuracy="), std::string::npos);
}

TEST(Cli, IngestSummaryAndExports) {
  test::TempDir dir("cli_ingest");
  const Result r = run("ingest " + synth(dir.path()) + " --edges " + (dir / "edges.tsv").string() +
                       " --category-edges " + (dir / "cats.tsv").string());
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("users 20\n"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("categories 6\n"), std::string::npos);
  const std::string hist = r.out.substr(r.out.find("category histogram"));
  EXPECT_EQ(lines_of(hist.substr(0, hist.find("\n\n"))).size(), 7u);  // header + 6 categories
  EXPECT_TRUE(fs::exists(dir / "edges.tsv"));
  EXPECT_TRUE(fs::exists(dir / "cats.tsv"));

  const Result tiny = run("ingest --data " + kTiny.string() + " --seed 1");
  ASSERT_EQ(tiny.code, 0) << tiny.out;
  EXPECT_NE(tiny.out.find("outfits 16\n"), std::string::npos) << tiny.out;
}

TEST(Cli, IngestRejectsCorruptData) {
  test::TempDir dir("cli_corrupt");
  for (const auto& entry : fs::directory_iterator(kTiny)) fs::copy_file(entry.path(), dir / entry.path().filename().string());
  std::string outfits = bytes(dir / "outfits.tsv");
  outfits += "99\t1,424242\n";  // unknown item
  test::write_text(dir / "outfits.tsv", outfits);
  const Result r = run("ingest --data " + dir.path().string() + " --seed 1");
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.out.find("outfits.tsv:"), std::string::npos) << r.out;
  EXPECT_EQ(bytes(dir / "outfits.tsv"), outfits);  // inputs untouched
}

TEST(Cli, ExportEmbeddings) {
  test::TempDir dir("cli_export");
  ASSERT_EQ(run("train " + synth(dir.path()) + " --epochs 1 --quiet").code, 0);
  const Result r = run("export-embeddings " + synth(dir.path()) + " --dir " + (dir / "emb").string());
  ASSERT_EQ(r.code, 0) << r.out;
  const FeatureTable items = read_features(dir / "emb" / "items.feat");
  const FeatureTable users = read_features(dir / "emb" / "users.feat");
  EXPECT_EQ(items.dim, 64u);
  EXPECT_EQ(items.rows.size(), SyntheticConfig{}.items);
  EXPECT_EQ(users.rows.size(), 20u);
  EXPECT_TRUE(fs::exists(dir / "emb" / "outfits.feat"));
}

TEST(Cli, ConfigurationErrors) {
  test::TempDir dir("cli_cfg");
  EXPECT_EQ(run("train --synthetic --out " + dir.path().string() + " --epochs 1").code, 1);  // no seed
  EXPECT_EQ(run("train " + synth(dir.path()) + " --set colour=red").code, 1);
  EXPECT_EQ(run("train " + synth(dir.path()) + " --config " + (dir / "none.cfg").string()).code, 1);
  EXPECT_EQ(run("frobnicate").code, 1);
  test::write_text(dir / "run.cfg", "seed=4\nsynthetic=true\nepochs=1\nout_dir=" + (dir / "o").string() + "\n");
  const Result r = run("train --config " + (dir / "run.cfg").string() + " --quiet");
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(lines_of(bytes(dir / "o" / "train.log")).size(), 1u);
}
