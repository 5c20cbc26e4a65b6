#pragma once

// Line-oriented run configuration: `key=value`, `#` starts a comment.

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>

#include "fgat/core.hpp"
#include "fgat/dataset.hpp"
#include "fgat/splits.hpp"
#include "fgat/synthetic.hpp"
#include "fgat/train.hpp"

namespace fgat {

struct RunConfig {
  std::optional<std::uint64_t> seed;
  std::filesystem::path out_dir = "run";
  bool synthetic = false;
  SyntheticConfig synth;
  std::filesystem::path data_dir;
  DatasetPaths paths;  // individual overrides; empty members fall back to data_dir
  SplitScheme split_scheme = SplitScheme::PerUser80_20;
  TrainConfig train;
  bool category_aware = false;
  std::size_t k = 10;
  std::size_t threads = 1;

  /// Dataset file locations with data_dir defaults filled in.
  DatasetPaths resolved_paths() const {
    DatasetPaths p = DatasetPaths::in_directory(data_dir);
    if (!paths.interactions.empty()) p.interactions = paths.interactions;
    if (!paths.outfits.empty()) p.outfits = paths.outfits;
    if (!paths.items.empty()) p.items = paths.items;
    if (!paths.visual_features.empty()) p.visual_features = paths.visual_features;
    if (!paths.textual_features.empty()) p.textual_features = paths.textual_features;
    return p;
  }

  std::uint64_t root_seed() const {
    if (!seed) throw DataError(ErrorKind::InvalidArgument, "config: seed is required");
    return *seed;
  }

  void set(std::string_view key, std::string_view value);

  /// Missing seed, unusable training settings, or no data source.
  void validate() const {
    root_seed();
    train.validate();
    if (k == 0) throw DataError(ErrorKind::InvalidArgument, "config: k must be at least 1");
    if (threads == 0) throw DataError(ErrorKind::InvalidArgument, "config: threads must be at least 1");
    if (synthetic) {
      check_config(synth);
    } else if (data_dir.empty() && paths.interactions.empty()) {
      throw DataError(ErrorKind::InvalidArgument, "config: set data_dir or synthetic=true");
    }
  }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(std::string_view key, std::string_view text) {
  T v{};
  const auto* end = text.data() + text.size();
  auto [p, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || p != end) {
    throw DataError(ErrorKind::InvalidArgument, "config: bad value '" + std::string(text) + "' for " + std::string(key));
  }
  return v;
}

inline bool parse_bool(std::string_view key, std::string_view text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw DataError(ErrorKind::InvalidArgument, "config: bad boolean '" + std::string(text) + "' for " + std::string(key));
}

}  // namespace detail

inline void RunConfig::set(std::string_view key, std::string_view value) {
  using detail::parse_bool;
  using detail::parse_number;
  auto size = [&] { return parse_number<std::size_t>(key, value); };
  auto real = [&] { return parse_number<double>(key, value); };
  const std::string v(value);

  if (key == "seed") seed = parse_number<std::uint64_t>(key, value);
  else if (key == "out_dir") out_dir = v;
  else if (key == "data_dir") data_dir = v;
  else if (key == "interactions") paths.interactions = v;
  else if (key == "outfits") paths.outfits = v;
  else if (key == "items") paths.items = v;
  else if (key == "visual_features") paths.visual_features = v;
  else if (key == "textual_features") paths.textual_features = v;
  else if (key == "synthetic") synthetic = parse_bool(key, value);
  else if (key == "synthetic.users") synth.users = size();
  else if (key == "synthetic.outfits") synth.outfits = size();
  else if (key == "synthetic.items") synth.items = size();
  else if (key == "synthetic.categories") synth.categories = size();
  else if (key == "synthetic.clusters") synth.clusters = size();
  else if (key == "synthetic.visual_dim") synth.visual_dim = size();
  else if (key == "synthetic.text_dim") synth.text_dim = size();
  else if (key == "synthetic.min_outfit_size") synth.min_outfit_size = size();
  else if (key == "synthetic.max_outfit_size") synth.max_outfit_size = size();
  else if (key == "synthetic.interactions_per_user") synth.interactions_per_user = size();
  else if (key == "synthetic.purity") synth.purity = real();
  else if (key == "synthetic.unused_items") synth.unused_items = size();
  else if (key == "synthetic.separation") synth.separation = real();
  else if (key == "synthetic.noise") synth.noise = real();
  else if (key == "split_scheme") split_scheme = parse_split_scheme(v);
  else if (key == "embed_dim") train.embed_dim = size();
  else if (key == "batch_size") train.batch_size = size();
  else if (key == "lr") train.lr = real();
  else if (key == "embed_dropout") train.embed_dropout = real();
  else if (key == "attention_dropout") train.attention_dropout = real();
  else if (key == "l2") train.l2 = real();
  else if (key == "heads") train.heads = size();
  else if (key == "views") train.views = size();
  else if (key == "epochs") train.epochs = size();
  else if (key == "lambda_rec") train.lambda_rec = real();
  else if (key == "lambda_comp") train.lambda_comp = real();
  else if (key == "category_aware") category_aware = parse_bool(key, value);
  else if (key == "k") k = size();
  else if (key == "threads") threads = size();
  else throw DataError(ErrorKind::InvalidArgument, "config: unknown key '" + std::string(key) + "'");
}

/// Applies one `key=value` assignment.
inline void apply_assignment(RunConfig& cfg, std::string_view line) {
  const auto eq = line.find('=');
  if (eq == std::string_view::npos) {
    throw DataError(ErrorKind::Malformed, "expected key=value, got '" + std::string(line) + "'");
  }
  cfg.set(detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
}

inline void read_config_file(RunConfig& cfg, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError(ErrorKind::NotFound, "config file " + path.string() + " not found");
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    std::string_view s = line;
    if (const auto hash = s.find('#'); hash != std::string_view::npos) s = s.substr(0, hash);
    s = detail::trim(s);
    if (s.empty()) continue;
    try {
      apply_assignment(cfg, s);
    } catch (const DataError& e) {
      throw DataError(e.kind(), path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
}

}  // namespace fgat
