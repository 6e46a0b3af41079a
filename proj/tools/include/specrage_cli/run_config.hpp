#pragma once

#include "specrage/affinity.hpp"
#include "specrage/model.hpp"
#include "specrage/mvdata.hpp"
#include "specrage/persist.hpp"
#include "specrage/trainer.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace specrage::cli {

// Every tunable of a run. Parsed from `key = value` lines; unknown keys and
// malformed values are rejected before any work starts.
struct RunConfig {
  // data
  std::string data_source = "blobs";  // blobs | dir
  std::filesystem::path data_dir;     // for data.source = dir: a gen-data output directory
  Index blobs_n = 2000;
  Index blobs_clusters = 4;
  Index blobs_dim = 2;
  double blobs_std = 0.6;
  bool standardize = true;

  std::string contam_kind = "none";  // none | outlier | gaussian_noise
  double contam_ratio = 0.0;
  std::vector<Index> contam_views{0};
  double contam_sigma = 1.2;

  double split_test = 0.2;
  double split_val = 0.1;

  AffinityConfig affinity{22, std::nullopt};
  SiameseConfig siamese;

  ModelConfig model;  // view_input_dims filled from the data
  bool wide_backbone = false;

  TrainConfig train;
  bool track_grassmann = false;

  Index clusters = 0;  // k-means clusters; 0 means "number of distinct labels"
  int eval_restarts = 10;

  std::vector<double> sweep_ratios{0.0, 0.1, 0.2, 0.3, 0.4};
  std::vector<FusionMode> sweep_modes{FusionMode::weighting, FusionMode::simple_average, FusionMode::concat};
  int sweep_repeats = 1;

  std::uint64_t seed = 0;
  std::filesystem::path output = "run";

  // The text the config was parsed from plus any overrides, in order.
  std::string source_text;

  RunConfig();

  static RunConfig parse(const std::string& text);
  static RunConfig load(const std::filesystem::path& path);

  // Applies one key = value assignment (also used for --set overrides).
  void set(const std::string& key, const std::string& value);

  // Effective value of every key.
  ConfigEcho resolved() const;
  static std::vector<std::string> keys();
  static std::string describe_keys();

  void validate() const;

  // Seeds of the independent random streams, all derived from `seed`.
  std::uint64_t data_seed() const { return seed; }
  std::uint64_t contam_seed() const { return seed + 101; }
  std::uint64_t split_seed() const { return seed + 202; }
  std::uint64_t siamese_seed() const { return seed + 303; }
  std::uint64_t model_seed() const { return seed + 404; }
  std::uint64_t train_seed() const { return seed + 505; }
  std::uint64_t kmeans_seed() const { return seed + 606; }
};

}  // namespace specrage::cli
