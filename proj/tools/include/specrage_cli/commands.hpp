#pragma once

#include "specrage_cli/run_config.hpp"

#include "specrage/metrics.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace specrage::cli {

namespace fs = std::filesystem;

// Applies `key=value` and records it in the echoed config text.
void apply_override(RunConfig& config, const std::string& assignment);

// Generated (and possibly contaminated) or loaded data, split, unscaled.
struct PreparedData {
  DatasetSplit split;
  // Corrupted rows per view over the whole dataset before splitting.
  std::vector<Index> contaminated_rows;
  Index total_rows = 0;
};
PreparedData prepare_data(const RunConfig& config);

ModelConfig model_config(const RunConfig& config, const std::vector<Index>& view_dims);
TrainConfig train_config(const RunConfig& config);

struct TrainedRun {
  SpecRageModel model;
  AffinityContext affinity;
  FeatureScaler scaler;
  TrainHistory history;
  DatasetSplit data;  // after scaling
};

// Scaling, Siamese pretraining, calibration and training; writes nothing.
// Epoch lines go to `log` when given.
TrainedRun run_training(const RunConfig& config, const DatasetSplit& raw, std::ostream* log = nullptr);

// Everything a later command needs from a finished run directory.
struct LoadedRun {
  SpecRageModel model;
  AffinityContext affinity;
  FeatureScaler scaler;
  ConfigEcho config;
};
LoadedRun load_run(const fs::path& run_dir);

struct Embedding {
  Matrix y;
  std::optional<Matrix> weights;  // weighting and simple_average only
};
Embedding embed_views(const LoadedRun& run, const std::vector<Matrix>& raw_views);

struct OracleDiagnostics {
  double grassmann_dist_sq = 0.0;
  Index k = 0;
  Index n = 0;
  std::vector<double> offdiag_ratios;
  Vector oracle_eigenvalues;

  std::string serialize() const;
};
// Oracle subspace of the uniform average Laplacian built from the run's
// affinities on `scaled_views`, compared with `y`.
OracleDiagnostics oracle_diagnostics(const AffinityContext& affinity, const std::vector<Matrix>& scaled_views,
                                     const Matrix& y);

struct SweepCell {
  double ratio = 0.0;
  FusionMode mode = FusionMode::weighting;
  int repeat = 0;
  double acc = 0.0;
  double nmi = 0.0;
  double clean_acc = 0.0;
  double degradation_pct = 0.0;
};
struct SweepRow {
  double ratio = 0.0;
  FusionMode mode = FusionMode::weighting;
  int repeats = 0;
  double acc_mean = 0.0, acc_std = 0.0;
  double degradation_mean = 0.0, degradation_std = 0.0;
};
struct SweepResult {
  std::vector<SweepCell> cells;
  std::vector<SweepRow> rows;  // ratios x modes, in config order
  std::string table_csv() const;
  std::string cells_csv() const;
};
// Trains and scores every (ratio, mode, repeat) cell. The clean baseline of
// each mode and repeat is the ratio-0 cell, trained even when 0 is not listed.
SweepResult run_sweep(const RunConfig& config, std::ostream* log = nullptr);

// Commands. Each writes into its output directory (or file) and a manifest.
void cmd_gen_data(const RunConfig& config, const std::string& command_line);
TrainedRun cmd_train(const RunConfig& config, const std::string& command_line);
Embedding cmd_embed(const fs::path& run_dir, const fs::path& data_dir, const fs::path& out_dir,
                    const std::string& command_line);
EvalReport cmd_eval(const fs::path& embeddings, const fs::path& labels, const RunConfig& config,
                    const fs::path& out_file);
OracleDiagnostics cmd_oracle_check(const fs::path& run_dir, const fs::path& data_dir,
                                   const std::optional<fs::path>& embeddings, const fs::path& out_file);
SweepResult cmd_robustness_sweep(const RunConfig& config, const std::string& command_line);

}  // namespace specrage::cli
