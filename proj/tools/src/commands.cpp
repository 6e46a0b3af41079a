#include "specrage_cli/commands.hpp"

#include "specrage/error.hpp"
#include "specrage/persist.hpp"
#include "specrage/spectral.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <set>
#include <sstream>

namespace specrage::cli {

namespace {

constexpr const char* kVersion = "0.1.0";

// Shortest text that reads back as the same double.
std::string num(double x) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, ptr);
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

// Key/value lines; values may contain spaces.
class Manifest {
 public:
  void add(const std::string& key, const std::string& value) { lines_ += key + " " + value + "\n"; }
  void add_config(const RunConfig& config) {
    for (const auto& [k, v] : config.resolved()) add("config." + k, v);
  }
  void write(const fs::path& path) const { write_text(path, lines_); }

 private:
  std::string lines_;
};

void write_config_echo(const fs::path& dir, const RunConfig& config) {
  write_text(dir / "config.txt", config.source_text);
  std::string resolved;
  for (const auto& [k, v] : config.resolved()) resolved += k + " = " + v + "\n";
  write_text(dir / "config.resolved.txt", resolved);
}

Index distinct_labels(const Labels& labels) { return static_cast<Index>(std::set<int>(labels.begin(), labels.end()).size()); }

Index cluster_count(const RunConfig& config, const Labels& labels) {
  return config.clusters > 0 ? config.clusters : distinct_labels(labels);
}

ContaminationSpec contamination_spec(const RunConfig& config) {
  ContaminationSpec spec;
  spec.kind = config.contam_kind == "gaussian_noise" ? ContaminationKind::gaussian_noise : ContaminationKind::outlier;
  spec.ratio = config.contam_ratio;
  spec.target_views = config.contam_views;
  spec.noise_sigma = config.contam_sigma;
  spec.seed = config.contam_seed();
  return spec;
}

std::string history_csv(const TrainHistory& h) {
  std::ostringstream out;
  out.precision(std::numeric_limits<double>::max_digits10);
  out << "epoch,train_loss,val_loss,learning_rate,seconds,grassmann_dist_sq\n";
  for (const auto& r : h.epochs) {
    out << r.epoch << ',' << r.train_loss << ',' << r.val_loss << ',' << r.learning_rate << ',' << r.seconds << ',';
    if (r.grassmann_dist_sq) out << *r.grassmann_dist_sq;
    out << '\n';
  }
  return out.str();
}

double mean_of(const std::vector<double>& xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return xs.empty() ? 0.0 : s / static_cast<double>(xs.size());
}

// Sample standard deviation; 0 for fewer than two values.
double std_of(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  const double mu = mean_of(xs);
  double s = 0.0;
  for (double x : xs) s += (x - mu) * (x - mu);
  return std::sqrt(s / static_cast<double>(xs.size() - 1));
}

}  // namespace

void apply_override(RunConfig& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ParameterError("--set expects key=value, got '" + assignment + "'");
  auto trim = [](std::string s) {
    s.erase(0, s.find_first_not_of(" \t"));
    s.erase(s.find_last_not_of(" \t") + 1);
    return s;
  };
  const std::string key = trim(assignment.substr(0, eq));
  const std::string value = trim(assignment.substr(eq + 1));
  config.set(key, value);
  config.source_text += key + " = " + value + "\n";
}

PreparedData prepare_data(const RunConfig& config) {
  config.validate();
  PreparedData out;
  if (config.data_source == "dir") {
    if (config.contam_kind != "none" && config.contam_ratio > 0.0)
      throw ParameterError("config: contamination is only applied to generated data (data.source = blobs)");
    out.split.train = load_dataset_dir(config.data_dir / "train");
    out.split.val = load_dataset_dir(config.data_dir / "val");
    out.split.test = load_dataset_dir(config.data_dir / "test");
    for (const auto* part : {&out.split.train, &out.split.val, &out.split.test}) part->validate();
    if (out.split.val.view_dims() != out.split.train.view_dims() ||
        out.split.test.view_dims() != out.split.train.view_dims())
      throw InputError("data.dir: train, val and test have different view dimensions");
    out.total_rows = out.split.train.size() + out.split.val.size() + out.split.test.size();
    out.contaminated_rows.assign(static_cast<std::size_t>(out.split.train.num_views()), 0);
    return out;
  }

  MultiViewDataset ds =
      make_blobs_two_view(config.blobs_n, config.blobs_clusters, config.blobs_dim, config.blobs_std, config.data_seed());
  out.contaminated_rows.assign(static_cast<std::size_t>(ds.num_views()), 0);
  if (config.contam_kind != "none") {
    for (Index v : config.contam_views)
      if (v >= ds.num_views()) throw ParameterError("config: contam.views entry " + std::to_string(v) + " out of range");
    ds = contaminate(ds, contamination_spec(config)).dataset;
    if (ds.contaminated_mask)
      for (Index v = 0; v < ds.num_views(); ++v)
        out.contaminated_rows[static_cast<std::size_t>(v)] = ds.contaminated_mask->col(v).count();
  }
  out.total_rows = ds.size();
  out.split = split(ds, SplitSpec{config.split_test, config.split_val, config.split_seed()});
  return out;
}

ModelConfig model_config(const RunConfig& config, const std::vector<Index>& view_dims) {
  ModelConfig mc = config.model;
  mc.view_input_dims = view_dims;
  if (config.wide_backbone) mc.view_hidden = {1024, 1024, 512};
  mc.seed = config.model_seed();
  return mc;
}

TrainConfig train_config(const RunConfig& config) {
  TrainConfig tc = config.train;
  tc.seed = config.train_seed();
  return tc;
}

TrainedRun run_training(const RunConfig& config, const DatasetSplit& raw, std::ostream* log) {
  config.validate();
  TrainedRun run;
  run.scaler = config.standardize ? FeatureScaler::fit(raw.train) : FeatureScaler::identity(raw.train.view_dims());
  run.data = raw;
  run.data.train = run.scaler.apply(raw.train);
  run.data.val = run.scaler.apply(raw.val);
  run.data.test = run.scaler.apply(raw.test);

  std::vector<SiameseTrainReport> reports;
  run.affinity = prepare_affinity(run.data.train.views, config.affinity, config.siamese, config.siamese_seed(), &reports);
  if (log) {
    for (std::size_t v = 0; v < reports.size(); ++v) {
      *log << "siamese view " << v;
      if (!reports[v].epoch_losses.empty()) *log << " final_loss " << reports[v].epoch_losses.back();
      *log << " sigma " << run.affinity.sigma(static_cast<Index>(v)) << "\n";
    }
  }

  run.model = SpecRageModel(model_config(config, run.data.train.view_dims()));
  const TrainConfig tc = train_config(config);
  tc.validate(run.model, config.affinity);

  // Oracle on the validation split for the optional per-epoch distance.
  std::optional<Matrix> oracle;
  if (config.track_grassmann) {
    const auto w = run.affinity.batch_affinities(run.data.val.views);
    std::vector<Matrix> ls;
    for (const auto& x : w) ls.push_back(laplacian(x));
    oracle = smallest_eigvecs(average_laplacian(ls), run.model.output_dim()).vectors;
  }

  run.history = train(run.model, run.data.train, run.data.val, run.affinity, tc,
                      [&](const SpecRageModel& m, EpochRecord& r) {
                        if (oracle) r.grassmann_dist_sq = grassmann_distance_sq(m.orthogonal_output(run.data.val.views), *oracle);
                        if (log) {
                          *log << "epoch " << r.epoch << " train " << r.train_loss << " val " << r.val_loss << " lr "
                               << r.learning_rate;
                          if (r.grassmann_dist_sq) *log << " grassmann " << *r.grassmann_dist_sq;
                          *log << "\n";
                        }
                      });
  if (log && run.history.stopped_by_lr_floor) *log << "stopped: learning rate below floor\n";
  return run;
}

LoadedRun load_run(const fs::path& run_dir) {
  LoadedRun run;
  auto ck = load_model(run_dir / "model.ckpt");
  run.model = std::move(ck.model);
  run.config = std::move(ck.config);
  run.affinity = load_affinity(run_dir / "affinity.ckpt");
  run.scaler = FeatureScaler::read(run_dir / "scaler.txt");
  if (!run.model.frozen()) throw StateError(run_dir.string() + ": model checkpoint is not frozen");
  if (static_cast<Index>(run.affinity.views.size()) != run.model.num_views() ||
      static_cast<Index>(run.scaler.mean.size()) != run.model.num_views())
    throw FormatError(run_dir.string() + ": checkpoint files disagree on the number of views");
  return run;
}

Embedding embed_views(const LoadedRun& run, const std::vector<Matrix>& raw_views) {
  const auto views = run.scaler.apply(raw_views);
  Embedding e;
  e.y = run.model.embed(views);
  const auto mode = run.model.fusion_mode();
  if (mode == FusionMode::weighting || mode == FusionMode::simple_average) e.weights = run.model.fusion_weights(views).alpha;
  return e;
}

std::string OracleDiagnostics::serialize() const {
  std::string out;
  out += "grassmann_dist_sq " + num(grassmann_dist_sq) + "\n";
  out += "k " + std::to_string(k) + "\n";
  out += "n " + std::to_string(n) + "\n";
  for (std::size_t v = 0; v < offdiag_ratios.size(); ++v)
    out += "offdiag_ratio." + std::to_string(v) + " " + num(offdiag_ratios[v]) + "\n";
  for (Index i = 0; i < oracle_eigenvalues.size(); ++i)
    out += "oracle_eigenvalue." + std::to_string(i) + " " + num(oracle_eigenvalues(i)) + "\n";
  return out;
}

OracleDiagnostics oracle_diagnostics(const AffinityContext& affinity, const std::vector<Matrix>& scaled_views,
                                     const Matrix& y) {
  const auto w = affinity.batch_affinities(scaled_views);
  std::vector<Matrix> ls;
  for (const auto& x : w) ls.push_back(laplacian(x));
  const Index k = y.cols();
  if (y.rows() != ls.front().rows())
    throw InputError("oracle-check: embeddings have " + std::to_string(y.rows()) + " rows, data has " +
                     std::to_string(ls.front().rows()));
  if (k >= y.rows()) throw InputError("oracle-check: need more rows than embedding columns");
  const auto eig = smallest_eigvecs(average_laplacian(ls), k);
  OracleDiagnostics d;
  d.k = k;
  d.n = y.rows();
  d.grassmann_dist_sq = grassmann_distance_sq(y, eig.vectors);
  for (const auto& l : ls) d.offdiag_ratios.push_back(offdiag_ratio(y, l));
  d.oracle_eigenvalues = eig.values;
  return d;
}

std::string SweepResult::table_csv() const {
  std::ostringstream out;
  out.precision(std::numeric_limits<double>::max_digits10);
  out << "ratio,fusion_mode,repeats,acc_mean,acc_std,degradation_pct_mean,degradation_pct_std\n";
  for (const auto& r : rows)
    out << r.ratio << ',' << to_string(r.mode) << ',' << r.repeats << ',' << r.acc_mean << ',' << r.acc_std << ','
        << r.degradation_mean << ',' << r.degradation_std << '\n';
  return out.str();
}

std::string SweepResult::cells_csv() const {
  std::ostringstream out;
  out.precision(std::numeric_limits<double>::max_digits10);
  out << "ratio,fusion_mode,repeat,acc,nmi,clean_acc,degradation_pct\n";
  for (const auto& c : cells)
    out << c.ratio << ',' << to_string(c.mode) << ',' << c.repeat << ',' << c.acc << ',' << c.nmi << ','
        << c.clean_acc << ',' << c.degradation_pct << '\n';
  return out.str();
}

SweepResult run_sweep(const RunConfig& config, std::ostream* log) {
  config.validate();
  if (config.contam_kind == "none") throw ParameterError("config: robustness-sweep needs contam.kind");
  if (config.data_source != "blobs") throw ParameterError("config: robustness-sweep needs data.source = blobs");

  // the clean baseline runs first whatever the listed order
  std::vector<double> ratios = config.sweep_ratios;
  const bool has_zero = std::find(ratios.begin(), ratios.end(), 0.0) != ratios.end();
  std::erase(ratios, 0.0);
  ratios.insert(ratios.begin(), 0.0);

  SweepResult result;
  // clean[mode][repeat]
  std::map<std::pair<int, int>, double> clean;
  for (double ratio : ratios) {
    for (int rep = 0; rep < config.sweep_repeats; ++rep) {
      RunConfig cell = config;
      cell.seed = config.seed + 1000003ULL * static_cast<std::uint64_t>(rep);
      cell.contam_ratio = ratio;
      const auto data = prepare_data(cell);
      for (FusionMode mode : config.sweep_modes) {
        cell.model.fusion_mode = mode;
        const auto run = run_training(cell, data.split);
        const auto& labels = *run.data.test.labels;
        const auto rep_eval = evaluate_embedding(run.model.embed(run.data.test.views), labels,
                                                 cluster_count(cell, labels), cell.kmeans_seed(), cell.eval_restarts);
        SweepCell c{ratio, mode, rep, rep_eval.acc, rep_eval.nmi, 0.0, 0.0};
        const auto key = std::make_pair(static_cast<int>(mode), rep);
        if (ratio == 0.0) clean[key] = rep_eval.acc;
        c.clean_acc = clean.at(key);
        c.degradation_pct = relative_degradation(c.clean_acc, c.acc);
        if (log)
          *log << "cell ratio " << ratio << " mode " << to_string(mode) << " repeat " << rep << " acc " << c.acc
               << " degradation_pct " << c.degradation_pct << "\n";
        if (ratio != 0.0 || has_zero) result.cells.push_back(c);
      }
    }
  }
  for (double ratio : config.sweep_ratios) {
    for (FusionMode mode : config.sweep_modes) {
      std::vector<double> acc, deg;
      for (const auto& c : result.cells)
        if (c.ratio == ratio && c.mode == mode) {
          acc.push_back(c.acc);
          deg.push_back(c.degradation_pct);
        }
      result.rows.push_back(SweepRow{ratio, mode, static_cast<int>(acc.size()), mean_of(acc), std_of(acc),
                                     mean_of(deg), std_of(deg)});
    }
  }
  return result;
}

void cmd_gen_data(const RunConfig& config, const std::string& command_line) {
  if (config.data_source != "blobs") throw ParameterError("gen-data: data.source must be blobs");
  const auto data = prepare_data(config);
  const fs::path dir = config.output;
  fs::create_directories(dir);
  save_views_csv(dir / "train", data.split.train);
  save_views_csv(dir / "val", data.split.val);
  save_views_csv(dir / "test", data.split.test);
  write_config_echo(dir, config);

  Manifest m;
  m.add("command", "gen-data");
  m.add("command_line", command_line);
  m.add("version", kVersion);
  m.add("seed", std::to_string(config.seed));
  m.add("rows", std::to_string(data.total_rows));
  m.add("rows.train", std::to_string(data.split.train.size()));
  m.add("rows.val", std::to_string(data.split.val.size()));
  m.add("rows.test", std::to_string(data.split.test.size()));
  for (std::size_t v = 0; v < data.contaminated_rows.size(); ++v) {
    m.add("contaminated_rows." + std::to_string(v), std::to_string(data.contaminated_rows[v]));
    m.add("contaminated_fraction." + std::to_string(v),
          num(static_cast<double>(data.contaminated_rows[v]) / static_cast<double>(data.total_rows)));
  }
  m.add_config(config);
  m.write(dir / "manifest.txt");
}

TrainedRun cmd_train(const RunConfig& config, const std::string& command_line) {
  const auto data = prepare_data(config);
  const fs::path dir = config.output;
  fs::create_directories(dir);
  write_config_echo(dir, config);

  std::ofstream log(dir / "log.txt", std::ios::binary);
  if (!log) throw IoError("cannot write '" + (dir / "log.txt").string() + "'");
  log.precision(std::numeric_limits<double>::max_digits10);
  auto run = run_training(config, data.split, &log);

  const ConfigEcho echo = config.resolved();
  save_model(dir / "model.ckpt", run.model, echo);
  save_affinity(dir / "affinity.ckpt", run.affinity);
  run.scaler.write(dir / "scaler.txt");
  write_text(dir / "history.csv", history_csv(run.history));

  Manifest m;
  m.add("command", "train");
  m.add("command_line", command_line);
  m.add("version", kVersion);
  m.add("seed", std::to_string(config.seed));
  m.add("rows.train", std::to_string(run.data.train.size()));
  m.add("rows.val", std::to_string(run.data.val.size()));
  m.add("rows.test", std::to_string(run.data.test.size()));
  m.add("epochs_run", std::to_string(run.history.epochs.size()));
  m.add("stopped_by_lr_floor", run.history.stopped_by_lr_floor ? "1" : "0");
  m.add("resampled_batches", std::to_string(run.history.resampled_batches));
  m.add_config(config);
  m.write(dir / "manifest.txt");
  return run;
}

Embedding cmd_embed(const fs::path& run_dir, const fs::path& data_dir, const fs::path& out_dir,
                    const std::string& command_line) {
  const auto run = load_run(run_dir);
  const auto ds = load_dataset_dir(data_dir);
  auto e = embed_views(run, ds.views);
  fs::create_directories(out_dir);
  save_matrix_csv(out_dir / "embeddings.csv", e.y);
  if (e.weights) save_matrix_csv(out_dir / "weights.csv", *e.weights);
  Manifest m;
  m.add("command", "embed");
  m.add("command_line", command_line);
  m.add("version", kVersion);
  m.add("run", run_dir.string());
  m.add("data", data_dir.string());
  m.add("rows", std::to_string(e.y.rows()));
  m.add("columns", std::to_string(e.y.cols()));
  m.add("weights", e.weights ? "weights.csv" : "none");
  m.write(out_dir / "manifest.txt");
  return e;
}

EvalReport cmd_eval(const fs::path& embeddings, const fs::path& labels, const RunConfig& config,
                    const fs::path& out_file) {
  const Matrix y = load_matrix_csv(embeddings);
  const Labels truth = load_labels(labels);
  if (static_cast<Index>(truth.size()) != y.rows())
    throw InputError("eval: " + std::to_string(y.rows()) + " embedding rows but " + std::to_string(truth.size()) +
                     " labels");
  const Index clusters = cluster_count(config, truth);
  auto report = evaluate_embedding(y, truth, clusters, config.kmeans_seed(), config.eval_restarts);
  report.seed = config.seed;
  report.config["eval.clusters"] = std::to_string(clusters);
  report.config["eval.restarts"] = std::to_string(config.eval_restarts);
  report.config["embeddings"] = embeddings.string();
  report.config["labels"] = labels.string();
  report.write(out_file);
  return report;
}

OracleDiagnostics cmd_oracle_check(const fs::path& run_dir, const fs::path& data_dir,
                                   const std::optional<fs::path>& embeddings, const fs::path& out_file) {
  const auto run = load_run(run_dir);
  const auto ds = load_dataset_dir(data_dir);
  const Matrix y = embeddings ? load_matrix_csv(*embeddings) : embed_views(run, ds.views).y;
  const auto d = oracle_diagnostics(run.affinity, run.scaler.apply(ds.views), y);
  write_text(out_file, d.serialize());
  return d;
}

SweepResult cmd_robustness_sweep(const RunConfig& config, const std::string& command_line) {
  const fs::path dir = config.output;
  fs::create_directories(dir);
  write_config_echo(dir, config);
  std::ofstream log(dir / "log.txt", std::ios::binary);
  if (!log) throw IoError("cannot write '" + (dir / "log.txt").string() + "'");
  auto result = run_sweep(config, &log);
  write_text(dir / "sweep.csv", result.table_csv());
  write_text(dir / "sweep_cells.csv", result.cells_csv());
  Manifest m;
  m.add("command", "robustness-sweep");
  m.add("command_line", command_line);
  m.add("version", kVersion);
  m.add("seed", std::to_string(config.seed));
  m.add("cells", std::to_string(result.cells.size()));
  m.add_config(config);
  m.write(dir / "manifest.txt");
  return result;
}

}  // namespace specrage::cli
