#pragma once

#include "specrage/types.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace specrage {

// V views of the same n samples. Row i of every view describes sample i.
struct MultiViewDataset {
  std::vector<Matrix> views;
  std::optional<Labels> labels;
  // n x V, true where a view of a sample was corrupted on purpose.
  std::optional<BoolMatrix> contaminated_mask;
  std::uint64_t seed = 0;

  Index size() const { return views.empty() ? 0 : views.front().rows(); }
  Index num_views() const { return static_cast<Index>(views.size()); }
  std::vector<Index> view_dims() const;

  // Throws ParameterError when the shape or finiteness invariants fail.
  void validate() const;

  // Rows in the given order, applied identically to views, labels and mask.
  MultiViewDataset rows(std::span<const Index> indices) const;
};

enum class ContaminationKind { outlier, gaussian_noise };

struct ContaminationSpec {
  ContaminationKind kind = ContaminationKind::outlier;
  double ratio = 0.0;
  std::vector<Index> target_views;  // 0-based
  double noise_sigma = 1.2;
  std::uint64_t seed = 0;
};

enum class InjectionStatus { applied, noop };

struct Contaminated {
  MultiViewDataset dataset;
  InjectionStatus status = InjectionStatus::applied;
};

struct SplitSpec {
  double test_fraction = 0.2;
  double val_fraction_of_train = 0.1;
  std::uint64_t seed = 0;
};

struct DatasetSplit {
  MultiViewDataset train;
  MultiViewDataset val;
  MultiViewDataset test;
  std::vector<Index> train_indices;
  std::vector<Index> val_indices;
  std::vector<Index> test_indices;
};

// Isotropic Gaussian blobs (view 0) and the same points under one random
// orthogonal transform (view 1). Rows are shuffled; labels are blob ids.
MultiViewDataset make_blobs_two_view(Index n, Index num_clusters, Index dim, double cluster_std,
                                     std::uint64_t seed);

// Replaces ceil(ratio * n) rows per target view with uniform draws from the
// clean data's bounding box expanded by 10% on each side.
Contaminated inject_outliers(const MultiViewDataset& ds, const ContaminationSpec& spec);

// Adds N(0, noise_sigma^2) noise to ceil(ratio * n) rows per target view.
Contaminated inject_gaussian_noise(const MultiViewDataset& ds, const ContaminationSpec& spec);

// Dispatches on spec.kind.
Contaminated contaminate(const MultiViewDataset& ds, const ContaminationSpec& spec);

DatasetSplit split(const MultiViewDataset& ds, const SplitSpec& spec);

// Number of rows ceil(ratio * n) affected per target view.
Index contaminated_row_count(Index n, double ratio);

struct CsvOptions {
  bool skip_header = false;
};

Matrix load_matrix_csv(const std::filesystem::path& path, const CsvOptions& options = {});
void save_matrix_csv(const std::filesystem::path& path, const Matrix& m);
Labels load_labels(const std::filesystem::path& path);
void save_labels(const std::filesystem::path& path, const Labels& labels);

MultiViewDataset load_views_csv(std::span<const std::filesystem::path> paths,
                                const std::optional<std::filesystem::path>& labels_path,
                                const CsvOptions& options = {});

// Writes view_<v>.csv for every view, plus labels.csv and mask.csv when present.
// Returns the written view paths in view order.
std::vector<std::filesystem::path> save_views_csv(const std::filesystem::path& dir,
                                                  const MultiViewDataset& ds);

// Reads a directory produced by save_views_csv.
MultiViewDataset load_dataset_dir(const std::filesystem::path& dir);

// Per-feature z-scoring fitted on one dataset (usually the training split)
// and applied unchanged to others. Constant features keep scale 1.
struct FeatureScaler {
  std::vector<RowVector> mean;
  std::vector<RowVector> scale;

  static FeatureScaler fit(const MultiViewDataset& ds);
  static FeatureScaler identity(std::span<const Index> view_dims);
  MultiViewDataset apply(const MultiViewDataset& ds) const;
  std::vector<Matrix> apply(const std::vector<Matrix>& views) const;

  std::string serialize() const;
  static FeatureScaler parse(const std::string& text);
  void write(const std::filesystem::path& path) const;
  static FeatureScaler read(const std::filesystem::path& path);
};

}  // namespace specrage
