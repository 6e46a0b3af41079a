#include "specrage/mvdata.hpp"

#include "specrage/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace specrage {

std::vector<Index> MultiViewDataset::view_dims() const {
  std::vector<Index> dims;
  dims.reserve(views.size());
  for (const auto& v : views) dims.push_back(v.cols());
  return dims;
}

void MultiViewDataset::validate() const {
  if (views.size() < 2) throw ParameterError("dataset needs at least 2 views, got " + std::to_string(views.size()));
  const Index n = views.front().rows();
  for (std::size_t v = 0; v < views.size(); ++v) {
    if (views[v].rows() != n)
      throw ParameterError("view " + std::to_string(v) + " has " + std::to_string(views[v].rows()) +
                           " rows, expected " + std::to_string(n));
    if (views[v].cols() < 1) throw ParameterError("view " + std::to_string(v) + " has no features");
    if (!views[v].allFinite()) throw ParameterError("view " + std::to_string(v) + " contains non-finite entries");
  }
  if (labels && static_cast<Index>(labels->size()) != n)
    throw ParameterError("labels length " + std::to_string(labels->size()) + " != n = " + std::to_string(n));
  if (contaminated_mask && (contaminated_mask->rows() != n || contaminated_mask->cols() != num_views()))
    throw ParameterError("contamination mask must be n x V");
}

MultiViewDataset MultiViewDataset::rows(std::span<const Index> indices) const {
  MultiViewDataset out;
  out.seed = seed;
  const auto count = static_cast<Index>(indices.size());
  out.views.reserve(views.size());
  for (const auto& view : views) {
    Matrix sub(count, view.cols());
    for (Index r = 0; r < count; ++r) sub.row(r) = view.row(indices[r]);
    out.views.push_back(std::move(sub));
  }
  if (labels) {
    Labels sub(indices.size());
    for (std::size_t r = 0; r < indices.size(); ++r) sub[r] = (*labels)[indices[r]];
    out.labels = std::move(sub);
  }
  if (contaminated_mask) {
    BoolMatrix sub(count, contaminated_mask->cols());
    for (Index r = 0; r < count; ++r) sub.row(r) = contaminated_mask->row(indices[r]);
    out.contaminated_mask = std::move(sub);
  }
  return out;
}

namespace {

Matrix random_orthogonal(Index dim, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix g(dim, dim);
  for (Index j = 0; j < dim; ++j)
    for (Index i = 0; i < dim; ++i) g(i, j) = normal(rng);
  Eigen::HouseholderQR<Matrix> qr(g);
  return qr.householderQ() * Matrix::Identity(dim, dim);
}

// Centers uniform in [-10, 10]^dim. Draws are rejected while two centers sit
// closer than 10 * cluster_std, so that the blobs stay separable; after a
// bounded number of attempts the best-separated draw is kept.
Matrix draw_centers(Index num_clusters, Index dim, double cluster_std, Rng& rng) {
  std::uniform_real_distribution<double> box(-10.0, 10.0);
  const double wanted = 10.0 * cluster_std;
  Matrix best;
  double best_gap = -1.0;
  for (int attempt = 0; attempt < 1000; ++attempt) {
    Matrix c(num_clusters, dim);
    for (Index i = 0; i < num_clusters; ++i)
      for (Index j = 0; j < dim; ++j) c(i, j) = box(rng);
    double gap = std::numeric_limits<double>::infinity();
    for (Index a = 0; a < num_clusters; ++a)
      for (Index b = a + 1; b < num_clusters; ++b) gap = std::min(gap, (c.row(a) - c.row(b)).norm());
    if (gap > best_gap) {
      best_gap = gap;
      best = c;
    }
    if (gap >= wanted) break;
  }
  return best;
}

std::vector<Index> sample_rows(Index n, Index count, Rng& rng) {
  std::vector<Index> all(static_cast<std::size_t>(n));
  std::iota(all.begin(), all.end(), Index{0});
  // Partial Fisher-Yates; the first `count` entries are a uniform subset.
  for (Index i = 0; i < count; ++i) {
    std::uniform_int_distribution<Index> pick(i, n - 1);
    std::swap(all[i], all[pick(rng)]);
  }
  all.resize(static_cast<std::size_t>(count));
  return all;
}

void check_spec(const MultiViewDataset& ds, const ContaminationSpec& spec) {
  ds.validate();
  if (!(spec.ratio >= 0.0 && spec.ratio <= 1.0))
    throw ParameterError("contamination ratio must lie in [0, 1], got " + std::to_string(spec.ratio));
  for (Index v : spec.target_views)
    if (v < 0 || v >= ds.num_views())
      throw ParameterError("target view " + std::to_string(v) + " out of range");
}

MultiViewDataset with_mask(const MultiViewDataset& ds) {
  MultiViewDataset out = ds;
  if (!out.contaminated_mask) out.contaminated_mask = BoolMatrix::Constant(ds.size(), ds.num_views(), false);
  return out;
}

}  // namespace

MultiViewDataset make_blobs_two_view(Index n, Index num_clusters, Index dim, double cluster_std,
                                     std::uint64_t seed) {
  if (num_clusters < 2) throw ParameterError("make_blobs_two_view: need at least 2 clusters");
  if (n < num_clusters) throw ParameterError("make_blobs_two_view: n must be >= num_clusters");
  if (dim < 2) throw ParameterError("make_blobs_two_view: dim must be >= 2");
  if (!(cluster_std > 0.0) || !std::isfinite(cluster_std))
    throw ParameterError("make_blobs_two_view: cluster_std must be positive");

  Rng rng(seed);
  const Matrix centers = draw_centers(num_clusters, dim, cluster_std, rng);
  const Matrix rotation = random_orthogonal(dim, rng);

  // Samples are assigned to clusters as evenly as possible, then shuffled.
  Labels labels(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) labels[i] = static_cast<int>(i % num_clusters);
  std::shuffle(labels.begin(), labels.end(), rng);

  std::normal_distribution<double> normal(0.0, cluster_std);
  Matrix x(n, dim);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < dim; ++j) x(i, j) = centers(labels[i], j) + normal(rng);

  MultiViewDataset ds;
  ds.seed = seed;
  ds.views.push_back(x);
  ds.views.push_back(x * rotation.transpose());
  ds.labels = std::move(labels);
  return ds;
}

Index contaminated_row_count(Index n, double ratio) {
  // Guard against 0.3 * 100 = 30.000000000000004 rounding up to 31.
  const double raw = ratio * static_cast<double>(n);
  return std::min<Index>(n, static_cast<Index>(std::ceil(raw - 1e-9)));
}

Contaminated inject_outliers(const MultiViewDataset& ds, const ContaminationSpec& spec) {
  if (spec.kind != ContaminationKind::outlier) throw ParameterError("inject_outliers: spec.kind must be outlier");
  check_spec(ds, spec);
  const Index n = ds.size();
  const Index count = contaminated_row_count(n, spec.ratio);
  Contaminated result{with_mask(ds), InjectionStatus::applied};
  if (count == 0 || spec.target_views.empty()) {
    result.status = InjectionStatus::noop;
    return result;
  }
  Rng rng(spec.seed);
  for (Index v : spec.target_views) {
    const Matrix& clean = ds.views[v];
    const RowVector lo = clean.colwise().minCoeff();
    const RowVector hi = clean.colwise().maxCoeff();
    const RowVector mid = 0.5 * (lo + hi);
    const RowVector half = 0.5 * (hi - lo);
    const auto rows = sample_rows(n, count, rng);
    Matrix& out = result.dataset.views[v];
    for (Index r : rows) {
      for (Index f = 0; f < clean.cols(); ++f) {
        std::uniform_real_distribution<double> u(mid(f) - 1.1 * half(f), mid(f) + 1.1 * half(f));
        out(r, f) = half(f) > 0.0 ? u(rng) : mid(f);
      }
      (*result.dataset.contaminated_mask)(r, v) = true;
    }
  }
  return result;
}

Contaminated inject_gaussian_noise(const MultiViewDataset& ds, const ContaminationSpec& spec) {
  if (spec.kind != ContaminationKind::gaussian_noise)
    throw ParameterError("inject_gaussian_noise: spec.kind must be gaussian_noise");
  check_spec(ds, spec);
  if (!(spec.noise_sigma > 0.0)) throw ParameterError("noise_sigma must be positive");
  const Index n = ds.size();
  const Index count = contaminated_row_count(n, spec.ratio);
  Contaminated result{with_mask(ds), InjectionStatus::applied};
  if (count == 0 || spec.target_views.empty()) {
    result.status = InjectionStatus::noop;
    return result;
  }
  Rng rng(spec.seed);
  std::normal_distribution<double> noise(0.0, spec.noise_sigma);
  for (Index v : spec.target_views) {
    const auto rows = sample_rows(n, count, rng);
    Matrix& out = result.dataset.views[v];
    for (Index r : rows) {
      for (Index f = 0; f < out.cols(); ++f) out(r, f) += noise(rng);
      (*result.dataset.contaminated_mask)(r, v) = true;
    }
  }
  return result;
}

Contaminated contaminate(const MultiViewDataset& ds, const ContaminationSpec& spec) {
  return spec.kind == ContaminationKind::outlier ? inject_outliers(ds, spec) : inject_gaussian_noise(ds, spec);
}

DatasetSplit split(const MultiViewDataset& ds, const SplitSpec& spec) {
  ds.validate();
  const Index n = ds.size();
  if (n < 10) throw ParameterError("split: need at least 10 samples, got " + std::to_string(n));
  if (!(spec.test_fraction > 0.0 && spec.test_fraction < 1.0) ||
      !(spec.val_fraction_of_train > 0.0 && spec.val_fraction_of_train < 1.0))
    throw ParameterError("split: fractions must lie in (0, 1)");

  const auto n_test = static_cast<Index>(std::llround(spec.test_fraction * static_cast<double>(n)));
  const auto n_val = static_cast<Index>(std::llround(spec.val_fraction_of_train * static_cast<double>(n - n_test)));
  const Index n_train = n - n_test - n_val;
  if (n_test < 1 || n_val < 1 || n_train < 1)
    throw ParameterError("split: fractions leave an empty partition");

  std::vector<Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Index{0});
  Rng rng(spec.seed);
  std::shuffle(perm.begin(), perm.end(), rng);

  DatasetSplit out;
  out.test_indices.assign(perm.begin(), perm.begin() + n_test);
  out.val_indices.assign(perm.begin() + n_test, perm.begin() + n_test + n_val);
  out.train_indices.assign(perm.begin() + n_test + n_val, perm.end());
  // Keep original order inside each partition; it makes saved files easy to diff.
  std::sort(out.test_indices.begin(), out.test_indices.end());
  std::sort(out.val_indices.begin(), out.val_indices.end());
  std::sort(out.train_indices.begin(), out.train_indices.end());
  out.train = ds.rows(out.train_indices);
  out.val = ds.rows(out.val_indices);
  out.test = ds.rows(out.test_indices);
  return out;
}

}  // namespace specrage
