#pragma once

#include "specrage/mlp.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace specrage {

struct AffinityConfig {
  Index neighbors = 10;                 // l
  std::optional<double> kernel_sigma;   // overrides the calibrated scale when set

  void validate() const;
};

// Row i holds the l nearest rows to i (Euclidean), excluding i itself.
// Ties are broken by the lower row index.
IndexMatrix knn_indices(const Matrix& points, Index l);

struct SiamesePair {
  Index anchor = 0;
  Index other = 0;
  bool positive = false;
};

// Positives are (i, j) for every j among the l nearest neighbours of i;
// negatives_per_anchor negatives per anchor are drawn uniformly from the
// points that are neither i nor one of its neighbours.
std::vector<SiamesePair> make_siamese_pairs(const Matrix& view, Index l, Index negatives_per_anchor,
                                            std::uint64_t seed);

struct SiameseConfig {
  bool enabled = true;
  std::vector<Index> hidden = {64, 64};
  Index output_dim = 16;
  Activation activation = Activation::relu;
  double margin = 1.0;
  int epochs = 10;
  Index batch_pairs = 256;
  double learning_rate = 1e-3;
  Index negatives_per_anchor = 0;  // 0 means "same as l"
};

// Per-view embedder z = h(x) / |h(x)| plus its global kernel scale. Without a
// network the embedder is the identity map.
class SiameseContext {
 public:
  SiameseContext() = default;
  static SiameseContext identity() { return SiameseContext{}; }
  static SiameseContext untrained(Index input_dim, const SiameseConfig& config, std::uint64_t seed);

  bool has_network() const { return net_.has_value(); }
  const Mlp& network() const;
  Mlp& mutable_network();

  Matrix embed(const Matrix& x) const;

  double scale() const { return scale_; }
  void set_scale(double sigma);
  bool calibrated() const { return scale_ > 0.0; }
  bool trained() const { return trained_; }
  void mark_trained() { trained_ = true; }

  static SiameseContext from_parts(std::optional<Mlp> net, double scale, bool trained);

 private:
  std::optional<Mlp> net_;
  double scale_ = 0.0;
  bool trained_ = false;
};

struct SiameseTrainReport {
  std::vector<double> epoch_losses;
};

// Contrastive loss on unit-normalised embeddings: positives contribute d^2,
// negatives max(0, margin - d)^2, averaged over pairs.
double contrastive_loss(const Matrix& z_anchor, const Matrix& z_other, const std::vector<bool>& positive,
                        double margin);

// Contrastive loss of one pair batch pushed through `net` and unit
// normalisation; fills `grads` (same shapes as net) when given.
double contrastive_loss_and_gradients(const Mlp& net, const Matrix& x_anchor, const Matrix& x_other,
                                      const std::vector<bool>& positive, double margin, MlpGradients* grads);

SiameseTrainReport train_siamese(SiameseContext& ctx, const Matrix& view, Index l, const SiameseConfig& config,
                                 std::uint64_t seed);

// Median of embedded distances from every point to its l nearest neighbours.
double calibrate_scale(const SiameseContext& ctx, const Matrix& view, Index l);

// Gaussian kernel restricted to the l nearest neighbours of each row,
// symmetrised as (W + W^T) / 2 with a zero diagonal.
Matrix gaussian_knn_affinity(const Matrix& embedded, Index l, double sigma);

// Same kernel before symmetrisation; row i has at most l nonzeros.
Matrix gaussian_knn_affinity_directed(const Matrix& embedded, Index l, double sigma);

Matrix batch_affinity(const SiameseContext& ctx, const Matrix& batch, const AffinityConfig& config);

// Affinity construction for every view of a dataset.
struct AffinityContext {
  AffinityConfig config;
  std::vector<SiameseContext> views;

  double sigma(Index v) const;
  std::vector<Matrix> embed(const std::vector<Matrix>& batch_views) const;
  std::vector<Matrix> affinities_from_embedded(const std::vector<Matrix>& embedded) const;
  std::vector<Matrix> batch_affinities(const std::vector<Matrix>& batch_views) const;
};

// Builds one context per view: optional Siamese training, then scale
// calibration on the given (training) views.
AffinityContext prepare_affinity(const std::vector<Matrix>& train_views, const AffinityConfig& config,
                                 const SiameseConfig& siamese, std::uint64_t seed,
                                 std::vector<SiameseTrainReport>* reports = nullptr);

}  // namespace specrage
