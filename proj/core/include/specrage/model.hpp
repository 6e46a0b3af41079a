#pragma once

#include "specrage/affinity.hpp"
#include "specrage/mlp.hpp"
#include "specrage/optim.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace specrage {

enum class FusionMode {
  weighting,       // learned per-sample simplex weights (softmax with temperature)
  simple_average,  // fixed uniform weights
  concat,          // views side by side, orthogonalised in V*k dims
  linear,          // trainable linear map from the concatenation to k dims
};

std::string to_string(FusionMode mode);
FusionMode parse_fusion_mode(const std::string& name);

struct ModelConfig {
  std::vector<Index> view_input_dims;
  Index k = 4;
  std::vector<Index> view_hidden = {128, 128, 64};
  std::vector<Index> fusion_hidden = {64, 64};
  double temperature = 250.0;
  FusionMode fusion_mode = FusionMode::weighting;
  Activation activation = Activation::relu;
  std::uint64_t seed = 0;

  void validate() const;
};

// Per-sample view weights, m x V; every row lies on the probability simplex.
struct FusionWeights {
  Matrix alpha;
};

// Row-wise softmax of logits / temperature.
Matrix softmax_rows(const Matrix& logits, double temperature);

// Row i of the result is sum_v alpha(i, v) * views[v].row(i).
Matrix fuse(const std::vector<Matrix>& views, const Matrix& alpha);

Matrix concat_columns(const std::vector<Matrix>& blocks);

// R^{-1} from the QR factorisation of `fused` with R's diagonal made positive.
// Throws IllConditionedError when min |R_ii| < 1e-10 max |R_ii|.
Matrix orthogonalization_weights(const Matrix& fused);

// (1 / (m^2 V)) sum_v sum_ij Wt_ij |y_i - y_j|^2 with Wt_ij = W_ij a_i a_j for
// the view's column a of alpha, or Wt = W when alpha is null.
double loss_pairwise(const Matrix& y, std::span<const Matrix> affinities, const Matrix* alpha = nullptr);

// (2 / (m^2 V)) Tr(Y^T sum_v Lt_v Y) with Lt_v the Laplacian of Wt_v.
double loss_trace(const Matrix& y, std::span<const Matrix> affinities, const Matrix* alpha = nullptr);

class SpecRageModel {
 public:
  SpecRageModel() = default;
  explicit SpecRageModel(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }
  Index num_views() const { return static_cast<Index>(view_nets_.size()); }
  Index k() const { return config_.k; }
  // k, or V * k for the concat baseline.
  Index output_dim() const;
  FusionMode fusion_mode() const { return config_.fusion_mode; }
  double temperature() const { return config_.temperature; }

  const std::vector<Mlp>& view_nets() const { return view_nets_; }
  const Mlp& fusion_net() const { return fusion_net_; }
  const Mlp& linear_map() const { return linear_map_; }
  Mlp& view_net(Index v);
  Mlp& fusion_net();
  Mlp& linear_map();

  // The networks that grad_step updates, in a fixed order: view nets, then
  // the fusion net (weighting) or the linear map (linear).
  std::vector<Mlp*> trainable_networks();
  std::vector<const Mlp*> trainable_networks() const;

  const Matrix& ortho_weights() const { return ortho_weights_; }
  bool has_ortho_weights() const { return ortho_weights_.size() > 0; }
  void set_ortho_weights(Matrix weights);

  bool frozen() const { return frozen_; }
  void freeze();

  std::vector<Matrix> view_forward(const std::vector<Matrix>& batch) const;
  // Weighting mode: learned weights. Simple average: uniform weights.
  FusionWeights fusion_weights(const std::vector<Matrix>& batch) const;
  // Pre-orthogonalisation output (m x output_dim).
  Matrix fused_output(const std::vector<Matrix>& batch) const;
  // Alpha used in the weighted affinities; empty for concat and linear.
  std::optional<Matrix> affinity_weights(const std::vector<Matrix>& batch) const;

  // QR-factorises the fused output of `batch` and stores R^{-1}.
  void ortho_step(const std::vector<Matrix>& batch);

  // fused_output(batch) * ortho_weights, valid whenever weights are set.
  Matrix orthogonal_output(const std::vector<Matrix>& batch) const;

  // Out-of-sample map of a frozen model.
  Matrix embed(const std::vector<Matrix>& batch) const;

  friend class ModelIo;

 private:
  void check_batch(const std::vector<Matrix>& batch) const;

  ModelConfig config_;
  std::vector<Mlp> view_nets_;
  Mlp fusion_net_;
  Mlp linear_map_;
  Matrix ortho_weights_;
  bool frozen_ = false;
};

struct GradientOptions {
  // Drop the alpha dependence of the weighted affinities (for diagnostics).
  bool detach_affinity_alpha = false;
};

struct ModelGradients {
  double loss = 0.0;
  // Same order as SpecRageModel::trainable_networks().
  std::vector<MlpGradients> networks;
};

// Loss of one batch with the current orthogonalisation weights held fixed.
double batch_loss(const SpecRageModel& model, const std::vector<Matrix>& batch, std::span<const Matrix> affinities);

// Loss of one batch after orthogonalising that batch's own fused output;
// falls back to the model's weights when the batch is ill-conditioned.
double batch_loss_reorthogonalized(const SpecRageModel& model, const std::vector<Matrix>& batch,
                                   std::span<const Matrix> affinities);

// Analytic gradients of batch_loss with respect to every trainable parameter.
ModelGradients compute_gradients(const SpecRageModel& model, const std::vector<Matrix>& batch,
                                 std::span<const Matrix> affinities, const GradientOptions& options = {});

// One Adam state per trainable network.
class ModelOptimizer {
 public:
  ModelOptimizer() = default;
  ModelOptimizer(const SpecRageModel& model, double learning_rate, AdamConfig config = {});

  double learning_rate() const { return lr_; }
  void set_learning_rate(double lr);
  void step(SpecRageModel& model, const ModelGradients& grads);

 private:
  double lr_ = 1e-3;
  std::vector<AdamState> states_;
};

// Gradient step with precomputed affinities; returns the batch loss.
double grad_step(SpecRageModel& model, const std::vector<Matrix>& batch, std::span<const Matrix> affinities,
                 ModelOptimizer& optimizer);

// Gradient step that builds the batch affinities from `affinity`.
double grad_step(SpecRageModel& model, const std::vector<Matrix>& batch, const AffinityContext& affinity,
                 ModelOptimizer& optimizer);

}  // namespace specrage
