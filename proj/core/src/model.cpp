#include "specrage/model.hpp"

#include "specrage/error.hpp"

#include <cmath>
#include <numeric>

namespace specrage {

std::string to_string(FusionMode mode) {
  switch (mode) {
    case FusionMode::weighting: return "weighting";
    case FusionMode::simple_average: return "simple_average";
    case FusionMode::concat: return "concat";
    case FusionMode::linear: return "linear";
  }
  return "unknown";
}

FusionMode parse_fusion_mode(const std::string& name) {
  if (name == "weighting") return FusionMode::weighting;
  if (name == "simple_average") return FusionMode::simple_average;
  if (name == "concat") return FusionMode::concat;
  if (name == "linear") return FusionMode::linear;
  throw ParameterError("unknown fusion mode '" + name + "'");
}

void ModelConfig::validate() const {
  if (view_input_dims.size() < 1) throw ParameterError("model: at least one view is required");
  for (Index d : view_input_dims)
    if (d < 1) throw ParameterError("model: view input dims must be positive");
  if (k < 1) throw ParameterError("model: k must be >= 1");
  for (Index h : view_hidden)
    if (h < 1) throw ParameterError("model: hidden sizes must be positive");
  for (Index h : fusion_hidden)
    if (h < 1) throw ParameterError("model: hidden sizes must be positive");
  if (!(temperature > 0.0) || !std::isfinite(temperature)) throw ParameterError("model: temperature must be positive");
}

Matrix softmax_rows(const Matrix& logits, double temperature) {
  Matrix scaled = logits / temperature;
  const Vector row_max = scaled.rowwise().maxCoeff();
  scaled.colwise() -= row_max;
  Matrix e = scaled.array().exp().matrix();
  const Vector sums = e.rowwise().sum();
  return sums.cwiseInverse().asDiagonal() * e;
}

Matrix fuse(const std::vector<Matrix>& views, const Matrix& alpha) {
  if (views.empty()) throw ParameterError("fuse: no views");
  if (alpha.cols() != static_cast<Index>(views.size()) || alpha.rows() != views.front().rows())
    throw ParameterError("fuse: alpha must be m x V");
  Matrix out = Matrix::Zero(views.front().rows(), views.front().cols());
  for (std::size_t v = 0; v < views.size(); ++v) {
    if (views[v].rows() != out.rows() || views[v].cols() != out.cols())
      throw ParameterError("fuse: view representations differ in shape");
    out += alpha.col(static_cast<Index>(v)).asDiagonal() * views[v];
  }
  return out;
}

Matrix concat_columns(const std::vector<Matrix>& blocks) {
  if (blocks.empty()) return {};
  Index cols = 0;
  for (const auto& b : blocks) {
    if (b.rows() != blocks.front().rows()) throw ParameterError("concat: row count mismatch");
    cols += b.cols();
  }
  Matrix out(blocks.front().rows(), cols);
  Index at = 0;
  for (const auto& b : blocks) {
    out.middleCols(at, b.cols()) = b;
    at += b.cols();
  }
  return out;
}

Matrix orthogonalization_weights(const Matrix& fused) {
  const Index m = fused.rows();
  const Index k = fused.cols();
  if (m < k) throw IllConditionedError("orthogonalization: batch has fewer rows than output dims");
  if (!fused.allFinite()) throw IllConditionedError("orthogonalization: non-finite network output");
  Eigen::HouseholderQR<Matrix> qr(fused);
  Matrix r = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
  const Vector diag = r.diagonal().cwiseAbs();
  if (!(diag.minCoeff() >= 1e-10 * diag.maxCoeff()) || !(diag.maxCoeff() > 0.0))
    throw IllConditionedError("orthogonalization: fused output is numerically rank deficient");
  for (Index i = 0; i < k; ++i)
    if (r(i, i) < 0.0) r.row(i) *= -1.0;
  return r.triangularView<Eigen::Upper>().solve(Matrix::Identity(k, k));
}

namespace {

void check_loss_inputs(const Matrix& y, std::span<const Matrix> w, const Matrix* alpha) {
  if (w.empty()) throw ParameterError("loss: no affinity matrices");
  for (const auto& wv : w)
    if (wv.rows() != y.rows() || wv.cols() != y.rows()) throw ParameterError("loss: affinity must be m x m");
  if (alpha && (alpha->rows() != y.rows() || alpha->cols() != static_cast<Index>(w.size())))
    throw ParameterError("loss: alpha must be m x V");
}

Matrix weighted_affinity(const Matrix& w, const Matrix* alpha, Index v) {
  if (!alpha) return w;
  const auto a = alpha->col(v);
  return a.asDiagonal() * w * a.asDiagonal();
}

Matrix squared_distances(const Matrix& y) {
  const Vector s = y.rowwise().squaredNorm();
  Matrix d = -2.0 * (y * y.transpose());
  d.colwise() += s;
  d.rowwise() += s.transpose();
  return d.cwiseMax(0.0);
}

}  // namespace

double loss_pairwise(const Matrix& y, std::span<const Matrix> affinities, const Matrix* alpha) {
  check_loss_inputs(y, affinities, alpha);
  const Index m = y.rows();
  double total = 0.0;
  for (std::size_t v = 0; v < affinities.size(); ++v) {
    const Matrix wt = weighted_affinity(affinities[v], alpha, static_cast<Index>(v));
    for (Index j = 0; j < m; ++j)
      for (Index i = 0; i < m; ++i)
        if (wt(i, j) != 0.0) total += wt(i, j) * (y.row(i) - y.row(j)).squaredNorm();
  }
  return total / (static_cast<double>(m) * static_cast<double>(m) * static_cast<double>(affinities.size()));
}

double loss_trace(const Matrix& y, std::span<const Matrix> affinities, const Matrix* alpha) {
  check_loss_inputs(y, affinities, alpha);
  const Index m = y.rows();
  Matrix lsum = Matrix::Zero(m, m);
  for (std::size_t v = 0; v < affinities.size(); ++v) {
    const Matrix wt = weighted_affinity(affinities[v], alpha, static_cast<Index>(v));
    lsum -= wt;
    lsum.diagonal() += wt.rowwise().sum();
  }
  const double trace = (y.transpose() * lsum * y).trace();
  return 2.0 * trace / (static_cast<double>(m) * static_cast<double>(m) * static_cast<double>(affinities.size()));
}

SpecRageModel::SpecRageModel(const ModelConfig& config) : config_(config) {
  config_.validate();
  const auto num_views = static_cast<Index>(config_.view_input_dims.size());
  for (Index v = 0; v < num_views; ++v) {
    std::vector<Index> dims{config_.view_input_dims[v]};
    dims.insert(dims.end(), config_.view_hidden.begin(), config_.view_hidden.end());
    dims.push_back(config_.k);
    view_nets_.emplace_back(dims, config_.activation, config_.seed + 1000003ULL * static_cast<std::uint64_t>(v + 1));
  }
  const Index concat_dim = std::accumulate(config_.view_input_dims.begin(), config_.view_input_dims.end(), Index{0});
  if (config_.fusion_mode == FusionMode::weighting) {
    std::vector<Index> dims{concat_dim};
    dims.insert(dims.end(), config_.fusion_hidden.begin(), config_.fusion_hidden.end());
    dims.push_back(num_views);
    fusion_net_ = Mlp(dims, config_.activation, config_.seed + 77777ULL);
  }
  if (config_.fusion_mode == FusionMode::linear)
    linear_map_ = Mlp({num_views * config_.k, config_.k}, config_.activation, config_.seed + 99991ULL);
}

Index SpecRageModel::output_dim() const {
  return config_.fusion_mode == FusionMode::concat ? num_views() * config_.k : config_.k;
}

Mlp& SpecRageModel::view_net(Index v) {
  if (frozen_) throw StateError("model is frozen");
  return view_nets_.at(static_cast<std::size_t>(v));
}

Mlp& SpecRageModel::fusion_net() {
  if (frozen_) throw StateError("model is frozen");
  return fusion_net_;
}

Mlp& SpecRageModel::linear_map() {
  if (frozen_) throw StateError("model is frozen");
  return linear_map_;
}

std::vector<Mlp*> SpecRageModel::trainable_networks() {
  if (frozen_) throw StateError("model is frozen");
  std::vector<Mlp*> nets;
  for (auto& net : view_nets_) nets.push_back(&net);
  if (config_.fusion_mode == FusionMode::weighting) nets.push_back(&fusion_net_);
  if (config_.fusion_mode == FusionMode::linear) nets.push_back(&linear_map_);
  return nets;
}

std::vector<const Mlp*> SpecRageModel::trainable_networks() const {
  std::vector<const Mlp*> nets;
  for (const auto& net : view_nets_) nets.push_back(&net);
  if (config_.fusion_mode == FusionMode::weighting) nets.push_back(&fusion_net_);
  if (config_.fusion_mode == FusionMode::linear) nets.push_back(&linear_map_);
  return nets;
}

void SpecRageModel::set_ortho_weights(Matrix weights) {
  if (frozen_) throw StateError("model is frozen");
  if (weights.rows() != output_dim() || weights.cols() != output_dim())
    throw ParameterError("ortho weights must be output_dim x output_dim");
  ortho_weights_ = std::move(weights);
}

void SpecRageModel::freeze() {
  if (!has_ortho_weights()) throw StateError("cannot freeze a model without orthogonalization weights");
  frozen_ = true;
}

void SpecRageModel::check_batch(const std::vector<Matrix>& batch) const {
  if (static_cast<Index>(batch.size()) != num_views())
    throw ParameterError("batch has " + std::to_string(batch.size()) + " views, model expects " +
                         std::to_string(num_views()));
  for (Index v = 0; v < num_views(); ++v) {
    if (batch[v].cols() != config_.view_input_dims[v])
      throw ParameterError("view " + std::to_string(v) + " has width " + std::to_string(batch[v].cols()) +
                           ", expected " + std::to_string(config_.view_input_dims[v]));
    if (batch[v].rows() != batch.front().rows()) throw ParameterError("batch views differ in row count");
  }
}

std::vector<Matrix> SpecRageModel::view_forward(const std::vector<Matrix>& batch) const {
  check_batch(batch);
  std::vector<Matrix> out;
  out.reserve(batch.size());
  for (Index v = 0; v < num_views(); ++v) out.push_back(view_nets_[v].forward(batch[v]));
  return out;
}

FusionWeights SpecRageModel::fusion_weights(const std::vector<Matrix>& batch) const {
  check_batch(batch);
  const Index m = batch.front().rows();
  switch (config_.fusion_mode) {
    case FusionMode::simple_average:
      return {Matrix::Constant(m, num_views(), 1.0 / static_cast<double>(num_views()))};
    case FusionMode::weighting: {
      const Matrix logits = fusion_net_.forward(concat_columns(batch));
      if (!logits.allFinite()) throw TrainingError("non-finite fusion logits", 0);
      return {softmax_rows(logits, config_.temperature)};
    }
    default:
      throw StateError("fusion weights are only defined for weighting and simple_average fusion");
  }
}

std::optional<Matrix> SpecRageModel::affinity_weights(const std::vector<Matrix>& batch) const {
  if (config_.fusion_mode == FusionMode::weighting || config_.fusion_mode == FusionMode::simple_average)
    return fusion_weights(batch).alpha;
  return std::nullopt;
}

Matrix SpecRageModel::fused_output(const std::vector<Matrix>& batch) const {
  const auto y = view_forward(batch);
  switch (config_.fusion_mode) {
    case FusionMode::weighting:
    case FusionMode::simple_average: return fuse(y, fusion_weights(batch).alpha);
    case FusionMode::concat: return concat_columns(y);
    case FusionMode::linear: return linear_map_.forward(concat_columns(y));
  }
  return {};
}

void SpecRageModel::ortho_step(const std::vector<Matrix>& batch) {
  if (frozen_) throw StateError("model is frozen");
  ortho_weights_ = orthogonalization_weights(fused_output(batch));
}

Matrix SpecRageModel::orthogonal_output(const std::vector<Matrix>& batch) const {
  if (!has_ortho_weights()) throw StateError("orthogonalization weights are not set; run ortho_step first");
  return fused_output(batch) * ortho_weights_;
}

Matrix SpecRageModel::embed(const std::vector<Matrix>& batch) const {
  if (!frozen_) throw StateError("embed requires a frozen (trained) model");
  return orthogonal_output(batch);
}

double batch_loss(const SpecRageModel& model, const std::vector<Matrix>& batch, std::span<const Matrix> affinities) {
  const Matrix y = model.orthogonal_output(batch);
  const auto alpha = model.affinity_weights(batch);
  return loss_trace(y, affinities, alpha ? &*alpha : nullptr);
}

double batch_loss_reorthogonalized(const SpecRageModel& model, const std::vector<Matrix>& batch,
                                   std::span<const Matrix> affinities) {
  const Matrix fused = model.fused_output(batch);
  Matrix p;
  try {
    p = orthogonalization_weights(fused);
  } catch (const IllConditionedError&) {
    if (!model.has_ortho_weights()) throw;
    p = model.ortho_weights();
  }
  const auto alpha = model.affinity_weights(batch);
  return loss_trace(fused * p, affinities, alpha ? &*alpha : nullptr);
}

ModelGradients compute_gradients(const SpecRageModel& model, const std::vector<Matrix>& batch,
                                 std::span<const Matrix> affinities, const GradientOptions& options) {
  if (!model.has_ortho_weights()) throw StateError("compute_gradients: run ortho_step first");
  const Index num_views = model.num_views();
  if (static_cast<Index>(affinities.size()) != num_views) throw ParameterError("one affinity matrix per view required");
  const Index m = batch.empty() ? 0 : batch.front().rows();
  for (const auto& w : affinities)
    if (w.rows() != m || w.cols() != m) throw ParameterError("affinity must be m x m");

  const auto& nets = model.view_nets();
  std::vector<ForwardCache> view_caches(static_cast<std::size_t>(num_views));
  std::vector<Matrix> y_views;
  for (Index v = 0; v < num_views; ++v) y_views.push_back(nets[v].forward(batch[v], view_caches[v]));

  const FusionMode mode = model.fusion_mode();
  ForwardCache fusion_cache, linear_cache;
  std::optional<Matrix> alpha;
  Matrix fused;
  Matrix concat;
  switch (mode) {
    case FusionMode::weighting: {
      const Matrix logits = model.fusion_net().forward(concat_columns(batch), fusion_cache);
      if (!logits.allFinite()) throw TrainingError("non-finite fusion logits", 0);
      alpha = softmax_rows(logits, model.temperature());
      fused = fuse(y_views, *alpha);
      break;
    }
    case FusionMode::simple_average:
      alpha = Matrix::Constant(m, num_views, 1.0 / static_cast<double>(num_views));
      fused = fuse(y_views, *alpha);
      break;
    case FusionMode::concat: fused = concat_columns(y_views); break;
    case FusionMode::linear:
      concat = concat_columns(y_views);
      fused = model.linear_map().forward(concat, linear_cache);
      break;
  }

  const Matrix& p = model.ortho_weights();
  const Matrix y = fused * p;
  const double scale = 1.0 / (static_cast<double>(m) * static_cast<double>(m) * static_cast<double>(num_views));

  // Accumulate sum_v Lt_v Y; the loss is 2 scale Tr(Y^T sum_v Lt_v Y).
  Matrix ly = Matrix::Zero(m, y.cols());
  std::vector<Matrix> weighted(static_cast<std::size_t>(num_views));
  for (Index v = 0; v < num_views; ++v) {
    weighted[v] = weighted_affinity(affinities[v], alpha ? &*alpha : nullptr, v);
    const Vector degree = weighted[v].rowwise().sum();
    ly += degree.asDiagonal() * y - weighted[v] * y;
  }
  ModelGradients out;
  out.loss = 2.0 * scale * y.cwiseProduct(ly).sum();
  if (!std::isfinite(out.loss)) throw TrainingError("non-finite loss", 0);

  const Matrix grad_y = 4.0 * scale * ly;
  const Matrix grad_fused = grad_y * p.transpose();

  std::vector<Matrix> grad_views(static_cast<std::size_t>(num_views));
  switch (mode) {
    case FusionMode::weighting:
    case FusionMode::simple_average: {
      Matrix grad_alpha(m, num_views);
      for (Index v = 0; v < num_views; ++v) {
        grad_views[v] = alpha->col(v).asDiagonal() * grad_fused;
        grad_alpha.col(v) = grad_fused.cwiseProduct(y_views[v]).rowwise().sum();
      }
      if (mode == FusionMode::weighting) {
        if (!options.detach_affinity_alpha) {
          const Matrix dist = squared_distances(y);
          for (Index v = 0; v < num_views; ++v)
            grad_alpha.col(v) += 2.0 * scale * (affinities[v].cwiseProduct(dist) * alpha->col(v));
        }
        const Vector inner = alpha->cwiseProduct(grad_alpha).rowwise().sum();
        Matrix grad_logits = alpha->cwiseProduct(grad_alpha.colwise() - inner) / model.temperature();
        out.networks.resize(static_cast<std::size_t>(num_views) + 1);
        out.networks[num_views] = model.fusion_net().backward(fusion_cache, grad_logits);
      } else {
        out.networks.resize(static_cast<std::size_t>(num_views));
      }
      break;
    }
    case FusionMode::concat:
      for (Index v = 0; v < num_views; ++v) grad_views[v] = grad_fused.middleCols(v * model.k(), model.k());
      out.networks.resize(static_cast<std::size_t>(num_views));
      break;
    case FusionMode::linear: {
      out.networks.resize(static_cast<std::size_t>(num_views) + 1);
      out.networks[num_views] = model.linear_map().backward(linear_cache, grad_fused);
      const Matrix& grad_concat = out.networks[num_views].input;
      for (Index v = 0; v < num_views; ++v) grad_views[v] = grad_concat.middleCols(v * model.k(), model.k());
      break;
    }
  }
  for (Index v = 0; v < num_views; ++v) out.networks[v] = nets[v].backward(view_caches[v], grad_views[v]);
  return out;
}

ModelOptimizer::ModelOptimizer(const SpecRageModel& model, double learning_rate, AdamConfig config)
    : lr_(learning_rate) {
  for (const Mlp* net : model.trainable_networks()) states_.emplace_back(*net, learning_rate, config);
}

void ModelOptimizer::set_learning_rate(double lr) {
  lr_ = lr;
  for (auto& s : states_) s.set_learning_rate(lr);
}

void ModelOptimizer::step(SpecRageModel& model, const ModelGradients& grads) {
  auto nets = model.trainable_networks();
  if (nets.size() != states_.size() || grads.networks.size() != states_.size())
    throw ParameterError("optimizer does not match the model's trainable networks");
  for (std::size_t i = 0; i < nets.size(); ++i) states_[i].step(*nets[i], grads.networks[i]);
}

double grad_step(SpecRageModel& model, const std::vector<Matrix>& batch, std::span<const Matrix> affinities,
                 ModelOptimizer& optimizer) {
  if (model.frozen()) throw StateError("model is frozen");
  const auto grads = compute_gradients(model, batch, affinities);
  try {
    optimizer.step(model, grads);
  } catch (const OptimizerError& e) {
    throw TrainingError(e.what(), 0);
  }
  return grads.loss;
}

double grad_step(SpecRageModel& model, const std::vector<Matrix>& batch, const AffinityContext& affinity,
                 ModelOptimizer& optimizer) {
  const auto w = affinity.batch_affinities(batch);
  return grad_step(model, batch, w, optimizer);
}

}  // namespace specrage
