#include "specrage/optim.hpp"

#include "specrage/error.hpp"

#include <cmath>

namespace specrage {

AdamState::AdamState(const Mlp& net, double learning_rate, AdamConfig config) : config_(config) {
  set_learning_rate(learning_rate);
  for (const auto& layer : net.layers()) {
    m_weight_.push_back(Matrix::Zero(layer.weight.rows(), layer.weight.cols()));
    v_weight_.push_back(Matrix::Zero(layer.weight.rows(), layer.weight.cols()));
    m_bias_.push_back(RowVector::Zero(layer.bias.size()));
    v_bias_.push_back(RowVector::Zero(layer.bias.size()));
  }
}

void AdamState::set_learning_rate(double lr) {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ParameterError("learning rate must be finite and >= 0");
  lr_ = lr;
}

void AdamState::step(Mlp& net, const MlpGradients& grads) {
  if (grads.weight.size() != m_weight_.size() || net.num_layers() != m_weight_.size())
    throw ParameterError("AdamState::step: layer count mismatch");
  for (std::size_t l = 0; l < grads.weight.size(); ++l) {
    if (grads.weight[l].rows() != m_weight_[l].rows() || grads.weight[l].cols() != m_weight_[l].cols() ||
        grads.bias[l].size() != m_bias_[l].size())
      throw ParameterError("AdamState::step: gradient shape mismatch at layer " + std::to_string(l));
    if (!grads.weight[l].allFinite() || !grads.bias[l].allFinite())
      throw OptimizerError("non-finite gradient at layer " + std::to_string(l));
  }

  ++steps_;
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  const double eps = config_.epsilon;
  const double lr = lr_;

  auto update = [&](auto& param, auto& m, auto& v, const auto& g) {
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g.cwiseProduct(g);
    param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  };

  auto& layers = net.mutable_layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    update(layers[l].weight, m_weight_[l], v_weight_[l], grads.weight[l]);
    update(layers[l].bias, m_bias_[l], v_bias_[l], grads.bias[l]);
  }
}

void LrPolicy::validate() const {
  if (!(initial_lr > 0.0)) throw ParameterError("initial learning rate must be positive");
  if (!(decay_factor > 0.0 && decay_factor < 1.0)) throw ParameterError("lr decay factor must lie in (0, 1)");
  if (patience_epochs < 1) throw ParameterError("lr patience must be >= 1");
  if (!(floor_lr > 0.0 && floor_lr < initial_lr)) throw ParameterError("lr floor must lie in (0, initial lr)");
}

LrDecision lr_epoch_update(const LrPolicy& policy, LrSchedule& schedule, std::span<const double> val_loss_history) {
  if (val_loss_history.empty()) throw ParameterError("lr_epoch_update: empty validation history");
  const double latest = val_loss_history.back();
  if (latest < schedule.best) {
    schedule.best = latest;
    schedule.epochs_without_improvement = 0;
    return LrDecision::proceed;
  }
  if (++schedule.epochs_without_improvement < policy.patience_epochs) return LrDecision::proceed;

  schedule.epochs_without_improvement = 0;
  schedule.lr *= policy.decay_factor;
  ++schedule.decays;
  // Repeated multiplication by 0.1 lands a few ulps off the floor; compare
  // with a relative slack so that 1e-3 * 0.1^5 counts as reaching 1e-8.
  return schedule.lr < policy.floor_lr * (1.0 - 1e-9) ? LrDecision::stop : LrDecision::proceed;
}

}  // namespace specrage
