#pragma once

#include "specrage/mlp.hpp"

#include <limits>
#include <span>

namespace specrage {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Bias-corrected Adam moments for one Mlp.
class AdamState {
 public:
  AdamState() = default;
  AdamState(const Mlp& net, double learning_rate, AdamConfig config = {});

  double learning_rate() const { return lr_; }
  void set_learning_rate(double lr);
  long step_count() const { return steps_; }
  const AdamConfig& config() const { return config_; }

  // Applies one update to `net`. Throws OptimizerError on non-finite gradients.
  void step(Mlp& net, const MlpGradients& grads);

 private:
  AdamConfig config_;
  double lr_ = 1e-3;
  long steps_ = 0;
  std::vector<Matrix> m_weight_, v_weight_;
  std::vector<RowVector> m_bias_, v_bias_;
};

inline void adam_step(AdamState& state, Mlp& params, const MlpGradients& grads) { state.step(params, grads); }

// Reduce-on-plateau schedule: when the validation loss has not improved for
// `patience_epochs` consecutive epochs the rate is multiplied by
// `decay_factor`; once it drops below `floor_lr` training stops.
struct LrPolicy {
  double initial_lr = 1e-3;
  double decay_factor = 0.1;
  int patience_epochs = 10;
  double floor_lr = 1e-8;

  void validate() const;
};

struct LrSchedule {
  double lr = 1e-3;
  double best = std::numeric_limits<double>::infinity();
  int epochs_without_improvement = 0;
  int decays = 0;

  static LrSchedule start(const LrPolicy& policy) { return LrSchedule{policy.initial_lr}; }
};

enum class LrDecision { proceed, stop };

// Consumes the newest entry of `val_loss_history`.
LrDecision lr_epoch_update(const LrPolicy& policy, LrSchedule& schedule, std::span<const double> val_loss_history);

}  // namespace specrage
