#pragma once

#include "specrage/affinity.hpp"
#include "specrage/model.hpp"
#include "specrage/mvdata.hpp"
#include "specrage/optim.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

namespace specrage {

struct TrainConfig {
  Index batch_size = 256;  // m
  int epochs = 100;        // T
  LrPolicy lr;
  AdamConfig adam;
  std::uint64_t seed = 0;
  // Consecutive ill-conditioned batches tolerated before giving up.
  int max_resamples = 20;
  // Return the parameters of the epoch with the lowest validation loss
  // instead of the last ones.
  bool restore_best = true;

  void validate(const SpecRageModel& model, const AffinityConfig& affinity) const;
};

struct EpochRecord {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double learning_rate = 0.0;
  double seconds = 0.0;  // wall time of the epoch's steps and validation
  std::optional<double> grassmann_dist_sq;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  bool stopped_by_lr_floor = false;
  int resampled_batches = 0;
  int best_epoch = 0;  // epoch whose parameters were kept; 0 when none ran
};

// Called after every epoch; may fill the record's optional diagnostics.
using EpochCallback = std::function<void(const SpecRageModel&, EpochRecord&)>;

// Mean loss over the validation rows, each chunk orthogonalised on its own
// fused output. Rows are cut into max(1, n / m) near-equal chunks.
double validation_loss(const SpecRageModel& model, const std::vector<Matrix>& val_views,
                       const std::vector<Matrix>& val_embedded, const AffinityContext& affinity, Index batch_size);

// Alternates ortho and gradient steps over disjoint shuffled mini-batches,
// tracks validation loss, applies the learning-rate policy, optionally rolls
// back to the best validation epoch, then runs a final ortho step and freezes
// the model. With epochs == 0 nothing happens.
TrainHistory train(SpecRageModel& model, const MultiViewDataset& train_set, const MultiViewDataset& val_set,
                   const AffinityContext& affinity, const TrainConfig& config, const EpochCallback& on_epoch = {});

}  // namespace specrage
