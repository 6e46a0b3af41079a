#include "specrage/trainer.hpp"

#include "specrage/error.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <optional>
#include <numeric>
#include <span>

namespace specrage {

namespace {

std::vector<Matrix> gather(const std::vector<Matrix>& views, std::span<const Index> rows) {
  const std::vector<Index> idx(rows.begin(), rows.end());
  std::vector<Matrix> out;
  out.reserve(views.size());
  for (const auto& v : views) out.push_back(v(idx, Eigen::all));
  return out;
}

std::vector<Index> shuffled(Index n, Rng& rng) {
  std::vector<Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Index{0});
  std::shuffle(idx.begin(), idx.end(), rng);
  return idx;
}

}  // namespace

void TrainConfig::validate(const SpecRageModel& model, const AffinityConfig& affinity) const {
  if (epochs < 0) throw ParameterError("train: epochs must be >= 0");
  if (batch_size <= affinity.neighbors) throw ParameterError("train: batch size m must exceed the neighbour count l");
  if (model.output_dim() > batch_size) throw ParameterError("train: output dimension must not exceed m");
  if (max_resamples < 0) throw ParameterError("train: max_resamples must be >= 0");
  lr.validate();
}

double validation_loss(const SpecRageModel& model, const std::vector<Matrix>& val_views,
                       const std::vector<Matrix>& val_embedded, const AffinityContext& affinity, Index batch_size) {
  const Index n = val_views.front().rows();
  const Index chunks = std::max<Index>(1, n / batch_size);
  double total = 0.0;
  Index start = 0;
  for (Index c = 0; c < chunks; ++c) {
    const Index size = n / chunks + (c < n % chunks ? 1 : 0);
    std::vector<Index> rows(static_cast<std::size_t>(size));
    std::iota(rows.begin(), rows.end(), start);
    start += size;
    const auto w = affinity.affinities_from_embedded(gather(val_embedded, rows));
    total += batch_loss_reorthogonalized(model, gather(val_views, rows), w);
  }
  return total / static_cast<double>(chunks);
}

TrainHistory train(SpecRageModel& model, const MultiViewDataset& train_set, const MultiViewDataset& val_set,
                   const AffinityContext& affinity, const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate(model, affinity.config);
  train_set.validate();
  val_set.validate();
  if (train_set.num_views() != model.num_views() || val_set.num_views() != model.num_views())
    throw ParameterError("train: dataset view count does not match the model");
  if (static_cast<Index>(affinity.views.size()) != model.num_views())
    throw ParameterError("train: affinity context view count does not match the model");
  TrainHistory history;
  if (config.epochs == 0) return history;

  const Index m = config.batch_size;
  const Index n = train_set.size();
  const Index batches = n / m;
  if (batches < 2)
    throw ParameterError("train: the training split needs at least 2m rows (n=" + std::to_string(n) +
                         ", m=" + std::to_string(m) + ")");
  if (val_set.size() <= affinity.config.neighbors)
    throw ParameterError("train: the validation split must have more rows than the neighbour count");

  // Siamese embeddings are fixed during training, so compute them once.
  const auto train_embedded = affinity.embed(train_set.views);
  const auto val_embedded = affinity.embed(val_set.views);

  Rng rng(config.seed);
  ModelOptimizer optimizer(model, config.lr.initial_lr, config.adam);
  LrSchedule schedule = LrSchedule::start(config.lr);
  std::vector<double> val_history;
  int consecutive_bad = 0;
  std::optional<SpecRageModel> best;
  double best_val = std::numeric_limits<double>::infinity();

  auto try_ortho = [&](std::span<const Index> rows, int epoch) {
    try {
      model.ortho_step(gather(train_set.views, rows));
      consecutive_bad = 0;
      return true;
    } catch (const IllConditionedError& e) {
      ++history.resampled_batches;
      if (++consecutive_bad > config.max_resamples)
        throw TrainingError(std::string("too many ill-conditioned batches: ") + e.what(), epoch);
      return false;
    }
  };

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto order = shuffled(n, rng);
    bool need_ortho = true;
    double loss_sum = 0.0;
    int grad_steps = 0;
    for (Index b = 0; b < batches; ++b) {
      const std::span<const Index> rows(order.data() + b * m, static_cast<std::size_t>(m));
      if (need_ortho) {
        need_ortho = !try_ortho(rows, epoch);
        continue;
      }
      const auto w = affinity.affinities_from_embedded(gather(train_embedded, rows));
      try {
        loss_sum += grad_step(model, gather(train_set.views, rows), w, optimizer);
      } catch (const TrainingError& e) {
        throw TrainingError(e.what(), epoch);
      }
      ++grad_steps;
      need_ortho = true;
    }
    if (!model.has_ortho_weights()) throw TrainingError("no well-conditioned batch in this epoch", epoch);

    EpochRecord record;
    record.epoch = epoch;
    record.train_loss = grad_steps > 0 ? loss_sum / grad_steps : 0.0;
    record.val_loss = validation_loss(model, val_set.views, val_embedded, affinity, m);
    record.learning_rate = optimizer.learning_rate();
    record.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!std::isfinite(record.val_loss)) throw TrainingError("non-finite validation loss", epoch);
    if (on_epoch) on_epoch(model, record);
    history.epochs.push_back(record);
    if (record.val_loss < best_val) {
      best_val = record.val_loss;
      history.best_epoch = epoch;
      if (config.restore_best) best = model;
    }

    val_history.push_back(record.val_loss);
    const auto decision = lr_epoch_update(config.lr, schedule, val_history);
    optimizer.set_learning_rate(schedule.lr);
    if (decision == LrDecision::stop) {
      history.stopped_by_lr_floor = true;
      break;
    }
  }

  if (!config.restore_best) history.best_epoch = static_cast<int>(history.epochs.size());
  if (best) model = std::move(*best);

  // The networks moved after the kept R^{-1} was computed, so refresh it on a
  // fresh batch before freezing.
  const auto order = shuffled(n, rng);
  bool done = false;
  for (Index b = 0; b < batches && !done; ++b)
    done = try_ortho(std::span<const Index>(order.data() + b * m, static_cast<std::size_t>(m)),
                     static_cast<int>(history.epochs.size()));
  if (!done) throw TrainingError("final orthogonalization failed", static_cast<int>(history.epochs.size()));
  model.freeze();
  return history;
}

}  // namespace specrage
