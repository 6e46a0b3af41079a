#include "specrage/affinity.hpp"

#include "specrage/error.hpp"
#include "specrage/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace specrage {

void AffinityConfig::validate() const {
  if (neighbors < 1) throw ParameterError("affinity: neighbour count must be >= 1");
  if (kernel_sigma && !(*kernel_sigma > 0.0)) throw ParameterError("affinity: kernel sigma must be positive");
}

IndexMatrix knn_indices(const Matrix& points, Index l) {
  const Index m = points.rows();
  if (l < 1 || l >= m)
    throw ParameterError("knn_indices: need 1 <= l < m (l = " + std::to_string(l) + ", m = " + std::to_string(m) + ")");
  IndexMatrix out(m, l);
  Vector dist(m);
  std::vector<Index> order(static_cast<std::size_t>(m - 1));
  for (Index i = 0; i < m; ++i) {
    dist = (points.rowwise() - points.row(i)).rowwise().squaredNorm();
    Index pos = 0;
    for (Index j = 0; j < m; ++j)
      if (j != i) order[pos++] = j;
    std::partial_sort(order.begin(), order.begin() + l, order.end(), [&](Index a, Index b) {
      return dist(a) < dist(b) || (dist(a) == dist(b) && a < b);
    });
    for (Index c = 0; c < l; ++c) out(i, c) = order[c];
  }
  return out;
}

std::vector<SiamesePair> make_siamese_pairs(const Matrix& view, Index l, Index negatives_per_anchor,
                                            std::uint64_t seed) {
  const Index n = view.rows();
  if (negatives_per_anchor < 0) throw ParameterError("make_siamese_pairs: negative count must be >= 0");
  const IndexMatrix knn = knn_indices(view, l);
  const Index available = n - 1 - l;
  if (negatives_per_anchor > 0 && available < 1)
    throw ParameterError("make_siamese_pairs: no candidates left for negative pairs");

  Rng rng(seed);
  std::uniform_int_distribution<Index> pick(0, n - 1);
  std::vector<SiamesePair> pairs;
  pairs.reserve(static_cast<std::size_t>(n * (l + negatives_per_anchor)));
  for (Index i = 0; i < n; ++i) {
    for (Index c = 0; c < l; ++c) pairs.push_back({i, knn(i, c), true});
    auto excluded = [&](Index j) {
      if (j == i) return true;
      for (Index c = 0; c < l; ++c)
        if (knn(i, c) == j) return true;
      return false;
    };
    for (Index s = 0; s < negatives_per_anchor; ++s) {
      Index j = pick(rng);
      while (excluded(j)) j = pick(rng);
      pairs.push_back({i, j, false});
    }
  }
  return pairs;
}

SiameseContext SiameseContext::untrained(Index input_dim, const SiameseConfig& config, std::uint64_t seed) {
  std::vector<Index> dims{input_dim};
  dims.insert(dims.end(), config.hidden.begin(), config.hidden.end());
  dims.push_back(config.output_dim);
  SiameseContext ctx;
  ctx.net_ = Mlp(dims, config.activation, seed);
  return ctx;
}

SiameseContext SiameseContext::from_parts(std::optional<Mlp> net, double scale, bool trained) {
  SiameseContext ctx;
  ctx.net_ = std::move(net);
  ctx.scale_ = scale;
  ctx.trained_ = trained;
  return ctx;
}

const Mlp& SiameseContext::network() const {
  if (!net_) throw StateError("siamese context has no network (identity embedder)");
  return *net_;
}

Mlp& SiameseContext::mutable_network() {
  if (!net_) throw StateError("siamese context has no network (identity embedder)");
  return *net_;
}

void SiameseContext::set_scale(double sigma) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ParameterError("siamese scale must be finite and positive");
  scale_ = sigma;
}

namespace {

constexpr double kNormFloor = 1e-12;

Matrix normalize_rows(const Matrix& u, Vector* norms = nullptr) {
  Vector n = u.rowwise().norm().cwiseMax(kNormFloor);
  if (norms) *norms = n;
  return n.cwiseInverse().asDiagonal() * u;
}

// Gradient of the loss w.r.t. the raw network output u, given the gradient
// w.r.t. z = u / |u|.
Matrix normalize_backward(const Matrix& z, const Vector& norms, const Matrix& grad_z) {
  const Vector proj = (z.cwiseProduct(grad_z)).rowwise().sum();
  Matrix g = grad_z - proj.asDiagonal() * z;
  return norms.cwiseInverse().asDiagonal() * g;
}

}  // namespace

Matrix SiameseContext::embed(const Matrix& x) const {
  if (!net_) return x;
  return normalize_rows(net_->forward(x));
}

double contrastive_loss(const Matrix& z_anchor, const Matrix& z_other, const std::vector<bool>& positive,
                        double margin) {
  const Index b = z_anchor.rows();
  double total = 0.0;
  for (Index r = 0; r < b; ++r) {
    const double d = (z_anchor.row(r) - z_other.row(r)).norm();
    total += positive[static_cast<std::size_t>(r)] ? d * d : std::pow(std::max(0.0, margin - d), 2);
  }
  return b > 0 ? total / static_cast<double>(b) : 0.0;
}

double contrastive_loss_and_gradients(const Mlp& net, const Matrix& x_anchor, const Matrix& x_other,
                                      const std::vector<bool>& positive, double margin, MlpGradients* grads) {
  const Index b = x_anchor.rows();
  if (x_other.rows() != b || static_cast<Index>(positive.size()) != b || b < 1)
    throw ParameterError("contrastive_loss: pair batch shapes disagree");
  ForwardCache ca, cb;
  Vector na, nb;
  const Matrix za = normalize_rows(net.forward(x_anchor, ca), &na);
  const Matrix zb = normalize_rows(net.forward(x_other, cb), &nb);

  Matrix ga = Matrix::Zero(b, za.cols());
  double loss = 0.0;
  for (Index r = 0; r < b; ++r) {
    const RowVector diff = za.row(r) - zb.row(r);
    const double dist = diff.norm();
    if (positive[static_cast<std::size_t>(r)]) {
      loss += dist * dist;
      ga.row(r) = 2.0 * diff;
    } else if (dist < margin) {
      loss += (margin - dist) * (margin - dist);
      if (dist > 0.0) ga.row(r) = -2.0 * (margin - dist) / dist * diff;
    }
  }
  loss /= static_cast<double>(b);
  ga /= static_cast<double>(b);
  if (grads) {
    *grads = net.backward(ca, normalize_backward(za, na, ga));
    *grads += net.backward(cb, normalize_backward(zb, nb, -ga));
  }
  return loss;
}

SiameseTrainReport train_siamese(SiameseContext& ctx, const Matrix& view, Index l, const SiameseConfig& config,
                                 std::uint64_t seed) {
  SiameseTrainReport report;
  if (!ctx.has_network()) {
    ctx.mark_trained();
    return report;
  }
  if (config.batch_pairs < 1) throw ParameterError("siamese batch_pairs must be >= 1");
  const Index negatives = config.negatives_per_anchor > 0 ? config.negatives_per_anchor : l;
  auto pairs = make_siamese_pairs(view, l, negatives, seed);
  Mlp& net = ctx.mutable_network();
  AdamState adam(net, config.learning_rate);
  Rng rng(seed ^ 0x5eed5eedULL);

  const Index d = view.cols();
  const auto total = static_cast<Index>(pairs.size());
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(pairs.begin(), pairs.end(), rng);
    double epoch_loss = 0.0;
    for (Index start = 0; start < total; start += config.batch_pairs) {
      const Index b = std::min(config.batch_pairs, total - start);
      Matrix xa(b, d), xb(b, d);
      std::vector<bool> positive(static_cast<std::size_t>(b));
      for (Index r = 0; r < b; ++r) {
        const auto& p = pairs[static_cast<std::size_t>(start + r)];
        xa.row(r) = view.row(p.anchor);
        xb.row(r) = view.row(p.other);
        positive[static_cast<std::size_t>(r)] = p.positive;
      }
      MlpGradients grads;
      const double loss = contrastive_loss_and_gradients(net, xa, xb, positive, config.margin, &grads);
      if (!std::isfinite(loss)) throw TrainingError("siamese loss diverged", epoch);
      try {
        adam.step(net, grads);
      } catch (const OptimizerError& e) {
        throw TrainingError(std::string("siamese: ") + e.what(), epoch);
      }
      epoch_loss += loss * static_cast<double>(b);
    }
    report.epoch_losses.push_back(total > 0 ? epoch_loss / static_cast<double>(total) : 0.0);
  }
  ctx.mark_trained();
  return report;
}

double calibrate_scale(const SiameseContext& ctx, const Matrix& view, Index l) {
  const Matrix z = ctx.embed(view);
  const IndexMatrix knn = knn_indices(z, l);
  std::vector<double> dists;
  dists.reserve(static_cast<std::size_t>(knn.size()));
  for (Index i = 0; i < knn.rows(); ++i)
    for (Index c = 0; c < l; ++c) dists.push_back((z.row(i) - z.row(knn(i, c))).norm());
  const std::size_t mid = dists.size() / 2;
  std::nth_element(dists.begin(), dists.begin() + static_cast<std::ptrdiff_t>(mid), dists.end());
  double median = dists[mid];
  if (dists.size() % 2 == 0) {
    const double lower = *std::max_element(dists.begin(), dists.begin() + static_cast<std::ptrdiff_t>(mid));
    median = 0.5 * (median + lower);
  }
  if (!(median > 0.0)) {
    // Fall back to the largest distance before giving up; a median of zero
    // happens with many exact duplicates.
    const double largest = *std::max_element(dists.begin(), dists.end());
    if (!(largest > 0.0)) throw DegenerateDataError("calibrate_scale: all neighbour distances are zero");
    median = largest;
  }
  return median;
}

Matrix gaussian_knn_affinity_directed(const Matrix& embedded, Index l, double sigma) {
  if (!(sigma > 0.0)) throw ParameterError("gaussian_knn_affinity: sigma must be positive");
  const Index m = embedded.rows();
  const IndexMatrix knn = knn_indices(embedded, l);
  const double denom = 2.0 * sigma * sigma;
  Matrix w = Matrix::Zero(m, m);
  for (Index i = 0; i < m; ++i)
    for (Index c = 0; c < l; ++c) {
      const Index j = knn(i, c);
      w(i, j) = std::exp(-(embedded.row(i) - embedded.row(j)).squaredNorm() / denom);
    }
  return w;
}

Matrix gaussian_knn_affinity(const Matrix& embedded, Index l, double sigma) {
  const Matrix w = gaussian_knn_affinity_directed(embedded, l, sigma);
  Matrix sym = 0.5 * (w + w.transpose());
  sym.diagonal().setZero();
  return sym;
}

Matrix batch_affinity(const SiameseContext& ctx, const Matrix& batch, const AffinityConfig& config) {
  config.validate();
  if (batch.rows() <= config.neighbors)
    throw ParameterError("batch_affinity: batch size must exceed the neighbour count");
  const double sigma = config.kernel_sigma ? *config.kernel_sigma : ctx.scale();
  if (!(sigma > 0.0)) throw StateError("batch_affinity: scale not calibrated");
  return gaussian_knn_affinity(ctx.embed(batch), config.neighbors, sigma);
}

double AffinityContext::sigma(Index v) const {
  if (config.kernel_sigma) return *config.kernel_sigma;
  return views.at(static_cast<std::size_t>(v)).scale();
}

std::vector<Matrix> AffinityContext::embed(const std::vector<Matrix>& batch_views) const {
  if (batch_views.size() != views.size()) throw ParameterError("affinity: view count mismatch");
  std::vector<Matrix> out;
  out.reserve(views.size());
  for (std::size_t v = 0; v < views.size(); ++v) out.push_back(views[v].embed(batch_views[v]));
  return out;
}

std::vector<Matrix> AffinityContext::affinities_from_embedded(const std::vector<Matrix>& embedded) const {
  if (embedded.size() != views.size()) throw ParameterError("affinity: view count mismatch");
  std::vector<Matrix> out;
  out.reserve(views.size());
  for (std::size_t v = 0; v < views.size(); ++v) {
    if (embedded[v].rows() <= config.neighbors)
      throw ParameterError("batch_affinity: batch size must exceed the neighbour count");
    const double s = sigma(static_cast<Index>(v));
    if (!(s > 0.0)) throw StateError("batch_affinity: scale not calibrated for view " + std::to_string(v));
    out.push_back(gaussian_knn_affinity(embedded[v], config.neighbors, s));
  }
  return out;
}

std::vector<Matrix> AffinityContext::batch_affinities(const std::vector<Matrix>& batch_views) const {
  return affinities_from_embedded(embed(batch_views));
}

AffinityContext prepare_affinity(const std::vector<Matrix>& train_views, const AffinityConfig& config,
                                 const SiameseConfig& siamese, std::uint64_t seed,
                                 std::vector<SiameseTrainReport>* reports) {
  config.validate();
  AffinityContext ctx;
  ctx.config = config;
  for (std::size_t v = 0; v < train_views.size(); ++v) {
    const std::uint64_t view_seed = seed + 7919ULL * (v + 1);
    SiameseContext sc = siamese.enabled ? SiameseContext::untrained(train_views[v].cols(), siamese, view_seed)
                                        : SiameseContext::identity();
    auto report = train_siamese(sc, train_views[v], config.neighbors, siamese, view_seed);
    if (reports) reports->push_back(std::move(report));
    sc.set_scale(calibrate_scale(sc, train_views[v], config.neighbors));
    ctx.views.push_back(std::move(sc));
  }
  return ctx;
}

}  // namespace specrage
