#include "specrage/mlp.hpp"

#include "specrage/error.hpp"

#include <atomic>
#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

namespace specrage {

namespace {

std::atomic<std::uint64_t> next_generation{1};

std::uint64_t fresh_generation() { return next_generation.fetch_add(1, std::memory_order_relaxed); }

void apply_activation(Activation a, Matrix& z) {
  switch (a) {
    case Activation::relu: z = z.cwiseMax(0.0); break;
    case Activation::tanh: z = z.array().tanh().matrix(); break;
  }
}

// Multiplies grad in place by the activation derivative at pre-activation z.
void apply_derivative(Activation a, const Matrix& z, Matrix& grad) {
  switch (a) {
    case Activation::relu: grad = (z.array() > 0.0).select(grad, 0.0); break;
    case Activation::tanh: grad.array() *= 1.0 - z.array().tanh().square(); break;
  }
}

void check_dims(const std::vector<Index>& dims) {
  if (dims.size() < 2) throw ParameterError("Mlp needs at least input and output dims");
  for (Index d : dims)
    if (d < 1) throw ParameterError("Mlp dims must be positive");
}

}  // namespace

std::string to_string(Activation a) { return a == Activation::relu ? "relu" : "tanh"; }

Activation parse_activation(const std::string& name) {
  if (name == "relu") return Activation::relu;
  if (name == "tanh") return Activation::tanh;
  throw ParameterError("unknown activation '" + name + "'");
}

void MlpGradients::set_zero() {
  for (auto& w : weight) w.setZero();
  for (auto& b : bias) b.setZero();
  input.setZero();
}

MlpGradients& MlpGradients::operator+=(const MlpGradients& other) {
  for (std::size_t l = 0; l < weight.size(); ++l) {
    weight[l] += other.weight[l];
    bias[l] += other.bias[l];
  }
  return *this;
}

Mlp::Mlp(std::vector<Index> dims, Activation activation, std::uint64_t seed)
    : dims_(std::move(dims)), activation_(activation), generation_(fresh_generation()) {
  check_dims(dims_);
  Rng rng(seed);
  for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
    const double bound = std::sqrt(6.0 / static_cast<double>(dims_[l]));
    std::uniform_real_distribution<double> u(-bound, bound);
    DenseLayer layer{Matrix(dims_[l], dims_[l + 1]), RowVector::Zero(dims_[l + 1])};
    for (Index j = 0; j < layer.weight.cols(); ++j)
      for (Index i = 0; i < layer.weight.rows(); ++i) layer.weight(i, j) = u(rng);
    layers_.push_back(std::move(layer));
  }
}

Mlp Mlp::zeros(std::vector<Index> dims, Activation activation) {
  check_dims(dims);
  Mlp net;
  net.dims_ = std::move(dims);
  net.activation_ = activation;
  net.generation_ = fresh_generation();
  for (std::size_t l = 0; l + 1 < net.dims_.size(); ++l)
    net.layers_.push_back({Matrix::Zero(net.dims_[l], net.dims_[l + 1]), RowVector::Zero(net.dims_[l + 1])});
  return net;
}

Mlp Mlp::identity(Index dim) {
  Mlp net = zeros({dim, dim}, Activation::relu);
  net.layers_[0].weight.setIdentity();
  return net;
}

std::size_t Mlp::num_parameters() const {
  std::size_t count = 0;
  for (const auto& layer : layers_) count += static_cast<std::size_t>(layer.weight.size() + layer.bias.size());
  return count;
}

std::vector<DenseLayer>& Mlp::mutable_layers() {
  generation_ = fresh_generation();
  return layers_;
}

Matrix Mlp::forward(const Matrix& batch) const {
  if (batch.cols() != input_dim())
    throw ParameterError("Mlp::forward: batch has " + std::to_string(batch.cols()) + " columns, expected " +
                         std::to_string(input_dim()));
  Matrix x = batch;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Matrix z = x * layers_[l].weight;
    z.rowwise() += layers_[l].bias;
    if (l + 1 < layers_.size()) apply_activation(activation_, z);
    x = std::move(z);
  }
  return x;
}

Matrix Mlp::forward(const Matrix& batch, ForwardCache& cache) const {
  if (batch.cols() != input_dim())
    throw ParameterError("Mlp::forward: batch has " + std::to_string(batch.cols()) + " columns, expected " +
                         std::to_string(input_dim()));
  cache.inputs.resize(layers_.size());
  cache.pre_activations.resize(layers_.size());
  cache.generation = generation_;
  cache.owner = this;
  Matrix x = batch;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Matrix z = x * layers_[l].weight;
    z.rowwise() += layers_[l].bias;
    cache.inputs[l] = std::move(x);
    cache.pre_activations[l] = z;
    if (l + 1 < layers_.size()) apply_activation(activation_, z);
    x = std::move(z);
  }
  return x;
}

MlpGradients Mlp::backward(const ForwardCache& cache, const Matrix& output_grad) const {
  if (cache.owner != this || cache.generation != generation_ || cache.inputs.size() != layers_.size())
    throw StateError("Mlp::backward: stale forward cache");
  const Index m = cache.inputs.front().rows();
  if (output_grad.rows() != m || output_grad.cols() != output_dim())
    throw ParameterError("Mlp::backward: output gradient shape mismatch");

  MlpGradients g;
  g.weight.resize(layers_.size());
  g.bias.resize(layers_.size());
  Matrix delta = output_grad;
  for (std::size_t l = layers_.size(); l-- > 0;) {
    if (l + 1 < layers_.size()) apply_derivative(activation_, cache.pre_activations[l], delta);
    g.weight[l] = cache.inputs[l].transpose() * delta;
    g.bias[l] = delta.colwise().sum();
    delta = delta * layers_[l].weight.transpose();
  }
  g.input = std::move(delta);
  return g;
}

MlpGradients Mlp::zero_gradients() const {
  MlpGradients g;
  for (const auto& layer : layers_) {
    g.weight.push_back(Matrix::Zero(layer.weight.rows(), layer.weight.cols()));
    g.bias.push_back(RowVector::Zero(layer.bias.size()));
  }
  return g;
}

Vector Mlp::flat_parameters() const {
  Vector flat(static_cast<Index>(num_parameters()));
  Index pos = 0;
  for (const auto& layer : layers_) {
    for (Index i = 0; i < layer.weight.rows(); ++i)
      for (Index j = 0; j < layer.weight.cols(); ++j) flat(pos++) = layer.weight(i, j);
    for (Index j = 0; j < layer.bias.size(); ++j) flat(pos++) = layer.bias(j);
  }
  return flat;
}

void Mlp::set_flat_parameters(const Vector& flat) {
  if (flat.size() != static_cast<Index>(num_parameters()))
    throw ParameterError("Mlp::set_flat_parameters: size mismatch");
  Index pos = 0;
  for (auto& layer : mutable_layers()) {
    for (Index i = 0; i < layer.weight.rows(); ++i)
      for (Index j = 0; j < layer.weight.cols(); ++j) layer.weight(i, j) = flat(pos++);
    for (Index j = 0; j < layer.bias.size(); ++j) layer.bias(j) = flat(pos++);
  }
}

Vector Mlp::flatten(const MlpGradients& grads) {
  Index total = 0;
  for (std::size_t l = 0; l < grads.weight.size(); ++l) total += grads.weight[l].size() + grads.bias[l].size();
  Vector flat(total);
  Index pos = 0;
  for (std::size_t l = 0; l < grads.weight.size(); ++l) {
    for (Index i = 0; i < grads.weight[l].rows(); ++i)
      for (Index j = 0; j < grads.weight[l].cols(); ++j) flat(pos++) = grads.weight[l](i, j);
    for (Index j = 0; j < grads.bias[l].size(); ++j) flat(pos++) = grads.bias[l](j);
  }
  return flat;
}

bool Mlp::all_finite() const {
  for (const auto& layer : layers_)
    if (!layer.weight.allFinite() || !layer.bias.allFinite()) return false;
  return true;
}

namespace {

void write_number(std::ostream& out, double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  out.write(buf, ptr - buf);
}

std::string expect_token(std::istream& in, const char* what) {
  std::string token;
  if (!(in >> token)) throw FormatError(std::string("mlp: unexpected end of input reading ") + what);
  return token;
}

double read_number(std::istream& in) {
  const std::string token = expect_token(in, "parameter");
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
  if (ec != std::errc() || ptr != token.data() + token.size())
    throw FormatError("mlp: bad number '" + token + "'");
  return v;
}

Index read_index(std::istream& in, const char* what) {
  const std::string token = expect_token(in, what);
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
  if (ec != std::errc() || ptr != token.data() + token.size() || v < 0)
    throw FormatError(std::string("mlp: bad ") + what + " '" + token + "'");
  return static_cast<Index>(v);
}

void expect_keyword(std::istream& in, const std::string& keyword) {
  const std::string token = expect_token(in, keyword.c_str());
  if (token != keyword) throw FormatError("mlp: expected '" + keyword + "', got '" + token + "'");
}

}  // namespace

void Mlp::write(std::ostream& out) const {
  out << "mlp 1\n";
  out << "activation " << to_string(activation_) << "\n";
  out << "dims " << dims_.size();
  for (Index d : dims_) out << ' ' << d;
  out << "\n";
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& layer = layers_[l];
    out << "weight " << l << ' ' << layer.weight.rows() << ' ' << layer.weight.cols() << "\n";
    for (Index i = 0; i < layer.weight.rows(); ++i) {
      for (Index j = 0; j < layer.weight.cols(); ++j) {
        if (j) out << ' ';
        write_number(out, layer.weight(i, j));
      }
      out << "\n";
    }
    out << "bias " << l << ' ' << layer.bias.size() << "\n";
    for (Index j = 0; j < layer.bias.size(); ++j) {
      if (j) out << ' ';
      write_number(out, layer.bias(j));
    }
    out << "\n";
  }
  out << "end mlp\n";
}

Mlp Mlp::read(std::istream& in) {
  expect_keyword(in, "mlp");
  if (read_index(in, "version") != 1) throw FormatError("mlp: unsupported version");
  expect_keyword(in, "activation");
  const Activation act = parse_activation(expect_token(in, "activation"));
  expect_keyword(in, "dims");
  const Index count = read_index(in, "dim count");
  std::vector<Index> dims;
  for (Index i = 0; i < count; ++i) dims.push_back(read_index(in, "dim"));
  Mlp net = zeros(dims, act);
  for (std::size_t l = 0; l < net.layers_.size(); ++l) {
    auto& layer = net.layers_[l];
    expect_keyword(in, "weight");
    if (read_index(in, "layer") != static_cast<Index>(l) || read_index(in, "rows") != layer.weight.rows() ||
        read_index(in, "cols") != layer.weight.cols())
      throw FormatError("mlp: weight block header does not match dims");
    for (Index i = 0; i < layer.weight.rows(); ++i)
      for (Index j = 0; j < layer.weight.cols(); ++j) layer.weight(i, j) = read_number(in);
    expect_keyword(in, "bias");
    if (read_index(in, "layer") != static_cast<Index>(l) || read_index(in, "size") != layer.bias.size())
      throw FormatError("mlp: bias block header does not match dims");
    for (Index j = 0; j < layer.bias.size(); ++j) layer.bias(j) = read_number(in);
  }
  expect_keyword(in, "end");
  expect_keyword(in, "mlp");
  return net;
}

bool operator==(const Mlp& a, const Mlp& b) {
  if (a.dims_ != b.dims_ || a.activation_ != b.activation_) return false;
  for (std::size_t l = 0; l < a.layers_.size(); ++l)
    if (a.layers_[l].weight != b.layers_[l].weight || a.layers_[l].bias != b.layers_[l].bias) return false;
  return true;
}

}  // namespace specrage
