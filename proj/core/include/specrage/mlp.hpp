#pragma once

#include "specrage/types.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace specrage {

enum class Activation { relu, tanh };

std::string to_string(Activation a);
Activation parse_activation(const std::string& name);

// Affine map x -> x * weight + bias with weight stored as in_dim x out_dim.
struct DenseLayer {
  Matrix weight;
  RowVector bias;
};

// Everything backward() needs from one forward pass.
struct ForwardCache {
  std::vector<Matrix> inputs;           // input to layer l
  std::vector<Matrix> pre_activations;  // x * W + b of layer l
  std::uint64_t generation = 0;
  const void* owner = nullptr;
};

struct MlpGradients {
  std::vector<Matrix> weight;
  std::vector<RowVector> bias;
  Matrix input;

  void set_zero();
  MlpGradients& operator+=(const MlpGradients& other);
};

// Dense feed-forward network: hidden layers use the configured activation,
// the output layer is linear.
class Mlp {
 public:
  Mlp() = default;

  // He-style uniform fan-in initialisation: W ~ U(-sqrt(6/fan_in), sqrt(6/fan_in)),
  // zero biases.
  Mlp(std::vector<Index> dims, Activation activation, std::uint64_t seed);

  static Mlp zeros(std::vector<Index> dims, Activation activation);

  // Single linear layer with W = I (requires in == out) and zero bias.
  static Mlp identity(Index dim);

  const std::vector<Index>& dims() const { return dims_; }
  Index input_dim() const { return dims_.front(); }
  Index output_dim() const { return dims_.back(); }
  Activation activation() const { return activation_; }
  std::size_t num_layers() const { return layers_.size(); }
  std::size_t num_parameters() const;

  const std::vector<DenseLayer>& layers() const { return layers_; }
  // Mutable access invalidates every outstanding ForwardCache.
  std::vector<DenseLayer>& mutable_layers();

  Matrix forward(const Matrix& batch) const;
  Matrix forward(const Matrix& batch, ForwardCache& cache) const;

  // Reverse-mode gradients of sum(output .* output_grad) with respect to
  // every parameter and the input batch.
  MlpGradients backward(const ForwardCache& cache, const Matrix& output_grad) const;

  MlpGradients zero_gradients() const;

  // Parameters flattened layer by layer (row-major weight, then bias).
  Vector flat_parameters() const;
  void set_flat_parameters(const Vector& flat);
  static Vector flatten(const MlpGradients& grads);

  bool all_finite() const;

  // Text persistence; see docs/FORMATS.md.
  void write(std::ostream& out) const;
  static Mlp read(std::istream& in);

  friend bool operator==(const Mlp& a, const Mlp& b);

 private:
  std::vector<Index> dims_;
  Activation activation_ = Activation::relu;
  std::vector<DenseLayer> layers_;
  std::uint64_t generation_ = 0;
};

}  // namespace specrage
