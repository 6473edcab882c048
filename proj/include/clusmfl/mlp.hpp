#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "clusmfl/matrix.hpp"
#include "clusmfl/random.hpp"

namespace clusmfl {

enum class Activation { kRelu, kIdentity };

struct DenseLayer {
  Matrix weight;  // out x in
  std::vector<double> bias;
  Activation activation = Activation::kIdentity;

  std::size_t in_dim() const noexcept { return weight.cols(); }
  std::size_t out_dim() const noexcept { return weight.rows(); }

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

// A stack of dense layers. Gradients use the same type.
struct MlpParams {
  std::vector<DenseLayer> layers;

  std::size_t in_dim() const;
  std::size_t out_dim() const;
  std::size_t parameter_count() const;

  // Throws ShapeError if layer dimensions do not chain or the last layer is
  // not linear.
  void validate() const;

  friend bool operator==(const MlpParams&, const MlpParams&) = default;
};

// Builds dims[0] -> dims[1] -> ... -> dims.back() with ReLU on hidden layers
// and identity output. Weights ~ U(-sqrt(6/(in+out)), +sqrt(6/(in+out))),
// biases zero.
MlpParams make_mlp(std::span<const std::size_t> dims, Rng& rng);

// Same shapes, all values zero (activations copied).
MlpParams zeros_like(const MlpParams& params);

// Flat view helpers, layer order, weight then bias.
std::vector<double> flatten(const MlpParams& params);
void append_flat(const MlpParams& params, std::vector<double>& out);
// Reads parameter_count() values from the front of `values`; returns the rest.
std::span<const double> assign_flat(MlpParams& params, std::span<const double> values);

// dst += scale * src
void add_scaled(MlpParams& dst, double scale, const MlpParams& src);

// Per-layer inputs and outputs recorded by the forward pass.
struct MlpCache {
  std::vector<Matrix> inputs;
  std::vector<Matrix> outputs;
};

struct MlpForward {
  Matrix output;
  MlpCache cache;
};

MlpForward mlp_forward(const MlpParams& params, const Matrix& input);

// Forward pass without keeping the cache.
Matrix mlp_apply(const MlpParams& params, const Matrix& input);

struct MlpBackward {
  MlpParams param_grads;
  Matrix input_grad;
};

MlpBackward mlp_backward(const MlpParams& params, const MlpCache& cache,
                         const Matrix& upstream_grad);

}  // namespace clusmfl
