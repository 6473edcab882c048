#include "clusmfl/mlp.hpp"

#include <cmath>

#include "clusmfl/kernels.hpp"

namespace clusmfl {

std::size_t MlpParams::in_dim() const {
  if (layers.empty()) throw ShapeError("MlpParams: no layers");
  return layers.front().in_dim();
}

std::size_t MlpParams::out_dim() const {
  if (layers.empty()) throw ShapeError("MlpParams: no layers");
  return layers.back().out_dim();
}

std::size_t MlpParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weight.size() + l.bias.size();
  return n;
}

void MlpParams::validate() const {
  if (layers.empty()) throw ShapeError("MlpParams: no layers");
  for (std::size_t k = 0; k < layers.size(); ++k) {
    const auto& l = layers[k];
    if (l.bias.size() != l.out_dim()) throw ShapeError("MlpParams: bias length mismatch");
    if (k > 0 && layers[k - 1].out_dim() != l.in_dim()) {
      throw ShapeError("MlpParams: layer dimensions do not chain");
    }
  }
  if (layers.back().activation != Activation::kIdentity) {
    throw ShapeError("MlpParams: final layer must be linear");
  }
}

MlpParams make_mlp(std::span<const std::size_t> dims, Rng& rng) {
  if (dims.size() < 2) throw ShapeError("make_mlp: need at least input and output dims");
  MlpParams p;
  for (std::size_t k = 0; k + 1 < dims.size(); ++k) {
    const std::size_t in = dims[k];
    const std::size_t out = dims[k + 1];
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    DenseLayer layer;
    layer.weight = Matrix(out, in);
    for (double& w : layer.weight.values()) w = dist(rng);
    layer.bias.assign(out, 0.0);
    layer.activation = k + 2 == dims.size() ? Activation::kIdentity : Activation::kRelu;
    p.layers.push_back(std::move(layer));
  }
  return p;
}

MlpParams zeros_like(const MlpParams& params) {
  MlpParams z;
  z.layers.reserve(params.layers.size());
  for (const auto& l : params.layers) {
    z.layers.push_back({Matrix(l.out_dim(), l.in_dim()),
                        std::vector<double>(l.bias.size(), 0.0), l.activation});
  }
  return z;
}

void append_flat(const MlpParams& params, std::vector<double>& out) {
  for (const auto& l : params.layers) {
    out.insert(out.end(), l.weight.values().begin(), l.weight.values().end());
    out.insert(out.end(), l.bias.begin(), l.bias.end());
  }
}

std::vector<double> flatten(const MlpParams& params) {
  std::vector<double> out;
  out.reserve(params.parameter_count());
  append_flat(params, out);
  return out;
}

std::span<const double> assign_flat(MlpParams& params, std::span<const double> values) {
  if (values.size() < params.parameter_count()) {
    throw ShapeError("assign_flat: not enough values");
  }
  std::size_t pos = 0;
  for (auto& l : params.layers) {
    for (double& w : l.weight.values()) w = values[pos++];
    for (double& b : l.bias) b = values[pos++];
  }
  return values.subspan(pos);
}

void add_scaled(MlpParams& dst, double scale, const MlpParams& src) {
  if (dst.layers.size() != src.layers.size()) throw ShapeError("add_scaled: layer count");
  for (std::size_t k = 0; k < dst.layers.size(); ++k) {
    auto& d = dst.layers[k];
    const auto& s = src.layers[k];
    if (d.weight.rows() != s.weight.rows() || d.weight.cols() != s.weight.cols() ||
        d.bias.size() != s.bias.size()) {
      throw ShapeError("add_scaled: layer shape mismatch");
    }
    auto dw = d.weight.values();
    auto sw = s.weight.values();
    for (std::size_t i = 0; i < dw.size(); ++i) dw[i] += scale * sw[i];
    for (std::size_t i = 0; i < d.bias.size(); ++i) d.bias[i] += scale * s.bias[i];
  }
}

namespace {

Matrix affine(const DenseLayer& layer, const Matrix& input) {
  Matrix out = kernels::matmul_nt(input, layer.weight);
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) {
      row[c] += layer.bias[c];
      if (layer.activation == Activation::kRelu && row[c] < 0.0) row[c] = 0.0;
    }
  }
  return out;
}

}  // namespace

MlpForward mlp_forward(const MlpParams& params, const Matrix& input) {
  if (input.cols() != params.in_dim()) throw ShapeError("mlp_forward: input width mismatch");
  MlpForward fwd;
  fwd.cache.inputs.reserve(params.layers.size());
  fwd.cache.outputs.reserve(params.layers.size());
  Matrix current = input;
  for (const auto& layer : params.layers) {
    Matrix next = affine(layer, current);
    fwd.cache.inputs.push_back(std::move(current));
    fwd.cache.outputs.push_back(next);
    current = std::move(next);
  }
  fwd.output = std::move(current);
  return fwd;
}

Matrix mlp_apply(const MlpParams& params, const Matrix& input) {
  if (input.cols() != params.in_dim()) throw ShapeError("mlp_apply: input width mismatch");
  Matrix current = input;
  for (const auto& layer : params.layers) current = affine(layer, current);
  return current;
}

MlpBackward mlp_backward(const MlpParams& params, const MlpCache& cache,
                         const Matrix& upstream_grad) {
  const std::size_t n_layers = params.layers.size();
  if (cache.inputs.size() != n_layers || cache.outputs.size() != n_layers) {
    throw ShapeError("mlp_backward: cache does not match parameters");
  }
  const std::size_t batch = cache.inputs.front().rows();
  for (std::size_t k = 0; k < n_layers; ++k) {
    const auto& l = params.layers[k];
    if (cache.inputs[k].cols() != l.in_dim() || cache.outputs[k].cols() != l.out_dim() ||
        cache.inputs[k].rows() != batch || cache.outputs[k].rows() != batch) {
      throw ShapeError("mlp_backward: stale or mismatched cache");
    }
  }
  if (upstream_grad.rows() != batch || upstream_grad.cols() != params.out_dim()) {
    throw ShapeError("mlp_backward: upstream gradient shape mismatch");
  }

  MlpBackward result;
  result.param_grads = zeros_like(params);
  Matrix delta = upstream_grad;
  for (std::size_t k = n_layers; k-- > 0;) {
    const auto& layer = params.layers[k];
    if (layer.activation == Activation::kRelu) {
      auto d = delta.values();
      auto o = cache.outputs[k].values();
      for (std::size_t i = 0; i < d.size(); ++i) {
        if (!(o[i] > 0.0)) d[i] = 0.0;
      }
    }
    auto& grad = result.param_grads.layers[k];
    grad.weight = kernels::matmul_tn(delta, cache.inputs[k]);
    for (std::size_t r = 0; r < delta.rows(); ++r) {
      auto row = delta.row(r);
      for (std::size_t c = 0; c < row.size(); ++c) grad.bias[c] += row[c];
    }
    delta = kernels::matmul_nn(delta, layer.weight);
  }
  result.input_grad = std::move(delta);
  return result;
}

}  // namespace clusmfl
