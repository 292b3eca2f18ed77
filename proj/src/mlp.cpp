#include "dff/mlp.hpp"

#include <cmath>
#include <random>

namespace dff {

MlpLayout MlpLayout::build(int input_dim, std::span<const int> widths, int skip_at, Activation hidden,
                           Activation last, std::size_t& offset) {
  MlpLayout layout;
  layout.input_dim = input_dim;
  layout.skip_at = skip_at > 0 && skip_at < static_cast<int>(widths.size()) ? skip_at : -1;
  int in = input_dim;
  for (std::size_t i = 0; i < widths.size(); ++i) {
    DenseLayer layer;
    layer.in = in + (static_cast<int>(i) == layout.skip_at ? input_dim : 0);
    layer.out = widths[i];
    layer.activation = i + 1 == widths.size() ? last : hidden;
    layer.weight_offset = offset;
    offset += static_cast<std::size_t>(layer.in) * layer.out;
    layer.bias_offset = offset;
    offset += layer.out;
    layout.layers.push_back(layer);
    in = layer.out;
  }
  return layout;
}

namespace {

template <typename T>
void activate(Activation act, MatrixX<T>& z) {
  switch (act) {
    case Activation::kNone:
      break;
    case Activation::kRelu:
      z = z.cwiseMax(T(0));
      break;
    case Activation::kSigmoid:
      z = (T(1) / (T(1) + (-z.array()).exp())).matrix();
      break;
  }
}

// grad *= act'(z), written in terms of the activation output y.
template <typename T>
void activation_backward(Activation act, const MatrixX<T>& y, MatrixX<T>& grad) {
  switch (act) {
    case Activation::kNone:
      break;
    case Activation::kRelu:
      grad = (y.array() > T(0)).select(grad, T(0));
      break;
    case Activation::kSigmoid:
      grad.array() *= y.array() * (T(1) - y.array());
      break;
  }
}

}  // namespace

template <typename T>
MatrixX<T> Mlp<T>::forward(std::span<const T> params, const MatrixX<T>& input, MlpCache<T>* cache) const {
  using ConstMap = Eigen::Map<const MatrixX<T>>;
  using ConstVec = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>;
  if (cache) {
    cache->inputs.resize(layout_.layers.size());
    cache->outputs.resize(layout_.layers.size());
  }
  MatrixX<T> h = input;
  for (std::size_t i = 0; i < layout_.layers.size(); ++i) {
    const auto& layer = layout_.layers[i];
    if (static_cast<int>(i) == layout_.skip_at) {
      MatrixX<T> joined(h.rows() + input.rows(), h.cols());
      joined.topRows(h.rows()) = h;
      joined.bottomRows(input.rows()) = input;
      h.swap(joined);
    }
    ConstMap w(params.data() + layer.weight_offset, layer.out, layer.in);
    ConstVec b(params.data() + layer.bias_offset, layer.out);
    MatrixX<T> z(layer.out, h.cols());
    z.noalias() = w * h;
    z.colwise() += b;
    activate(layer.activation, z);
    if (cache) {
      cache->inputs[i] = std::move(h);
      cache->outputs[i] = z;
      h = std::move(z);
    } else {
      h.swap(z);
    }
  }
  return h;
}

template <typename T>
MatrixX<T> Mlp<T>::backward(std::span<const T> params, std::span<T> grads, const MlpCache<T>& cache,
                            MatrixX<T> grad, bool input_grad) const {
  using ConstMap = Eigen::Map<const MatrixX<T>>;
  using Map = Eigen::Map<MatrixX<T>>;
  using VecMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>;
  MatrixX<T> grad_input_skip;
  const Eigen::Matrix<T, Eigen::Dynamic, 1> ones = Eigen::Matrix<T, Eigen::Dynamic, 1>::Ones(grad.cols());
  for (std::size_t ii = layout_.layers.size(); ii-- > 0;) {
    const auto& layer = layout_.layers[ii];
    activation_backward(layer.activation, cache.outputs[ii], grad);
    Map gw(grads.data() + layer.weight_offset, layer.out, layer.in);
    VecMap gb(grads.data() + layer.bias_offset, layer.out);
    gw.noalias() += grad * cache.inputs[ii].transpose();
    gb.noalias() += grad * ones;
    if (ii == 0 && !input_grad && layout_.skip_at < 0) return {};
    ConstMap w(params.data() + layer.weight_offset, layer.out, layer.in);
    MatrixX<T> grad_in(layer.in, grad.cols());
    grad_in.noalias() = w.transpose() * grad;
    if (static_cast<int>(ii) == layout_.skip_at) {
      const int prev = layer.in - layout_.input_dim;
      grad_input_skip = grad_in.bottomRows(layout_.input_dim);
      grad = grad_in.topRows(prev);
    } else {
      grad.swap(grad_in);
    }
  }
  if (!input_grad) return {};
  if (grad_input_skip.size() > 0) grad += grad_input_skip;
  return grad;
}

template <typename T>
void Mlp<T>::initialize(std::span<T> params, std::uint64_t seed) const {
  std::mt19937_64 engine(seed);
  for (const auto& layer : layout_.layers) {
    const double bound = std::sqrt(6.0 / layer.in);
    std::uniform_real_distribution<double> dist(-bound, bound);
    const std::size_t n = static_cast<std::size_t>(layer.in) * layer.out;
    for (std::size_t j = 0; j < n; ++j) params[layer.weight_offset + j] = static_cast<T>(dist(engine));
    for (int j = 0; j < layer.out; ++j) params[layer.bias_offset + j] = T(0);
  }
}

template class Mlp<float>;
template class Mlp<double>;

}  // namespace dff
