#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace dff {

enum class Activation { kNone, kRelu, kSigmoid };

struct DenseLayer {
  std::size_t weight_offset = 0;  // out x in, column-major
  std::size_t bias_offset = 0;
  int in = 0;
  int out = 0;
  Activation activation = Activation::kNone;
};

// A stack of dense layers laid out inside a flat parameter vector. When
// `skip_at` > 0 the input of that layer is [previous output; block input].
struct MlpLayout {
  int input_dim = 0;
  int skip_at = -1;
  std::vector<DenseLayer> layers;

  int output_dim() const { return layers.empty() ? input_dim : layers.back().out; }

  // Appends layers with the given widths starting at `offset`; returns the
  // offset one past the last parameter. `widths` excludes the input.
  static MlpLayout build(int input_dim, std::span<const int> widths, int skip_at,
                         Activation hidden, Activation last, std::size_t& offset);
};

template <typename T>
using MatrixX = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;

// Per-batch intermediates for one block. Columns are samples.
template <typename T>
struct MlpCache {
  std::vector<MatrixX<T>> inputs;   // input of each layer (after skip concat)
  std::vector<MatrixX<T>> outputs;  // post-activation output of each layer
};

template <typename T>
class Mlp {
 public:
  Mlp() = default;
  explicit Mlp(MlpLayout layout) : layout_(std::move(layout)) {}

  const MlpLayout& layout() const { return layout_; }

  // Returns the block output (output_dim x N). Fills `cache` when non-null.
  MatrixX<T> forward(std::span<const T> params, const MatrixX<T>& input, MlpCache<T>* cache) const;

  // `grad_output` is dL/d(output), overwritten as scratch. Accumulates into
  // `grads` and returns dL/d(input), or an empty matrix when `input_grad` is
  // false.
  MatrixX<T> backward(std::span<const T> params, std::span<T> grads, const MlpCache<T>& cache,
                      MatrixX<T> grad_output, bool input_grad = true) const;

  void initialize(std::span<T> params, std::uint64_t seed) const;

 private:
  MlpLayout layout_;
};

extern template class Mlp<float>;
extern template class Mlp<double>;

}  // namespace dff
