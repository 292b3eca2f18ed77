#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dff/geometry.hpp"
#include "dff/mlp.hpp"

namespace dff {

enum class FeatureMode { kBranch, kIndependent };

std::string to_string(FeatureMode mode);
FeatureMode feature_mode_from_string(const std::string& text);

struct FieldConfig {
  int trunk_layers = 4;
  int trunk_width = 64;
  int pe_len_pos = 10;
  int pe_len_dir = 4;
  // Trunk layer whose input re-concatenates the encoded position; 0 disables.
  int skip_at = 2;
  int feature_dim = 16;
  // Layer counts include the output layer.
  int head_layers_color = 3;
  int head_layers_feature = 3;
  int head_width = 32;
  FeatureMode feature_mode = FeatureMode::kBranch;
  // Independent feature MLP: hidden ReLU layers, then a linear output.
  bool independent_pe = true;
  int independent_pe_len = 4;
  int independent_layers = 4;
  int independent_width = 64;
  int independent_skip_at = 3;

  void validate() const;

  // 8x256 trunk with the skip at layer 5, three-layer heads.
  static FieldConfig large_scale(int feature_dim);
  static FieldConfig desk_scale(int feature_dim);

  bool operator==(const FieldConfig&) const = default;
};

// [x, sin(2^0 pi x), cos(2^0 pi x), ..., sin(2^{L-1} pi x), cos(2^{L-1} pi x)];
// each sin/cos entry is a block covering every component of x.
std::vector<double> positional_encoding(std::span<const double> x, int length);
inline int encoded_dim(int n, int length) { return n * (1 + 2 * length); }

template <typename T>
MatrixX<T> encode_batch(const Eigen::Matrix3Xd& x, int length);

// Column-per-sample inputs.
struct SampleInputs {
  Eigen::Matrix3Xd positions;
  Eigen::Matrix3Xd directions;

  Eigen::Index size() const { return positions.cols(); }
  void resize(Eigen::Index n) {
    positions.resize(3, n);
    directions.resize(3, n);
  }
};

struct FieldChannels {
  bool radiance = true;
  bool feature = true;
};

struct FieldBatch {
  Eigen::VectorXd sigma;      // >= 0
  Eigen::VectorXd sigma_raw;  // density head output before noise and activation
  Eigen::Matrix3Xd color;     // in [0, 1]
  Eigen::MatrixXd feature;    // feature_dim x N
};

// Upstream gradients; an empty member means zero.
struct FieldBatchGrad {
  Eigen::VectorXd sigma;
  Eigen::Matrix3Xd color;
  Eigen::MatrixXd feature;
};

struct FieldOutput {
  double sigma = 0.0;
  double sigma_raw = 0.0;
  Vec3 color = Vec3::Zero();
  Eigen::VectorXd feature;
};

// Anything the renderer can sample: density and color depend on (x, d),
// features on x only.
class RadianceField {
 public:
  virtual ~RadianceField() = default;
  virtual int feature_dim() const = 0;
  virtual void evaluate(const SampleInputs& in, FieldChannels channels, FieldBatch& out) const = 0;
};

FieldOutput eval_point(const RadianceField& field, const Vec3& x, const Vec3& d);

struct ParamRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - begin; }
};

struct ForwardOptions {
  FieldChannels channels;
  double density_noise_std = 0.0;
  Rng* rng = nullptr;  // required when density_noise_std > 0
};

struct BackwardOptions {
  // When false, upstream density gradients are dropped (stop-gradient).
  bool density_path = true;
};

// Shared trunk with density, color and feature heads (or an independent
// feature MLP). Parameters and gradients live in flat buffers of equal size.
template <typename T>
class NeuralField final : public RadianceField {
 public:
  explicit NeuralField(FieldConfig config, std::uint64_t init_seed = 0);

  const FieldConfig& config() const { return config_; }

  std::span<T> parameters() { return params_; }
  std::span<const T> parameters() const { return params_; }
  std::span<T> gradients() { return grads_; }
  std::span<const T> gradients() const { return grads_; }
  void set_parameters(std::span<const T> values);
  void zero_grad();

  // Trunk, density and color parameters.
  ParamRange radiance_range() const { return {0, feature_offset_}; }
  // Feature head or independent feature MLP.
  ParamRange feature_range() const { return {feature_offset_, params_.size()}; }
  ParamRange density_head_range() const { return density_range_; }

  int feature_dim() const override { return config_.feature_dim; }
  void evaluate(const SampleInputs& in, FieldChannels channels, FieldBatch& out) const override;

  // Training forward; keeps intermediates for backward().
  void forward(const SampleInputs& in, const ForwardOptions& options, FieldBatch& out);
  // grads += d(outputs)/d(params) contracted with `upstream`.
  void backward(const FieldBatchGrad& upstream, const BackwardOptions& options = {});
  bool has_cache() const { return cache_.valid; }
  void clear_cache() { cache_ = {}; }

 private:
  struct Cache {
    bool valid = false;
    Eigen::Index n = 0;
    FieldChannels channels;
    MlpCache<T> trunk, density, color, feature;
    Eigen::Matrix<T, Eigen::Dynamic, 1> noisy_raw;
  };

  void run(const SampleInputs& in, const ForwardOptions& options, FieldBatch& out, Cache* cache) const;

  FieldConfig config_;
  std::vector<T> params_;
  std::vector<T> grads_;
  Mlp<T> trunk_, density_, color_, feature_;
  std::size_t feature_offset_ = 0;
  ParamRange density_range_;
  Cache cache_;
};

extern template class NeuralField<float>;
extern template class NeuralField<double>;

}  // namespace dff
