#include "dff/field.hpp"

#include <cmath>
#include <numbers>

namespace dff {

std::string to_string(FeatureMode mode) {
  return mode == FeatureMode::kBranch ? "branch" : "independent";
}

FeatureMode feature_mode_from_string(const std::string& text) {
  if (text == "branch") return FeatureMode::kBranch;
  if (text == "independent") return FeatureMode::kIndependent;
  throw InputError("unknown feature mode '" + text + "' (expected branch or independent)");
}

void FieldConfig::validate() const {
  if (trunk_layers < 1) throw StructuralError("field config: trunk_layers must be >= 1");
  if (trunk_width < 1 || head_width < 1) throw StructuralError("field config: widths must be >= 1");
  if (feature_dim < 1) throw StructuralError("field config: feature_dim must be >= 1");
  if (skip_at >= trunk_layers) throw StructuralError("field config: skip_at must be below trunk_layers");
  if (pe_len_pos < 0 || pe_len_dir < 0 || independent_pe_len < 0)
    throw StructuralError("field config: encoding lengths must be >= 0");
  if (head_layers_color < 1 || head_layers_feature < 1)
    throw StructuralError("field config: head layer counts must be >= 1");
  if (feature_mode == FeatureMode::kIndependent) {
    if (independent_layers < 1 || independent_width < 1)
      throw StructuralError("field config: independent feature MLP needs >= 1 layer");
    if (independent_skip_at >= independent_layers)
      throw StructuralError("field config: independent_skip_at must be below independent_layers");
  }
}

FieldConfig FieldConfig::large_scale(int feature_dim) {
  FieldConfig c;
  c.trunk_layers = 8;
  c.trunk_width = 256;
  c.skip_at = 5;
  c.head_width = 128;
  c.independent_width = 128;
  c.feature_dim = feature_dim;
  return c;
}

FieldConfig FieldConfig::desk_scale(int feature_dim) {
  FieldConfig c;
  c.feature_dim = feature_dim;
  return c;
}

std::vector<double> positional_encoding(std::span<const double> x, int length) {
  if (length < 0) throw InputError("positional_encoding: negative length");
  std::vector<double> out;
  out.reserve(x.size() * (1 + 2 * length));
  out.insert(out.end(), x.begin(), x.end());
  for (int l = 0; l < length; ++l) {
    const double freq = std::ldexp(std::numbers::pi, l);
    for (double v : x) out.push_back(std::sin(freq * v));
    for (double v : x) out.push_back(std::cos(freq * v));
  }
  return out;
}

template <typename T>
MatrixX<T> encode_batch(const Eigen::Matrix3Xd& x, int length) {
  MatrixX<T> out(encoded_dim(3, length), x.cols());
  out.topRows(3) = x.cast<T>();
  for (int l = 0; l < length; ++l) {
    const double freq = std::ldexp(std::numbers::pi, l);
    const Eigen::Array3Xd scaled = freq * x.array();
    out.middleRows(3 + 6 * l, 3) = scaled.sin().matrix().cast<T>();
    out.middleRows(6 + 6 * l, 3) = scaled.cos().matrix().cast<T>();
  }
  return out;
}

template MatrixX<float> encode_batch<float>(const Eigen::Matrix3Xd&, int);
template MatrixX<double> encode_batch<double>(const Eigen::Matrix3Xd&, int);

FieldOutput eval_point(const RadianceField& field, const Vec3& x, const Vec3& d) {
  SampleInputs in;
  in.resize(1);
  in.positions.col(0) = x;
  in.directions.col(0) = d;
  FieldBatch batch;
  field.evaluate(in, {}, batch);
  FieldOutput out;
  out.sigma = batch.sigma(0);
  out.sigma_raw = batch.sigma_raw.size() ? batch.sigma_raw(0) : batch.sigma(0);
  out.color = batch.color.col(0);
  out.feature = batch.feature.col(0);
  return out;
}

template <typename T>
NeuralField<T>::NeuralField(FieldConfig config, std::uint64_t init_seed) : config_(config) {
  config_.validate();
  const auto& c = config_;
  std::size_t offset = 0;

  const int pos_dim = encoded_dim(3, c.pe_len_pos);
  std::vector<int> widths(c.trunk_layers, c.trunk_width);
  trunk_ = Mlp<T>(MlpLayout::build(pos_dim, widths, c.skip_at, Activation::kRelu, Activation::kRelu, offset));

  density_range_.begin = offset;
  const int one[] = {1};
  density_ = Mlp<T>(MlpLayout::build(c.trunk_width, one, -1, Activation::kNone, Activation::kNone, offset));
  density_range_.end = offset;

  widths.assign(c.head_layers_color - 1, c.head_width);
  widths.push_back(3);
  color_ = Mlp<T>(MlpLayout::build(c.trunk_width + encoded_dim(3, c.pe_len_dir), widths, -1,
                                   Activation::kRelu, Activation::kSigmoid, offset));

  feature_offset_ = offset;
  if (c.feature_mode == FeatureMode::kBranch) {
    widths.assign(c.head_layers_feature - 1, c.head_width);
    widths.push_back(c.feature_dim);
    feature_ = Mlp<T>(MlpLayout::build(c.trunk_width, widths, -1, Activation::kRelu, Activation::kNone, offset));
  } else {
    const int in_dim = c.independent_pe ? encoded_dim(3, c.independent_pe_len) : 3;
    widths.assign(c.independent_layers, c.independent_width);
    widths.push_back(c.feature_dim);
    const int skip = c.independent_pe ? c.independent_skip_at : -1;
    feature_ = Mlp<T>(MlpLayout::build(in_dim, widths, skip, Activation::kRelu, Activation::kNone, offset));
  }

  params_.assign(offset, T(0));
  grads_.assign(offset, T(0));
  trunk_.initialize(params_, init_seed);
  density_.initialize(params_, init_seed + 1);
  color_.initialize(params_, init_seed + 2);
  feature_.initialize(params_, init_seed + 3);
}

template <typename T>
void NeuralField<T>::set_parameters(std::span<const T> values) {
  if (values.size() != params_.size()) {
    throw StructuralError("field: parameter count " + std::to_string(values.size()) + " does not match config (" +
                          std::to_string(params_.size()) + ")");
  }
  std::copy(values.begin(), values.end(), params_.begin());
}

template <typename T>
void NeuralField<T>::zero_grad() {
  std::fill(grads_.begin(), grads_.end(), T(0));
}

template <typename T>
void NeuralField<T>::evaluate(const SampleInputs& in, FieldChannels channels, FieldBatch& out) const {
  ForwardOptions options;
  options.channels = channels;
  run(in, options, out, nullptr);
}

template <typename T>
void NeuralField<T>::forward(const SampleInputs& in, const ForwardOptions& options, FieldBatch& out) {
  cache_ = {};
  run(in, options, out, &cache_);
  cache_.valid = true;
  cache_.n = in.size();
  cache_.channels = options.channels;
}

template <typename T>
void NeuralField<T>::run(const SampleInputs& in, const ForwardOptions& options, FieldBatch& out,
                         Cache* cache) const {
  const auto& c = config_;
  const Eigen::Index n = in.size();
  const FieldChannels ch = options.channels;
  const bool branch = c.feature_mode == FeatureMode::kBranch;
  const std::span<const T> params(params_);

  MatrixX<T> trunk_out;
  if (ch.radiance || (ch.feature && branch)) {
    trunk_out = trunk_.forward(params, encode_batch<T>(in.positions, c.pe_len_pos), cache ? &cache->trunk : nullptr);
  }

  if (ch.radiance) {
    const MatrixX<T> raw = density_.forward(params, trunk_out, cache ? &cache->density : nullptr);
    Eigen::Matrix<T, Eigen::Dynamic, 1> noisy = raw.row(0).transpose();
    if (options.density_noise_std > 0.0) {
      if (!options.rng) throw InputError("field: density noise requested without an rng");
      for (Eigen::Index i = 0; i < n; ++i) noisy(i) += static_cast<T>(options.density_noise_std * options.rng->normal());
    }
    out.sigma_raw = raw.row(0).transpose().template cast<double>();
    out.sigma = noisy.cwiseMax(T(0)).template cast<double>();

    MatrixX<T> color_in(trunk_out.rows() + encoded_dim(3, c.pe_len_dir), n);
    color_in.topRows(trunk_out.rows()) = trunk_out;
    color_in.bottomRows(encoded_dim(3, c.pe_len_dir)) = encode_batch<T>(in.directions, c.pe_len_dir);
    out.color = color_.forward(params, color_in, cache ? &cache->color : nullptr).template cast<double>();
    if (cache) cache->noisy_raw = std::move(noisy);
  } else {
    out.sigma.resize(0);
    out.sigma_raw.resize(0);
    out.color.resize(3, 0);
  }

  if (ch.feature) {
    MatrixX<T> feat;
    if (branch) {
      feat = feature_.forward(params, trunk_out, cache ? &cache->feature : nullptr);
    } else {
      const MatrixX<T> input = c.independent_pe ? encode_batch<T>(in.positions, c.independent_pe_len)
                                                : MatrixX<T>(in.positions.cast<T>());
      feat = feature_.forward(params, input, cache ? &cache->feature : nullptr);
    }
    out.feature = feat.template cast<double>();
  } else {
    out.feature.resize(c.feature_dim, 0);
  }
}

template <typename T>
void NeuralField<T>::backward(const FieldBatchGrad& upstream, const BackwardOptions& options) {
  if (!cache_.valid) throw StructuralError("field: backward called without a cached forward pass");
  const Eigen::Index n = cache_.n;
  const auto check = [n](Eigen::Index cols, const char* what) {
    if (cols != 0 && cols != n)
      throw StructuralError(std::string("field: upstream ") + what + " gradient does not match cached batch");
  };
  check(upstream.sigma.size(), "density");
  check(upstream.color.cols(), "color");
  check(upstream.feature.cols(), "feature");

  const std::span<const T> params(params_);
  const std::span<T> grads(grads_);
  const int width = config_.trunk_width;
  MatrixX<T> d_trunk;
  const auto add_trunk = [&](const auto& g) {
    if (d_trunk.size() == 0)
      d_trunk = g;
    else
      d_trunk += g;
  };

  if (cache_.channels.radiance) {
    if (options.density_path && upstream.sigma.size() > 0) {
      MatrixX<T> d_raw(1, n);
      for (Eigen::Index i = 0; i < n; ++i)
        d_raw(0, i) = cache_.noisy_raw(i) > T(0) ? static_cast<T>(upstream.sigma(i)) : T(0);
      add_trunk(density_.backward(params, grads, cache_.density, std::move(d_raw)));
    }
    if (upstream.color.cols() > 0) {
      const MatrixX<T> d_in = color_.backward(params, grads, cache_.color, upstream.color.cast<T>());
      add_trunk(d_in.topRows(width));
    }
  } else if (upstream.sigma.size() > 0 || upstream.color.cols() > 0) {
    throw StructuralError("field: radiance gradients given but radiance was not evaluated");
  }

  if (upstream.feature.cols() > 0) {
    if (!cache_.channels.feature) throw StructuralError("field: feature gradients given but features were not evaluated");
    const bool branch = config_.feature_mode == FeatureMode::kBranch;
    MatrixX<T> d_in = feature_.backward(params, grads, cache_.feature, upstream.feature.cast<T>(), branch);
    if (branch) add_trunk(d_in);
  }

  if (d_trunk.size() > 0) trunk_.backward(params, grads, cache_.trunk, std::move(d_trunk), false);
}

template class NeuralField<float>;
template class NeuralField<double>;

}  // namespace dff
