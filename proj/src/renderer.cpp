#include "dff/renderer.hpp"

#include <cmath>

namespace dff {

std::string to_string(Pass pass) { return pass == Pass::kCoarse ? "coarse" : "fine"; }

Pass pass_from_string(const std::string& text) {
  if (text == "coarse") return Pass::kCoarse;
  if (text == "fine") return Pass::kFine;
  throw InputError("unknown pass '" + text + "' (expected coarse or fine)");
}

CompositeWeights weights_from_alpha(std::span<const double> alpha) {
  const std::size_t n = alpha.size();
  CompositeWeights w;
  w.alpha.assign(alpha.begin(), alpha.end());
  w.weights.resize(n);
  w.transmittance.resize(n + 1);
  double t = 1.0;
  double acc = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    w.transmittance[k] = t;
    w.weights[k] = t * alpha[k];
    acc += w.weights[k];
    t *= 1.0 - alpha[k];
  }
  w.transmittance[n] = t;
  w.opacity = acc;
  return w;
}

CompositeWeights compute_weights(std::span<const double> sigma, std::span<const double> deltas) {
  const std::size_t n = sigma.size();
  if (deltas.size() != n) throw StructuralError("composite: sigma and delta counts differ");
  std::vector<double> alpha(n);
  for (std::size_t k = 0; k < n; ++k) alpha[k] = alpha_from_sigma(sigma[k], deltas[k]);
  return weights_from_alpha(alpha);
}

Vec3 composite_color(const CompositeWeights& w, const ColorBlock& color) {
  Vec3 out = Vec3::Zero();
  for (std::size_t k = 0; k < w.size(); ++k) out += w.weights[k] * color.col(static_cast<Eigen::Index>(k));
  return out;
}

Eigen::VectorXd composite_feature(const CompositeWeights& w, const FeatureBlock& feature) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(feature.rows());
  for (std::size_t k = 0; k < w.size(); ++k) out += w.weights[k] * feature.col(static_cast<Eigen::Index>(k));
  return out;
}

double composite_depth(const CompositeWeights& w, std::span<const double> depths) {
  double out = 0.0;
  for (std::size_t k = 0; k < w.size(); ++k) out += w.weights[k] * depths[k];
  return out;
}

ColorComposite composite_color(const RaySampleBatch& batch) {
  const auto w = compute_weights(batch.sigma, batch.samples.deltas);
  return {composite_color(w, batch.color), w.opacity};
}

Eigen::VectorXd composite_feature(const RaySampleBatch& batch) {
  return composite_feature(compute_weights(batch.sigma, batch.samples.deltas), batch.feature);
}

double composite_depth(const RaySampleBatch& batch) {
  return composite_depth(compute_weights(batch.sigma, batch.samples.deltas), batch.samples.depths);
}

Vec3 over_background(const Vec3& rgb, double opacity, const Vec3& background) {
  return rgb + (1.0 - opacity) * background;
}

// With tau_k = sigma_k delta_k, T_{k+1} = T_k exp(-tau_k):
//   dC/dtau_j = T_{j+1} c_j - sum_{k>j} w_k c_k - T_{K+1} bg
void composite_color_backward(const CompositeWeights& w, const ColorBlock& color, std::span<const double> deltas,
                              const Vec3& background, const Vec3& upstream, Eigen::Ref<Eigen::Matrix3Xd> d_color,
                              std::span<double> d_sigma) {
  const std::size_t n = w.size();
  double tail = w.transmittance[n] * upstream.dot(background);
  for (std::size_t j = n; j-- > 0;) {
    const auto col = static_cast<Eigen::Index>(j);
    const double gc = upstream.dot(color.col(col));
    d_color.col(col) = w.weights[j] * upstream;
    const double d_tau = w.transmittance[j + 1] * gc - tail;
    d_sigma[j] += d_tau * deltas[j];
    tail += w.weights[j] * gc;
  }
}

void composite_feature_backward(const CompositeWeights& w, const Eigen::Ref<const Eigen::VectorXd>& upstream,
                                Eigen::Ref<Eigen::MatrixXd> d_feature) {
  for (std::size_t k = 0; k < w.size(); ++k) d_feature.col(static_cast<Eigen::Index>(k)) = w.weights[k] * upstream;
}

SampleInputs build_inputs(std::span<const Ray> rays, std::span<const DepthSamples> samples) {
  Eigen::Index total = 0;
  for (const auto& s : samples) total += static_cast<Eigen::Index>(s.size());
  SampleInputs in;
  in.resize(total);
  Eigen::Index col = 0;
  for (std::size_t r = 0; r < rays.size(); ++r) {
    for (double t : samples[r].depths) {
      in.positions.col(col) = rays[r].at(t);
      in.directions.col(col) = rays[r].direction;
      ++col;
    }
  }
  return in;
}

namespace {

struct PassResult {
  std::vector<DepthSamples> samples;
  std::vector<CompositeWeights> weights;
  FieldBatch values;
};

PassResult run_pass(const RadianceField& field, std::span<const Ray> rays, std::vector<DepthSamples> samples,
                    FieldChannels channels) {
  PassResult out;
  out.samples = std::move(samples);
  field.evaluate(build_inputs(rays, out.samples), channels, out.values);
  out.weights.resize(rays.size());
  if (channels.radiance) {
    Eigen::Index offset = 0;
    for (std::size_t r = 0; r < rays.size(); ++r) {
      const auto k = static_cast<Eigen::Index>(out.samples[r].size());
      out.weights[r] = compute_weights(std::span<const double>(out.values.sigma.data() + offset, k),
                                       out.samples[r].deltas);
      offset += k;
    }
  }
  return out;
}

}  // namespace

RayResults render_rays(const SceneView& scene, std::span<const Ray> rays, double near, double far,
                       const RenderOptions& options, std::uint64_t first_index) {
  const std::size_t n = rays.size();
  const int dim = scene.coarse->feature_dim();
  RayResults out;
  out.rgb = Eigen::Matrix3Xd::Zero(3, n);
  out.feature = Eigen::MatrixXd::Zero(options.channels.feature ? dim : 0, n);
  out.depth = Eigen::VectorXd::Zero(n);
  out.opacity = Eigen::VectorXd::Zero(n);
  out.feature_opacity = Eigen::VectorXd::Zero(n);
  if (n == 0) return out;

  const Rng base(options.seed);
  std::vector<Rng> streams;
  streams.reserve(n);
  for (std::size_t r = 0; r < n; ++r) streams.push_back(base.split(first_index + r));

  std::vector<DepthSamples> coarse(n);
  ConstantSource midpoint(0.5);
  for (std::size_t r = 0; r < n; ++r) {
    coarse[r] = options.jitter ? stratified_sample(near, far, options.coarse_samples, streams[r])
                               : stratified_sample(near, far, options.coarse_samples, midpoint);
  }

  const bool fine = options.mode == Pass::kFine;
  const Pass feature_pass = fine ? scene.feature_pass : Pass::kCoarse;
  FieldChannels coarse_channels;
  coarse_channels.radiance = true;
  coarse_channels.feature = options.channels.feature && feature_pass == Pass::kCoarse;
  PassResult c = run_pass(*scene.coarse, rays, std::move(coarse), coarse_channels);

  const auto emit = [&](const PassResult& pass, bool radiance, bool features) {
    Eigen::Index offset = 0;
    for (std::size_t r = 0; r < n; ++r) {
      const auto k = static_cast<Eigen::Index>(pass.samples[r].size());
      const auto& w = pass.weights[r];
      const auto col = static_cast<Eigen::Index>(r);
      if (radiance) {
        const Vec3 rgb = composite_color(w, pass.values.color.middleCols(offset, k));
        out.rgb.col(col) = over_background(rgb, w.opacity, scene.background);
        out.depth(col) = composite_depth(w, pass.samples[r].depths);
        out.opacity(col) = w.opacity;
      }
      if (features) {
        out.feature.col(col) = composite_feature(w, pass.values.feature.middleCols(offset, k));
        out.feature_opacity(col) = w.opacity;
      }
      offset += k;
    }
  };

  emit(c, !fine, coarse_channels.feature);
  if (!fine) return out;

  std::vector<DepthSamples> merged(n);
  for (std::size_t r = 0; r < n; ++r) {
    const DepthSamples extra = importance_sample(c.samples[r], c.weights[r].weights, options.fine_samples, far, streams[r]);
    merged[r] = merge_samples(c.samples[r], extra, far);
  }
  FieldChannels fine_channels;
  fine_channels.radiance = true;
  fine_channels.feature = options.channels.feature && feature_pass == Pass::kFine;
  PassResult f = run_pass(*scene.fine, rays, std::move(merged), fine_channels);
  emit(f, true, fine_channels.feature);
  return out;
}

RenderedBuffers render_view(const SceneView& scene, const Camera& camera, const RenderOptions& options) {
  camera.validate();
  if (!scene.coarse || !scene.fine) throw InputError("render_view: scene has no fields");
  const int h = camera.height, w = camera.width;
  const std::vector<Ray> rays = generate_rays(camera);
  const int dim = scene.coarse->feature_dim();

  RenderedBuffers out;
  if (options.channels.rgb) out.rgb = Image(h, w, 3);
  if (options.channels.feature) out.feature = Image(h, w, dim);
  if (options.channels.depth) out.depth = Image(h, w, 1);
  out.opacity = Image(h, w, 1);

  const std::size_t tile = static_cast<std::size_t>(std::max(1, options.tile_rays));
  for (std::size_t begin = 0; begin < rays.size(); begin += tile) {
    const std::size_t count = std::min(tile, rays.size() - begin);
    const RayResults res =
        render_rays(scene, std::span<const Ray>(rays).subspan(begin, count), camera.near, camera.far, options, begin);
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t p = begin + i;
      const int row = static_cast<int>(p / w), col = static_cast<int>(p % w);
      const auto c = static_cast<Eigen::Index>(i);
      if (out.rgb)
        for (int ch = 0; ch < 3; ++ch) out.rgb->at(row, col, ch) = static_cast<float>(res.rgb(ch, c));
      if (out.feature)
        for (int ch = 0; ch < dim; ++ch) out.feature->at(row, col, ch) = static_cast<float>(res.feature(ch, c));
      if (out.depth) out.depth->at(row, col) = static_cast<float>(res.depth(c));
      out.opacity.at(row, col) = static_cast<float>(res.opacity(c));
    }
  }
  return out;
}

}  // namespace dff
