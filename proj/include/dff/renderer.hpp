#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "dff/field.hpp"
#include "dff/geometry.hpp"
#include "dff/image.hpp"

namespace dff {

enum class Pass { kCoarse, kFine };

std::string to_string(Pass pass);
Pass pass_from_string(const std::string& text);

// Samples of one ray with the field values at each sample.
struct RaySampleBatch {
  DepthSamples samples;
  std::vector<double> sigma;
  Eigen::Matrix3Xd color;
  Eigen::MatrixXd feature;
};

// alpha_k = 1 - exp(-sigma_k delta_k), T_1 = 1, T_{k+1} = T_k (1 - alpha_k),
// w_k = T_k alpha_k. transmittance has K+1 entries; the last is the residual
// transmittance past the final sample.
struct CompositeWeights {
  std::vector<double> alpha;
  std::vector<double> transmittance;
  std::vector<double> weights;
  double opacity = 0.0;  // sum of weights

  std::size_t size() const { return weights.size(); }
};

CompositeWeights compute_weights(std::span<const double> sigma, std::span<const double> deltas);

inline double alpha_from_sigma(double sigma, double delta) { return 1.0 - std::exp(-sigma * delta); }

// The same recurrence from per-sample alphas.
CompositeWeights weights_from_alpha(std::span<const double> alpha);

using ColorBlock = Eigen::Ref<const Eigen::Matrix3Xd>;
using FeatureBlock = Eigen::Ref<const Eigen::MatrixXd>;

Vec3 composite_color(const CompositeWeights& w, const ColorBlock& color);
Eigen::VectorXd composite_feature(const CompositeWeights& w, const FeatureBlock& feature);
double composite_depth(const CompositeWeights& w, std::span<const double> depths);

struct ColorComposite {
  Vec3 rgb = Vec3::Zero();
  double opacity = 0.0;
};

ColorComposite composite_color(const RaySampleBatch& batch);
Eigen::VectorXd composite_feature(const RaySampleBatch& batch);
double composite_depth(const RaySampleBatch& batch);

// rgb + (1 - opacity) * background.
Vec3 over_background(const Vec3& rgb, double opacity, const Vec3& background);

// Gradients of (composite color over background) for upstream dL/dC.
// Writes dL/dc_k into `d_color` and adds dL/dsigma_k into `d_sigma`.
void composite_color_backward(const CompositeWeights& w, const ColorBlock& color, std::span<const double> deltas,
                              const Vec3& background, const Vec3& upstream, Eigen::Ref<Eigen::Matrix3Xd> d_color,
                              std::span<double> d_sigma);

// Feature compositing with density held constant: only dL/df_k.
void composite_feature_backward(const CompositeWeights& w, const Eigen::Ref<const Eigen::VectorXd>& upstream,
                                Eigen::Ref<Eigen::MatrixXd> d_feature);

// What a renderer needs from a scene: coarse and fine fields, the pass whose
// weights composite features, and the background color.
struct SceneView {
  const RadianceField* coarse = nullptr;
  const RadianceField* fine = nullptr;
  Pass feature_pass = Pass::kFine;
  Vec3 background = Vec3::Zero();

  const RadianceField& field(Pass p) const { return p == Pass::kCoarse ? *coarse : *fine; }
};

struct RenderChannels {
  bool rgb = true;
  bool feature = true;
  bool depth = true;
};

struct RenderOptions {
  Pass mode = Pass::kFine;
  RenderChannels channels;
  int coarse_samples = 64;
  int fine_samples = 128;
  // Jitter stratified depths; otherwise bin midpoints.
  bool jitter = false;
  std::uint64_t seed = 0;
  int tile_rays = 4096;
};

struct RenderedBuffers {
  std::optional<Image> rgb;      // over the background color
  std::optional<Image> feature;  // D channels
  std::optional<Image> depth;    // sum_k w_k t_k
  Image opacity;
};

// Per-ray results for an arbitrary list of rays.
struct RayResults {
  Eigen::Matrix3Xd rgb;
  Eigen::MatrixXd feature;
  Eigen::VectorXd depth;
  Eigen::VectorXd opacity;
  Eigen::VectorXd feature_opacity;  // opacity of the pass that rendered features
};

// Samples for each ray are drawn from Rng(seed).split(first_index + i), so
// results do not depend on how rays are tiled.
RayResults render_rays(const SceneView& scene, std::span<const Ray> rays, double near, double far,
                       const RenderOptions& options, std::uint64_t first_index = 0);

RenderedBuffers render_view(const SceneView& scene, const Camera& camera, const RenderOptions& options);

// Column-per-sample positions/directions for rays sharing a sample count.
SampleInputs build_inputs(std::span<const Ray> rays, std::span<const DepthSamples> samples);

}  // namespace dff
