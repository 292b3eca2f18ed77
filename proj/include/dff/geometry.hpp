#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "dff/errors.hpp"
#include "dff/rng.hpp"

namespace dff {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

struct Intrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
};

// Pinhole camera. Right-handed, looking down -z with +y up in camera space;
// `rotation`/`translation` map camera coordinates to world coordinates.
struct Camera {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
  Intrinsics intrinsics;
  int width = 0;
  int height = 0;
  double near = 0.1;
  double far = 10.0;

  // Throws InputError when an invariant is violated.
  void validate() const;

  // Same pose and bounds with the image grid scaled by `factor`.
  Camera scaled(double factor) const;

  static Camera look_at(const Vec3& eye, const Vec3& target, const Vec3& up,
                        const Intrinsics& intrinsics, int width, int height,
                        double near, double far);
};

struct Ray {
  Vec3 origin = Vec3::Zero();
  Vec3 direction = Vec3(0, 0, -1);

  Vec3 at(double t) const { return origin + t * direction; }
};

struct Pixel {
  int row = 0;
  int col = 0;
};

// Ordered depths along one ray. deltas[k] = depths[k+1] - depths[k] and the
// last delta runs to the far bound.
struct DepthSamples {
  std::vector<double> depths;
  std::vector<double> deltas;

  std::size_t size() const { return depths.size(); }
};

Ray generate_ray(const Camera& camera, const Pixel& pixel);
std::vector<Ray> generate_rays(const Camera& camera, std::span<const Pixel> pixels);
// Every pixel in row-major order.
std::vector<Ray> generate_rays(const Camera& camera);

// Fills deltas from depths, closing the last interval at `far`.
void finalize_deltas(DepthSamples& samples, double far);

// Merges two ascending depth lists and recomputes the deltas.
DepthSamples merge_samples(const DepthSamples& a, const DepthSamples& b, double far);

// One draw per equal-width bin of [near, far].
template <UniformSource G>
DepthSamples stratified_sample(double near, double far, int count, G& rng) {
  if (count < 2) throw InputError("stratified_sample: need at least 2 samples, got " + std::to_string(count));
  if (!(near < far)) throw InputError("stratified_sample: near must be below far");
  DepthSamples out;
  out.depths.resize(count);
  const double bin = (far - near) / count;
  for (int k = 0; k < count; ++k) {
    out.depths[k] = near + (k + rng.uniform()) * bin;
  }
  finalize_deltas(out, far);
  return out;
}

// Added to every coarse weight before building the sampling PDF.
inline constexpr double kImportanceStabilizer = 0.01;

// Inverse-CDF draws from the piecewise-constant PDF over the coarse intervals
// [t_k, t_k + delta_k] with mass proportional to weights[k] + stabilizer.
// Returned depths are sorted; the caller merges them with the coarse set.
template <UniformSource G>
DepthSamples importance_sample(const DepthSamples& coarse, std::span<const double> weights,
                               int count, double far, G& rng) {
  const std::size_t bins = coarse.size();
  if (weights.size() != bins) throw InputError("importance_sample: weight count does not match samples");
  if (count < 0) throw InputError("importance_sample: negative sample count");
  std::vector<double> cdf(bins + 1, 0.0);
  for (std::size_t k = 0; k < bins; ++k) {
    if (!(weights[k] >= 0.0)) throw InputError("importance_sample: weights must be nonnegative");
    cdf[k + 1] = cdf[k] + weights[k] + kImportanceStabilizer;
  }
  const double total = cdf[bins];
  DepthSamples out;
  out.depths.reserve(count);
  for (int m = 0; m < count; ++m) {
    const double u = rng.uniform() * total;
    auto it = std::upper_bound(cdf.begin() + 1, cdf.end(), u);
    std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(it - cdf.begin()) - 1, bins - 1);
    const double mass = cdf[k + 1] - cdf[k];
    const double frac = mass > 0.0 ? std::clamp((u - cdf[k]) / mass, 0.0, 1.0) : 0.0;
    out.depths.push_back(coarse.depths[k] + frac * coarse.deltas[k]);
  }
  std::sort(out.depths.begin(), out.depths.end());
  finalize_deltas(out, far);
  return out;
}

}  // namespace dff
