#include "dff/geometry.hpp"

#include <Eigen/Geometry>
#include <sstream>

namespace dff {

std::string Rng::state() const {
  std::ostringstream os;
  os << engine_ << ' ' << gauss_;
  return os.str();
}

void Rng::set_state(const std::string& text) {
  std::istringstream is(text);
  is >> engine_ >> gauss_;
  if (!is) throw LoadError("rng: unreadable state string");
}

void Camera::validate() const {
  const double ortho = (rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff();
  if (!(ortho <= 1e-6)) throw InputError("camera: rotation is not orthonormal");
  if (!(near > 0.0 && near < far)) throw InputError("camera: require 0 < near < far");
  if (!(intrinsics.fx > 0.0 && intrinsics.fy > 0.0)) throw InputError("camera: focal lengths must be positive");
  if (width <= 0 || height <= 0) throw InputError("camera: image size must be positive");
}

Camera Camera::scaled(double factor) const {
  Camera out = *this;
  out.width = std::max(1, static_cast<int>(std::lround(width * factor)));
  out.height = std::max(1, static_cast<int>(std::lround(height * factor)));
  out.intrinsics.fx *= factor;
  out.intrinsics.fy *= factor;
  out.intrinsics.cx *= factor;
  out.intrinsics.cy *= factor;
  return out;
}

Camera Camera::look_at(const Vec3& eye, const Vec3& target, const Vec3& up,
                       const Intrinsics& intrinsics, int width, int height, double near, double far) {
  const Vec3 back = (eye - target).normalized();
  Vec3 right = up.cross(back);
  if (right.norm() < 1e-9) right = Vec3::UnitX().cross(back);
  right.normalize();
  const Vec3 cam_up = back.cross(right);
  Camera cam;
  cam.rotation.col(0) = right;
  cam.rotation.col(1) = cam_up;
  cam.rotation.col(2) = back;
  cam.translation = eye;
  cam.intrinsics = intrinsics;
  cam.width = width;
  cam.height = height;
  cam.near = near;
  cam.far = far;
  return cam;
}

Ray generate_ray(const Camera& camera, const Pixel& pixel) {
  if (pixel.row < 0 || pixel.row >= camera.height || pixel.col < 0 || pixel.col >= camera.width) {
    throw InputError("generate_rays: pixel (" + std::to_string(pixel.row) + ", " +
                     std::to_string(pixel.col) + ") outside " + std::to_string(camera.height) + "x" +
                     std::to_string(camera.width) + " image");
  }
  const auto& k = camera.intrinsics;
  const Vec3 local((pixel.col - k.cx) / k.fx, -(pixel.row - k.cy) / k.fy, -1.0);
  Ray ray;
  ray.origin = camera.translation;
  ray.direction = (camera.rotation * local).normalized();
  return ray;
}

std::vector<Ray> generate_rays(const Camera& camera, std::span<const Pixel> pixels) {
  std::vector<Ray> rays;
  rays.reserve(pixels.size());
  for (const auto& p : pixels) rays.push_back(generate_ray(camera, p));
  return rays;
}

std::vector<Ray> generate_rays(const Camera& camera) {
  std::vector<Ray> rays;
  rays.reserve(static_cast<std::size_t>(camera.width) * camera.height);
  for (int r = 0; r < camera.height; ++r)
    for (int c = 0; c < camera.width; ++c) rays.push_back(generate_ray(camera, {r, c}));
  return rays;
}

void finalize_deltas(DepthSamples& samples, double far) {
  const std::size_t n = samples.depths.size();
  samples.deltas.resize(n);
  for (std::size_t k = 0; k + 1 < n; ++k) samples.deltas[k] = samples.depths[k + 1] - samples.depths[k];
  if (n > 0) samples.deltas[n - 1] = std::max(0.0, far - samples.depths[n - 1]);
}

DepthSamples merge_samples(const DepthSamples& a, const DepthSamples& b, double far) {
  DepthSamples out;
  out.depths.resize(a.size() + b.size());
  std::merge(a.depths.begin(), a.depths.end(), b.depths.begin(), b.depths.end(), out.depths.begin());
  finalize_deltas(out, far);
  return out;
}

}  // namespace dff
