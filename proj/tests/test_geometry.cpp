#include <doctest.h>

#include <numeric>

#include "dff/geometry.hpp"

using namespace dff;

namespace {

Camera axis_camera() {
  Camera cam;
  cam.intrinsics = {100.0, 100.0, 32.0, 32.0};
  cam.width = 200;
  cam.height = 64;
  return cam;
}

}  // namespace

TEST_CASE("principal point maps to the optical axis") {
  const Ray r = generate_ray(axis_camera(), {32, 32});
  CHECK(r.direction.isApprox(Vec3(0, 0, -1), 1e-15));
  CHECK(r.origin == Vec3::Zero());
}

TEST_CASE("pixel one focal length right of center points at 45 degrees") {
  const Ray r = generate_ray(axis_camera(), {32, 132});
  const Vec3 expected = Vec3(1, 0, -1).normalized();
  CHECK((r.direction - expected).norm() < 1e-15);
}

TEST_CASE("rows grow downward, so a lower pixel looks along -y") {
  const Ray r = generate_ray(axis_camera(), {42, 32});
  CHECK(r.direction.y() < 0.0);
}

TEST_CASE("camera translation is the ray origin") {
  Camera cam = axis_camera();
  cam.translation = Vec3(1, 2, 3);
  for (int c : {0, 17, 199}) CHECK(generate_ray(cam, {5, c}).origin == Vec3(1, 2, 3));
}

TEST_CASE("rays are a pure function of camera and pixel") {
  Camera cam = Camera::look_at(Vec3(3, -2, 1), Vec3::Zero(), Vec3(0, 0, 1), {50, 50, 15.5, 11.5}, 32, 24, 1, 6);
  const auto a = generate_rays(cam), b = generate_rays(cam);
  REQUIRE(a.size() == 32u * 24u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].direction == b[i].direction);
    CHECK(a[i].origin == b[i].origin);
  }
}

TEST_CASE("pixels outside the image are rejected") {
  CHECK_THROWS_AS(generate_ray(axis_camera(), {64, 0}), InputError);
  CHECK_THROWS_AS(generate_ray(axis_camera(), {0, -1}), InputError);
}

TEST_CASE("stratified sampling with a pinned source") {
  ConstantSource left(0.0), mid(0.5);
  const auto a = stratified_sample(0.0, 4.0, 4, left);
  CHECK(a.depths == std::vector<double>{0, 1, 2, 3});
  const auto b = stratified_sample(0.0, 4.0, 4, mid);
  CHECK(b.depths == std::vector<double>{0.5, 1.5, 2.5, 3.5});
  CHECK(b.deltas == std::vector<double>{1, 1, 1, 0.5});
}

TEST_CASE("stratified sampling puts exactly one depth in each bin") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    Rng rng(seed);
    const double near = 2.0, far = 6.0;
    const auto s = stratified_sample(near, far, 64, rng);
    std::vector<int> hist(64, 0);
    for (double t : s.depths) {
      REQUIRE(t >= near);
      REQUIRE(t <= far);
      ++hist[std::min(63, static_cast<int>((t - near) / (far - near) * 64))];
    }
    for (int h : hist) CHECK(h == 1);
  }
}

TEST_CASE("deltas partition the sampled range up to the far bound") {
  Rng rng(9);
  const auto s = stratified_sample(1.0, 5.0, 33, rng);
  const double sum = std::accumulate(s.deltas.begin(), s.deltas.end(), 0.0);
  CHECK(sum == doctest::Approx(5.0 - s.depths.front()).epsilon(1e-14));
}

TEST_CASE("importance sampling with equal weights is uniform over bins (chi-square)") {
  ConstantSource mid(0.5);
  const auto coarse = stratified_sample(0.0, 1.0, 64, mid);
  DepthSamples bins;
  bins.depths.resize(64);
  for (int k = 0; k < 64; ++k) bins.depths[k] = k / 64.0;
  finalize_deltas(bins, 1.0);
  const std::vector<double> w(64, 0.3);
  Rng rng(11);
  const int m = 64000;
  const auto fine = importance_sample(bins, w, m, 1.0, rng);
  std::vector<int> hist(64, 0);
  for (double t : fine.depths) ++hist[std::min(63, static_cast<int>(t * 64))];
  const double expected = m / 64.0;
  double chi2 = 0.0;
  for (int h : hist) chi2 += (h - expected) * (h - expected) / expected;
  // 99.9th percentile of chi-square with 63 degrees of freedom.
  CHECK(chi2 < 103.4);
  (void)coarse;
}

TEST_CASE("one-hot weights put samples in the hot bin up to the stabilizer mass") {
  DepthSamples bins;
  bins.depths = {0, 1, 2, 3};
  finalize_deltas(bins, 4.0);
  const std::vector<double> w{0, 0, 0, 1};
  Rng rng(5);
  const int m = 20000;
  const auto fine = importance_sample(bins, w, m, 4.0, rng);
  const auto hot = std::count_if(fine.depths.begin(), fine.depths.end(), [](double t) { return t >= 3.0; });
  const double p_hot = (1.0 + kImportanceStabilizer) / (1.0 + 4 * kImportanceStabilizer);
  const double sd = std::sqrt(m * p_hot * (1 - p_hot));
  CHECK(std::abs(hot - m * p_hot) < 4 * sd);
}

TEST_CASE("importance sampling is reproducible and merges to K + M samples") {
  Rng a(3), b(3);
  ConstantSource mid(0.5);
  const auto coarse = stratified_sample(2.0, 6.0, 64, mid);
  std::vector<double> w(64);
  for (int k = 0; k < 64; ++k) w[k] = std::exp(-0.1 * (k - 30) * (k - 30));
  const auto f1 = importance_sample(coarse, w, 128, 6.0, a);
  const auto f2 = importance_sample(coarse, w, 128, 6.0, b);
  CHECK(f1.depths == f2.depths);
  const auto merged = merge_samples(coarse, f1, 6.0);
  CHECK(merged.size() == 192);
  CHECK(std::is_sorted(merged.depths.begin(), merged.depths.end()));
}

TEST_CASE("camera scaling keeps the field of view") {
  const Camera cam = Camera::look_at(Vec3(0, -4, 0), Vec3::Zero(), Vec3(0, 0, 1), {80, 80, 31.5, 31.5}, 64, 64, 2, 6);
  const Camera small = cam.scaled(0.25);
  CHECK(small.width == 16);
  CHECK(small.height == 16);
  // Corner rays agree.
  const Ray a = generate_ray(cam, {0, 0});
  const Ray b = generate_ray(small, {0, 0});
  CHECK((a.direction - b.direction).norm() < 0.05);
}
