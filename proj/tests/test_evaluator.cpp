#include <doctest.h>

#include <limits>

#include "dff/evaluator.hpp"
#include "dff/query.hpp"
#include "support.hpp"

using namespace dff;
using dff::testing::FunctionField;

namespace {

Image random_image(int h, int w, int c, std::uint64_t seed) {
  Image img(h, w, c);
  Rng rng(seed);
  for (auto& v : img.data) v = static_cast<float>(rng.uniform());
  return img;
}

// Direct windowed SSIM: every valid 11x11 window, 2D Gaussian weights.
double reference_ssim(const Image& a, const Image& b) {
  double w[11][11], total = 0;
  for (int i = 0; i < 11; ++i)
    for (int j = 0; j < 11; ++j) total += w[i][j] = std::exp(-((i - 5) * (i - 5) + (j - 5) * (j - 5)) / 4.5);
  double sum = 0;
  int count = 0;
  for (int ch = 0; ch < a.channels; ++ch)
    for (int r = 0; r + 11 <= a.height; ++r)
      for (int c = 0; c + 11 <= a.width; ++c) {
        double mx = 0, my = 0, xx = 0, yy = 0, xy = 0;
        for (int i = 0; i < 11; ++i)
          for (int j = 0; j < 11; ++j) {
            const double g = w[i][j] / total, x = a.at(r + i, c + j, ch), y = b.at(r + i, c + j, ch);
            mx += g * x;
            my += g * y;
            xx += g * x * x;
            yy += g * y * y;
            xy += g * x * y;
          }
        const double c1 = 1e-4, c2 = 9e-4;
        sum += (2 * mx * my + c1) * (2 * (xy - mx * my) + c2) /
               ((mx * mx + my * my + c1) * (xx - mx * mx + yy - my * my + c2));
        ++count;
      }
  return sum / count;
}

}  // namespace

TEST_CASE("PSNR of a 0.1 offset is 20 dB and identical images hit the cap") {
  const Image a(8, 8, 3, 0.3f);
  Image b = a;
  for (auto& v : b.data) v = 0.4f;
  CHECK(psnr(a, b) == doctest::Approx(20.0).epsilon(1e-6));
  CHECK(psnr(a, a) == kPsnrCap);
  const Image x = random_image(9, 7, 3, 1), y = random_image(9, 7, 3, 2);
  CHECK(psnr(x, y) == psnr(y, x));
  CHECK_THROWS_AS(psnr(a, Image(8, 8, 1)), InputError);
}

TEST_CASE("SSIM matches a direct windowed computation") {
  const Image a = random_image(16, 14, 3, 3);
  Image b = a;
  Rng rng(4);
  for (auto& v : b.data) v = static_cast<float>(std::clamp(v + 0.1 * rng.normal(), 0.0, 1.0));
  CHECK(std::abs(ssim(a, b) - reference_ssim(a, b)) < 1e-10);
  CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_THROWS_AS(ssim(Image(10, 20, 1), Image(10, 20, 1)), InputError);
}

TEST_CASE("a constant shift lowers SSIM through the luminance term") {
  const Image a = random_image(12, 12, 1, 5);
  Image b = a;
  for (auto& v : b.data) v += 0.2f;
  const double s = ssim(a, b);
  CHECK(s < 1.0);
  CHECK(s > 0.5);
}

TEST_CASE("perfect predictions give mIoU 1") {
  const std::vector<int> t{0, 1, 2, 2, 1};
  const auto r = segmentation_report(t, t, {"a", "b", "c"});
  CHECK(r.miou == 1.0);
  CHECK(r.accuracy == 1.0);
}

TEST_CASE("half-wrong balanced prediction gives IoU one third") {
  std::vector<int> truth, pred;
  for (int i = 0; i < 200; ++i) {
    truth.push_back(i < 100 ? 0 : 1);
    // half of each class predicted correctly, the other half swapped
    pred.push_back(i % 2 == 0 ? truth.back() : 1 - truth.back());
  }
  const auto r = segmentation_report(truth, pred, {"a", "b"});
  CHECK(r.iou[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(r.iou[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(r.accuracy == 0.5);
  CHECK(r.confusion(0, 1) == 50);
}

TEST_CASE("labels absent from truth and prediction are excluded") {
  const auto r = segmentation_report({0, 0, 2}, {0, 2, 2}, {"a", "b", "c"});
  CHECK(std::isnan(r.iou[1]));
  CHECK(r.miou == doctest::Approx((0.5 + 0.5) / 2).epsilon(1e-15));
  const auto j = r.to_json();
  CHECK(j["iou"]["b"].is_null());
  // Recomputing from the confusion matrix alone gives the same report.
  const auto again = report_from_confusion(r.confusion, r.labels);
  CHECK(again.miou == r.miou);
  CHECK(again.accuracy == r.accuracy);
  CHECK_THROWS_AS(segmentation_report({0}, {3}, {"a", "b"}), InputError);
}

TEST_CASE("point segmentation takes the softmax argmax, top-2 also accepts the runner-up") {
  QueryEmbeddingTable table("t", 3);
  table.add("a", Eigen::Vector3d(1, 0, 0));
  table.add("b", Eigen::Vector3d(0, 1, 0));
  table.add("c", Eigen::Vector3d(0, 0, 1));
  // Feature (2, 1, 0) at x < 0, (0, 0.5, 2) otherwise.
  const FunctionField field(3, [](const Vec3& x, double& s, Vec3& c, Eigen::VectorXd& f) {
    s = 1;
    c = Vec3::Zero();
    f = x.x() < 0 ? Eigen::Vector3d(2, 1, 0) : Eigen::Vector3d(0, 0.5, 2);
  });
  Eigen::Matrix3Xd pts(3, 4);
  pts << -1, -1, 1, 1, 0, 0, 0, 0, 0, 0, 0, 0;
  const std::vector<int> truth{0, 1, 2, 1};
  const auto r = segment_point_cloud(field, pts, truth, {"a", "b", "c"}, table, true);
  CHECK(r.predicted == std::vector<int>{0, 0, 2, 2});
  CHECK(r.top1.accuracy == 0.5);
  REQUIRE(r.top2.has_value());
  CHECK(r.top2->accuracy == 1.0);
}

TEST_CASE("depth metrics") {
  Image p(1, 2, 1), g(1, 2, 1), o(1, 2, 1, 1.0f);
  p.data = {1.2f, 3.0f};
  g.data = {1.0f, 3.0f};
  auto m = depth_metrics(p, g, o);
  CHECK(m.absrel == doctest::Approx(0.1).epsilon(1e-6));
  CHECK(m.delta_ratio == 1.0);
  CHECK(m.count == 2);

  p.data = {2.0f, 6.0f};
  m = depth_metrics(p, g, o);
  CHECK(m.delta_ratio == 0.0);
  CHECK(m.absrel == doctest::Approx(1.0).epsilon(1e-12));

  // Transparent and infinite-depth pixels do not count.
  o.data = {1.0f, 0.5f};
  p.data = {1.2f, 100.0f};
  m = depth_metrics(p, g, o);
  CHECK(m.count == 1);
  CHECK(m.absrel == doctest::Approx(0.2).epsilon(1e-6));
  g.data[0] = std::numeric_limits<float>::infinity();
  CHECK(depth_metrics(p, g, o).count == 0);
}

TEST_CASE("percentiles interpolate between order statistics") {
  CHECK(percentile({3, 1, 2}, 50) == 2.0);
  CHECK(percentile({0, 10}, 25) == 2.5);
  CHECK(percentile({5}, 98) == 5.0);
  CHECK(percentile({1, 2, 3, 4, 5}, 100) == 5.0);
  CHECK_THROWS_AS(percentile({}, 50), InputError);
}

TEST_CASE("PCA basis matches power iteration on the covariance") {
  const int n = 400, d = 6;
  Image map(20, 20, d);
  Rng rng(7);
  const std::vector<double> scale{3.0, 0.2, 1.5, 0.1, 0.7, 0.05};
  for (std::size_t i = 0; i < map.pixel_count(); ++i)
    for (int c = 0; c < d; ++c) map.data[i * d + c] = static_cast<float>(scale[c] * rng.normal() + c);

  Eigen::MatrixXd x(d, n);
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < d; ++c) x(c, i) = map.data[static_cast<std::size_t>(i) * d + c];
  const Eigen::VectorXd mean = x.rowwise().mean();
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
  for (int i = 0; i < n; ++i) cov += (x.col(i) - mean) * (x.col(i) - mean).transpose();
  cov /= n;

  const PcaBasis basis = fit_pca(map);
  CHECK((basis.mean - mean).norm() < 1e-12);
  CHECK(basis.total_variance == doctest::Approx(cov.trace()).epsilon(1e-12));
  Eigen::MatrixXd deflated = cov;
  for (int k = 0; k < 3; ++k) {
    Eigen::VectorXd v = Eigen::VectorXd::Ones(d);
    for (int it = 0; it < 2000; ++it) v = (deflated * v).normalized();
    const double lambda = v.dot(deflated * v);
    CHECK(basis.eigenvalues(k) == doctest::Approx(lambda).epsilon(1e-8));
    CHECK(std::abs(std::abs(v.dot(basis.components.col(k))) - 1.0) < 1e-8);
    deflated -= lambda * v * v.transpose();
  }
  const Image vis = pca_visualize(map, basis);
  CHECK(vis.channels == 3);
  for (float v : vis.data) {
    CHECK(v >= 0.0f);
    CHECK(v <= 1.0f);
  }
}

TEST_CASE("rank-one features leave the degenerate channels at zero") {
  Image map(8, 8, 4);
  const Eigen::Vector4d dir(0.5, -0.5, 0.5, 0.5);
  for (std::size_t i = 0; i < map.pixel_count(); ++i)
    for (int c = 0; c < 4; ++c) map.data[i * 4 + c] = static_cast<float>((static_cast<double>(i) / 64.0) * dir(c));
  const Image vis = pca_visualize(map, map);
  float lo = 1, hi = 0;
  for (std::size_t i = 0; i < vis.pixel_count(); ++i) {
    lo = std::min(lo, vis.data[i * 3]);
    hi = std::max(hi, vis.data[i * 3]);
    CHECK(vis.data[i * 3 + 1] == 0.0f);
    CHECK(vis.data[i * 3 + 2] == 0.0f);
  }
  CHECK(lo == 0.0f);
  CHECK(hi == 1.0f);
  CHECK_THROWS_AS(pca_visualize(Image(2, 2, 3), map), InputError);
}
