#include <doctest.h>

#include <numbers>

#include "dff/query.hpp"
#include "support.hpp"

using namespace dff;
using dff::testing::FunctionField;

namespace {

QueryEmbeddingTable two_labels() {
  QueryEmbeddingTable t("test", 2);
  t.add("a", Eigen::Vector2d(1, 0));
  t.add("b", Eigen::Vector2d(0, 1));
  return t;
}

}  // namespace

TEST_CASE("matching one-hot feature against an orthogonal negative") {
  const auto p = label_probabilities(Eigen::Vector2d(1, 0), two_labels().matrix({"a", "b"}));
  const double e = std::numbers::e;
  CHECK(p(0) == doctest::Approx(e / (e + 1)).epsilon(1e-14));
  CHECK(p(1) == doctest::Approx(1 / (e + 1)).epsilon(1e-14));
  CHECK(p(0) == doctest::Approx(0.7311).epsilon(1e-4));
}

TEST_CASE("identical logits give uniform probabilities that sum to one") {
  const Eigen::VectorXd p = softmax(Eigen::VectorXd::Constant(5, 3.2));
  for (int i = 0; i < 5; ++i) CHECK(p(i) == doctest::Approx(0.2).epsilon(1e-15));
  const Eigen::VectorXd q = softmax(Eigen::VectorXd::LinSpaced(7, -800, 900));
  CHECK(q.sum() == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(std::isfinite(q(0)));
}

TEST_CASE("softmax is shift invariant") {
  const Eigen::Vector3d l(0.3, -1.2, 2.0);
  CHECK((softmax(l) - softmax((l.array() + 41.0).matrix())).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("softmax selection is the positive label's probability") {
  const Selection s = Selection::softmax(two_labels(), {"a"});
  CHECK(s.negative_labels == std::vector<std::string>{"b"});
  const double e = std::numbers::e;
  CHECK(selection_probability(Eigen::Vector2d(1, 0), s) == doctest::Approx(e / (e + 1)).epsilon(1e-14));
  CHECK_THROWS_AS(Selection::softmax(two_labels(), {"c"}), InputError);
}

TEST_CASE("threshold selection is strict") {
  const Eigen::Vector2d q(1, 0);
  // cos = 0.85 against tau = 0.8 and against itself.
  const Eigen::Vector2d f(0.85, std::sqrt(1 - 0.85 * 0.85));
  CHECK(selection_probability(f, Selection::thresholded(q, 0.8)) == 1.0);
  const double c = cosine(f, q);
  CHECK(selection_probability(f, Selection::thresholded(q, c)) == 0.0);
  CHECK(selection_probability(q, Selection::thresholded(q, 0.99)) == 1.0);
}

TEST_CASE("probability field sums to one over the label set and ignores the view") {
  const FunctionField field(2, [](const Vec3& x, double& s, Vec3& c, Eigen::VectorXd& f) {
    s = 1;
    c = Vec3::Zero();
    f = Eigen::Vector2d(x.x(), 0.5 * x.y());
  });
  const auto t = two_labels();
  const Selection a = Selection::softmax(t, {"a"}), b = Selection::softmax(t, {"b"});
  for (const Vec3 x : {Vec3(0.1, 0.2, 0.3), Vec3(-2, 1, 0), Vec3(3, 3, 3)})
    CHECK(probability_field(field, x, a) + probability_field(field, x, b) == doctest::Approx(1.0).epsilon(1e-15));
  const Vec3 x(0.4, -0.2, 1.0);
  CHECK(probability_field(field, x, a) == probability_field(field, x, a));
}

TEST_CASE("2D and 3D probabilities agree when the features agree") {
  const auto t = two_labels();
  Image map(1, 1, 2);
  map.at(0, 0, 0) = 0.25f;
  map.at(0, 0, 1) = -0.5f;
  const FunctionField field(2, [](const Vec3&, double& s, Vec3& c, Eigen::VectorXd& f) {
    s = 1;
    c = Vec3::Zero();
    f = Eigen::Vector2d(0.25, -0.5);
  });
  const auto p2 = label_probability_2d(map, {0, 0}, {"a", "b"}, t);
  CHECK(p2(0) == probability_field(field, Vec3(Vec3::Zero()), Selection::softmax(t, {"a"})));
}

TEST_CASE("hard decisions need a threshold selection") {
  const FunctionField field(2, [](const Vec3&, double& s, Vec3& c, Eigen::VectorXd& f) {
    s = 1;
    c = Vec3::Zero();
    f = Eigen::Vector2d(2, 0);
  });
  CHECK(threshold_selection(field, Vec3::Zero(), Selection::thresholded(Eigen::Vector2d(1, 0.1))) == 1);
  CHECK(threshold_selection(field, Vec3::Zero(), Selection::thresholded(Eigen::Vector2d(0, 1))) == 0);
  CHECK_THROWS_AS(threshold_selection(field, Vec3::Zero(), Selection::softmax(two_labels(), {"a"})), InputError);
}

TEST_CASE("patch query is the mean feature") {
  Image map(3, 3, 2, 0.0f);
  map.at(1, 1, 0) = 1.0f;
  map.at(1, 2, 1) = 1.0f;
  const auto q = encode_patch_query(map, {1, 1, 1, 2});
  CHECK(q(0) == 0.5);
  CHECK(q(1) == 0.5);
  Image constant(4, 5, 3, 0.75f);
  CHECK(encode_patch_query(constant, {0, 0, 4, 5}).isApprox(Eigen::Vector3d::Constant(0.75)));
  CHECK_THROWS_AS(encode_patch_query(map, {0, 0, 0, 2}), InputError);
  CHECK_THROWS_AS(encode_patch_query(map, {2, 2, 2, 2}), InputError);
}

namespace {

// Slab in front of the camera with a constant feature.
FunctionField wall(const Eigen::Vector2d& v) {
  return FunctionField(2, [v](const Vec3& x, double& s, Vec3& c, Eigen::VectorXd& f) {
    const bool in = std::abs(x.x()) < 0.5 && std::abs(x.y()) < 0.3;
    s = in ? 80.0 : 0.0;
    c = Vec3(0.5, 0.5, 0.5);
    f = v;
  });
}

Camera front() {
  return Camera::look_at(Vec3(0, -4, 0), Vec3::Zero(), Vec3(0, 0, 1), {20, 20, 7.5, 7.5}, 16, 16, 2, 6);
}

}  // namespace

TEST_CASE("point query recovers the surface feature and rejects vacuum") {
  const FunctionField f = wall(Eigen::Vector2d(0.6, -0.8));
  const SceneView view{&f, &f, Pass::kFine, Vec3::Zero()};
  RenderOptions o;
  o.coarse_samples = 32;
  o.fine_samples = 64;
  const auto q = encode_point_query(view, front(), {7, 7}, o);
  CHECK((q - Eigen::Vector2d(0.6, -0.8)).norm() < 1e-9);
  CHECK(encode_point_query(view, front(), {7, 7}, o) == q);
  CHECK_THROWS_WITH_AS(encode_point_query(view, front(), {7, 0}, o), doctest::Contains("no surface"), InputError);
}

TEST_CASE("k-means finds well separated blob means") {
  Rng rng(3);
  Eigen::MatrixXd pts(2, 200);
  for (int i = 0; i < 200; ++i) {
    const Eigen::Vector2d center = i < 100 ? Eigen::Vector2d(-5, 0) : Eigen::Vector2d(5, 2);
    pts.col(i) = center + 0.3 * Eigen::Vector2d(rng.normal(), rng.normal());
  }
  const Eigen::Vector2d m1 = pts.leftCols(100).rowwise().mean(), m2 = pts.rightCols(100).rowwise().mean();
  const auto r = kmeans(pts, 2, 7);
  const int a = r.assignments[0], b = r.assignments[150];
  CHECK(a != b);
  CHECK((r.centroids.col(a) - m1).norm() < 1e-6);
  CHECK((r.centroids.col(b) - m2).norm() < 1e-6);
  const auto again = kmeans(pts, 2, 7);
  CHECK(again.assignments == r.assignments);
}

TEST_CASE("k-means with one cluster is the global mean") {
  const Eigen::MatrixXd pts = Eigen::MatrixXd::Random(3, 40);
  const auto r = kmeans(pts, 1, 0);
  CHECK((r.centroids.col(0) - pts.rowwise().mean()).norm() < 1e-12);
}

TEST_CASE("Lloyd iterations never increase the within-cluster error") {
  Rng rng(1);
  Eigen::MatrixXd pts(2, 300);
  for (int i = 0; i < 300; ++i) pts.col(i) = Eigen::Vector2d(rng.normal(), rng.normal());
  double prev = std::numeric_limits<double>::infinity();
  for (int it = 1; it <= 8; ++it) {
    const double sse = kmeans(pts, 5, 4, it).sse;
    CHECK(sse <= prev + 1e-9);
    prev = sse;
  }
  CHECK_THROWS_AS(kmeans(pts, 0, 1), InputError);
  CHECK_THROWS_AS(kmeans(pts, 301, 1), InputError);
}

TEST_CASE("selections survive a JSON round trip") {
  const Selection s = Selection::softmax(two_labels(), {"a"});
  const Selection r = Selection::from_json(s.to_json());
  CHECK(r.mode == s.mode);
  CHECK(r.positives == s.positives);
  CHECK(r.negatives == s.negatives);
  CHECK(r.positive_labels == s.positive_labels);
}

TEST_CASE("feature-map clustering matches clustering the pixel list") {
  Image map(4, 4, 2);
  Rng rng(2);
  for (auto& v : map.data) v = static_cast<float>(rng.normal());
  Eigen::MatrixXd pts(2, 16);
  for (int i = 0; i < 16; ++i)
    for (int c = 0; c < 2; ++c) pts(c, i) = map.data[i * 2 + c];
  CHECK(kmeans_features(map, 3, 9).assignments == kmeans(pts, 3, 9).assignments);
}
