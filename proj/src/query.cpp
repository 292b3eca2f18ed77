#include "dff/query.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dff/errors.hpp"
#include "dff/rng.hpp"

namespace dff {

std::string to_string(SelectionMode mode) { return mode == SelectionMode::kSoftmax ? "softmax" : "threshold"; }

SelectionMode selection_mode_from_string(const std::string& text) {
  if (text == "softmax") return SelectionMode::kSoftmax;
  if (text == "threshold") return SelectionMode::kThreshold;
  throw InputError("unknown selection mode '" + text + "' (expected softmax or threshold)");
}

void Selection::validate() const {
  if (positives.cols() < 1) throw InputError("selection: at least one query vector is required");
  if (mode == SelectionMode::kSoftmax) {
    if (positives.cols() + negatives.cols() < 2) throw InputError("selection: softmax mode needs at least 2 labels");
    if (negatives.cols() > 0 && negatives.rows() != positives.rows())
      throw InputError("selection: positive and negative vectors differ in dimension");
  } else if (!(threshold > -1.0 && threshold < 1.0)) {
    throw InputError("selection: threshold must lie in (-1, 1)");
  }
}

Selection Selection::softmax(const QueryEmbeddingTable& table, const std::vector<std::string>& positive,
                             std::vector<std::string> negative) {
  if (positive.empty()) throw InputError("selection: no positive labels");
  for (const auto& label : positive)
    if (!table.find(label)) throw InputError("selection: unknown label '" + label + "'");
  if (negative.empty()) {
    for (const auto& label : table.labels())
      if (std::find(positive.begin(), positive.end(), label) == positive.end()) negative.push_back(label);
  }
  Selection s;
  s.mode = SelectionMode::kSoftmax;
  s.positive_labels = positive;
  s.negative_labels = std::move(negative);
  s.positives = table.matrix(s.positive_labels);
  s.negatives = table.matrix(s.negative_labels);
  s.validate();
  return s;
}

Selection Selection::thresholded(const Eigen::VectorXd& query, double threshold) {
  Selection s;
  s.mode = SelectionMode::kThreshold;
  s.positives = query;
  s.threshold = threshold;
  s.validate();
  return s;
}

namespace {

Json matrix_to_json(const Eigen::MatrixXd& m) {
  Json cols = Json::array();
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    Json col = Json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) col.push_back(m(r, c));
    cols.push_back(std::move(col));
  }
  return cols;
}

Eigen::MatrixXd matrix_from_json(const Json& j) {
  if (!j.is_array()) throw InputError("selection: vectors must be an array of arrays");
  if (j.empty()) return {};
  const auto rows = static_cast<Eigen::Index>(j.at(0).size());
  Eigen::MatrixXd m(rows, static_cast<Eigen::Index>(j.size()));
  for (std::size_t c = 0; c < j.size(); ++c) {
    if (static_cast<Eigen::Index>(j[c].size()) != rows) throw InputError("selection: ragged vector list");
    for (Eigen::Index r = 0; r < rows; ++r) m(r, static_cast<Eigen::Index>(c)) = j[c][r].get<double>();
  }
  return m;
}

}  // namespace

Json Selection::to_json() const {
  Json j;
  j["mode"] = dff::to_string(mode);
  j["positive_labels"] = positive_labels;
  j["negative_labels"] = negative_labels;
  j["positives"] = matrix_to_json(positives);
  j["negatives"] = matrix_to_json(negatives);
  j["threshold"] = threshold;
  return j;
}

Selection Selection::from_json(const Json& j) {
  Selection s;
  s.mode = selection_mode_from_string(j.at("mode").get<std::string>());
  s.positive_labels = j.value("positive_labels", std::vector<std::string>{});
  s.negative_labels = j.value("negative_labels", std::vector<std::string>{});
  s.positives = matrix_from_json(j.at("positives"));
  if (j.contains("negatives")) s.negatives = matrix_from_json(j.at("negatives"));
  s.threshold = j.value("threshold", kDefaultThreshold);
  s.validate();
  return s;
}

Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
  if (logits.size() == 0) throw InputError("softmax: empty logits");
  const double top = logits.maxCoeff();
  Eigen::VectorXd e = (logits.array() - top).exp().matrix();
  return e / e.sum();
}

Eigen::VectorXd label_probabilities(const Eigen::VectorXd& feature, const Eigen::MatrixXd& queries) {
  if (feature.size() != queries.rows())
    throw InputError("query: feature dimension " + std::to_string(feature.size()) + " does not match queries (" +
                     std::to_string(queries.rows()) + ")");
  return softmax(queries.transpose() * feature);
}

double cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return a.dot(b) / (na * nb);
}

double selection_probability(const Eigen::VectorXd& feature, const Selection& selection) {
  if (feature.size() != selection.positives.rows()) throw InputError("query: feature dimension mismatch");
  if (selection.mode == SelectionMode::kThreshold) {
    for (Eigen::Index c = 0; c < selection.positives.cols(); ++c)
      if (cosine(feature, selection.positives.col(c)) > selection.threshold) return 1.0;
    return 0.0;
  }
  const Eigen::Index p = selection.positives.cols();
  Eigen::MatrixXd all(feature.size(), p + selection.negatives.cols());
  all.leftCols(p) = selection.positives;
  all.rightCols(selection.negatives.cols()) = selection.negatives;
  return label_probabilities(feature, all).head(p).sum();
}

Eigen::VectorXd label_probability_2d(const Image& feature_map, const Pixel& pixel,
                                     const std::vector<std::string>& labels, const QueryEmbeddingTable& table) {
  if (pixel.row < 0 || pixel.row >= feature_map.height || pixel.col < 0 || pixel.col >= feature_map.width)
    throw InputError("query: pixel outside the feature map");
  const Eigen::VectorXd f =
      Eigen::Map<const Eigen::VectorXf>(feature_map.pixel(pixel.row, pixel.col), feature_map.channels)
          .cast<double>();
  return label_probabilities(f, table.matrix(labels));
}

Eigen::MatrixXd evaluate_features(const RadianceField& field, const Eigen::Matrix3Xd& positions) {
  SampleInputs in;
  in.positions = positions;
  in.directions = Eigen::Matrix3Xd::Zero(3, positions.cols());
  in.directions.row(2).setConstant(-1.0);
  FieldBatch out;
  field.evaluate(in, {false, true}, out);
  return out.feature;
}

Eigen::VectorXd probability_field(const RadianceField& field, const Eigen::Matrix3Xd& positions,
                                  const Selection& selection) {
  const Eigen::MatrixXd f = evaluate_features(field, positions);
  Eigen::VectorXd p(positions.cols());
  for (Eigen::Index i = 0; i < positions.cols(); ++i) p(i) = selection_probability(f.col(i), selection);
  return p;
}

double probability_field(const RadianceField& field, const Vec3& x, const Selection& selection) {
  return probability_field(field, Eigen::Matrix3Xd(x), selection)(0);
}

int threshold_selection(const RadianceField& field, const Vec3& x, const Selection& selection) {
  if (selection.mode != SelectionMode::kThreshold) throw InputError("threshold_selection: selection is not thresholded");
  return probability_field(field, x, selection) > 0.5 ? 1 : 0;
}

Eigen::VectorXd encode_patch_query(const Image& feature_map, const PixelRect& rect) {
  if (rect.height <= 0 || rect.width <= 0) throw InputError("patch query: empty rectangle");
  if (rect.row < 0 || rect.col < 0 || rect.row + rect.height > feature_map.height ||
      rect.col + rect.width > feature_map.width)
    throw InputError("patch query: rectangle outside the feature map");
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(feature_map.channels);
  for (int r = rect.row; r < rect.row + rect.height; ++r)
    for (int c = rect.col; c < rect.col + rect.width; ++c)
      sum += Eigen::Map<const Eigen::VectorXf>(feature_map.pixel(r, c), feature_map.channels).cast<double>();
  return sum / (static_cast<double>(rect.height) * rect.width);
}

Eigen::VectorXd encode_point_query(const SceneView& scene, const Camera& camera, const Pixel& pixel,
                                   const RenderOptions& options) {
  const Ray ray = generate_ray(camera, pixel);
  RenderOptions o = options;
  o.channels = {false, true, false};
  const std::uint64_t index = static_cast<std::uint64_t>(pixel.row) * camera.width + pixel.col;
  const RayResults r = render_rays(scene, std::span<const Ray>(&ray, 1), camera.near, camera.far, o, index);
  const double opacity = r.feature_opacity(0);
  if (opacity < kMinPointOpacity)
    throw InputError("point query: no surface at pixel (" + std::to_string(pixel.row) + ", " +
                     std::to_string(pixel.col) + ")");
  return r.feature.col(0) / opacity;
}

KMeansResult kmeans(const Eigen::MatrixXd& points, int k, std::uint64_t seed, int max_iterations) {
  const Eigen::Index n = points.cols();
  if (k < 1) throw InputError("kmeans: k must be >= 1");
  if (n < k) throw InputError("kmeans: fewer points than clusters");
  Rng rng(seed);
  KMeansResult out;
  out.centroids.resize(points.rows(), k);

  // k-means++ seeding.
  Eigen::VectorXd nearest = Eigen::VectorXd::Constant(n, std::numeric_limits<double>::infinity());
  Eigen::Index pick = std::min<Eigen::Index>(static_cast<Eigen::Index>(rng.uniform() * n), n - 1);
  for (int c = 0; c < k; ++c) {
    out.centroids.col(c) = points.col(pick);
    for (Eigen::Index i = 0; i < n; ++i)
      nearest(i) = std::min(nearest(i), (points.col(i) - out.centroids.col(c)).squaredNorm());
    if (c + 1 == k) break;
    const double total = nearest.sum();
    if (total <= 0.0) {
      pick = std::min<Eigen::Index>(static_cast<Eigen::Index>(rng.uniform() * n), n - 1);
      continue;
    }
    double u = rng.uniform() * total;
    pick = n - 1;
    for (Eigen::Index i = 0; i < n; ++i) {
      u -= nearest(i);
      if (u < 0.0) {
        pick = i;
        break;
      }
    }
  }

  out.assignments.assign(static_cast<std::size_t>(n), -1);
  for (out.iterations = 0; out.iterations < max_iterations; ++out.iterations) {
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::Index best;
      (out.centroids.colwise() - points.col(i)).colwise().squaredNorm().minCoeff(&best);
      if (out.assignments[i] != best) {
        out.assignments[i] = static_cast<int>(best);
        changed = true;
      }
    }
    if (!changed) break;
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(points.rows(), k);
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(k);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.col(out.assignments[i]) += points.col(i);
      counts(out.assignments[i]) += 1.0;
    }
    for (int c = 0; c < k; ++c)
      if (counts(c) > 0.0) out.centroids.col(c) = sums.col(c) / counts(c);
  }
  out.sse = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) out.sse += (points.col(i) - out.centroids.col(out.assignments[i])).squaredNorm();
  return out;
}

KMeansResult kmeans_features(const Image& feature_map, int k, std::uint64_t seed, int max_iterations) {
  const auto n = static_cast<Eigen::Index>(feature_map.pixel_count());
  const Eigen::MatrixXd points =
      Eigen::Map<const Eigen::MatrixXf>(feature_map.data.data(), feature_map.channels, n).cast<double>();
  return kmeans(points, k, seed, max_iterations);
}

}  // namespace dff
