#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "dff/embedding_table.hpp"
#include "dff/field.hpp"
#include "dff/image.hpp"
#include "dff/json_io.hpp"
#include "dff/renderer.hpp"

namespace dff {

inline constexpr double kDefaultThreshold = 0.85;

enum class SelectionMode { kSoftmax, kThreshold };

std::string to_string(SelectionMode mode);
SelectionMode selection_mode_from_string(const std::string& text);

// What counts as "selected". Softmax mode: probability mass of the positive
// labels under a softmax over positives and negatives. Threshold mode: 1 when
// the cosine to any query vector exceeds the threshold (strictly).
struct Selection {
  SelectionMode mode = SelectionMode::kSoftmax;
  Eigen::MatrixXd positives;  // D x P
  Eigen::MatrixXd negatives;  // D x N, softmax mode only
  std::vector<std::string> positive_labels;
  std::vector<std::string> negative_labels;
  double threshold = kDefaultThreshold;

  int dim() const { return static_cast<int>(positives.rows()); }
  void validate() const;

  // Positive labels against every other label of the table.
  static Selection softmax(const QueryEmbeddingTable& table, const std::vector<std::string>& positive,
                           std::vector<std::string> negative = {});
  static Selection thresholded(const Eigen::VectorXd& query, double threshold = kDefaultThreshold);

  Json to_json() const;
  static Selection from_json(const Json& j);
};

// Numerically stable softmax; the one implementation used for pixel and
// point probabilities.
Eigen::VectorXd softmax(const Eigen::VectorXd& logits);

// softmax(queriesᵀ feature) with queries as columns.
Eigen::VectorXd label_probabilities(const Eigen::VectorXd& feature, const Eigen::MatrixXd& queries);

double cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

// Probability for one feature vector. Threshold mode yields 0 or 1.
double selection_probability(const Eigen::VectorXd& feature, const Selection& selection);

// Per-pixel label probabilities from a 2D feature map.
Eigen::VectorXd label_probability_2d(const Image& feature_map, const Pixel& pixel,
                                     const std::vector<std::string>& labels, const QueryEmbeddingTable& table);

// p(selection | x). Depends on position only.
double probability_field(const RadianceField& field, const Vec3& x, const Selection& selection);
Eigen::VectorXd probability_field(const RadianceField& field, const Eigen::Matrix3Xd& positions,
                                  const Selection& selection);

// Hard decision; selection must be in threshold mode.
int threshold_selection(const RadianceField& field, const Vec3& x, const Selection& selection);

// Features at positions (D x N), directions irrelevant.
Eigen::MatrixXd evaluate_features(const RadianceField& field, const Eigen::Matrix3Xd& positions);

struct PixelRect {
  int row = 0;
  int col = 0;
  int height = 0;
  int width = 0;
};

// Mean feature inside the rectangle.
Eigen::VectorXd encode_patch_query(const Image& feature_map, const PixelRect& rect);

// Rendered feature at the pixel divided by the opacity of the feature pass.
inline constexpr double kMinPointOpacity = 0.5;
Eigen::VectorXd encode_point_query(const SceneView& scene, const Camera& camera, const Pixel& pixel,
                                   const RenderOptions& options = {});

struct KMeansResult {
  std::vector<int> assignments;
  Eigen::MatrixXd centroids;  // D x k
  double sse = 0.0;
  int iterations = 0;
};

inline constexpr int kKMeansMaxIterations = 50;

// Lloyd's algorithm with k-means++ seeding over columns of `points`.
KMeansResult kmeans(const Eigen::MatrixXd& points, int k, std::uint64_t seed,
                    int max_iterations = kKMeansMaxIterations);
// Pixels of a feature map, in row-major order.
KMeansResult kmeans_features(const Image& feature_map, int k, std::uint64_t seed,
                             int max_iterations = kKMeansMaxIterations);

}  // namespace dff
