#pragma once

#include <Eigen/Core>
#include <optional>
#include <string>
#include <vector>

#include "dff/embedding_table.hpp"
#include "dff/field.hpp"
#include "dff/image.hpp"
#include "dff/json_io.hpp"

namespace dff {

// Reported when the images are identical.
inline constexpr double kPsnrCap = 99.0;

// Peak 1.0. Images must share a shape.
double psnr(const Image& a, const Image& b);

// Mean SSIM over channels and valid 11x11 Gaussian windows (sigma 1.5),
// K1 = 0.01, K2 = 0.03, dynamic range 1.
double ssim(const Image& a, const Image& b);

struct SegmentationReport {
  std::vector<std::string> labels;
  // Rows are ground truth, columns prediction.
  Eigen::MatrixXd confusion;
  // NaN for labels absent from both ground truth and prediction.
  std::vector<double> iou;
  double miou = 0.0;
  double accuracy = 0.0;
  long total = 0;

  Json to_json() const;
};

// Everything is derived from the confusion matrix.
SegmentationReport report_from_confusion(const Eigen::MatrixXd& confusion, std::vector<std::string> labels);
SegmentationReport segmentation_report(const std::vector<int>& truth, const std::vector<int>& predicted,
                                       std::vector<std::string> labels);

struct PointSegmentation {
  SegmentationReport top1;
  // Counts a point as correct when its label has the highest or second-highest
  // probability.
  std::optional<SegmentationReport> top2;
  std::vector<int> predicted;
};

// Argmax of the softmax over `labels` at each point.
PointSegmentation segment_point_cloud(const RadianceField& feature_field, const Eigen::Matrix3Xd& points,
                                      const std::vector<int>& truth, const std::vector<std::string>& labels,
                                      const QueryEmbeddingTable& table, bool top2 = false);

struct DepthMetrics {
  double delta_ratio = 0.0;  // fraction with max(p/g, g/p) < 1.25
  double absrel = 0.0;       // mean |p - g| / g
  long count = 0;

  Json to_json() const;
};

inline constexpr double kDepthOpacityMin = 0.5;

// Over pixels with opacity > 0.5 and finite positive ground truth.
DepthMetrics depth_metrics(const Image& predicted, const Image& truth, const Image& opacity);
// Over pixels where mask is nonzero.
DepthMetrics depth_metrics(const Image& predicted, const Image& truth, const std::vector<unsigned char>& mask);

// Three principal directions of a reference feature map.
struct PcaBasis {
  Eigen::VectorXd mean;
  Eigen::MatrixXd components;  // D x 3, the largest-magnitude entry of each is positive
  Eigen::Vector3d eigenvalues = Eigen::Vector3d::Zero();
  double total_variance = 0.0;
};

PcaBasis fit_pca(const Image& reference);

inline constexpr double kPcaLowPercentile = 2.0;
inline constexpr double kPcaHighPercentile = 98.0;

// Projects onto the basis, clips each channel to its 2nd..98th percentile and
// rescales to [0, 1]. Degenerate channels come out 0.
Image pca_visualize(const Image& features, const PcaBasis& basis);
Image pca_visualize(const Image& features, const Image& reference);

// Linear interpolation between order statistics.
double percentile(std::vector<double> values, double q);

}  // namespace dff
