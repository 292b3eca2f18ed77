#pragma once

#include <Eigen/Core>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dff/embedding_table.hpp"
#include "dff/geometry.hpp"
#include "dff/image.hpp"
#include "dff/json_io.hpp"

namespace dff {

struct DatasetFrame {
  Camera camera;
  Image rgb;       // H x W x 3
  Image features;  // H x W x D, at image resolution after load
  bool train = true;
  // Ground truth, synthetic scenes only.
  std::optional<Image> depth;                       // +inf where the ray misses
  std::optional<std::vector<unsigned char>> labels;  // index into gt_labels
};

struct LabeledPoints {
  Eigen::Matrix3Xd points;
  std::vector<int> labels;  // index into gt_labels
};

// On disk:
//   scene.json            manifest (cameras, bounds, file list, gt index)
//   images/%04d.png       RGB
//   features/%04d.fmap    teacher features
//   queries.json          QueryEmbeddingTable
//   gt/                   depth/%04d.fmap, labels/%04d.png, points.json
struct TeacherDataset {
  std::vector<DatasetFrame> frames;
  QueryEmbeddingTable queries;
  int feature_dim = 0;
  std::vector<std::string> gt_labels;
  std::optional<LabeledPoints> gt_points;
  Json synthetic_spec;  // generator input, when generated

  std::vector<std::size_t> frame_indices(bool train) const;
  // Throws StructuralError describing the first inconsistency.
  void validate() const;
};

inline constexpr int kDatasetVersion = 1;

TeacherDataset load_dataset(const std::filesystem::path& dir);
void save_dataset(const TeacherDataset& dataset, const std::filesystem::path& dir);

}  // namespace dff
