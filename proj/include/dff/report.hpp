#pragma once

#include <vector>

#include "dff/dataset.hpp"
#include "dff/evaluator.hpp"
#include "dff/renderer.hpp"
#include "dff/scene.hpp"

namespace dff {

struct ViewReport {
  std::size_t frame = 0;
  double psnr = 0.0;
  double ssim = 0.0;
  std::optional<DepthMetrics> depth;
};

struct SceneReport {
  std::vector<ViewReport> views;
  double mean_psnr = 0.0;
  double mean_ssim = 0.0;
  // Pooled over all held-out pixels that pass the depth mask.
  std::optional<DepthMetrics> depth;
  std::optional<PointSegmentation> segmentation;

  Json to_json() const;
};

// Renders every held-out frame and scores it against the dataset; segments
// the ground-truth point cloud when there is one.
SceneReport evaluate_scene(const SceneModel& scene, const TeacherDataset& dataset, const RenderOptions& options,
                           bool top2 = false);

// Render options matching the sample counts the scene was trained with.
RenderOptions training_render_options(const SceneModel& scene);

}  // namespace dff
