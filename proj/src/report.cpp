#include "dff/report.hpp"

#include "dff/errors.hpp"

namespace dff {

RenderOptions training_render_options(const SceneModel& scene) {
  RenderOptions o;
  o.coarse_samples = scene.train_config.coarse_samples;
  o.fine_samples = scene.train_config.fine_samples;
  return o;
}

SceneReport evaluate_scene(const SceneModel& scene, const TeacherDataset& dataset, const RenderOptions& options,
                           bool top2) {
  SceneReport report;
  RenderOptions o = options;
  o.channels = {true, false, true};
  const auto frames = dataset.frame_indices(false);
  if (frames.empty()) throw InputError("evaluate: dataset has no held-out frames");

  std::vector<float> pooled_pred, pooled_truth;
  std::vector<unsigned char> pooled_mask;
  for (const std::size_t i : frames) {
    const DatasetFrame& frame = dataset.frames[i];
    const RenderedBuffers out = render_view(scene.view(), frame.camera, o);
    ViewReport view;
    view.frame = i;
    view.psnr = psnr(*out.rgb, frame.rgb);
    view.ssim = ssim(*out.rgb, frame.rgb);
    if (frame.depth) {
      view.depth = depth_metrics(*out.depth, *frame.depth, out.opacity);
      for (std::size_t p = 0; p < out.opacity.pixel_count(); ++p) {
        pooled_pred.push_back(out.depth->data[p]);
        pooled_truth.push_back(frame.depth->data[p]);
        pooled_mask.push_back(out.opacity.data[p] > kDepthOpacityMin ? 1 : 0);
      }
    }
    report.mean_psnr += view.psnr / static_cast<double>(frames.size());
    report.mean_ssim += view.ssim / static_cast<double>(frames.size());
    report.views.push_back(view);
  }
  if (!pooled_mask.empty()) {
    Image pred(1, static_cast<int>(pooled_pred.size()), 1), truth(1, static_cast<int>(pooled_truth.size()), 1);
    pred.data = std::move(pooled_pred);
    truth.data = std::move(pooled_truth);
    report.depth = depth_metrics(pred, truth, pooled_mask);
  }
  if (dataset.gt_points && !dataset.gt_labels.empty())
    report.segmentation = segment_point_cloud(scene.feature_field(), dataset.gt_points->points,
                                              dataset.gt_points->labels, dataset.gt_labels, scene.queries, top2);
  return report;
}

Json SceneReport::to_json() const {
  Json j;
  j["mean_psnr"] = mean_psnr;
  j["mean_ssim"] = mean_ssim;
  if (depth) j["depth"] = depth->to_json();
  if (segmentation) {
    j["segmentation"] = segmentation->top1.to_json();
    if (segmentation->top2) j["segmentation_top2"] = segmentation->top2->to_json();
  }
  Json per = Json::array();
  for (const auto& v : views) {
    Json e;
    e["frame"] = v.frame;
    e["psnr"] = v.psnr;
    e["ssim"] = v.ssim;
    if (v.depth) e["depth"] = v.depth->to_json();
    per.push_back(e);
  }
  j["views"] = per;
  return j;
}

}  // namespace dff
