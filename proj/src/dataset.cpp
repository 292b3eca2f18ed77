#include "dff/dataset.hpp"

#include <cmath>
#include <cstdio>

#include "dff/fmap.hpp"

namespace dff {

namespace fs = std::filesystem;

std::vector<std::size_t> TeacherDataset::frame_indices(bool train) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < frames.size(); ++i)
    if (frames[i].train == train) out.push_back(i);
  return out;
}

void TeacherDataset::validate() const {
  if (frames.empty()) throw StructuralError("dataset: no frames");
  if (queries.dim() != 0 && queries.dim() != feature_dim)
    throw StructuralError("dataset: query table dim " + std::to_string(queries.dim()) + " != feature dim " +
                          std::to_string(feature_dim));
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const auto& f = frames[i];
    const std::string tag = "dataset frame " + std::to_string(i) + ": ";
    try {
      f.camera.validate();
    } catch (const InputError& e) {
      throw StructuralError(tag + e.what());
    }
    if (f.rgb.height != f.camera.height || f.rgb.width != f.camera.width || f.rgb.channels != 3)
      throw StructuralError(tag + "image does not match camera size");
    if (f.features.height != f.rgb.height || f.features.width != f.rgb.width)
      throw StructuralError(tag + "feature map is not at image resolution");
    if (f.features.channels != feature_dim)
      throw StructuralError(tag + "feature dim " + std::to_string(f.features.channels) + " != " +
                            std::to_string(feature_dim));
    if (f.depth && (f.depth->height != f.rgb.height || f.depth->width != f.rgb.width))
      throw StructuralError(tag + "depth does not match image size");
    if (f.labels && f.labels->size() != f.rgb.pixel_count())
      throw StructuralError(tag + "label mask does not match image size");
  }
  if (gt_points) {
    if (gt_points->labels.size() != static_cast<std::size_t>(gt_points->points.cols()))
      throw StructuralError("dataset: gt point/label count mismatch");
    for (int l : gt_points->labels)
      if (l < 0 || l >= static_cast<int>(gt_labels.size())) throw StructuralError("dataset: gt point label out of range");
  }
}

namespace {

std::string frame_name(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04zu", i);
  return buf;
}

}  // namespace

void save_dataset(const TeacherDataset& ds, const fs::path& dir) {
  ds.validate();
  fs::create_directories(dir / "images");
  fs::create_directories(dir / "features");
  const bool has_gt = ds.gt_points || std::any_of(ds.frames.begin(), ds.frames.end(),
                                                  [](const DatasetFrame& f) { return f.depth || f.labels; });
  if (has_gt) {
    fs::create_directories(dir / "gt" / "depth");
    fs::create_directories(dir / "gt" / "labels");
  }

  Json manifest;
  manifest["format"] = "dff-dataset";
  manifest["version"] = kDatasetVersion;
  manifest["feature_dim"] = ds.feature_dim;
  manifest["queries"] = "queries.json";
  Json frames = Json::array();
  for (std::size_t i = 0; i < ds.frames.size(); ++i) {
    const auto& f = ds.frames[i];
    const std::string name = frame_name(i);
    Json jf;
    jf["image"] = "images/" + name + ".png";
    jf["features"] = "features/" + name + ".fmap";
    jf["split"] = f.train ? "train" : "test";
    jf["camera"] = camera_to_json(f.camera);
    write_png(dir / "images" / (name + ".png"), f.rgb);
    write_fmap(dir / "features" / (name + ".fmap"), f.features);
    if (f.depth) {
      jf["depth"] = "gt/depth/" + name + ".fmap";
      write_fmap(dir / "gt" / "depth" / (name + ".fmap"), *f.depth);
    }
    if (f.labels) {
      jf["labels"] = "gt/labels/" + name + ".png";
      write_png_bytes(dir / "gt" / "labels" / (name + ".png"), *f.labels, f.rgb.height, f.rgb.width);
    }
    frames.push_back(jf);
  }
  manifest["frames"] = frames;
  if (has_gt) {
    Json gt;
    gt["labels"] = ds.gt_labels;
    if (ds.gt_points) {
      gt["points"] = "gt/points.json";
      Json pts = Json::array();
      for (Eigen::Index i = 0; i < ds.gt_points->points.cols(); ++i) {
        const auto p = ds.gt_points->points.col(i);
        pts.push_back(Json::array({p.x(), p.y(), p.z(), ds.gt_points->labels[i]}));
      }
      Json file;
      file["labels"] = ds.gt_labels;
      file["points"] = pts;
      write_json_file(dir / "gt" / "points.json", file);
    }
    manifest["gt"] = gt;
  }
  if (!ds.synthetic_spec.is_null()) manifest["synthetic"] = ds.synthetic_spec;
  ds.queries.save(dir / "queries.json");
  write_json_file(dir / "scene.json", manifest);
}

TeacherDataset load_dataset(const fs::path& dir) {
  const fs::path manifest_path = dir / "scene.json";
  const Json m = read_json_file(manifest_path);
  TeacherDataset ds;
  try {
    if (m.value("format", std::string{}) != "dff-dataset")
      throw LoadError(manifest_path.string() + ": not a dff dataset manifest");
    const int version = m.value("version", -1);
    if (version != kDatasetVersion)
      throw LoadError(manifest_path.string() + ": dataset version " + std::to_string(version) + ", expected " +
                      std::to_string(kDatasetVersion));
    ds.feature_dim = m.at("feature_dim").get<int>();
    ds.queries = QueryEmbeddingTable::load(dir / m.value("queries", std::string("queries.json")));
    if (m.contains("gt")) {
      const auto& gt = m["gt"];
      ds.gt_labels = gt.value("labels", std::vector<std::string>{});
      if (gt.contains("points")) {
        const Json pf = read_json_file(dir / gt["points"].get<std::string>());
        const auto& pts = pf.at("points");
        LabeledPoints lp;
        lp.points.resize(3, static_cast<Eigen::Index>(pts.size()));
        for (std::size_t i = 0; i < pts.size(); ++i) {
          for (int k = 0; k < 3; ++k) lp.points(k, static_cast<Eigen::Index>(i)) = pts[i][k].get<double>();
          lp.labels.push_back(pts[i][3].get<int>());
        }
        ds.gt_points = std::move(lp);
      }
    }
    if (m.contains("synthetic")) ds.synthetic_spec = m["synthetic"];

    for (const auto& jf : m.at("frames")) {
      DatasetFrame f;
      f.camera = camera_from_json(jf.at("camera"));
      f.train = jf.value("split", std::string("train")) != "test";
      const fs::path image_path = dir / jf.at("image").get<std::string>();
      f.rgb = read_png(image_path);
      if (f.rgb.channels == 4) {
        Image rgb(f.rgb.height, f.rgb.width, 3);
        for (std::size_t p = 0; p < rgb.pixel_count(); ++p)
          for (int c = 0; c < 3; ++c) rgb.data[p * 3 + c] = f.rgb.data[p * 4 + c];
        f.rgb = std::move(rgb);
      }
      if (f.rgb.channels != 3) throw LoadError(image_path.string() + ": expected an RGB image");
      if (f.rgb.height != f.camera.height || f.rgb.width != f.camera.width)
        throw LoadError(image_path.string() + ": size does not match camera");
      const fs::path feature_path = dir / jf.at("features").get<std::string>();
      Image features = read_fmap(feature_path);
      if (features.channels != ds.feature_dim)
        throw LoadError(feature_path.string() + ": feature dim " + std::to_string(features.channels) +
                        " does not match manifest (" + std::to_string(ds.feature_dim) + ")");
      f.features = resize_bilinear(features, f.rgb.height, f.rgb.width);
      if (jf.contains("depth")) f.depth = read_fmap(dir / jf["depth"].get<std::string>());
      if (jf.contains("labels")) {
        int h = 0, w = 0;
        f.labels = read_png_bytes(dir / jf["labels"].get<std::string>(), h, w);
        if (h != f.rgb.height || w != f.rgb.width) throw LoadError("label mask size mismatch in " + dir.string());
      }
      ds.frames.push_back(std::move(f));
    }
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(manifest_path.string() + ": " + e.what());
  } catch (const InputError& e) {
    throw LoadError(manifest_path.string() + ": " + e.what());
  }
  try {
    ds.validate();
  } catch (const StructuralError& e) {
    throw LoadError(dir.string() + ": " + e.what());
  }
  return ds;
}

}  // namespace dff
