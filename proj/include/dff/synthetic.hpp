#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dff/dataset.hpp"
#include "dff/field.hpp"
#include "dff/renderer.hpp"

namespace dff {

enum class Shape { kSphere, kBox };

struct SyntheticObject {
  Shape shape = Shape::kSphere;
  Vec3 center = Vec3::Zero();
  // Sphere: radius in x. Box: half extents.
  Vec3 size = Vec3::Constant(0.5);
  Vec3 color = Vec3(1, 0, 0);
  std::string label;
};

struct SyntheticSpec {
  std::vector<SyntheticObject> objects;
  int width = 64;
  int height = 64;
  int n_views = 10;
  int n_holdout = 2;
  int feature_dim = 16;
  std::uint64_t seed = 0;
  double camera_radius = 3.2;
  double fov_degrees = 40.0;
  double near = 1.5;
  double far = 5.0;
  int gt_points = 3000;
  Vec3 light = Vec3(0.4, 0.8, 0.45);
  Vec3 background = Vec3::Zero();

  // Three non-overlapping primitives: red sphere, green box, blue ball.
  static SyntheticSpec desk();
  Json to_json() const;
  static SyntheticSpec from_json(const Json& j);
};

struct Hit {
  double t = 0.0;
  int object = -1;
  Vec3 normal = Vec3::Zero();
};

// Analytic ground truth: first intersection, shading and per-object labels.
class SyntheticScene {
 public:
  SyntheticScene(SyntheticSpec spec, QueryEmbeddingTable embeddings);

  const SyntheticSpec& spec() const { return spec_; }
  const QueryEmbeddingTable& embeddings() const { return embeddings_; }

  std::optional<Hit> intersect(const Ray& ray) const;
  // Index of the object containing x, if any.
  int inside(const Vec3& x) const;
  Vec3 shade(int object, const Vec3& normal) const;
  Vec3 outward_normal(int object, const Vec3& x) const;
  std::vector<Camera> cameras() const;

 private:
  SyntheticSpec spec_;
  QueryEmbeddingTable embeddings_;
};

// Volumetric stand-in for the synthetic scene: constant density inside each
// primitive, shaded color from the nearest surface normal, the label's
// embedding as feature.
class AnalyticField final : public RadianceField {
 public:
  AnalyticField(const SyntheticScene& scene, double density = 400.0);

  int feature_dim() const override { return dim_; }
  void evaluate(const SampleInputs& in, FieldChannels channels, FieldBatch& out) const override;

  SceneView view() const { return {this, this, Pass::kFine, scene_->spec().background}; }

 private:
  const SyntheticScene* scene_;
  double density_;
  int dim_;
};

// Unit-norm embeddings, one per object label plus "background"; pairwise
// |cos| < 0.3, redrawn until it holds.
QueryEmbeddingTable make_embeddings(const std::vector<std::string>& labels, int dim, std::uint64_t seed);

inline const std::string kBackgroundLabel = "background";

// Throws InputError when primitives overlap or labels repeat.
TeacherDataset generate_synthetic(const SyntheticSpec& spec);

}  // namespace dff
