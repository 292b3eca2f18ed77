#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "dff/json_io.hpp"
#include "dff/query.hpp"
#include "dff/renderer.hpp"

namespace dff {

// How two media share a segment. Both give T = prod(1 - a) with a the
// combined alpha: min(a1 + a2, 1) for kSum, a1 + a2 - a1 a2 for kProduct.
enum class Compositor { kSum, kProduct };

std::string to_string(Compositor c);
Compositor compositor_from_string(const std::string& text);

// Per-sample contribution of one medium along a set of samples.
struct Branch {
  std::vector<double> alpha;
  Eigen::Matrix3Xd color;
  Eigen::MatrixXd feature;  // empty when features were not requested

  std::size_t size() const { return alpha.size(); }
  static Branch empty(std::size_t n, int feature_dim, bool features);
};

// Single medium equivalent to a and b sharing each segment: combined alpha
// and colors/features mixed by rho = a1 / (a1 + a2), rho = 1 when both are 0.
// The combined alpha also drives importance sampling of edited scenes.
Branch mix_branches(const Branch& a, const Branch& b, Compositor compositor);

struct BlendResult {
  Vec3 rgb = Vec3::Zero();  // not over the background
  Eigen::VectorXd feature;
  double depth = 0.0;
  double opacity = 0.0;
};

// Blends two scenes sampled at identical depths.
BlendResult blend(const RaySampleBatch& a, const RaySampleBatch& b, Compositor compositor = Compositor::kSum);

// Similarity transform x -> scale * R x + t.
struct Similarity {
  Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();
  Vec3 translation = Vec3::Zero();
  double scale = 1.0;

  // Throws InputError unless the rotation is a unit quaternion and the scale
  // is positive and finite.
  void validate() const;
  Vec3 apply(const Vec3& x) const;
  Vec3 inverse_point(const Vec3& x) const;
  Vec3 inverse_direction(const Vec3& d) const;
  Similarity inverse() const;
  bool is_identity() const;

  Json to_json() const;  // {"rotation": [w, x, y, z], "translation": [..], "scale": s}
  static Similarity from_json(const Json& j);
};

struct ColorMap {
  enum class Kind { kBgr, kConstant, kAffine };
  Kind kind = Kind::kBgr;
  Vec3 color = Vec3::Zero();        // kConstant
  Mat3 matrix = Mat3::Identity();   // kAffine, result clamped to [0, 1]
  Vec3 offset = Vec3::Zero();

  Vec3 apply(const Vec3& c) const;
  Json to_json() const;
  static ColorMap from_json(const Json& j);
};

enum class EditOp { kRecolor, kDelete, kExtract, kTransform, kWarp };

std::string to_string(EditOp op);
EditOp edit_op_from_string(const std::string& text);

// Serializable edit: {op, selection, transform, color_map, compositor}.
struct EditDescription {
  EditOp op = EditOp::kDelete;
  Selection selection;
  Similarity transform;
  ColorMap color_map;
  Compositor compositor = Compositor::kSum;

  void validate() const;
  Json to_json() const;
  static EditDescription from_json(const Json& j);
};

// Anything that can be sampled as a single medium: a trained scene, an edited
// scene, or a blend of two of them.
class EditSource {
 public:
  virtual ~EditSource() = default;
  virtual Branch sample(Pass pass, const SampleInputs& in, std::span<const double> deltas, bool features) const = 0;
  virtual int feature_dim() const = 0;
  virtual Vec3 background() const = 0;
};

// A scene as-is. Features come from its feature pass.
class SceneSource final : public EditSource {
 public:
  explicit SceneSource(SceneView view) : view_(view) {}
  Branch sample(Pass pass, const SampleInputs& in, std::span<const double> deltas, bool features) const override;
  int feature_dim() const override { return view_.coarse->feature_dim(); }
  Vec3 background() const override { return view_.background; }

 private:
  SceneView view_;
};

// Applies one edit to a source; the selection is evaluated on the source's
// features. Warp inserts the selected part of `target` moved by the transform.
class EditedScene final : public EditSource {
 public:
  EditedScene(EditDescription edit, const EditSource& source, const EditSource* target = nullptr);

  const EditDescription& description() const { return edit_; }
  Branch sample(Pass pass, const SampleInputs& in, std::span<const double> deltas, bool features) const override;
  int feature_dim() const override { return source_->feature_dim(); }
  Vec3 background() const override { return source_->background(); }

  // Both branches before mixing.
  std::pair<Branch, Branch> contributions(Pass pass, const SampleInputs& in, std::span<const double> deltas,
                                          bool features) const;

 private:
  EditDescription edit_;
  const EditSource* source_;
  const EditSource* target_;
};

// Two sources sharing space, e.g. delete and extract of the same selection.
class BlendedSource final : public EditSource {
 public:
  BlendedSource(const EditSource& a, const EditSource& b, Compositor compositor = Compositor::kSum);
  Branch sample(Pass pass, const SampleInputs& in, std::span<const double> deltas, bool features) const override;
  int feature_dim() const override { return a_->feature_dim(); }
  Vec3 background() const override { return a_->background(); }

 private:
  const EditSource* a_;
  const EditSource* b_;
  Compositor compositor_;
};

// Renders any source with the same sampling and tiling as render_view, so an
// unedited source reproduces render_view bit for bit.
RenderedBuffers render_edit(const EditSource& source, const Camera& camera, const RenderOptions& options = {});

}  // namespace dff
