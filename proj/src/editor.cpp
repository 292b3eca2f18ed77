#include "dff/editor.hpp"

#include <algorithm>
#include <cmath>

#include "dff/errors.hpp"

namespace dff {

std::string to_string(Compositor c) { return c == Compositor::kSum ? "sum" : "product"; }

Compositor compositor_from_string(const std::string& text) {
  if (text == "sum") return Compositor::kSum;
  if (text == "product") return Compositor::kProduct;
  throw InputError("unknown compositor '" + text + "' (expected sum or product)");
}

Branch Branch::empty(std::size_t n, int feature_dim, bool features) {
  Branch b;
  b.alpha.assign(n, 0.0);
  b.color = Eigen::Matrix3Xd::Zero(3, static_cast<Eigen::Index>(n));
  if (features) b.feature = Eigen::MatrixXd::Zero(feature_dim, static_cast<Eigen::Index>(n));
  return b;
}

Branch mix_branches(const Branch& a, const Branch& b, Compositor compositor) {
  const std::size_t n = a.size();
  if (b.size() != n || a.color.cols() != b.color.cols() || a.feature.rows() != b.feature.rows() ||
      a.feature.cols() != b.feature.cols())
    throw StructuralError("blend: branches are sampled on different grids");
  Branch out;
  out.alpha.resize(n);
  out.color.resize(3, static_cast<Eigen::Index>(n));
  const bool features = a.feature.cols() > 0;
  if (features) out.feature.resize(a.feature.rows(), static_cast<Eigen::Index>(n));
  for (std::size_t k = 0; k < n; ++k) {
    const double a1 = a.alpha[k];
    const double a2 = b.alpha[k];
    const double sum = a1 + a2;
    out.alpha[k] = compositor == Compositor::kSum ? std::min(sum, 1.0) : sum - a1 * a2;
    const double rho = sum > 0.0 ? a1 / sum : 1.0;
    const auto col = static_cast<Eigen::Index>(k);
    out.color.col(col) = rho * a.color.col(col) + (1.0 - rho) * b.color.col(col);
    if (features) out.feature.col(col) = rho * a.feature.col(col) + (1.0 - rho) * b.feature.col(col);
  }
  return out;
}

namespace {

Branch from_batch(const RaySampleBatch& batch) {
  const std::size_t n = batch.samples.size();
  if (batch.sigma.size() != n || static_cast<std::size_t>(batch.color.cols()) != n)
    throw StructuralError("blend: sample batch fields have inconsistent sizes");
  Branch b;
  b.alpha.resize(n);
  for (std::size_t k = 0; k < n; ++k) b.alpha[k] = alpha_from_sigma(batch.sigma[k], batch.samples.deltas[k]);
  b.color = batch.color;
  b.feature = batch.feature;
  return b;
}

}  // namespace

BlendResult blend(const RaySampleBatch& a, const RaySampleBatch& b, Compositor compositor) {
  if (a.samples.depths != b.samples.depths || a.samples.deltas != b.samples.deltas)
    throw StructuralError("blend: the two batches do not share depth samples");
  const Branch mixed = mix_branches(from_batch(a), from_batch(b), compositor);
  const CompositeWeights w = weights_from_alpha(mixed.alpha);
  BlendResult out;
  out.rgb = composite_color(w, mixed.color);
  if (mixed.feature.cols() > 0) out.feature = composite_feature(w, mixed.feature);
  out.depth = composite_depth(w, a.samples.depths);
  out.opacity = w.opacity;
  return out;
}

void Similarity::validate() const {
  if (!std::isfinite(rotation.norm()) || std::abs(rotation.norm() - 1.0) > 1e-6)
    throw InputError("transform: rotation must be a unit quaternion");
  if (!(scale > 0.0) || !std::isfinite(scale)) throw InputError("transform: scale must be positive and finite");
  if (!translation.allFinite()) throw InputError("transform: translation must be finite");
}

Vec3 Similarity::apply(const Vec3& x) const { return scale * (rotation * x) + translation; }

Vec3 Similarity::inverse_point(const Vec3& x) const { return (rotation.conjugate() * (x - translation)) / scale; }

Vec3 Similarity::inverse_direction(const Vec3& d) const { return (rotation.conjugate() * d).normalized(); }

Similarity Similarity::inverse() const {
  Similarity inv;
  inv.rotation = rotation.conjugate();
  inv.scale = 1.0 / scale;
  inv.translation = -(inv.rotation * translation) / scale;
  return inv;
}

bool Similarity::is_identity() const {
  return rotation.w() == 1.0 && rotation.vec().isZero(0.0) && translation.isZero(0.0) && scale == 1.0;
}

Json Similarity::to_json() const {
  Json j;
  j["rotation"] = {rotation.w(), rotation.x(), rotation.y(), rotation.z()};
  j["translation"] = vec3_to_json(translation);
  j["scale"] = scale;
  return j;
}

Similarity Similarity::from_json(const Json& j) {
  Similarity s;
  if (j.contains("rotation")) {
    const auto& q = j.at("rotation");
    if (!q.is_array() || q.size() != 4) throw InputError("transform: rotation must be [w, x, y, z]");
    s.rotation = Eigen::Quaterniond(q[0].get<double>(), q[1].get<double>(), q[2].get<double>(), q[3].get<double>());
  }
  if (j.contains("translation")) s.translation = vec3_from_json(j.at("translation"));
  s.scale = j.value("scale", 1.0);
  s.validate();
  s.rotation.normalize();
  return s;
}

Vec3 ColorMap::apply(const Vec3& c) const {
  switch (kind) {
    case Kind::kBgr:
      return {c.z(), c.y(), c.x()};
    case Kind::kConstant:
      return color;
    case Kind::kAffine:
      return (matrix * c + offset).cwiseMax(0.0).cwiseMin(1.0);
  }
  return c;
}

Json ColorMap::to_json() const {
  Json j;
  switch (kind) {
    case Kind::kBgr:
      j["kind"] = "bgr";
      break;
    case Kind::kConstant:
      j["kind"] = "constant";
      j["color"] = vec3_to_json(color);
      break;
    case Kind::kAffine: {
      j["kind"] = "affine";
      Json m = Json::array();
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) m.push_back(matrix(r, c));
      j["matrix"] = m;
      j["offset"] = vec3_to_json(offset);
      break;
    }
  }
  return j;
}

ColorMap ColorMap::from_json(const Json& j) {
  ColorMap m;
  const std::string kind = j.value("kind", std::string("bgr"));
  if (kind == "bgr") {
    m.kind = Kind::kBgr;
  } else if (kind == "constant") {
    m.kind = Kind::kConstant;
    m.color = vec3_from_json(j.at("color"));
    if ((m.color.array() < 0.0).any() || (m.color.array() > 1.0).any())
      throw InputError("color map: constant color must lie in [0, 1]");
  } else if (kind == "affine") {
    m.kind = Kind::kAffine;
    const auto& v = j.at("matrix");
    if (!v.is_array() || v.size() != 9) throw InputError("color map: affine matrix needs 9 row-major entries");
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) m.matrix(r, c) = v[static_cast<std::size_t>(r * 3 + c)].get<double>();
    if (j.contains("offset")) m.offset = vec3_from_json(j.at("offset"));
  } else {
    throw InputError("unknown color map '" + kind + "' (expected bgr, constant or affine)");
  }
  return m;
}

std::string to_string(EditOp op) {
  switch (op) {
    case EditOp::kRecolor:
      return "recolor";
    case EditOp::kDelete:
      return "delete";
    case EditOp::kExtract:
      return "extract";
    case EditOp::kTransform:
      return "transform";
    case EditOp::kWarp:
      return "warp";
  }
  return "?";
}

EditOp edit_op_from_string(const std::string& text) {
  for (EditOp op : {EditOp::kRecolor, EditOp::kDelete, EditOp::kExtract, EditOp::kTransform, EditOp::kWarp})
    if (to_string(op) == text) return op;
  throw InputError("unknown edit op '" + text + "' (expected recolor, delete, extract, transform or warp)");
}

void EditDescription::validate() const {
  selection.validate();
  transform.validate();
}

Json EditDescription::to_json() const {
  Json j;
  j["op"] = dff::to_string(op);
  j["selection"] = selection.to_json();
  j["transform"] = transform.to_json();
  j["color_map"] = color_map.to_json();
  j["compositor"] = dff::to_string(compositor);
  return j;
}

EditDescription EditDescription::from_json(const Json& j) {
  EditDescription e;
  e.op = edit_op_from_string(j.at("op").get<std::string>());
  e.selection = Selection::from_json(j.at("selection"));
  if (j.contains("transform")) e.transform = Similarity::from_json(j.at("transform"));
  if (j.contains("color_map")) e.color_map = ColorMap::from_json(j.at("color_map"));
  e.compositor = compositor_from_string(j.value("compositor", std::string("sum")));
  e.validate();
  return e;
}

Branch SceneSource::sample(Pass pass, const SampleInputs& in, std::span<const double> deltas, bool features) const {
  const auto n = static_cast<std::size_t>(in.size());
  if (deltas.size() != n) throw StructuralError("edit: delta count does not match samples");
  const bool same = features && view_.feature_pass == pass;
  FieldBatch values;
  view_.field(pass).evaluate(in, {true, same}, values);
  Branch b;
  b.alpha.resize(n);
  for (std::size_t k = 0; k < n; ++k) b.alpha[k] = alpha_from_sigma(values.sigma[static_cast<Eigen::Index>(k)], deltas[k]);
  b.color = std::move(values.color);
  if (same) {
    b.feature = std::move(values.feature);
  } else if (features) {
    FieldBatch f;
    view_.field(view_.feature_pass).evaluate(in, {false, true}, f);
    b.feature = std::move(f.feature);
  }
  return b;
}

EditedScene::EditedScene(EditDescription edit, const EditSource& source, const EditSource* target)
    : edit_(std::move(edit)), source_(&source), target_(target) {
  edit_.validate();
  if (edit_.op == EditOp::kWarp && !target_) throw InputError("edit: warp needs a target scene");
  const EditSource& selected = edit_.op == EditOp::kWarp ? *target_ : *source_;
  if (selected.feature_dim() != edit_.selection.dim())
    throw InputError("edit: selection dimension " + std::to_string(edit_.selection.dim()) +
                     " does not match scene features (" + std::to_string(selected.feature_dim()) + ")");
}

namespace {

Eigen::VectorXd probabilities(const Branch& b, const Selection& selection) {
  Eigen::VectorXd p(b.feature.cols());
  for (Eigen::Index i = 0; i < p.size(); ++i) p(i) = selection_probability(b.feature.col(i), selection);
  return p;
}

// alpha scaled by p, features dropped unless wanted.
Branch weighted(Branch b, const Eigen::VectorXd& p, bool keep_features, bool complement) {
  for (std::size_t k = 0; k < b.size(); ++k) {
    const double w = complement ? 1.0 - p(static_cast<Eigen::Index>(k)) : p(static_cast<Eigen::Index>(k));
    b.alpha[k] = w * b.alpha[k];
  }
  if (!keep_features) b.feature.resize(0, 0);
  return b;
}

SampleInputs moved_inputs(const SampleInputs& in, const Similarity& g) {
  SampleInputs out;
  out.resize(in.size());
  for (Eigen::Index i = 0; i < in.size(); ++i) {
    out.positions.col(i) = g.inverse_point(in.positions.col(i));
    out.directions.col(i) = g.inverse_direction(in.directions.col(i));
  }
  return out;
}

}  // namespace

std::pair<Branch, Branch> EditedScene::contributions(Pass pass, const SampleInputs& in,
                                                     std::span<const double> deltas, bool features) const {
  const std::size_t n = static_cast<std::size_t>(in.size());
  const Selection& sel = edit_.selection;
  Branch base = source_->sample(pass, in, deltas, true);
  switch (edit_.op) {
    case EditOp::kRecolor: {
      const Eigen::VectorXd p = probabilities(base, sel);
      Branch inside = weighted(base, p, features, false);
      for (Eigen::Index i = 0; i < inside.color.cols(); ++i) inside.color.col(i) = edit_.color_map.apply(inside.color.col(i));
      return {weighted(std::move(base), p, features, true), std::move(inside)};
    }
    case EditOp::kDelete: {
      const Eigen::VectorXd p = probabilities(base, sel);
      return {weighted(std::move(base), p, features, true), Branch::empty(n, feature_dim(), features)};
    }
    case EditOp::kExtract: {
      const Eigen::VectorXd p = probabilities(base, sel);
      return {weighted(std::move(base), p, features, false), Branch::empty(n, feature_dim(), features)};
    }
    case EditOp::kTransform: {
      const Eigen::VectorXd p = probabilities(base, sel);
      Branch moved = source_->sample(pass, moved_inputs(in, edit_.transform), deltas, true);
      const Eigen::VectorXd q = probabilities(moved, sel);
      return {weighted(std::move(base), p, features, true), weighted(std::move(moved), q, features, false)};
    }
    case EditOp::kWarp: {
      Branch moved = target_->sample(pass, moved_inputs(in, edit_.transform), deltas, true);
      const Eigen::VectorXd q = probabilities(moved, sel);
      if (!features) base.feature.resize(0, 0);
      Branch inserted = weighted(std::move(moved), q, features, false);
      if (features && inserted.feature.rows() != base.feature.rows())
        throw InputError("edit: warp target feature dimension differs from the source");
      return {std::move(base), std::move(inserted)};
    }
  }
  throw StructuralError("edit: unhandled op");
}

Branch EditedScene::sample(Pass pass, const SampleInputs& in, std::span<const double> deltas, bool features) const {
  auto [a, b] = contributions(pass, in, deltas, features);
  return mix_branches(a, b, edit_.compositor);
}

BlendedSource::BlendedSource(const EditSource& a, const EditSource& b, Compositor compositor)
    : a_(&a), b_(&b), compositor_(compositor) {
  if (a.feature_dim() != b.feature_dim()) throw InputError("blend: scenes have different feature dimensions");
}

Branch BlendedSource::sample(Pass pass, const SampleInputs& in, std::span<const double> deltas, bool features) const {
  return mix_branches(a_->sample(pass, in, deltas, features), b_->sample(pass, in, deltas, features), compositor_);
}

namespace {

struct SampledPass {
  std::vector<DepthSamples> samples;
  Branch branch;
  std::vector<CompositeWeights> weights;
};

SampledPass sample_pass(const EditSource& source, Pass pass, std::span<const Ray> rays,
                        std::vector<DepthSamples> samples, bool features) {
  SampledPass out;
  out.samples = std::move(samples);
  std::vector<double> deltas;
  for (const auto& s : out.samples) deltas.insert(deltas.end(), s.deltas.begin(), s.deltas.end());
  out.branch = source.sample(pass, build_inputs(rays, out.samples), deltas, features);
  out.weights.resize(rays.size());
  std::size_t offset = 0;
  for (std::size_t r = 0; r < rays.size(); ++r) {
    const std::size_t k = out.samples[r].size();
    out.weights[r] = weights_from_alpha(std::span<const double>(out.branch.alpha).subspan(offset, k));
    offset += k;
  }
  return out;
}

}  // namespace

RenderedBuffers render_edit(const EditSource& source, const Camera& camera, const RenderOptions& options) {
  camera.validate();
  const int h = camera.height, w = camera.width;
  const std::vector<Ray> rays = generate_rays(camera);
  const int dim = source.feature_dim();
  const Vec3 background = source.background();

  RenderedBuffers out;
  if (options.channels.rgb) out.rgb = Image(h, w, 3);
  if (options.channels.feature) out.feature = Image(h, w, dim);
  if (options.channels.depth) out.depth = Image(h, w, 1);
  out.opacity = Image(h, w, 1);

  const bool fine = options.mode == Pass::kFine;
  const std::size_t tile = static_cast<std::size_t>(std::max(1, options.tile_rays));
  const Rng base(options.seed);
  ConstantSource midpoint(0.5);
  for (std::size_t begin = 0; begin < rays.size(); begin += tile) {
    const std::size_t count = std::min(tile, rays.size() - begin);
    const std::span<const Ray> part = std::span<const Ray>(rays).subspan(begin, count);
    std::vector<Rng> streams;
    streams.reserve(count);
    for (std::size_t r = 0; r < count; ++r) streams.push_back(base.split(begin + r));

    std::vector<DepthSamples> coarse(count);
    for (std::size_t r = 0; r < count; ++r)
      coarse[r] = options.jitter ? stratified_sample(camera.near, camera.far, options.coarse_samples, streams[r])
                                 : stratified_sample(camera.near, camera.far, options.coarse_samples, midpoint);
    SampledPass result = sample_pass(source, Pass::kCoarse, part, std::move(coarse), options.channels.feature && !fine);
    if (fine) {
      std::vector<DepthSamples> merged(count);
      for (std::size_t r = 0; r < count; ++r) {
        const DepthSamples extra = importance_sample(result.samples[r], result.weights[r].weights,
                                                     options.fine_samples, camera.far, streams[r]);
        merged[r] = merge_samples(result.samples[r], extra, camera.far);
      }
      result = sample_pass(source, Pass::kFine, part, std::move(merged), options.channels.feature);
    }

    Eigen::Index offset = 0;
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t p = begin + i;
      const int row = static_cast<int>(p / w), col = static_cast<int>(p % w);
      const auto k = static_cast<Eigen::Index>(result.samples[i].size());
      const auto& wts = result.weights[i];
      if (out.rgb) {
        const Vec3 rgb = over_background(composite_color(wts, result.branch.color.middleCols(offset, k)), wts.opacity,
                                         background);
        for (int ch = 0; ch < 3; ++ch) out.rgb->at(row, col, ch) = static_cast<float>(rgb(ch));
      }
      if (out.feature) {
        const Eigen::VectorXd f = composite_feature(wts, result.branch.feature.middleCols(offset, k));
        for (int ch = 0; ch < dim; ++ch) out.feature->at(row, col, ch) = static_cast<float>(f(ch));
      }
      if (out.depth) out.depth->at(row, col) = static_cast<float>(composite_depth(wts, result.samples[i].depths));
      out.opacity.at(row, col) = static_cast<float>(wts.opacity);
      offset += k;
    }
  }
  return out;
}

}  // namespace dff
