#include "dff/synthetic.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <set>

namespace dff {

namespace {

std::string shape_name(Shape s) { return s == Shape::kSphere ? "sphere" : "box"; }

Shape shape_from(const std::string& s) {
  if (s == "sphere") return Shape::kSphere;
  if (s == "box") return Shape::kBox;
  throw InputError("synthetic: unknown shape '" + s + "'");
}

bool overlaps(const SyntheticObject& a, const SyntheticObject& b) {
  if (a.shape == Shape::kSphere && b.shape == Shape::kSphere)
    return (a.center - b.center).norm() < a.size.x() + b.size.x();
  if (a.shape == Shape::kBox && b.shape == Shape::kBox)
    return ((a.center - b.center).cwiseAbs().array() < (a.size + b.size).array()).all();
  const auto& sphere = a.shape == Shape::kSphere ? a : b;
  const auto& box = a.shape == Shape::kSphere ? b : a;
  const Vec3 closest = sphere.center.cwiseMax(box.center - box.size).cwiseMin(box.center + box.size);
  return (closest - sphere.center).norm() < sphere.size.x();
}

double surface_area(const SyntheticObject& o) {
  if (o.shape == Shape::kSphere) return 4.0 * std::numbers::pi * o.size.x() * o.size.x();
  const Vec3 e = 2.0 * o.size;
  return 2.0 * (e.x() * e.y() + e.y() * e.z() + e.x() * e.z());
}

Vec3 sample_surface(const SyntheticObject& o, Rng& rng) {
  if (o.shape == Shape::kSphere) {
    Vec3 v(rng.normal(), rng.normal(), rng.normal());
    return o.center + o.size.x() * v.normalized();
  }
  const Vec3 e = 2.0 * o.size;
  const double areas[3] = {e.y() * e.z(), e.x() * e.z(), e.x() * e.y()};
  const double pick = rng.uniform() * (areas[0] + areas[1] + areas[2]);
  const int axis = pick < areas[0] ? 0 : (pick < areas[0] + areas[1] ? 1 : 2);
  Vec3 local(rng.uniform() * 2 - 1, rng.uniform() * 2 - 1, rng.uniform() * 2 - 1);
  local[axis] = rng.uniform() < 0.5 ? -1.0 : 1.0;
  return o.center + local.cwiseProduct(o.size);
}

std::optional<Hit> intersect_object(const SyntheticObject& o, const Ray& ray) {
  constexpr double kEps = 1e-9;
  if (o.shape == Shape::kSphere) {
    const Vec3 oc = ray.origin - o.center;
    const double b = ray.direction.dot(oc);
    const double c = oc.squaredNorm() - o.size.x() * o.size.x();
    const double disc = b * b - c;
    if (disc < 0) return std::nullopt;
    const double s = std::sqrt(disc);
    double t = -b - s;
    if (t <= kEps) t = -b + s;
    if (t <= kEps) return std::nullopt;
    Hit h;
    h.t = t;
    h.normal = (ray.at(t) - o.center).normalized();
    return h;
  }
  double t_enter = -std::numeric_limits<double>::infinity();
  double t_exit = std::numeric_limits<double>::infinity();
  int axis_enter = 0;
  for (int a = 0; a < 3; ++a) {
    const double lo = o.center[a] - o.size[a], hi = o.center[a] + o.size[a];
    if (std::abs(ray.direction[a]) < 1e-15) {
      if (ray.origin[a] < lo || ray.origin[a] > hi) return std::nullopt;
      continue;
    }
    double t0 = (lo - ray.origin[a]) / ray.direction[a];
    double t1 = (hi - ray.origin[a]) / ray.direction[a];
    if (t0 > t1) std::swap(t0, t1);
    if (t0 > t_enter) {
      t_enter = t0;
      axis_enter = a;
    }
    t_exit = std::min(t_exit, t1);
  }
  if (t_enter > t_exit || t_exit <= kEps) return std::nullopt;
  Hit h;
  h.t = t_enter > kEps ? t_enter : t_exit;
  h.normal = Vec3::Zero();
  h.normal[axis_enter] = ray.direction[axis_enter] > 0 ? -1.0 : 1.0;
  return h;
}

}  // namespace

SyntheticSpec SyntheticSpec::desk() {
  SyntheticSpec s;
  s.objects = {
      {Shape::kSphere, Vec3(-0.6, -0.05, 0.1), Vec3::Constant(0.45), Vec3(0.85, 0.15, 0.1), "sphere"},
      {Shape::kBox, Vec3(0.55, -0.1, -0.35), Vec3(0.3, 0.35, 0.3), Vec3(0.15, 0.75, 0.2), "box"},
      {Shape::kSphere, Vec3(0.35, 0.05, 0.65), Vec3::Constant(0.28), Vec3(0.15, 0.3, 0.9), "ball"},
  };
  return s;
}

Json SyntheticSpec::to_json() const {
  Json j;
  Json objs = Json::array();
  for (const auto& o : objects) {
    Json jo;
    jo["shape"] = shape_name(o.shape);
    jo["center"] = vec3_to_json(o.center);
    if (o.shape == Shape::kSphere)
      jo["radius"] = o.size.x();
    else
      jo["half_extents"] = vec3_to_json(o.size);
    jo["color"] = vec3_to_json(o.color);
    jo["label"] = o.label;
    objs.push_back(jo);
  }
  j["objects"] = objs;
  j["width"] = width;
  j["height"] = height;
  j["n_views"] = n_views;
  j["n_holdout"] = n_holdout;
  j["feature_dim"] = feature_dim;
  j["seed"] = seed;
  j["camera_radius"] = camera_radius;
  j["fov_degrees"] = fov_degrees;
  j["near"] = near;
  j["far"] = far;
  j["gt_points"] = gt_points;
  j["light"] = vec3_to_json(light);
  j["background"] = vec3_to_json(background);
  return j;
}

SyntheticSpec SyntheticSpec::from_json(const Json& j) {
  SyntheticSpec s;
  try {
    if (j.contains("objects")) {
      for (const auto& jo : j["objects"]) {
        SyntheticObject o;
        o.shape = shape_from(jo.at("shape").get<std::string>());
        o.center = vec3_from_json(jo.at("center"));
        if (o.shape == Shape::kSphere)
          o.size = Vec3::Constant(jo.at("radius").get<double>());
        else
          o.size = vec3_from_json(jo.at("half_extents"));
        o.color = vec3_from_json(jo.at("color"));
        o.label = jo.at("label").get<std::string>();
        s.objects.push_back(o);
      }
    } else {
      s.objects = desk().objects;
    }
    s.width = j.value("width", s.width);
    s.height = j.value("height", s.height);
    s.n_views = j.value("n_views", s.n_views);
    s.n_holdout = j.value("n_holdout", s.n_holdout);
    s.feature_dim = j.value("feature_dim", s.feature_dim);
    s.seed = j.value("seed", s.seed);
    s.camera_radius = j.value("camera_radius", s.camera_radius);
    s.fov_degrees = j.value("fov_degrees", s.fov_degrees);
    s.near = j.value("near", s.near);
    s.far = j.value("far", s.far);
    s.gt_points = j.value("gt_points", s.gt_points);
    if (j.contains("light")) s.light = vec3_from_json(j["light"]);
    if (j.contains("background")) s.background = vec3_from_json(j["background"]);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("synthetic spec: ") + e.what());
  }
  return s;
}

SyntheticScene::SyntheticScene(SyntheticSpec spec, QueryEmbeddingTable embeddings)
    : spec_(std::move(spec)), embeddings_(std::move(embeddings)) {
  std::set<std::string> seen;
  for (std::size_t i = 0; i < spec_.objects.size(); ++i) {
    const auto& o = spec_.objects[i];
    if (o.label.empty() || o.label == kBackgroundLabel || !seen.insert(o.label).second)
      throw InputError("synthetic: object labels must be unique, non-empty and not '" + kBackgroundLabel + "'");
    if ((o.size.array() <= 0).any()) throw InputError("synthetic: object '" + o.label + "' has a non-positive size");
    for (std::size_t k = 0; k < i; ++k)
      if (overlaps(o, spec_.objects[k]))
        throw InputError("synthetic: objects '" + spec_.objects[k].label + "' and '" + o.label + "' overlap");
  }
}

std::optional<Hit> SyntheticScene::intersect(const Ray& ray) const {
  std::optional<Hit> best;
  for (std::size_t i = 0; i < spec_.objects.size(); ++i) {
    auto h = intersect_object(spec_.objects[i], ray);
    if (h && (!best || h->t < best->t)) {
      h->object = static_cast<int>(i);
      best = h;
    }
  }
  return best;
}

int SyntheticScene::inside(const Vec3& x) const {
  for (std::size_t i = 0; i < spec_.objects.size(); ++i) {
    const auto& o = spec_.objects[i];
    const bool in = o.shape == Shape::kSphere ? (x - o.center).squaredNorm() <= o.size.x() * o.size.x()
                                              : ((x - o.center).cwiseAbs().array() <= o.size.array()).all();
    if (in) return static_cast<int>(i);
  }
  return -1;
}

Vec3 SyntheticScene::outward_normal(int object, const Vec3& x) const {
  const auto& o = spec_.objects[object];
  const Vec3 rel = x - o.center;
  if (o.shape == Shape::kSphere) return rel.norm() > 0 ? rel.normalized() : Vec3::UnitY();
  Eigen::Index axis = 0;
  rel.cwiseQuotient(o.size).cwiseAbs().maxCoeff(&axis);
  Vec3 n = Vec3::Zero();
  n[axis] = rel[axis] >= 0 ? 1.0 : -1.0;
  return n;
}

Vec3 SyntheticScene::shade(int object, const Vec3& normal) const {
  const double lambert = std::max(0.0, normal.dot(spec_.light.normalized()));
  return spec_.objects[object].color * (0.35 + 0.65 * lambert);
}

std::vector<Camera> SyntheticScene::cameras() const {
  const auto& s = spec_;
  const double focal = 0.5 * s.width / std::tan(0.5 * s.fov_degrees * std::numbers::pi / 180.0);
  const Intrinsics k{focal, focal, (s.width - 1) / 2.0, (s.height - 1) / 2.0};
  std::vector<Camera> out;
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < s.n_views; ++i) {
    const double az = i * golden;
    const double el = (-25.0 + 80.0 * (i + 0.5) / s.n_views) * std::numbers::pi / 180.0;
    const Vec3 eye = s.camera_radius * Vec3(std::cos(el) * std::sin(az), std::sin(el), std::cos(el) * std::cos(az));
    out.push_back(Camera::look_at(eye, Vec3::Zero(), Vec3::UnitY(), k, s.width, s.height, s.near, s.far));
  }
  return out;
}

AnalyticField::AnalyticField(const SyntheticScene& scene, double density)
    : scene_(&scene), density_(density), dim_(scene.embeddings().dim()) {}

void AnalyticField::evaluate(const SampleInputs& in, FieldChannels channels, FieldBatch& out) const {
  const Eigen::Index n = in.size();
  out.sigma = Eigen::VectorXd::Zero(channels.radiance ? n : 0);
  out.sigma_raw = out.sigma;
  out.color = Eigen::Matrix3Xd::Zero(3, channels.radiance ? n : 0);
  out.feature = Eigen::MatrixXd::Zero(dim_, channels.feature ? n : 0);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vec3 x = in.positions.col(i);
    const int obj = scene_->inside(x);
    if (obj < 0) continue;
    if (channels.radiance) {
      out.sigma(i) = density_;
      out.sigma_raw(i) = density_;
      out.color.col(i) = scene_->shade(obj, scene_->outward_normal(obj, x));
    }
    if (channels.feature) out.feature.col(i) = scene_->embeddings().vector(scene_->spec().objects[obj].label);
  }
}

QueryEmbeddingTable make_embeddings(const std::vector<std::string>& labels, int dim, std::uint64_t seed) {
  if (dim < 1) throw InputError("embeddings: dim must be >= 1");
  const Rng base(seed);
  for (std::uint64_t attempt = 0; attempt < 10000; ++attempt) {
    Rng rng = base.split(attempt);
    std::vector<Eigen::VectorXd> vs;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      Eigen::VectorXd v(dim);
      for (int k = 0; k < dim; ++k) v(k) = rng.normal();
      // Round-trip through float so stored and in-memory vectors agree.
      v = v.normalized().cast<float>().cast<double>();
      vs.push_back(v);
    }
    bool ok = true;
    for (std::size_t a = 0; a < vs.size() && ok; ++a)
      for (std::size_t b = 0; b < a && ok; ++b)
        if (std::abs(vs[a].dot(vs[b])) >= 0.3) ok = false;
    if (!ok) continue;
    QueryEmbeddingTable table("synthetic", dim);
    for (std::size_t i = 0; i < labels.size(); ++i) table.add(labels[i], vs[i]);
    return table;
  }
  throw InputError("embeddings: cannot find " + std::to_string(labels.size()) + " near-orthogonal vectors in " +
                   std::to_string(dim) + " dimensions");
}

TeacherDataset generate_synthetic(const SyntheticSpec& spec) {
  if (spec.n_views < 1 || spec.n_holdout < 0 || spec.n_holdout >= spec.n_views)
    throw InputError("synthetic: need n_views >= 1 and 0 <= n_holdout < n_views");
  std::vector<std::string> labels;
  for (const auto& o : spec.objects) labels.push_back(o.label);
  labels.push_back(kBackgroundLabel);
  // Validates overlaps before any work; embeddings filled below.
  SyntheticScene probe(spec, QueryEmbeddingTable("synthetic", spec.feature_dim));
  const SyntheticScene scene(spec, make_embeddings(labels, spec.feature_dim, spec.seed));
  const auto& table = scene.embeddings();

  TeacherDataset ds;
  ds.feature_dim = spec.feature_dim;
  ds.queries = table;
  ds.synthetic_spec = spec.to_json();
  ds.gt_labels.push_back(kBackgroundLabel);
  for (const auto& o : spec.objects) ds.gt_labels.push_back(o.label);

  std::set<int> holdout;
  for (int j = 0; j < spec.n_holdout; ++j)
    holdout.insert(static_cast<int>(std::floor((j + 0.5) * spec.n_views / spec.n_holdout)));

  const auto cameras = scene.cameras();
  const Eigen::VectorXd& bg_feature = table.vector(kBackgroundLabel);
  for (std::size_t v = 0; v < cameras.size(); ++v) {
    const Camera& cam = cameras[v];
    DatasetFrame f;
    f.camera = cam;
    f.train = !holdout.count(static_cast<int>(v));
    f.rgb = Image(cam.height, cam.width, 3);
    f.features = Image(cam.height, cam.width, spec.feature_dim);
    f.depth = Image(cam.height, cam.width, 1);
    f.labels = std::vector<unsigned char>(f.rgb.pixel_count(), 0);
    for (int r = 0; r < cam.height; ++r) {
      for (int c = 0; c < cam.width; ++c) {
        const Ray ray = generate_ray(cam, {r, c});
        const auto hit = scene.intersect(ray);
        Vec3 color = spec.background;
        const Eigen::VectorXd* feat = &bg_feature;
        if (hit) {
          color = scene.shade(hit->object, hit->normal);
          feat = &table.vector(spec.objects[hit->object].label);
          f.depth->at(r, c) = static_cast<float>(hit->t);
          (*f.labels)[static_cast<std::size_t>(r) * cam.width + c] = static_cast<unsigned char>(hit->object + 1);
        } else {
          f.depth->at(r, c) = std::numeric_limits<float>::infinity();
        }
        for (int ch = 0; ch < 3; ++ch)
          f.rgb.at(r, c, ch) = static_cast<float>(std::lround(std::clamp(color[ch], 0.0, 1.0) * 255.0)) / 255.0f;
        for (int ch = 0; ch < spec.feature_dim; ++ch) f.features.at(r, c, ch) = static_cast<float>((*feat)(ch));
      }
    }
    ds.frames.push_back(std::move(f));
  }

  // Surface points seen by at least one training camera.
  double total_area = 0.0;
  for (const auto& o : spec.objects) total_area += surface_area(o);
  Rng rng = Rng(spec.seed).split(0xfeed);
  LabeledPoints pts;
  std::vector<Vec3> kept;
  std::vector<int> kept_labels;
  for (std::size_t i = 0; i < spec.objects.size(); ++i) {
    const int count = static_cast<int>(std::lround(spec.gt_points * surface_area(spec.objects[i]) / total_area));
    for (int k = 0; k < count; ++k) {
      const Vec3 p = sample_surface(spec.objects[i], rng);
      bool visible = false;
      for (std::size_t v = 0; v < cameras.size(); ++v) {
        if (holdout.count(static_cast<int>(v))) continue;
        const Camera& cam = cameras[v];
        const Vec3 to = p - cam.translation;
        const double dist = to.norm();
        const Vec3 local = cam.rotation.transpose() * (to / dist);
        if (local.z() >= 0) continue;
        const double col = cam.intrinsics.cx + cam.intrinsics.fx * local.x() / -local.z();
        const double row = cam.intrinsics.cy - cam.intrinsics.fy * local.y() / -local.z();
        if (col < -0.5 || row < -0.5 || col > cam.width - 0.5 || row > cam.height - 0.5) continue;
        const auto hit = scene.intersect(Ray{cam.translation, to / dist});
        if (hit && hit->object == static_cast<int>(i) && std::abs(hit->t - dist) < 1e-6 * dist) {
          visible = true;
          break;
        }
      }
      if (visible) {
        kept.push_back(p);
        kept_labels.push_back(static_cast<int>(i) + 1);
      }
    }
  }
  pts.points.resize(3, static_cast<Eigen::Index>(kept.size()));
  for (std::size_t i = 0; i < kept.size(); ++i) pts.points.col(static_cast<Eigen::Index>(i)) = kept[i];
  pts.labels = std::move(kept_labels);
  ds.gt_points = std::move(pts);
  ds.validate();
  return ds;
}

}  // namespace dff
