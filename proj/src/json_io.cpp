#include "dff/json_io.hpp"

#include <cmath>
#include <fstream>
#include <numbers>

namespace dff {

Json vec3_to_json(const Vec3& v) { return Json::array({v.x(), v.y(), v.z()}); }

Vec3 vec3_from_json(const Json& j) {
  if (!j.is_array() || j.size() != 3) throw InputError("expected a 3-element array");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

Json camera_to_json(const Camera& c) {
  Json j;
  j["width"] = c.width;
  j["height"] = c.height;
  j["fx"] = c.intrinsics.fx;
  j["fy"] = c.intrinsics.fy;
  j["cx"] = c.intrinsics.cx;
  j["cy"] = c.intrinsics.cy;
  j["near"] = c.near;
  j["far"] = c.far;
  Json rot = Json::array();
  for (int r = 0; r < 3; ++r)
    for (int col = 0; col < 3; ++col) rot.push_back(c.rotation(r, col));
  j["rotation"] = rot;
  j["translation"] = vec3_to_json(c.translation);
  return j;
}

Camera camera_from_json(const Json& j) {
  try {
    Camera c;
    c.width = j.at("width").get<int>();
    c.height = j.at("height").get<int>();
    c.intrinsics.fx = j.at("fx").get<double>();
    c.intrinsics.fy = j.at("fy").get<double>();
    c.intrinsics.cx = j.at("cx").get<double>();
    c.intrinsics.cy = j.at("cy").get<double>();
    c.near = j.at("near").get<double>();
    c.far = j.at("far").get<double>();
    const auto& rot = j.at("rotation");
    if (!rot.is_array() || rot.size() != 9) throw InputError("camera rotation must have 9 entries");
    for (int r = 0; r < 3; ++r)
      for (int col = 0; col < 3; ++col) c.rotation(r, col) = rot[r * 3 + col].get<double>();
    c.translation = vec3_from_json(j.at("translation"));
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("camera: ") + e.what());
  }
}

Camera camera_from_pose(const Json& j, double near, double far) {
  if (!j.is_object()) throw InputError("pose must be a JSON object");
  Json full = j;
  if (!full.contains("near")) full["near"] = near;
  if (!full.contains("far")) full["far"] = far;
  if (full.contains("rotation")) return camera_from_json(full);
  try {
    const int width = full.at("width").get<int>();
    const int height = full.at("height").get<int>();
    const double fov = full.value("fov_degrees", 40.0);
    if (!(fov > 0.0 && fov < 180.0)) throw InputError("pose: fov_degrees must lie in (0, 180)");
    const double focal = 0.5 * width / std::tan(0.5 * fov * std::numbers::pi / 180.0);
    const Intrinsics k{focal, focal, 0.5 * (width - 1), 0.5 * (height - 1)};
    const Vec3 up = full.contains("up") ? vec3_from_json(full.at("up")) : Vec3(0, 1, 0);
    return Camera::look_at(vec3_from_json(full.at("eye")), vec3_from_json(full.at("target")), up, k, width, height,
                           full.at("near").get<double>(), full.at("far").get<double>());
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("pose: ") + e.what());
  }
}

Json field_config_to_json(const FieldConfig& c) {
  Json j;
  j["trunk_layers"] = c.trunk_layers;
  j["trunk_width"] = c.trunk_width;
  j["pe_len_pos"] = c.pe_len_pos;
  j["pe_len_dir"] = c.pe_len_dir;
  j["skip_at"] = c.skip_at;
  j["feature_dim"] = c.feature_dim;
  j["head_layers_color"] = c.head_layers_color;
  j["head_layers_feature"] = c.head_layers_feature;
  j["head_width"] = c.head_width;
  j["feature_mode"] = to_string(c.feature_mode);
  j["independent_pe"] = c.independent_pe;
  j["independent_pe_len"] = c.independent_pe_len;
  j["independent_layers"] = c.independent_layers;
  j["independent_width"] = c.independent_width;
  j["independent_skip_at"] = c.independent_skip_at;
  return j;
}

namespace {
template <typename V>
void read_opt(const Json& j, const char* key, V& out) {
  if (j.contains(key)) out = j[key].get<V>();
}
}  // namespace

FieldConfig field_config_from_json(const Json& j, FieldConfig c) {
  try {
    read_opt(j, "trunk_layers", c.trunk_layers);
    read_opt(j, "trunk_width", c.trunk_width);
    read_opt(j, "pe_len_pos", c.pe_len_pos);
    read_opt(j, "pe_len_dir", c.pe_len_dir);
    read_opt(j, "skip_at", c.skip_at);
    read_opt(j, "feature_dim", c.feature_dim);
    read_opt(j, "head_layers_color", c.head_layers_color);
    read_opt(j, "head_layers_feature", c.head_layers_feature);
    read_opt(j, "head_width", c.head_width);
    if (j.contains("feature_mode")) c.feature_mode = feature_mode_from_string(j["feature_mode"].get<std::string>());
    read_opt(j, "independent_pe", c.independent_pe);
    read_opt(j, "independent_pe_len", c.independent_pe_len);
    read_opt(j, "independent_layers", c.independent_layers);
    read_opt(j, "independent_width", c.independent_width);
    read_opt(j, "independent_skip_at", c.independent_skip_at);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("field config: ") + e.what());
  }
  return c;
}

Json train_config_to_json(const TrainConfig& c) {
  Json j;
  j["phase1_iters"] = c.phase1_iters;
  j["phase2_iters"] = c.phase2_iters;
  j["rays_per_batch"] = c.rays_per_batch;
  j["lr_start"] = c.lr_start;
  j["lr_end"] = c.lr_end;
  j["finetune_lr"] = c.finetune_lr;
  j["lambda_f"] = c.lambda_f;
  j["feature_sampling"] = to_string(c.feature_sampling);
  j["density_noise"] = c.density_noise;
  j["density_noise_std"] = c.density_noise_std;
  j["freeze_radiance"] = c.freeze_radiance;
  j["coarse_samples"] = c.coarse_samples;
  j["fine_samples"] = c.fine_samples;
  j["background"] = vec3_to_json(c.background);
  j["seed"] = c.seed;
  j["log_every"] = c.log_every;
  j["checkpoint_every"] = c.checkpoint_every;
  return j;
}

TrainConfig train_config_from_json(const Json& j, TrainConfig c) {
  try {
    read_opt(j, "phase1_iters", c.phase1_iters);
    read_opt(j, "phase2_iters", c.phase2_iters);
    read_opt(j, "rays_per_batch", c.rays_per_batch);
    read_opt(j, "lr_start", c.lr_start);
    read_opt(j, "lr_end", c.lr_end);
    read_opt(j, "finetune_lr", c.finetune_lr);
    read_opt(j, "lambda_f", c.lambda_f);
    if (j.contains("feature_sampling")) c.feature_sampling = pass_from_string(j["feature_sampling"].get<std::string>());
    read_opt(j, "density_noise", c.density_noise);
    read_opt(j, "density_noise_std", c.density_noise_std);
    read_opt(j, "freeze_radiance", c.freeze_radiance);
    read_opt(j, "coarse_samples", c.coarse_samples);
    read_opt(j, "fine_samples", c.fine_samples);
    if (j.contains("background")) c.background = vec3_from_json(j["background"]);
    read_opt(j, "seed", c.seed);
    read_opt(j, "log_every", c.log_every);
    read_opt(j, "checkpoint_every", c.checkpoint_every);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("train config: ") + e.what());
  }
  return c;
}

Json read_json_file(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw LoadError("missing file " + path.string());
  try {
    return Json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(path.string() + ": invalid JSON: " + e.what());
  }
}

void write_json_file(const std::filesystem::path& path, const Json& j) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << j.dump(2) << '\n';
}

}  // namespace dff
