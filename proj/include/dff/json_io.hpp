#pragma once

#include <filesystem>
#include <json.hpp>

#include "dff/field.hpp"
#include "dff/geometry.hpp"
#include "dff/train_config.hpp"

namespace dff {

using Json = nlohmann::ordered_json;

Json vec3_to_json(const Vec3& v);
Vec3 vec3_from_json(const Json& j);

// {"width","height","fx","fy","cx","cy","near","far","rotation": 9 row-major,
//  "translation": 3}
Json camera_to_json(const Camera& camera);
Camera camera_from_json(const Json& j);

// A full camera object, or a look-at pose {"eye", "target", "up"?, "width",
// "height", "fov_degrees"?}; missing near/far take the given defaults.
Camera camera_from_pose(const Json& j, double near, double far);

Json field_config_to_json(const FieldConfig& config);
// Missing keys keep their defaults.
FieldConfig field_config_from_json(const Json& j, FieldConfig base = {});

Json train_config_to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const Json& j, TrainConfig base = {});

Json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const Json& j);

}  // namespace dff
