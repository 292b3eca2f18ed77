#pragma once

#include <cstdint>
#include <filesystem>

#include "dff/scene.hpp"

namespace dff {

// Single-file checkpoint:
//   "DFFC", u32 version, u64 header length, JSON header (configs, train
//   config echo, iteration, rng state, feature pass, background, query
//   table, blob sizes), then coarse and fine parameters as float32.
inline constexpr std::uint32_t kCheckpointVersion = 1;

// Writes to a sibling temp file under an exclusive lock file, then renames.
void save_checkpoint(const SceneModel& scene, const std::filesystem::path& path);
SceneModel load_checkpoint(const std::filesystem::path& path);

}  // namespace dff
