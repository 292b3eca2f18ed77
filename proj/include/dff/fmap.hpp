#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dff/image.hpp"

namespace dff {

// Feature map file: "FMAP", u32 version, u32 H, u32 W, u32 D, then H*W*D
// float32, row-major, channels fastest. Everything little-endian.
inline constexpr char kFmapMagic[4] = {'F', 'M', 'A', 'P'};
inline constexpr std::uint32_t kFmapVersion = 1;
inline constexpr std::size_t kFmapHeaderBytes = 20;

std::vector<unsigned char> encode_fmap(const Image& map);
Image decode_fmap(const std::vector<unsigned char>& bytes, const std::string& name = "<memory>");

void write_fmap(const std::filesystem::path& path, const Image& map);
Image read_fmap(const std::filesystem::path& path);

}  // namespace dff
