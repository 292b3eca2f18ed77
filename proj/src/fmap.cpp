#include "dff/fmap.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "dff/errors.hpp"

namespace dff {

static_assert(std::endian::native == std::endian::little, "fmap IO assumes a little-endian host");

namespace {

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  unsigned char b[4];
  std::memcpy(b, &v, 4);
  out.insert(out.end(), b, b + 4);
}

std::uint32_t get_u32(const unsigned char* p) {
  std::uint32_t v;
  std::memcpy(&v, p, 4);
  return v;
}

}  // namespace

std::vector<unsigned char> encode_fmap(const Image& map) {
  std::vector<unsigned char> out;
  out.reserve(kFmapHeaderBytes + map.data.size() * 4);
  out.insert(out.end(), kFmapMagic, kFmapMagic + 4);
  put_u32(out, kFmapVersion);
  put_u32(out, static_cast<std::uint32_t>(map.height));
  put_u32(out, static_cast<std::uint32_t>(map.width));
  put_u32(out, static_cast<std::uint32_t>(map.channels));
  const auto* bytes = reinterpret_cast<const unsigned char*>(map.data.data());
  out.insert(out.end(), bytes, bytes + map.data.size() * sizeof(float));
  return out;
}

Image decode_fmap(const std::vector<unsigned char>& bytes, const std::string& name) {
  if (bytes.size() < kFmapHeaderBytes) throw LoadError(name + ": truncated feature map header");
  if (std::memcmp(bytes.data(), kFmapMagic, 4) != 0) throw LoadError(name + ": bad magic (expected FMAP)");
  const std::uint32_t version = get_u32(bytes.data() + 4);
  if (version != kFmapVersion)
    throw LoadError(name + ": unsupported fmap version " + std::to_string(version) + " (reader supports " +
                    std::to_string(kFmapVersion) + ")");
  const std::uint32_t h = get_u32(bytes.data() + 8);
  const std::uint32_t w = get_u32(bytes.data() + 12);
  const std::uint32_t d = get_u32(bytes.data() + 16);
  const std::uint64_t count = static_cast<std::uint64_t>(h) * w * d;
  if (bytes.size() != kFmapHeaderBytes + count * 4)
    throw LoadError(name + ": truncated feature map (expected " + std::to_string(kFmapHeaderBytes + count * 4) +
                    " bytes, found " + std::to_string(bytes.size()) + ")");
  Image img(static_cast<int>(h), static_cast<int>(w), static_cast<int>(d));
  std::memcpy(img.data.data(), bytes.data() + kFmapHeaderBytes, count * 4);
  return img;
}

void write_fmap(const std::filesystem::path& path, const Image& map) {
  const auto bytes = encode_fmap(map);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Image read_fmap(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw LoadError("missing feature map " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_fmap(bytes, path.string());
}

}  // namespace dff
