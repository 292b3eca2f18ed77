#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

namespace dff {

// Row-major H x W x C float image. Used for RGB, depth, opacity and
// D-channel feature maps alike.
struct Image {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<float> data;

  Image() = default;
  Image(int h, int w, int c, float fill = 0.0f)
      : height(h), width(w), channels(c), data(static_cast<std::size_t>(h) * w * c, fill) {}

  std::size_t index(int row, int col, int ch = 0) const {
    return (static_cast<std::size_t>(row) * width + col) * channels + ch;
  }
  float& at(int row, int col, int ch = 0) { return data[index(row, col, ch)]; }
  float at(int row, int col, int ch = 0) const { return data[index(row, col, ch)]; }
  const float* pixel(int row, int col) const { return data.data() + index(row, col); }
  float* pixel(int row, int col) { return data.data() + index(row, col); }

  std::size_t pixel_count() const { return static_cast<std::size_t>(height) * width; }
  bool empty() const { return data.empty(); }
  bool same_shape(const Image& o) const { return height == o.height && width == o.width && channels == o.channels; }
};

// 8-bit PNG with 1, 3 or 4 channels; values clamped to [0, 1] and rounded.
void write_png(const std::filesystem::path& path, const Image& image);
std::vector<unsigned char> encode_png(const Image& image);
Image read_png(const std::filesystem::path& path);

// Raw 8-bit values of a single-channel PNG (label masks).
std::vector<unsigned char> read_png_bytes(const std::filesystem::path& path, int& height, int& width);
void write_png_bytes(const std::filesystem::path& path, const std::vector<unsigned char>& values, int height,
                     int width);

// Bilinear resize with pixel-center alignment and edge clamping.
Image resize_bilinear(const Image& image, int height, int width);

}  // namespace dff
