#include "dff/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>

#include "dff/errors.hpp"

namespace dff {

namespace {

int color_type_for(int channels) {
  switch (channels) {
    case 1:
      return PNG_COLOR_TYPE_GRAY;
    case 3:
      return PNG_COLOR_TYPE_RGB;
    case 4:
      return PNG_COLOR_TYPE_RGBA;
    default:
      throw InputError("png: unsupported channel count " + std::to_string(channels));
  }
}

void append_bytes(png_structp png, png_bytep data, png_size_t length) {
  auto* out = static_cast<std::vector<unsigned char>*>(png_get_io_ptr(png));
  out->insert(out->end(), data, data + length);
}

void no_flush(png_structp) {}

std::vector<unsigned char> encode_raw(const unsigned char* bytes, int height, int width, int channels) {
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("png: cannot create write struct");
  png_infop info = png_create_info_struct(png);
  std::vector<unsigned char> out;
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, info ? &info : nullptr);
    throw std::runtime_error("png: encode failed");
  }
  png_set_write_fn(png, &out, append_bytes, no_flush);
  png_set_IHDR(png, info, width, height, 8, color_type_for(channels), PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int r = 0; r < height; ++r) {
    png_write_row(png, const_cast<png_bytep>(bytes + static_cast<std::size_t>(r) * width * channels));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

void write_file(const std::filesystem::path& path, const std::vector<unsigned char>& bytes) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("write failed: " + path.string());
}

struct Decoded {
  int height = 0, width = 0, channels = 0;
  std::vector<unsigned char> bytes;
};

Decoded decode_file(const std::filesystem::path& path) {
  std::unique_ptr<FILE, int (*)(FILE*)> file(std::fopen(path.c_str(), "rb"), &std::fclose);
  if (!file) throw LoadError("cannot open image " + path.string());
  unsigned char sig[8];
  if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
    throw LoadError("not a PNG file: " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) throw LoadError("png: cannot create read struct");
  Decoded d;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw LoadError("corrupt or truncated PNG: " + path.string());
  }
  png_init_io(png, file.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  png_set_strip_16(png);
  png_set_packing(png);
  const int type = png_get_color_type(png, info);
  if (type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (type == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (type == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);
  d.width = static_cast<int>(png_get_image_width(png, info));
  d.height = static_cast<int>(png_get_image_height(png, info));
  d.channels = png_get_channels(png, info);
  d.bytes.resize(static_cast<std::size_t>(d.height) * d.width * d.channels);
  std::vector<png_bytep> rows(d.height);
  for (int r = 0; r < d.height; ++r) rows[r] = d.bytes.data() + static_cast<std::size_t>(r) * d.width * d.channels;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return d;
}

}  // namespace

std::vector<unsigned char> encode_png(const Image& image) {
  color_type_for(image.channels);
  std::vector<unsigned char> bytes(image.data.size());
  std::transform(image.data.begin(), image.data.end(), bytes.begin(), [](float v) {
    const float c = std::isfinite(v) ? std::clamp(v, 0.0f, 1.0f) : 0.0f;
    return static_cast<unsigned char>(std::lround(c * 255.0f));
  });
  return encode_raw(bytes.data(), image.height, image.width, image.channels);
}

void write_png(const std::filesystem::path& path, const Image& image) { write_file(path, encode_png(image)); }

Image read_png(const std::filesystem::path& path) {
  const Decoded d = decode_file(path);
  Image img(d.height, d.width, d.channels);
  for (std::size_t i = 0; i < d.bytes.size(); ++i) img.data[i] = d.bytes[i] / 255.0f;
  return img;
}

std::vector<unsigned char> read_png_bytes(const std::filesystem::path& path, int& height, int& width) {
  Decoded d = decode_file(path);
  if (d.channels != 1) throw LoadError("expected a single-channel PNG: " + path.string());
  height = d.height;
  width = d.width;
  return std::move(d.bytes);
}

void write_png_bytes(const std::filesystem::path& path, const std::vector<unsigned char>& values, int height,
                     int width) {
  if (values.size() != static_cast<std::size_t>(height) * width) throw InputError("png: byte count mismatch");
  write_file(path, encode_raw(values.data(), height, width, 1));
}

Image resize_bilinear(const Image& image, int height, int width) {
  if (height <= 0 || width <= 0) throw InputError("resize: target size must be positive");
  if (image.height == height && image.width == width) return image;
  Image out(height, width, image.channels);
  const double sy = static_cast<double>(image.height) / height;
  const double sx = static_cast<double>(image.width) / width;
  for (int r = 0; r < height; ++r) {
    const double y = std::clamp((r + 0.5) * sy - 0.5, 0.0, image.height - 1.0);
    const int y0 = static_cast<int>(std::floor(y));
    const int y1 = std::min(y0 + 1, image.height - 1);
    const double wy = y - y0;
    for (int c = 0; c < width; ++c) {
      const double x = std::clamp((c + 0.5) * sx - 0.5, 0.0, image.width - 1.0);
      const int x0 = static_cast<int>(std::floor(x));
      const int x1 = std::min(x0 + 1, image.width - 1);
      const double wx = x - x0;
      const float* p00 = image.pixel(y0, x0);
      const float* p01 = image.pixel(y0, x1);
      const float* p10 = image.pixel(y1, x0);
      const float* p11 = image.pixel(y1, x1);
      float* dst = out.pixel(r, c);
      for (int ch = 0; ch < image.channels; ++ch) {
        const double top = (1 - wx) * p00[ch] + wx * p01[ch];
        const double bottom = (1 - wx) * p10[ch] + wx * p11[ch];
        dst[ch] = static_cast<float>((1 - wy) * top + wy * bottom);
      }
    }
  }
  return out;
}

}  // namespace dff
