/* Copyright 2026 The BlendLab Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// 8-bit RGB image decode/encode (PNG via libpng, JPEG via libjpeg) and the
// conversions between bytes and [-1, 1] CHW tensors.

#ifndef BLENDLAB_IMAGE_IO_HPP_
#define BLENDLAB_IMAGE_IO_HPP_

#include <jpeglib.h>
#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "blendlab/tensor.hpp"

namespace blendlab {

class ImageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Interleaved 8-bit RGB.
struct Image8 {
  int width = 0, height = 0;
  std::vector<std::uint8_t> rgb;
};

namespace detail {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

inline FilePtr open_file(const std::filesystem::path& p, const char* mode) {
  FilePtr f(std::fopen(p.c_str(), mode));
  if (!f) throw ImageError("cannot open " + p.string());
  return f;
}

inline bool has_magic(const std::filesystem::path& p, const std::vector<std::uint8_t>& magic) {
  std::ifstream in(p, std::ios::binary);
  std::vector<char> buf(magic.size());
  if (!in.read(buf.data(), static_cast<std::streamsize>(buf.size()))) return false;
  return std::equal(magic.begin(), magic.end(), buf.begin(),
                    [](std::uint8_t a, char b) { return a == static_cast<std::uint8_t>(b); });
}

inline Image8 decode_png(const std::filesystem::path& path) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    throw ImageError("png decode failed for " + path.string() + ": " + img.message);
  }
  img.format = PNG_FORMAT_RGB;
  Image8 out;
  out.width = static_cast<int>(img.width);
  out.height = static_cast<int>(img.height);
  out.rgb.resize(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, out.rgb.data(), 0, nullptr)) {
    png_image_free(&img);
    throw ImageError("png decode failed for " + path.string() + ": " + img.message);
  }
  return out;
}

struct JpegErrorMgr {
  jpeg_error_mgr base;
  std::jmp_buf jump;
};

inline Image8 decode_jpeg(const std::filesystem::path& path) {
  FilePtr f = open_file(path, "rb");
  jpeg_decompress_struct cinfo{};
  JpegErrorMgr err{};
  cinfo.err = jpeg_std_error(&err.base);
  err.base.error_exit = [](j_common_ptr c) { std::longjmp(reinterpret_cast<JpegErrorMgr*>(c->err)->jump, 1); };
  Image8 out;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw ImageError("jpeg decode failed for " + path.string());
  }
  jpeg_create_decompress(&cinfo);
  jpeg_stdio_src(&cinfo, f.get());
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  out.width = static_cast<int>(cinfo.output_width);
  out.height = static_cast<int>(cinfo.output_height);
  out.rgb.resize(static_cast<std::size_t>(out.width) * out.height * 3);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = out.rgb.data() + static_cast<std::size_t>(cinfo.output_scanline) * out.width * 3;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return out;
}

}  // namespace detail

inline Image8 read_image(const std::filesystem::path& path) {
  if (detail::has_magic(path, {0x89, 'P', 'N', 'G'})) return detail::decode_png(path);
  if (detail::has_magic(path, {0xFF, 0xD8, 0xFF})) return detail::decode_jpeg(path);
  throw ImageError("unsupported or unreadable image: " + path.string());
}

inline void write_png(const std::filesystem::path& path, const Image8& image) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width);
  img.height = static_cast<png_uint_32>(image.height);
  img.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&img, path.c_str(), 0, image.rgb.data(), 0, nullptr)) {
    throw ImageError("png encode failed for " + path.string() + ": " + img.message);
  }
}

inline void write_jpeg(const std::filesystem::path& path, const Image8& image, int quality = 92) {
  detail::FilePtr f = detail::open_file(path, "wb");
  jpeg_compress_struct cinfo{};
  detail::JpegErrorMgr err{};
  cinfo.err = jpeg_std_error(&err.base);
  err.base.error_exit = [](j_common_ptr c) { std::longjmp(reinterpret_cast<detail::JpegErrorMgr*>(c->err)->jump, 1); };
  if (setjmp(err.jump)) {
    jpeg_destroy_compress(&cinfo);
    throw ImageError("jpeg encode failed for " + path.string());
  }
  jpeg_create_compress(&cinfo);
  jpeg_stdio_dest(&cinfo, f.get());
  cinfo.image_width = static_cast<JDIMENSION>(image.width);
  cinfo.image_height = static_cast<JDIMENSION>(image.height);
  cinfo.input_components = 3;
  cinfo.in_color_space = JCS_RGB;
  jpeg_set_defaults(&cinfo);
  jpeg_set_quality(&cinfo, quality, TRUE);
  jpeg_start_compress(&cinfo, TRUE);
  while (cinfo.next_scanline < cinfo.image_height) {
    auto* row = const_cast<JSAMPLE*>(image.rgb.data() + static_cast<std::size_t>(cinfo.next_scanline) * image.width * 3);
    jpeg_write_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_compress(&cinfo);
  jpeg_destroy_compress(&cinfo);
}

// Largest centered square, then bilinear resize (area-averaged when
// shrinking by integer factors) to size x size.
inline Image8 center_crop_resize(const Image8& in, int size) {
  const int side = std::min(in.width, in.height);
  const int x0 = (in.width - side) / 2, y0 = (in.height - side) / 2;
  Image8 out;
  out.width = out.height = size;
  out.rgb.resize(static_cast<std::size_t>(size) * size * 3);
  const double scale = static_cast<double>(side) / size;
  if (side % size == 0) {
    const int f = side / size;
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x)
        for (int c = 0; c < 3; ++c) {
          int acc = 0;
          for (int dy = 0; dy < f; ++dy)
            for (int dx = 0; dx < f; ++dx)
              acc += in.rgb[(static_cast<std::size_t>(y0 + y * f + dy) * in.width + x0 + x * f + dx) * 3 + c];
          out.rgb[(static_cast<std::size_t>(y) * size + x) * 3 + c] =
              static_cast<std::uint8_t>((acc + f * f / 2) / (f * f));
        }
    return out;
  }
  for (int y = 0; y < size; ++y) {
    const double sy = std::clamp((y + 0.5) * scale - 0.5, 0.0, side - 1.0);
    const int ya = static_cast<int>(sy), yb = std::min(ya + 1, side - 1);
    const double fy = sy - ya;
    for (int x = 0; x < size; ++x) {
      const double sx = std::clamp((x + 0.5) * scale - 0.5, 0.0, side - 1.0);
      const int xa = static_cast<int>(sx), xb = std::min(xa + 1, side - 1);
      const double fx = sx - xa;
      for (int c = 0; c < 3; ++c) {
        auto px = [&](int yy, int xx) {
          return static_cast<double>(in.rgb[(static_cast<std::size_t>(y0 + yy) * in.width + x0 + xx) * 3 + c]);
        };
        const double v = (1 - fy) * ((1 - fx) * px(ya, xa) + fx * px(ya, xb)) + fy * ((1 - fx) * px(yb, xa) + fx * px(yb, xb));
        out.rgb[(static_cast<std::size_t>(y) * size + x) * 3 + c] = static_cast<std::uint8_t>(std::lround(v));
      }
    }
  }
  return out;
}

// Bytes -> [3, H, W] with x / 127.5 - 1.
template <class T>
Tensor<T> to_tensor(const Image8& img) {
  Tensor<T> t({3, img.height, img.width});
  const std::int64_t plane = static_cast<std::int64_t>(img.width) * img.height;
  for (std::int64_t i = 0; i < plane; ++i)
    for (int c = 0; c < 3; ++c)
      t[c * plane + i] = static_cast<T>(img.rgb[static_cast<std::size_t>(i) * 3 + c]) / T(127.5) - T(1);
  return t;
}

// [3, H, W] (or image n of [N, 3, H, W]) -> bytes, clamped to [-1, 1].
template <class T>
Image8 to_image(const Tensor<T>& t, std::int64_t n = 0) {
  const bool batched = t.rank() == 4;
  const std::int64_t h = t.dim(batched ? 2 : 1), w = t.dim(batched ? 3 : 2);
  const std::int64_t plane = h * w;
  const T* base = t.data() + (batched ? n * 3 * plane : 0);
  Image8 img;
  img.width = static_cast<int>(w);
  img.height = static_cast<int>(h);
  img.rgb.resize(static_cast<std::size_t>(plane) * 3);
  for (std::int64_t i = 0; i < plane; ++i)
    for (int c = 0; c < 3; ++c) {
      const double v = std::clamp(static_cast<double>(base[c * plane + i]), -1.0, 1.0);
      img.rgb[static_cast<std::size_t>(i) * 3 + c] = static_cast<std::uint8_t>(std::lround((v + 1.0) * 127.5));
    }
  return img;
}

// Tiles images of an [N, 3, H, W] batch into a grid with `cols` columns.
template <class T>
Image8 make_grid(const Tensor<T>& batch, std::int64_t cols) {
  const std::int64_t n = batch.dim(0), h = batch.dim(2), w = batch.dim(3);
  cols = std::max<std::int64_t>(1, std::min(cols, n));
  const std::int64_t rows = (n + cols - 1) / cols;
  Image8 grid;
  grid.width = static_cast<int>(cols * w);
  grid.height = static_cast<int>(rows * h);
  grid.rgb.assign(static_cast<std::size_t>(grid.width) * grid.height * 3, 0);
  for (std::int64_t k = 0; k < n; ++k) {
    Image8 tile = to_image(batch, k);
    const std::int64_t gy = (k / cols) * h, gx = (k % cols) * w;
    for (std::int64_t y = 0; y < h; ++y)
      std::copy_n(tile.rgb.data() + y * w * 3, w * 3,
                  grid.rgb.data() + ((gy + y) * grid.width + gx) * 3);
  }
  return grid;
}

}  // namespace blendlab

#endif  // BLENDLAB_IMAGE_IO_HPP_
