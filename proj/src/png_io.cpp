// Copyright 2026 The pvkit Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <png.h>

#include <csetjmp>
#include <cstdio>
#include <memory>

#include <fmt/format.h>

#include "pvkit/formats.hpp"

namespace pvkit::formats {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using File = std::unique_ptr<std::FILE, FileCloser>;

File open_file(const fs::path& path, const char* mode) {
  File f(std::fopen(path.string().c_str(), mode));
  if (!f) throw IoError(fmt::format("cannot open {}", path.string()));
  return f;
}

void on_png_error(png_structp png, png_const_charp msg) {
  auto* out = static_cast<std::string*>(png_get_error_ptr(png));
  if (out) *out = msg;
  png_longjmp(png, 1);
}

void on_png_warning(png_structp, png_const_charp) {}

struct Decoded {
  int width = 0;
  int height = 0;
  int bit_depth = 0;
  int color_type = 0;
  std::vector<std::uint8_t> rows;  // packed, big-endian samples as stored
  std::size_t row_bytes = 0;
};

Decoded decode_png(const fs::path& path) {
  File f = open_file(path, "rb");
  std::uint8_t sig[8] = {};
  if (std::fread(sig, 1, 8, f.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw FormatError(FormatError::Kind::kBadImage, fmt::format("{} is not a PNG", path.string()));
  }
  std::string error;
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, &error, on_png_error, on_png_warning);
  if (!png) throw IoError("libpng: cannot create read struct");
  png_infop info = png_create_info_struct(png);
  Decoded d;
  std::vector<png_bytep> row_ptrs;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError(FormatError::Kind::kBadImage,
                      fmt::format("{}: {}", path.string(), error.empty() ? "decode error" : error));
  }
  png_init_io(png, f.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  d.width = static_cast<int>(png_get_image_width(png, info));
  d.height = static_cast<int>(png_get_image_height(png, info));
  d.bit_depth = png_get_bit_depth(png, info);
  d.color_type = png_get_color_type(png, info);
  if (png_get_interlace_type(png, info) != PNG_INTERLACE_NONE) png_set_interlace_handling(png);
  png_read_update_info(png, info);
  d.row_bytes = png_get_rowbytes(png, info);
  d.rows.resize(d.row_bytes * static_cast<std::size_t>(d.height));
  row_ptrs.resize(static_cast<std::size_t>(d.height));
  for (int r = 0; r < d.height; ++r) {
    row_ptrs[static_cast<std::size_t>(r)] = d.rows.data() + d.row_bytes * static_cast<std::size_t>(r);
  }
  png_read_image(png, row_ptrs.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return d;
}

void encode_png(const fs::path& path, int width, int height, int bit_depth, int color_type,
                const std::vector<std::uint8_t>& rows, std::size_t row_bytes) {
  File f = open_file(path, "wb");
  std::string error;
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, &error, on_png_error, on_png_warning);
  if (!png) throw IoError("libpng: cannot create write struct");
  png_infop info = png_create_info_struct(png);
  std::vector<png_bytep> row_ptrs(static_cast<std::size_t>(height));
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError(fmt::format("{}: {}", path.string(), error.empty() ? "encode error" : error));
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height),
               bit_depth, color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int r = 0; r < height; ++r) {
    row_ptrs[static_cast<std::size_t>(r)] =
        const_cast<png_bytep>(rows.data() + row_bytes * static_cast<std::size_t>(r));
  }
  png_write_image(png, row_ptrs.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  if (std::fflush(f.get()) != 0) throw IoError(fmt::format("short write to {}", path.string()));
}

}  // namespace

depth::RawImage16 read_png16(const fs::path& path) {
  const Decoded d = decode_png(path);
  if (d.color_type != PNG_COLOR_TYPE_GRAY) {
    throw FormatError(FormatError::Kind::kBadImage,
                      fmt::format("{}: expected a grayscale PNG", path.string()));
  }
  if (d.bit_depth != 16) {
    throw FormatError(FormatError::Kind::kBadImage,
                      fmt::format("{}: expected a 16-bit PNG, got {}-bit", path.string(),
                                  d.bit_depth));
  }
  depth::RawImage16 img{d.width, d.height,
                        std::vector<std::uint16_t>(static_cast<std::size_t>(d.width) * d.height)};
  for (int r = 0; r < d.height; ++r) {
    const std::uint8_t* row = d.rows.data() + d.row_bytes * static_cast<std::size_t>(r);
    for (int c = 0; c < d.width; ++c) {
      img.values[static_cast<std::size_t>(r) * d.width + c] =
          static_cast<std::uint16_t>((row[2 * c] << 8) | row[2 * c + 1]);
    }
  }
  return img;
}

void write_png16(const depth::RawImage16& image, const fs::path& path) {
  const std::size_t row_bytes = 2 * static_cast<std::size_t>(image.width);
  std::vector<std::uint8_t> rows(row_bytes * static_cast<std::size_t>(image.height));
  for (std::size_t i = 0; i < image.values.size(); ++i) {
    rows[2 * i] = static_cast<std::uint8_t>(image.values[i] >> 8);
    rows[2 * i + 1] = static_cast<std::uint8_t>(image.values[i] & 0xFF);
  }
  encode_png(path, image.width, image.height, 16, PNG_COLOR_TYPE_GRAY, rows, row_bytes);
}

Rgb8Image read_png_rgb8(const fs::path& path) {
  const Decoded d = decode_png(path);
  if (d.color_type != PNG_COLOR_TYPE_RGB || d.bit_depth != 8) {
    throw FormatError(FormatError::Kind::kBadImage,
                      fmt::format("{}: expected an 8-bit RGB PNG", path.string()));
  }
  Rgb8Image img{d.width, d.height, {}};
  img.rgb.reserve(static_cast<std::size_t>(d.width) * d.height * 3);
  for (int r = 0; r < d.height; ++r) {
    const std::uint8_t* row = d.rows.data() + d.row_bytes * static_cast<std::size_t>(r);
    img.rgb.insert(img.rgb.end(), row, row + 3 * static_cast<std::size_t>(d.width));
  }
  return img;
}

void write_png_rgb8(const Rgb8Image& image, const fs::path& path) {
  encode_png(path, image.width, image.height, 8, PNG_COLOR_TYPE_RGB, image.rgb,
             3 * static_cast<std::size_t>(image.width));
}

}  // namespace pvkit::formats
