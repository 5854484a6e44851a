#pragma once

// PNG read/write (libpng) and JPEG read (libjpeg). Masks are written as
// single-channel PNG so they stay lossless.

#include <jpeglib.h>
#include <png.h>

#include <algorithm>
#include <cctype>
#include <csetjmp>
#include <cstdio>
#include <memory>
#include <string>

#include "occage/facegeom/image.hpp"

namespace occage::fg {

namespace detail {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

inline FilePtr open_file(const std::string& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw IoError("cannot open " + path);
  return f;
}

}  // namespace detail

inline void write_png(const std::string& path, const Image& img) {
  if (!img.valid()) throw ValidationError("write_png: invalid image");
  auto f = detail::open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError("write_png: libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("write_png: encoding failed for " + path);
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), 8,
               img.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (std::size_t y = 0; y < img.height; ++y)
    png_write_row(png, const_cast<png_bytep>(img.data.data() + y * img.width * img.channels));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

inline void write_png(const std::string& path, const Mask& m) {
  Image g(m.height, m.width, 1);
  g.data = m.data;
  write_png(path, g);
}

// Decodes to 8-bit gray or RGB; alpha is dropped, palettes expanded.
inline Image read_png(const std::string& path) {
  auto f = detail::open_file(path, "rb");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("read_png: libpng init failed");
  }
  Image img;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("read_png: decoding failed for " + path);
  }
  png_init_io(png, f.get());
  png_read_info(png, info);
  const auto color = png_get_color_type(png, info);
  const auto depth = png_get_bit_depth(png, info);
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color & PNG_COLOR_MASK_ALPHA || png_get_valid(png, info, PNG_INFO_tRNS)) png_set_strip_alpha(png);
  png_read_update_info(png, info);
  const std::size_t ch = png_get_channels(png, info);
  img.height = png_get_image_height(png, info);
  img.width = png_get_image_width(png, info);
  img.channels = ch;
  img.data.resize(img.height * img.width * ch);
  for (std::size_t y = 0; y < img.height; ++y) png_read_row(png, img.data.data() + y * img.width * ch, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  if (ch != 1 && ch != 3) throw IoError("read_png: unsupported channel layout in " + path);
  return img;
}

namespace detail {

struct JpegErrorMgr {
  jpeg_error_mgr base;
  std::jmp_buf jump;
};

inline void jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegErrorMgr*>(cinfo->err);
  std::longjmp(err->jump, 1);
}

}  // namespace detail

inline Image read_jpeg(const std::string& path) {
  auto f = detail::open_file(path, "rb");
  jpeg_decompress_struct cinfo{};
  detail::JpegErrorMgr err{};
  cinfo.err = jpeg_std_error(&err.base);
  err.base.error_exit = detail::jpeg_error_exit;
  Image img;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw IoError("read_jpeg: decoding failed for " + path);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_stdio_src(&cinfo, f.get());
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = cinfo.num_components == 1 ? JCS_GRAYSCALE : JCS_RGB;
  jpeg_start_decompress(&cinfo);
  img.height = cinfo.output_height;
  img.width = cinfo.output_width;
  img.channels = static_cast<std::size_t>(cinfo.output_components);
  img.data.resize(img.height * img.width * img.channels);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = img.data.data() + cinfo.output_scanline * img.width * img.channels;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return img;
}

inline bool has_suffix(const std::string& s, const std::string& suffix) {
  if (s.size() < suffix.size()) return false;
  return std::equal(suffix.rbegin(), suffix.rend(), s.rbegin(),
                    [](char a, char b) { return std::tolower(static_cast<unsigned char>(a)) == b; });
}

inline Image read_image(const std::string& path) {
  if (has_suffix(path, ".jpg") || has_suffix(path, ".jpeg")) return read_jpeg(path);
  return read_png(path);
}

inline Mask read_mask(const std::string& path) {
  Image g = read_png(path);
  Mask m(g.height, g.width);
  for (std::size_t i = 0; i < g.height * g.width; ++i) {
    const std::uint8_t v = g.channels == 1 ? g.data[i] : g.data[3 * i];
    m.data[i] = v >= 128 ? 255 : 0;
  }
  return m;
}

}  // namespace occage::fg
