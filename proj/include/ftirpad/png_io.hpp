#pragma once

#include <png.h>

#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <memory>
#include <string>
#include <vector>

#include "ftirpad/error.hpp"
#include "ftirpad/image.hpp"

namespace ftirpad {

namespace detail {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

constexpr double kMetersPerInch = 0.0254;

}  // namespace detail

/// Writes an 8-bit GRAY or RGB PNG.  HSV images are rejected: PNG has no
/// tag for them.  A pHYs chunk is emitted when the image carries ppi.
inline void write_png(const std::filesystem::path& path, const Image& img) {
  if (img.color_space() == ColorSpace::Hsv) throw DataError("write_png: HSV images cannot be stored as PNG");
  detail::FilePtr fp(std::fopen(path.string().c_str(), "wb"));
  if (!fp) throw ConfigError("cannot open for writing: " + path.string());

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw DataError("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw DataError("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw DataError("libpng error while writing " + path.string());
  }
  png_init_io(png, fp.get());
  // Fixed compression settings keep output bytes reproducible.
  png_set_compression_level(png, 6);
  png_set_filter(png, 0, PNG_FILTER_NONE);
  const int color_type = img.channels() == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB;
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width()), static_cast<png_uint_32>(img.height()), 8,
               color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  if (img.ppi_x > 0.0 && img.ppi_y > 0.0) {
    png_set_pHYs(png, info, static_cast<png_uint_32>(std::lround(img.ppi_x / detail::kMetersPerInch)),
                 static_cast<png_uint_32>(std::lround(img.ppi_y / detail::kMetersPerInch)), PNG_RESOLUTION_METER);
  }
  png_write_info(png, info);
  const std::size_t stride = static_cast<std::size_t>(img.width()) * img.channels();
  for (int y = 0; y < img.height(); ++y) {
    auto row = const_cast<png_bytep>(img.data().data() + y * stride);
    png_write_row(png, row);
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

namespace detail {

inline std::uint32_t be32(const unsigned char* p) {
  return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) | p[3];
}

/// Returns (x, y) pixels-per-meter from a pHYs chunk with unit=meter, if any.
inline std::optional<std::pair<std::uint32_t, std::uint32_t>> scan_phys(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  unsigned char buf[13];
  in.read(reinterpret_cast<char*>(buf), 8);
  while (in.read(reinterpret_cast<char*>(buf), 8)) {
    const std::uint32_t len = be32(buf);
    const std::string type(reinterpret_cast<char*>(buf + 4), 4);
    if (type == "pHYs" && len == 9) {
      if (!in.read(reinterpret_cast<char*>(buf), 9)) return std::nullopt;
      if (buf[8] != 1) return std::nullopt;
      return std::make_pair(be32(buf), be32(buf + 4));
    }
    if (type == "IDAT" || type == "IEND") return std::nullopt;
    in.seekg(static_cast<std::streamoff>(len) + 4, std::ios::cur);
  }
  return std::nullopt;
}

}  // namespace detail

/// Reads any PNG as 8-bit GRAY or RGB (palette expanded, 16-bit stripped,
/// alpha composited away).  ppi metadata is populated from pHYs when present.
inline Image read_png(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ConfigError("PNG not found: " + path.string());
  png_image pimg{};
  pimg.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&pimg, path.string().c_str()))
    throw DataError("cannot decode PNG " + path.string() + ": " + pimg.message);
  const bool gray = (pimg.format & PNG_FORMAT_FLAG_COLOR) == 0;
  pimg.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  std::vector<std::uint8_t> data(PNG_IMAGE_SIZE(pimg));
  if (!png_image_finish_read(&pimg, nullptr, data.data(), 0, nullptr)) {
    png_image_free(&pimg);
    throw DataError("cannot decode PNG " + path.string() + ": " + pimg.message);
  }
  Image img(static_cast<int>(pimg.width), static_cast<int>(pimg.height), gray ? ColorSpace::Gray : ColorSpace::Rgb,
            std::move(data));
  if (auto phys = detail::scan_phys(path)) {
    img.ppi_x = phys->first * detail::kMetersPerInch;
    img.ppi_y = phys->second * detail::kMetersPerInch;
  }
  return img;
}

}  // namespace ftirpad
