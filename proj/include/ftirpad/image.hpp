#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ftirpad/error.hpp"

namespace ftirpad {

enum class ColorSpace { Rgb, Hsv, Gray };

inline std::string_view to_string(ColorSpace cs) {
  switch (cs) {
    case ColorSpace::Rgb: return "RGB";
    case ColorSpace::Hsv: return "HSV";
    case ColorSpace::Gray: return "GRAY";
  }
  return "?";
}

inline int channel_count(ColorSpace cs) { return cs == ColorSpace::Gray ? 1 : 3; }

struct Dims {
  int width = 0;
  int height = 0;
};

/// 8-bit raster, row-major, channels interleaved.  The invariants
/// (data size == w*h*c, GRAY <=> one channel) hold for every constructed
/// value; there is no way to build an Image that breaks them.
class Image {
public:
  Image() = default;

  Image(int width, int height, ColorSpace cs, std::uint8_t fill = 0)
      : width_(width), height_(height), cs_(cs) {
    if (width <= 0 || height <= 0)
      throw DataError("image dimensions must be positive, got " + std::to_string(width) + "x" +
                      std::to_string(height));
    data_.assign(static_cast<std::size_t>(width) * height * channels(), fill);
  }

  Image(int width, int height, ColorSpace cs, std::vector<std::uint8_t> data)
      : width_(width), height_(height), cs_(cs), data_(std::move(data)) {
    if (width <= 0 || height <= 0) throw DataError("image dimensions must be positive");
    if (data_.size() != static_cast<std::size_t>(width) * height * channels())
      throw DataError("image data length does not match width*height*channels");
  }

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channel_count(cs_); }
  ColorSpace color_space() const { return cs_; }
  bool empty() const { return data_.empty(); }
  std::size_t pixel_count() const { return static_cast<std::size_t>(width_) * height_; }

  std::uint8_t& at(int x, int y, int c = 0) { return data_[index(x, y, c)]; }
  std::uint8_t at(int x, int y, int c = 0) const { return data_[index(x, y, c)]; }

  std::span<std::uint8_t> data() { return data_; }
  std::span<const std::uint8_t> data() const { return data_; }
  const std::vector<std::uint8_t>& bytes() const { return data_; }

  /// Channel k as a standalone GRAY image.
  Image channel(int k) const {
    if (k < 0 || k >= channels()) throw DataError("channel index out of range");
    Image out(width_, height_, ColorSpace::Gray);
    const int c = channels();
    for (std::size_t i = 0; i < pixel_count(); ++i) out.data_[i] = data_[i * c + k];
    return out;
  }

  /// Relabels a three-channel image (e.g. after an external conversion).
  Image with_color_space(ColorSpace cs) const {
    if (channel_count(cs) != channels()) throw DataError("color space change alters channel count");
    Image out = *this;
    out.cs_ = cs;
    return out;
  }

  /// Physical resolution metadata; zero means unknown.
  double ppi_x = 0.0;
  double ppi_y = 0.0;

  friend bool operator==(const Image& a, const Image& b) {
    return a.width_ == b.width_ && a.height_ == b.height_ && a.cs_ == b.cs_ && a.data_ == b.data_;
  }

private:
  std::size_t index(int x, int y, int c) const {
    return (static_cast<std::size_t>(y) * width_ + x) * channels() + c;
  }

  int width_ = 0;
  int height_ = 0;
  ColorSpace cs_ = ColorSpace::Gray;
  std::vector<std::uint8_t> data_;
};

inline void require_color_space(const Image& img, ColorSpace cs, std::string_view op) {
  if (img.color_space() != cs)
    throw DataError(std::string(op) + ": expected " + std::string(to_string(cs)) + " input, got " +
                    std::string(to_string(img.color_space())));
}

/// Round-half-away-from-zero to an 8-bit sample, clamped to [0,255].
inline std::uint8_t saturate_u8(double v) {
  if (!(v > 0.0)) return 0;
  if (v >= 255.0) return 255;
  return static_cast<std::uint8_t>(v + 0.5);
}

}  // namespace ftirpad
