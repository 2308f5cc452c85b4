#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "cursor_attn/error.hpp"

namespace cursor_attn {

inline constexpr int kCanvasWidth = 1280;
inline constexpr int kCanvasHeight = 900;

struct Rgb {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;
  bool operator==(const Rgb&) const = default;
};

inline constexpr Rgb kWhite{255, 255, 255};
inline constexpr Rgb kBlack{0, 0, 0};
inline constexpr Rgb kGreen{0, 255, 0};
inline constexpr Rgb kRed{255, 0, 0};

// Row-major RGBA raster, 8 bits per channel.
class ImageBuffer {
 public:
  ImageBuffer() : ImageBuffer(kCanvasWidth, kCanvasHeight) {}
  ImageBuffer(int width, int height, Rgb fill = kWhite)
      : width_(width), height_(height), pixels_(static_cast<std::size_t>(width) * height * 4) {
    if (width <= 0 || height <= 0) fail(ErrorKind::InvalidValue, "image dimensions must be positive");
    for (std::size_t i = 0; i < pixels_.size(); i += 4) {
      pixels_[i] = fill.r;
      pixels_[i + 1] = fill.g;
      pixels_[i + 2] = fill.b;
      pixels_[i + 3] = 255;
    }
  }

  int width() const { return width_; }
  int height() const { return height_; }
  bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < width_ && y < height_; }

  Rgb at(int x, int y) const {
    const std::size_t i = offset(x, y);
    return {pixels_[i], pixels_[i + 1], pixels_[i + 2]};
  }
  std::uint8_t alpha(int x, int y) const { return pixels_[offset(x, y) + 3]; }

  void set(int x, int y, Rgb c) {
    const std::size_t i = offset(x, y);
    pixels_[i] = c.r;
    pixels_[i + 1] = c.g;
    pixels_[i + 2] = c.b;
    pixels_[i + 3] = 255;
  }
  void set_rgba(int x, int y, Rgb c, std::uint8_t a) {
    set(x, y, c);
    pixels_[offset(x, y) + 3] = a;
  }

  const std::vector<std::uint8_t>& rgba() const { return pixels_; }
  std::vector<std::uint8_t>& rgba() { return pixels_; }

  bool operator==(const ImageBuffer&) const = default;

 private:
  std::size_t offset(int x, int y) const {
    return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x)) * 4;
  }

  int width_;
  int height_;
  std::vector<std::uint8_t> pixels_;
};

// Area-average downscale by an integer factor; channels become RGB reals in
// [0, 1], laid out height x width x 3.
inline std::vector<double> downscale_to_unit(const ImageBuffer& img, int factor) {
  if (factor <= 0 || img.width() % factor != 0 || img.height() % factor != 0)
    fail(ErrorKind::InvalidValue, "downscale factor must divide the image dimensions");
  const int ow = img.width() / factor;
  const int oh = img.height() / factor;
  std::vector<double> out(static_cast<std::size_t>(ow) * oh * 3, 0.0);
  const double norm = 1.0 / (255.0 * factor * factor);
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      unsigned sum[3] = {0, 0, 0};
      for (int dy = 0; dy < factor; ++dy)
        for (int dx = 0; dx < factor; ++dx) {
          const Rgb c = img.at(ox * factor + dx, oy * factor + dy);
          sum[0] += c.r;
          sum[1] += c.g;
          sum[2] += c.b;
        }
      double* px = &out[(static_cast<std::size_t>(oy) * ow + ox) * 3];
      for (int ch = 0; ch < 3; ++ch) px[ch] = sum[ch] * norm;
    }
  }
  return out;
}

}  // namespace cursor_attn
