#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "csislab/common.hpp"

namespace csislab {

/// Row-major single-channel luminance image with values in [0, 1].
struct LumaImage {
  int width = 0;
  int height = 0;
  std::vector<float> pixels;

  LumaImage() = default;
  LumaImage(int w, int h, float fill = 0.0f)
      : width(w), height(h), pixels(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill) {
    require(w >= 0 && h >= 0, ErrorCode::InvalidArgument, "negative image size");
  }

  std::size_t size() const noexcept { return pixels.size(); }
  bool empty() const noexcept { return pixels.empty(); }

  float& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  float at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }

  /// Edge-replicating accessor.
  float clamped(int x, int y) const {
    x = std::clamp(x, 0, width - 1);
    y = std::clamp(y, 0, height - 1);
    return at(x, y);
  }

  void clamp01() {
    for (auto& p : pixels) p = std::clamp(p, 0.0f, 1.0f);
  }

  friend bool operator==(const LumaImage&, const LumaImage&) = default;
};

/// Planar RGB image with values in [0, 1].
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<float> r, g, b;

  RgbImage() = default;
  RgbImage(int w, int h)
      : width(w),
        height(h),
        r(static_cast<std::size_t>(w) * h, 0.0f),
        g(static_cast<std::size_t>(w) * h, 0.0f),
        b(static_cast<std::size_t>(w) * h, 0.0f) {}

  std::size_t size() const noexcept { return r.size(); }

  friend bool operator==(const RgbImage&, const RgbImage&) = default;
};

// Luma coefficients of the reference PDQ implementation, applied in float on
// 8-bit scale values so decoded files hash exactly like the reference tool.
inline constexpr float kLumaR = 0.299f;
inline constexpr float kLumaG = 0.587f;
inline constexpr float kLumaB = 0.114f;

/// Maps a 0..255-scale luma value into [0, 1] such that multiplying by 255
/// in float recovers it exactly; the PDQ path works on the 0..255 scale.
inline float unit_from_255(float y) {
  float p = y / 255.0f;
  while (p * 255.0f < y) p = std::nextafter(p, 2.0f);
  while (p * 255.0f > y) p = std::nextafter(p, -1.0f);
  return p;
}

inline LumaImage to_luma(const RgbImage& rgb) {
  LumaImage out(rgb.width, rgb.height);
  for (std::size_t i = 0; i < rgb.size(); ++i) {
    const float y = kLumaR * (rgb.r[i] * 255.0f) + kLumaG * (rgb.g[i] * 255.0f) + kLumaB * (rgb.b[i] * 255.0f);
    out.pixels[i] = unit_from_255(y);
  }
  return out;
}

inline RgbImage to_rgb(const LumaImage& luma) {
  RgbImage out(luma.width, luma.height);
  out.r = luma.pixels;
  out.g = luma.pixels;
  out.b = luma.pixels;
  return out;
}

inline double max_abs_diff(const LumaImage& a, const LumaImage& b) {
  require(a.width == b.width && a.height == b.height, ErrorCode::InvalidArgument, "image sizes differ");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(double(a.pixels[i]) - double(b.pixels[i])));
  return m;
}

inline double l2_diff(const LumaImage& a, const LumaImage& b) {
  require(a.width == b.width && a.height == b.height, ErrorCode::InvalidArgument, "image sizes differ");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = double(a.pixels[i]) - double(b.pixels[i]);
    s += d * d;
  }
  return std::sqrt(s);
}

inline double mean_value(const LumaImage& img) {
  double s = 0.0;
  for (float p : img.pixels) s += p;
  return img.empty() ? 0.0 : s / static_cast<double>(img.size());
}

}  // namespace csislab
