#pragma once

// Small procedural drawing kit used to synthesise scenes and corpora.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>

#include "csislab/image.hpp"
#include "csislab/rng.hpp"

namespace csislab::procedural {

/// Multi-octave value noise in roughly [-1, 1].
class ValueNoise {
 public:
  explicit ValueNoise(std::uint64_t seed) : seed_(seed) {}

  double operator()(double x, double y, int octaves = 4) const {
    double sum = 0.0, amp = 1.0, norm = 0.0, freq = 1.0;
    for (int o = 0; o < octaves; ++o) {
      sum += amp * lattice(x * freq, y * freq, static_cast<std::uint64_t>(o));
      norm += amp;
      amp *= 0.5;
      freq *= 2.0;
    }
    return sum / norm;
  }

 private:
  double corner(std::int64_t ix, std::int64_t iy, std::uint64_t octave) const {
    const std::uint64_t h = splitmix64(seed_ ^ splitmix64(static_cast<std::uint64_t>(ix) * 0x9e3779b1ULL +
                                                          static_cast<std::uint64_t>(iy) * 0x85ebca77ULL + octave));
    return static_cast<double>(h >> 11) * 0x1.0p-52 - 1.0;
  }

  double lattice(double x, double y, std::uint64_t octave) const {
    const double fx = std::floor(x), fy = std::floor(y);
    const auto ix = static_cast<std::int64_t>(fx), iy = static_cast<std::int64_t>(fy);
    double tx = x - fx, ty = y - fy;
    tx = tx * tx * (3 - 2 * tx);
    ty = ty * ty * (3 - 2 * ty);
    const double a = corner(ix, iy, octave), b = corner(ix + 1, iy, octave);
    const double c = corner(ix, iy + 1, octave), d = corner(ix + 1, iy + 1, octave);
    return (1 - ty) * ((1 - tx) * a + tx * b) + ty * ((1 - tx) * c + tx * d);
  }

  std::uint64_t seed_;
};

inline void fill_gradient(LumaImage& img, double v0, double v1, double angle_rad) {
  const double c = std::cos(angle_rad), s = std::sin(angle_rad);
  const double span = std::abs(c) * img.width + std::abs(s) * img.height;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const double t = ((x - img.width / 2.0) * c + (y - img.height / 2.0) * s) / span + 0.5;
      img.at(x, y) = static_cast<float>(v0 + (v1 - v0) * t);
    }
}

inline void add_noise_texture(LumaImage& img, const ValueNoise& noise, double scale, double amplitude,
                              int octaves = 4) {
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      img.at(x, y) += static_cast<float>(amplitude * noise(x / scale, y / scale, octaves));
}

// Shape painters blend `value` (optionally textured) over the region.
template <typename Inside, typename Shade>
void paint(LumaImage& img, int x0, int y0, int x1, int y1, Inside&& inside, Shade&& shade) {
  x0 = std::max(x0, 0), y0 = std::max(y0, 0);
  x1 = std::min(x1, img.width - 1), y1 = std::min(y1, img.height - 1);
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x)
      if (inside(x + 0.5, y + 0.5)) img.at(x, y) = static_cast<float>(shade(x, y));
}

inline void fill_rect(LumaImage& img, double cx, double cy, double hw, double hh, double angle, double value,
                      const ValueNoise* texture = nullptr, double tex_amp = 0.0) {
  const double c = std::cos(angle), s = std::sin(angle);
  const double r = std::hypot(hw, hh);
  paint(
      img, static_cast<int>(cx - r), static_cast<int>(cy - r), static_cast<int>(cx + r), static_cast<int>(cy + r),
      [&](double x, double y) {
        const double dx = x - cx, dy = y - cy;
        const double u = dx * c + dy * s, v = -dx * s + dy * c;
        return std::abs(u) <= hw && std::abs(v) <= hh;
      },
      [&](int x, int y) { return value + (texture ? tex_amp * (*texture)(x / 9.0, y / 9.0, 3) : 0.0); });
}

inline void fill_ellipse(LumaImage& img, double cx, double cy, double rx, double ry, double angle, double value,
                         const ValueNoise* texture = nullptr, double tex_amp = 0.0) {
  const double c = std::cos(angle), s = std::sin(angle);
  const double r = std::max(rx, ry);
  paint(
      img, static_cast<int>(cx - r), static_cast<int>(cy - r), static_cast<int>(cx + r), static_cast<int>(cy + r),
      [&](double x, double y) {
        const double dx = x - cx, dy = y - cy;
        const double u = (dx * c + dy * s) / rx, v = (-dx * s + dy * c) / ry;
        return u * u + v * v <= 1.0;
      },
      [&](int x, int y) { return value + (texture ? tex_amp * (*texture)(x / 7.0, y / 7.0, 3) : 0.0); });
}

inline void draw_line(LumaImage& img, double x0, double y0, double x1, double y1, double width, double value) {
  const double len2 = (x1 - x0) * (x1 - x0) + (y1 - y0) * (y1 - y0);
  paint(
      img, static_cast<int>(std::min(x0, x1) - width), static_cast<int>(std::min(y0, y1) - width),
      static_cast<int>(std::max(x0, x1) + width), static_cast<int>(std::max(y0, y1) + width),
      [&](double x, double y) {
        double t = len2 > 0 ? ((x - x0) * (x1 - x0) + (y - y0) * (y1 - y0)) / len2 : 0.0;
        t = std::clamp(t, 0.0, 1.0);
        const double px = x0 + t * (x1 - x0), py = y0 + t * (y1 - y0);
        return std::hypot(x - px, y - py) <= width / 2;
      },
      [&](int, int) { return value; });
}

}  // namespace csislab::procedural
