#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>

#include "csislab/common.hpp"
#include "csislab/geometry.hpp"
#include "csislab/image.hpp"
#include "csislab/rng.hpp"

namespace csislab {

/// Bilinear sample with edge replication outside the frame.
inline float sample_bilinear(const LumaImage& img, double x, double y) {
  const double fx = std::floor(x), fy = std::floor(y);
  const int x0 = static_cast<int>(fx), y0 = static_cast<int>(fy);
  const double ax = x - fx, ay = y - fy;
  const double top = (1 - ax) * img.clamped(x0, y0) + ax * img.clamped(x0 + 1, y0);
  const double bottom = (1 - ax) * img.clamped(x0, y0 + 1) + ax * img.clamped(x0 + 1, y0 + 1);
  return static_cast<float>((1 - ay) * top + ay * bottom);
}

/// Pixel-centre aligned bilinear resize.
inline LumaImage resize(const LumaImage& img, int width, int height) {
  require(width > 0 && height > 0, ErrorCode::InvalidArgument, "resize target must be positive");
  LumaImage out(width, height);
  const double sx = static_cast<double>(img.width) / width;
  const double sy = static_cast<double>(img.height) / height;
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) out.at(x, y) = sample_bilinear(img, (x + 0.5) * sx - 0.5, (y + 0.5) * sy - 0.5);
  return out;
}

inline LumaImage resize_by(const LumaImage& img, double factor) {
  return resize(img, std::max(1, static_cast<int>(std::lround(img.width * factor))),
                std::max(1, static_cast<int>(std::lround(img.height * factor))));
}

/// Warps through `forward` (source pixel -> output pixel); uncovered output
/// pixels take the nearest edge value.
inline LumaImage warp(const LumaImage& img, const Mat3& forward, int out_width, int out_height) {
  const Mat3 inv = forward.inverse();
  LumaImage out(out_width, out_height);
  for (int y = 0; y < out_height; ++y) {
    for (int x = 0; x < out_width; ++x) {
      const auto [sx, sy] = inv.apply(x, y);
      out.at(x, y) = sample_bilinear(img, sx, sy);
    }
  }
  return out;
}

inline Mat3 about_center(const LumaImage& img, const Mat3& t) {
  const double cx = (img.width - 1) / 2.0, cy = (img.height - 1) / 2.0;
  return Mat3::translate(cx, cy) * t * Mat3::translate(-cx, -cy);
}

inline LumaImage rotate(const LumaImage& img, double degrees) {
  return warp(img, about_center(img, Mat3::rotate_deg(degrees)), img.width, img.height);
}

inline LumaImage adjust_brightness(LumaImage img, double factor) {
  for (auto& p : img.pixels) p = static_cast<float>(std::clamp(p * factor, 0.0, 1.0));
  return img;
}

/// Blends towards the mean intensity.
inline LumaImage adjust_contrast(LumaImage img, double factor) {
  const double mean = mean_value(img);
  for (auto& p : img.pixels) p = static_cast<float>(std::clamp(mean + factor * (p - mean), 0.0, 1.0));
  return img;
}

inline RgbImage adjust_brightness(RgbImage img, double factor) {
  for (auto* ch : {&img.r, &img.g, &img.b})
    for (auto& p : *ch) p = static_cast<float>(std::clamp(p * factor, 0.0, 1.0));
  return img;
}

inline RgbImage adjust_contrast(RgbImage img, double factor) {
  const double mean = mean_value(to_luma(img));
  for (auto* ch : {&img.r, &img.g, &img.b})
    for (auto& p : *ch) p = static_cast<float>(std::clamp(mean + factor * (p - mean), 0.0, 1.0));
  return img;
}

/// Blends each pixel towards its own grey value.
inline RgbImage adjust_saturation(RgbImage img, double factor) {
  const LumaImage grey = to_luma(img);
  for (auto* ch : {&img.r, &img.g, &img.b})
    for (std::size_t i = 0; i < ch->size(); ++i) {
      const double gv = grey.pixels[i];
      (*ch)[i] = static_cast<float>(std::clamp(gv + factor * ((*ch)[i] - gv), 0.0, 1.0));
    }
  return img;
}

struct CropWindow {
  int x = 0, y = 0, width = 0, height = 0;
};

inline CropWindow center_crop_window(int width, int height, double fraction) {
  require(fraction > 0.0 && fraction <= 1.0, ErrorCode::InvalidArgument, "crop fraction must be in (0, 1]");
  CropWindow w;
  w.width = std::max(1, static_cast<int>(std::lround(width * fraction)));
  w.height = std::max(1, static_cast<int>(std::lround(height * fraction)));
  w.x = (width - w.width) / 2;
  w.y = (height - w.height) / 2;
  return w;
}

inline LumaImage crop(const LumaImage& img, const CropWindow& w) {
  LumaImage out(w.width, w.height);
  for (int y = 0; y < w.height; ++y)
    for (int x = 0; x < w.width; ++x) out.at(x, y) = img.at(w.x + x, w.y + y);
  return out;
}

inline LumaImage center_crop(const LumaImage& img, double fraction) {
  return crop(img, center_crop_window(img.width, img.height, fraction));
}

inline RgbImage center_crop(const RgbImage& img, double fraction) {
  const auto w = center_crop_window(img.width, img.height, fraction);
  RgbImage out(w.width, w.height);
  for (int y = 0; y < w.height; ++y)
    for (int x = 0; x < w.width; ++x) {
      const std::size_t src = static_cast<std::size_t>(w.y + y) * img.width + (w.x + x);
      const std::size_t dst = static_cast<std::size_t>(y) * w.width + x;
      out.r[dst] = img.r[src];
      out.g[dst] = img.g[src];
      out.b[dst] = img.b[src];
    }
  return out;
}

// --------------------------------------------------------------------------
// Syntactic variation levels used to score detection robustness.

struct FactorRange {
  double lo = 1.0, hi = 1.0;

  bool contains(double v) const { return v >= lo && v <= hi; }
  friend bool operator==(const FactorRange&, const FactorRange&) = default;
};

enum class Level { Identity, Low, Medium, High };

inline std::string_view to_string(Level l) {
  switch (l) {
    case Level::Identity: return "identity";
    case Level::Low: return "low";
    case Level::Medium: return "medium";
    case Level::High: return "high";
  }
  return "?";
}

inline Level parse_level(std::string_view s) {
  if (s == "identity") return Level::Identity;
  if (s == "low") return Level::Low;
  if (s == "medium") return Level::Medium;
  if (s == "high") return Level::High;
  throw Error(ErrorCode::InvalidArgument, "unknown variation level '" + std::string(s) + "'");
}

struct VariationLevel {
  Level level = Level::Identity;
  FactorRange brightness, contrast, saturation, crop;

  /// Brightness/contrast/saturation lo/hi and centre-crop fraction per level:
  /// low 0.9/1.1 (crop 0.9/1.0), medium 0.7/1.3 (0.7/1.0), high 0.5/1.5 (0.5/1.0).
  static VariationLevel of(Level level) {
    switch (level) {
      case Level::Identity: return {Level::Identity, {1, 1}, {1, 1}, {1, 1}, {1, 1}};
      case Level::Low: return {Level::Low, {0.9, 1.1}, {0.9, 1.1}, {0.9, 1.1}, {0.9, 1.0}};
      case Level::Medium: return {Level::Medium, {0.7, 1.3}, {0.7, 1.3}, {0.7, 1.3}, {0.7, 1.0}};
      case Level::High: return {Level::High, {0.5, 1.5}, {0.5, 1.5}, {0.5, 1.5}, {0.5, 1.0}};
    }
    throw Error(ErrorCode::InvalidArgument, "bad level");
  }
};

struct VariationFactors {
  double brightness = 1.0, contrast = 1.0, saturation = 1.0, crop = 1.0;
};

/// Draws one factor per transformation, in application order.
inline VariationFactors sample_variation(const VariationLevel& level, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "variation"));
  VariationFactors f;
  f.brightness = uniform(rng, level.brightness.lo, level.brightness.hi);
  f.contrast = uniform(rng, level.contrast.lo, level.contrast.hi);
  f.saturation = uniform(rng, level.saturation.lo, level.saturation.hi);
  f.crop = uniform(rng, level.crop.lo, level.crop.hi);
  return f;
}

/// brightness -> contrast -> (saturation, a no-op on luma) -> centre crop.
inline LumaImage apply_factors(const LumaImage& img, const VariationFactors& f) {
  LumaImage out = img;
  if (f.brightness != 1.0) out = adjust_brightness(std::move(out), f.brightness);
  if (f.contrast != 1.0) out = adjust_contrast(std::move(out), f.contrast);
  if (f.crop != 1.0) out = center_crop(out, f.crop);
  out.clamp01();
  return out;
}

inline RgbImage apply_factors(const RgbImage& img, const VariationFactors& f) {
  RgbImage out = img;
  if (f.brightness != 1.0) out = adjust_brightness(std::move(out), f.brightness);
  if (f.contrast != 1.0) out = adjust_contrast(std::move(out), f.contrast);
  if (f.saturation != 1.0) out = adjust_saturation(std::move(out), f.saturation);
  if (f.crop != 1.0) out = center_crop(out, f.crop);
  return out;
}

inline LumaImage apply_variation(const LumaImage& img, const VariationLevel& level, std::uint64_t seed) {
  return apply_factors(img, sample_variation(level, seed));
}

inline RgbImage apply_variation(const RgbImage& img, const VariationLevel& level, std::uint64_t seed) {
  return apply_factors(img, sample_variation(level, seed));
}

/// Pastes `occluder`, scaled to the scene's aspect ratio so its area is
/// `fov_fraction` of the frame, horizontally centred and bottom-aligned.
inline LumaImage composite_foreground(const LumaImage& scene, const LumaImage& occluder, double fov_fraction) {
  require(fov_fraction >= 0.0 && fov_fraction <= 1.0, ErrorCode::InvalidArgument,
          "InvalidFraction: fov_fraction must lie in [0, 1]");
  LumaImage out = scene;
  const double side = std::sqrt(fov_fraction);
  const int w = static_cast<int>(std::lround(scene.width * side));
  const int h = static_cast<int>(std::lround(scene.height * side));
  if (w == 0 || h == 0) return out;
  const LumaImage scaled = resize(occluder, w, h);
  const int x0 = (scene.width - w) / 2;
  const int y0 = scene.height - h;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) out.at(x0 + x, y0 + y) = scaled.at(x, y);
  return out;
}

}  // namespace csislab
