#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "csislab/common.hpp"
#include "csislab/geometry.hpp"
#include "csislab/image.hpp"
#include "csislab/parallel.hpp"
#include "csislab/rng.hpp"
#include "csislab/transforms.hpp"

namespace csislab {

/// Random affine + perspective augmentation of a reference capture set.
/// Defaults are working values, not calibrated against real captures.
struct AugmentationConfig {
  std::size_t target_count = 100000;
  double rotation_deg = 15.0;      // +/- degrees
  double translate_frac = 0.10;    // +/- fraction of width/height
  double scale_min = 0.8;
  double scale_max = 1.2;
  double shear_deg = 5.0;          // +/- degrees
  double perspective_frac = 0.05;  // max corner jitter as a fraction of size
  std::uint64_t seed = 0;

  static AugmentationConfig identity(std::size_t target, std::uint64_t seed = 0) {
    AugmentationConfig c;
    c.target_count = target;
    c.rotation_deg = c.translate_frac = c.shear_deg = c.perspective_frac = 0.0;
    c.scale_min = c.scale_max = 1.0;
    c.seed = seed;
    return c;
  }
};

/// Forward transform for one augmented sample.
inline Mat3 sample_augmentation(const AugmentationConfig& cfg, int width, int height, Rng& rng) {
  const double angle = uniform(rng, -cfg.rotation_deg, cfg.rotation_deg);
  const double tx = uniform(rng, -cfg.translate_frac, cfg.translate_frac) * width;
  const double ty = uniform(rng, -cfg.translate_frac, cfg.translate_frac) * height;
  const double s = uniform(rng, cfg.scale_min, cfg.scale_max);
  const double shear = uniform(rng, -cfg.shear_deg, cfg.shear_deg);
  const double cx = (width - 1) / 2.0, cy = (height - 1) / 2.0;
  const Mat3 affine = Mat3::translate(cx + tx, cy + ty) * Mat3::rotate_deg(angle) * Mat3::shear_x_deg(shear) *
                      Mat3::scale(s, s) * Mat3::translate(-cx, -cy);

  std::array<std::pair<double, double>, 4> corners{{{0.0, 0.0},
                                                    {width - 1.0, 0.0},
                                                    {width - 1.0, height - 1.0},
                                                    {0.0, height - 1.0}}};
  auto jittered = corners;
  for (auto& [x, y] : jittered) {
    x += uniform(rng, -cfg.perspective_frac, cfg.perspective_frac) * width;
    y += uniform(rng, -cfg.perspective_frac, cfg.perspective_frac) * height;
  }
  const Mat3 perspective = cfg.perspective_frac > 0.0 ? homography_from_points(corners, jittered) : Mat3::identity();
  return perspective * affine;
}

/// Produces augmented sample `index` (indices below the reference count are
/// the originals themselves).
inline LumaImage augmented_sample(std::span<const LumaImage> reference, const AugmentationConfig& cfg,
                                  std::size_t index) {
  if (index < reference.size()) return reference[index];
  Rng rng = make_rng(cfg.seed, "augment", index);
  const auto& src = reference[uniform_index(rng, reference.size())];
  const Mat3 forward = sample_augmentation(cfg, src.width, src.height, rng);
  return warp(src, forward, src.width, src.height);
}

/// Streams every augmented sample to `visit(index, image)`; visits may run
/// concurrently but each index is produced independently of scheduling.
template <typename Visit>
void augment_visit(std::span<const LumaImage> reference, const AugmentationConfig& cfg, Visit&& visit,
                   unsigned workers = 1) {
  require(!reference.empty(), ErrorCode::EmptyInput, "EmptyReferenceSet: augmentation needs reference images");
  require(cfg.target_count >= reference.size(), ErrorCode::InvalidArgument,
          "target_count must be at least the reference count");
  parallel_for(cfg.target_count, workers, [&](std::size_t i) { visit(i, augmented_sample(reference, cfg, i)); });
}

inline std::vector<LumaImage> augment(std::span<const LumaImage> reference, const AugmentationConfig& cfg,
                                      unsigned workers = 1) {
  require(!reference.empty(), ErrorCode::EmptyInput, "EmptyReferenceSet: augmentation needs reference images");
  std::vector<LumaImage> out(cfg.target_count);
  augment_visit(reference, cfg, [&](std::size_t i, LumaImage img) { out[i] = std::move(img); }, workers);
  return out;
}

}  // namespace csislab
