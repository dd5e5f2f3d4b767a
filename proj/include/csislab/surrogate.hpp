#pragma once

#include <cmath>
#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "csislab/common.hpp"
#include "csislab/hash_types.hpp"
#include "csislab/image.hpp"
#include "csislab/rng.hpp"

namespace csislab {

/// Differentiable stand-in for a learned hash: area-average to a 32x32 grid,
/// project through a seeded Gaussian matrix with zero-mean rows, take the
/// sign of each score. Everything before the sign is linear in the pixels,
/// so exact gradients are available to white-box attacks.
class SurrogateHasher {
 public:
  static constexpr int kGrid = 32;
  static constexpr int kDim = kGrid * kGrid;

  explicit SurrogateHasher(const HashFunctionSpec& spec) : spec_(spec) {
    spec_.validate();
    require(spec_.kind == HashKind::SurrogateProjection, ErrorCode::InvalidArgument, "spec is not a surrogate hash");
    Rng rng(derive_seed(spec_.seed, "surrogate-projection"));
    std::normal_distribution<double> normal(0.0, 1.0);
    projection_.resize(spec_.output_bits * kDim);
    for (std::size_t b = 0; b < spec_.output_bits; ++b) {
      double* row = &projection_[b * kDim];
      double mean = 0.0;
      for (int j = 0; j < kDim; ++j) {
        row[j] = normal(rng);
        mean += row[j];
      }
      mean /= kDim;
      for (int j = 0; j < kDim; ++j) row[j] = (row[j] - mean) / kGrid;
    }
  }

  const HashFunctionSpec& spec() const noexcept { return spec_; }
  std::size_t bits() const noexcept { return spec_.output_bits; }

  /// Area-averaged 32x32 grid, row-major.
  std::vector<double> grid(const LumaImage& image) const {
    check_size(image);
    const auto wx = area_weights(image.width);
    const auto wy = area_weights(image.height);
    std::vector<double> rows(static_cast<std::size_t>(image.height) * kGrid, 0.0);
    for (int y = 0; y < image.height; ++y) {
      for (int gx = 0; gx < kGrid; ++gx) {
        double s = 0.0;
        for (const auto& [x, w] : wx[gx]) s += w * image.at(x, y);
        rows[static_cast<std::size_t>(y) * kGrid + gx] = s;
      }
    }
    std::vector<double> g(kDim, 0.0);
    for (int gy = 0; gy < kGrid; ++gy) {
      for (const auto& [y, w] : wy[gy]) {
        for (int gx = 0; gx < kGrid; ++gx) g[static_cast<std::size_t>(gy) * kGrid + gx] += w * rows[static_cast<std::size_t>(y) * kGrid + gx];
      }
    }
    return g;
  }

  /// Pre-sign projection scores, one per output bit.
  std::vector<double> scores(const LumaImage& image) const {
    const auto g = grid(image);
    std::vector<double> s(spec_.output_bits, 0.0);
    for (std::size_t b = 0; b < s.size(); ++b) {
      const double* row = &projection_[b * kDim];
      double acc = 0.0;
      for (int j = 0; j < kDim; ++j) acc += row[j] * g[static_cast<std::size_t>(j)];
      s[b] = acc;
    }
    return s;
  }

  static PerceptualHash quantize(std::span<const double> scores) {
    PerceptualHash h(scores.size());
    for (std::size_t b = 0; b < scores.size(); ++b) {
      if (scores[b] > 0.0) h.set(b);
    }
    return h;
  }

  PerceptualHash hash(const LumaImage& image) const { return quantize(scores(image)); }

  /// Pulls d(loss)/d(score) back to d(loss)/d(pixel) for an image of the given size.
  LumaImage backprop(int width, int height, std::span<const double> dscores) const {
    require(dscores.size() == spec_.output_bits, ErrorCode::LengthMismatch, "score gradient length");
    std::vector<double> dgrid(kDim, 0.0);
    for (std::size_t b = 0; b < dscores.size(); ++b) {
      if (dscores[b] == 0.0) continue;
      const double* row = &projection_[b * kDim];
      for (int j = 0; j < kDim; ++j) dgrid[static_cast<std::size_t>(j)] += dscores[b] * row[j];
    }
    const auto wx = area_weights(width);
    const auto wy = area_weights(height);
    std::vector<double> drows(static_cast<std::size_t>(height) * kGrid, 0.0);
    for (int gy = 0; gy < kGrid; ++gy) {
      for (const auto& [y, w] : wy[gy]) {
        for (int gx = 0; gx < kGrid; ++gx) drows[static_cast<std::size_t>(y) * kGrid + gx] += w * dgrid[static_cast<std::size_t>(gy) * kGrid + gx];
      }
    }
    LumaImage out(width, height);
    for (int y = 0; y < height; ++y) {
      for (int gx = 0; gx < kGrid; ++gx) {
        const double d = drows[static_cast<std::size_t>(y) * kGrid + gx];
        for (const auto& [x, w] : wx[gx]) out.at(x, y) += static_cast<float>(w * d);
      }
    }
    return out;
  }

 private:
  using Weights = std::vector<std::vector<std::pair<int, double>>>;

  static void check_size(const LumaImage& image) {
    require(image.width >= kGrid && image.height >= kGrid, ErrorCode::ImageTooSmall,
            std::to_string(image.width) + "x" + std::to_string(image.height) + " is below 32x32");
  }

  // Fractional-overlap weights mapping `in` samples onto kGrid cells.
  static Weights area_weights(int in) {
    Weights w(kGrid);
    const double scale = static_cast<double>(in) / kGrid;
    for (int o = 0; o < kGrid; ++o) {
      const double lo = o * scale, hi = (o + 1) * scale;
      for (int i = static_cast<int>(std::floor(lo)); i < static_cast<int>(std::ceil(hi)) && i < in; ++i) {
        const double overlap = std::min(hi, i + 1.0) - std::max(lo, static_cast<double>(i));
        if (overlap > 0.0) w[o].emplace_back(i, overlap / scale);
      }
    }
    return w;
  }

  HashFunctionSpec spec_;
  std::vector<double> projection_;
};

}  // namespace csislab
