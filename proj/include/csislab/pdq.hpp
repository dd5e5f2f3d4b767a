#pragma once

// PDQ-compatible 256-bit DCT hash. The arithmetic mirrors the public
// reference pipeline step for step (float accumulation order included) so
// hashes agree bit-for-bit with the reference tool on identical luma input:
//
//   luma (0..255 scale) -> two passes of separable box filtering sized for a
//   64x64 target (a tent filter) -> point decimation to 64x64 -> 16x16
//   low-frequency DCT block without the DC row/column -> bit = coeff > median.

#include <array>
#include <cmath>
#include <cstdlib>
#include <numbers>
#include <span>
#include <vector>

#include "csislab/common.hpp"
#include "csislab/hash_types.hpp"
#include "csislab/image.hpp"

namespace csislab::pdq {

inline constexpr int kMinDimension = 64;
inline constexpr int kGrid = 64;
inline constexpr int kBlock = 16;
inline constexpr int kBits = kBlock * kBlock;

namespace detail {

inline const std::array<float, kBlock * kGrid>& dct_matrix() {
  static const auto matrix = [] {
    std::array<float, kBlock * kGrid> m{};
    const float scale = static_cast<float>(std::sqrt(2.0 / double{kGrid}));
    for (int i = 0; i < kBlock; ++i) {
      for (int j = 0; j < kGrid; ++j) {
        m[static_cast<std::size_t>(i * kGrid + j)] =
            static_cast<float>(scale * std::cos((std::numbers::pi / 2.0 / double{kGrid}) * (i + 1) * (2 * j + 1)));
      }
    }
    return m;
  }();
  return matrix;
}

inline int jarosz_window(int old_dim, int new_dim) { return (old_dim + 2 * new_dim - 1) / (2 * new_dim); }

// Running-sum box filter along one strided line; the window shrinks at the
// borders instead of padding.
inline void box_1d(const float* in, float* out, int length, int stride, int window) {
  const int half = (window + 2) / 2;
  const int phase1 = half - 1;
  const int phase2 = window - half + 1;
  const int phase3 = length - window;
  const int phase4 = half - 1;
  int li = 0, ri = 0, oi = 0;
  float sum = 0.0f;
  int current = 0;
  for (int i = 0; i < phase1; ++i) {
    sum += in[ri];
    ++current;
    ri += stride;
  }
  for (int i = 0; i < phase2; ++i) {
    sum += in[ri];
    ++current;
    out[oi] = sum / current;
    ri += stride;
    oi += stride;
  }
  for (int i = 0; i < phase3; ++i) {
    sum += in[ri];
    sum -= in[li];
    out[oi] = sum / current;
    li += stride;
    ri += stride;
    oi += stride;
  }
  for (int i = 0; i < phase4; ++i) {
    sum -= in[li];
    --current;
    out[oi] = sum / current;
    li += stride;
    oi += stride;
  }
}

inline void tent_filter(std::vector<float>& buf1, std::vector<float>& buf2, int rows, int cols, int win_rows,
                        int win_cols, int passes) {
  for (int p = 0; p < passes; ++p) {
    for (int i = 0; i < rows; ++i) box_1d(&buf1[static_cast<std::size_t>(i) * cols], &buf2[static_cast<std::size_t>(i) * cols], cols, 1, win_rows);
    for (int j = 0; j < cols; ++j) box_1d(&buf2[static_cast<std::size_t>(j)], &buf1[static_cast<std::size_t>(j)], rows, cols, win_cols);
  }
}

inline void decimate(const std::vector<float>& in, int rows, int cols, float out[kGrid][kGrid]) {
  for (int oi = 0; oi < kGrid; ++oi) {
    const int ii = static_cast<int>(((oi + 0.5) * rows) / kGrid);
    for (int oj = 0; oj < kGrid; ++oj) {
      const int ij = static_cast<int>(((oj + 0.5) * cols) / kGrid);
      out[oi][oj] = in[static_cast<std::size_t>(ii) * cols + ij];
    }
  }
}

inline int quality_metric(const float grid[kGrid][kGrid]) {
  int gradient_sum = 0;
  for (int i = 0; i < kGrid - 1; ++i) {
    for (int j = 0; j < kGrid; ++j) {
      const int d = static_cast<int>(((grid[i][j] - grid[i + 1][j]) * 100) / 255);
      gradient_sum += std::abs(d);
    }
  }
  for (int i = 0; i < kGrid; ++i) {
    for (int j = 0; j < kGrid - 1; ++j) {
      const int d = static_cast<int>(((grid[i][j] - grid[i][j + 1]) * 100) / 255);
      gradient_sum += std::abs(d);
    }
  }
  return std::min(gradient_sum / 90, 100);
}

inline void dct_64_to_16(const float a[kGrid][kGrid], std::array<float, kBits>& out) {
  const auto& d = dct_matrix();
  static thread_local float t[kBlock][kGrid];
  for (int i = 0; i < kBlock; ++i) {
    const float* di = &d[static_cast<std::size_t>(i * kGrid)];
    for (int j = 0; j < kGrid; ++j) {
      float s = 0.0f;
      for (int k = 0; k < kGrid; ++k) s += di[k] * a[k][j];
      t[i][j] = s;
    }
  }
  for (int i = 0; i < kBlock; ++i) {
    for (int j = 0; j < kBlock; ++j) {
      const float* dj = &d[static_cast<std::size_t>(j * kGrid)];
      float s = 0.0f;
      for (int k = 0; k < kGrid; ++k) s += t[i][k] * dj[k];
      out[static_cast<std::size_t>(i * kBlock + j)] = s;
    }
  }
}

}  // namespace detail

/// Torben Mogensen's selection-free median (lower median for even counts),
/// identical to the reference's tie behaviour.
inline float torben_median(std::span<const float> m) {
  const int n = static_cast<int>(m.size());
  float lo = m[0], hi = m[0];
  for (int i = 1; i < n; ++i) {
    lo = std::min(lo, m[static_cast<std::size_t>(i)]);
    hi = std::max(hi, m[static_cast<std::size_t>(i)]);
  }
  int less = 0, greater = 0, equal = 0;
  float guess = 0.0f, max_lt = 0.0f, min_gt = 0.0f;
  while (true) {
    guess = (lo + hi) / 2;
    less = greater = equal = 0;
    max_lt = lo;
    min_gt = hi;
    for (float v : m) {
      if (v < guess) {
        ++less;
        if (v > max_lt) max_lt = v;
      } else if (v > guess) {
        ++greater;
        if (v < min_gt) min_gt = v;
      } else {
        ++equal;
      }
    }
    if (less <= (n + 1) / 2 && greater <= (n + 1) / 2) break;
    if (less > greater) {
      hi = max_lt;
    } else {
      lo = min_gt;
    }
  }
  if (less >= (n + 1) / 2) return max_lt;
  if (less + equal >= (n + 1) / 2) return guess;
  return min_gt;
}

/// Pre-quantization state: the 16x16 DCT block (row-major, bit k = entry k),
/// its median and the quality score.
struct Features {
  std::array<float, kBits> coefficients{};
  float median = 0.0f;
  int quality = 0;
};

/// Features from a luma plane on the 0..255 scale.
inline Features features_from_luma255(std::span<const float> luma, int width, int height) {
  require(width >= kMinDimension && height >= kMinDimension, ErrorCode::ImageTooSmall,
          std::to_string(width) + "x" + std::to_string(height) + " is below 64x64");
  require(luma.size() == static_cast<std::size_t>(width) * height, ErrorCode::InvalidArgument, "luma size mismatch");
  static thread_local float grid[kGrid][kGrid];
  if (width == kGrid && height == kGrid) {
    for (int i = 0; i < kGrid; ++i)
      for (int j = 0; j < kGrid; ++j) grid[i][j] = luma[static_cast<std::size_t>(i * kGrid + j)];
  } else {
    std::vector<float> buf1(luma.begin(), luma.end());
    std::vector<float> buf2(buf1.size());
    detail::tent_filter(buf1, buf2, height, width, detail::jarosz_window(width, kGrid),
                        detail::jarosz_window(height, kGrid), 2);
    detail::decimate(buf1, height, width, grid);
  }
  Features f;
  f.quality = detail::quality_metric(grid);
  detail::dct_64_to_16(grid, f.coefficients);
  f.median = torben_median(f.coefficients);
  return f;
}

/// File-hashing convention of the reference tool: a decoded image wider or
/// taller than 512 is nearest-neighbour resampled to 512x512 before hashing.
inline constexpr int kFileMaxDimension = 512;

inline std::vector<float> file_downsample(std::span<const float> luma, int& width, int& height) {
  if (width <= kFileMaxDimension && height <= kFileMaxDimension) return {luma.begin(), luma.end()};
  const int n = kFileMaxDimension;
  std::vector<float> out(static_cast<std::size_t>(n) * n);
  for (int y = 0; y < n; ++y) {
    const auto sy = static_cast<std::size_t>(static_cast<double>(y) * height / n);
    for (int x = 0; x < n; ++x) {
      const auto sx = static_cast<std::size_t>(static_cast<double>(x) * width / n);
      out[static_cast<std::size_t>(y) * n + x] = luma[sy * static_cast<std::size_t>(width) + sx];
    }
  }
  width = height = n;
  return out;
}

inline Features features_from_file_luma255(std::span<const float> luma, int width, int height) {
  const auto scaled = file_downsample(luma, width, height);
  return features_from_luma255(scaled, width, height);
}

inline Features features(const LumaImage& image) {
  std::vector<float> scaled(image.pixels.size());
  for (std::size_t i = 0; i < scaled.size(); ++i) scaled[i] = image.pixels[i] * 255.0f;
  return features_from_luma255(scaled, image.width, image.height);
}

inline PerceptualHash quantize(const Features& f) {
  PerceptualHash h(kBits);
  for (std::size_t k = 0; k < kBits; ++k) {
    if (f.coefficients[k] > f.median) h.set(k);
  }
  h.set_quality(f.quality);
  return h;
}

/// 256-bit PDQ hash. Constant inputs come back with quality 0
/// (`PerceptualHash::degenerate()`), the hash itself is still returned.
inline PerceptualHash hash(const LumaImage& image) { return quantize(features(image)); }

}  // namespace csislab::pdq
