#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <utility>

#include "csislab/common.hpp"

namespace csislab {

/// Row-major 3x3 matrix acting on homogeneous pixel coordinates (x, y, 1).
struct Mat3 {
  std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

  static Mat3 identity() { return {}; }
  static Mat3 translate(double tx, double ty) { return {{1, 0, tx, 0, 1, ty, 0, 0, 1}}; }
  static Mat3 scale(double sx, double sy) { return {{sx, 0, 0, 0, sy, 0, 0, 0, 1}}; }

  static Mat3 rotate_deg(double degrees) {
    const double a = degrees * std::numbers::pi / 180.0;
    const double c = std::cos(a), s = std::sin(a);
    return {{c, -s, 0, s, c, 0, 0, 0, 1}};
  }

  static Mat3 shear_x_deg(double degrees) {
    return {{1, std::tan(degrees * std::numbers::pi / 180.0), 0, 0, 1, 0, 0, 0, 1}};
  }

  double operator()(int r, int c) const { return m[static_cast<std::size_t>(r * 3 + c)]; }
  double& operator()(int r, int c) { return m[static_cast<std::size_t>(r * 3 + c)]; }

  friend Mat3 operator*(const Mat3& a, const Mat3& b) {
    Mat3 out;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) {
        double s = 0.0;
        for (int k = 0; k < 3; ++k) s += a(r, k) * b(k, c);
        out(r, c) = s;
      }
    return out;
  }

  std::pair<double, double> apply(double x, double y) const {
    const double w = m[6] * x + m[7] * y + m[8];
    return {(m[0] * x + m[1] * y + m[2]) / w, (m[3] * x + m[4] * y + m[5]) / w};
  }

  Mat3 inverse() const {
    const auto& a = m;
    const double det = a[0] * (a[4] * a[8] - a[5] * a[7]) - a[1] * (a[3] * a[8] - a[5] * a[6]) +
                       a[2] * (a[3] * a[7] - a[4] * a[6]);
    require(std::abs(det) > 1e-12, ErrorCode::InvalidArgument, "singular transform");
    Mat3 inv;
    inv.m = {(a[4] * a[8] - a[5] * a[7]) / det, (a[2] * a[7] - a[1] * a[8]) / det, (a[1] * a[5] - a[2] * a[4]) / det,
             (a[5] * a[6] - a[3] * a[8]) / det, (a[0] * a[8] - a[2] * a[6]) / det, (a[2] * a[3] - a[0] * a[5]) / det,
             (a[3] * a[7] - a[4] * a[6]) / det, (a[1] * a[6] - a[0] * a[7]) / det, (a[0] * a[4] - a[1] * a[3]) / det};
    return inv;
  }
};

/// Homography taking the four `from` points onto the four `to` points.
inline Mat3 homography_from_points(const std::array<std::pair<double, double>, 4>& from,
                                   const std::array<std::pair<double, double>, 4>& to) {
  // 8x8 system for h00..h21 with h22 = 1, solved by Gaussian elimination.
  double a[8][9] = {};
  for (int i = 0; i < 4; ++i) {
    const auto [x, y] = from[static_cast<std::size_t>(i)];
    const auto [u, v] = to[static_cast<std::size_t>(i)];
    double* r0 = a[2 * i];
    double* r1 = a[2 * i + 1];
    r0[0] = x, r0[1] = y, r0[2] = 1, r0[6] = -u * x, r0[7] = -u * y, r0[8] = u;
    r1[3] = x, r1[4] = y, r1[5] = 1, r1[6] = -v * x, r1[7] = -v * y, r1[8] = v;
  }
  for (int col = 0; col < 8; ++col) {
    int pivot = col;
    for (int r = col + 1; r < 8; ++r)
      if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
    require(std::abs(a[pivot][col]) > 1e-12, ErrorCode::InvalidArgument, "degenerate point correspondence");
    if (pivot != col)
      for (int c = 0; c < 9; ++c) std::swap(a[col][c], a[pivot][c]);
    for (int r = 0; r < 8; ++r) {
      if (r == col) continue;
      const double f = a[r][col] / a[col][col];
      for (int c = col; c < 9; ++c) a[r][c] -= f * a[col][c];
    }
  }
  Mat3 h;
  for (int i = 0; i < 8; ++i) h.m[static_cast<std::size_t>(i)] = a[i][8] / a[i][i];
  h.m[8] = 1.0;
  return h;
}

}  // namespace csislab
