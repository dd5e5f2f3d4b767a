#pragma once

#include <cmath>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "csislab/common.hpp"
#include "csislab/image.hpp"

namespace csislab {

struct DecodedImage {
  LumaImage luma;
  std::optional<RgbImage> color;  // absent for greyscale files
  // Luma on the 0..255 scale exactly as the reference PDQ tool computes it;
  // not every such float survives a round trip through [0, 1].
  std::vector<float> luma255;
};

namespace detail {

inline DecodedImage from_mat(const cv::Mat& input, const std::string& what) {
  require(!input.empty(), ErrorCode::DecodeFailure, "cannot decode " + what);
  cv::Mat mat;
  if (input.depth() == CV_8U) {
    mat = input;
  } else if (input.depth() == CV_16U) {
    input.convertTo(mat, CV_8U, 1.0 / 257.0);
  } else {
    throw Error(ErrorCode::DecodeFailure, "unsupported pixel depth in " + what);
  }
  DecodedImage out;
  const int w = mat.cols, h = mat.rows;
  if (mat.channels() == 1) {
    out.luma = LumaImage(w, h);
    out.luma255.resize(out.luma.size());
    for (int y = 0; y < h; ++y) {
      const auto* row = mat.ptr<unsigned char>(y);
      for (int x = 0; x < w; ++x) {
        out.luma255[static_cast<std::size_t>(y) * w + x] = static_cast<float>(row[x]);
        out.luma.at(x, y) = unit_from_255(static_cast<float>(row[x]));
      }
    }
    return out;
  }
  require(mat.channels() == 3 || mat.channels() == 4, ErrorCode::DecodeFailure, "unsupported channel count in " + what);
  const int step = mat.channels();
  RgbImage rgb(w, h);
  out.luma = LumaImage(w, h);
  out.luma255.resize(out.luma.size());
  for (int y = 0; y < h; ++y) {
    const auto* row = mat.ptr<unsigned char>(y);
    for (int x = 0; x < w; ++x) {
      const unsigned char b = row[x * step + 0], g = row[x * step + 1], r = row[x * step + 2];
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      rgb.r[i] = r / 255.0f;
      rgb.g[i] = g / 255.0f;
      rgb.b[i] = b / 255.0f;
      const float luma = kLumaR * r + kLumaG * g + kLumaB * b;
      out.luma255[i] = luma;
      out.luma.pixels[i] = unit_from_255(luma);
    }
  }
  out.color = std::move(rgb);
  return out;
}

inline cv::Mat to_mat(const LumaImage& img) {
  cv::Mat mat(img.height, img.width, CV_8UC1);
  for (int y = 0; y < img.height; ++y) {
    auto* row = mat.ptr<unsigned char>(y);
    for (int x = 0; x < img.width; ++x) {
      row[x] = static_cast<unsigned char>(std::lround(std::clamp(img.at(x, y), 0.0f, 1.0f) * 255.0f));
    }
  }
  return mat;
}

}  // namespace detail

/// Decodes a PNG or JPEG file.
inline DecodedImage decode_file(const std::filesystem::path& path) {
  return detail::from_mat(cv::imread(path.string(), cv::IMREAD_UNCHANGED), path.string());
}

inline LumaImage load_luma(const std::filesystem::path& path) { return decode_file(path).luma; }

/// Writes an 8-bit greyscale PNG (values rounded to the nearest level).
inline void save_png(const std::filesystem::path& path, const LumaImage& img) {
  require(!img.empty(), ErrorCode::InvalidArgument, "cannot write an empty image");
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::vector<int> params{cv::IMWRITE_PNG_COMPRESSION, 6};
  require(cv::imwrite(path.string(), detail::to_mat(img), params), ErrorCode::IoError, "cannot write " + path.string());
}

/// Round trip through an in-memory JPEG encode at the given quality.
inline LumaImage jpeg_roundtrip(const LumaImage& img, int quality) {
  std::vector<unsigned char> buffer;
  const std::vector<int> params{cv::IMWRITE_JPEG_QUALITY, quality};
  require(cv::imencode(".jpg", detail::to_mat(img), buffer, params), ErrorCode::IoError, "jpeg encode failed");
  return detail::from_mat(cv::imdecode(buffer, cv::IMREAD_UNCHANGED), "jpeg buffer").luma;
}

/// Snaps every pixel to the nearest 8-bit level.
inline LumaImage quantize_8bit(LumaImage img) {
  for (auto& p : img.pixels) p = static_cast<float>(std::lround(std::clamp(p, 0.0f, 1.0f) * 255.0f)) / 255.0f;
  return img;
}

}  // namespace csislab
