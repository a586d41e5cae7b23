#include "domainbridge/image.hpp"

#include <algorithm>
#include <cmath>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "domainbridge/error.hpp"

namespace domainbridge {

namespace {

double max_value_for_depth(int bit_depth) {
  if (bit_depth < 1 || bit_depth > 16) {
    throw SpecError("unsupported bit depth " + std::to_string(bit_depth));
  }
  return static_cast<double>((1u << bit_depth) - 1u);
}

}  // namespace

GrayImage normalize(std::span<const std::uint16_t> values, int width, int height, int bit_depth) {
  const double max_value = max_value_for_depth(bit_depth);
  if (values.size() != static_cast<std::size_t>(width) * height) {
    throw ShapeError("pixel count does not match " + std::to_string(width) + "x" +
                     std::to_string(height));
  }
  GrayImage out(width, height);
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i] > max_value) {
      throw RangeError("pixel value " + std::to_string(values[i]) + " exceeds " +
                       std::to_string(bit_depth) + "-bit range");
    }
    out.pixels[i] = static_cast<float>(values[i] / max_value);
  }
  return out;
}

GrayImage normalize(const RawImage& image) {
  return normalize(image.values, image.width, image.height, image.bit_depth);
}

GrayImage normalize(const GrayImage& image) {
  for (float v : image.pixels) {
    if (!std::isfinite(v) || v < 0.0f || v > 1.0f) {
      throw RangeError("real pixel value outside [0,1]: " + std::to_string(v));
    }
  }
  return image;
}

RawImage read_raw_image(const std::filesystem::path& path) {
  cv::Mat mat = cv::imread(path.string(), cv::IMREAD_ANYDEPTH | cv::IMREAD_ANYCOLOR);
  if (mat.empty()) throw IoError("cannot read image " + path.string());
  if (mat.channels() == 3) {
    cv::cvtColor(mat, mat, cv::COLOR_BGR2GRAY);
  } else if (mat.channels() == 4) {
    cv::cvtColor(mat, mat, cv::COLOR_BGRA2GRAY);
  }
  RawImage raw;
  raw.width = mat.cols;
  raw.height = mat.rows;
  switch (mat.depth()) {
    case CV_8U:
      raw.bit_depth = 8;
      break;
    case CV_16U:
      raw.bit_depth = 16;
      break;
    default:
      throw IoError("unsupported pixel storage in " + path.string());
  }
  mat.convertTo(mat, CV_16U);
  raw.values.resize(static_cast<std::size_t>(raw.width) * raw.height);
  for (int y = 0; y < raw.height; ++y) {
    const auto* row = mat.ptr<std::uint16_t>(y);
    std::copy(row, row + raw.width, raw.values.begin() + static_cast<std::ptrdiff_t>(y) * raw.width);
  }
  return raw;
}

GrayImage load_image(const std::filesystem::path& path, int bit_depth) {
  RawImage raw = read_raw_image(path);
  if (bit_depth > 0) raw.bit_depth = bit_depth;
  return normalize(raw);
}

void save_image(const std::filesystem::path& path, const GrayImage& image, int bit_depth) {
  if (bit_depth != 8 && bit_depth != 16) throw SpecError("images are stored as 8 or 16 bit");
  const double scale = max_value_for_depth(bit_depth);
  cv::Mat mat(image.height, image.width, bit_depth == 8 ? CV_8U : CV_16U);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      const double v = std::clamp(static_cast<double>(image.at(x, y)), 0.0, 1.0);
      const auto q = static_cast<int>(std::lround(v * scale));
      if (bit_depth == 8) {
        mat.at<std::uint8_t>(y, x) = static_cast<std::uint8_t>(q);
      } else {
        mat.at<std::uint16_t>(y, x) = static_cast<std::uint16_t>(q);
      }
    }
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), mat)) throw IoError("cannot write image " + path.string());
}

GrayImage resize_bilinear(const GrayImage& image, int width, int height) {
  if (image.width == width && image.height == height) return image;
  cv::Mat src(image.height, image.width, CV_32F, const_cast<float*>(image.pixels.data()));
  cv::Mat dst;
  cv::resize(src, dst, cv::Size(width, height), 0, 0, cv::INTER_LINEAR);
  GrayImage out(width, height);
  for (int y = 0; y < height; ++y) {
    const float* row = dst.ptr<float>(y);
    std::copy(row, row + width, out.pixels.begin() + static_cast<std::ptrdiff_t>(y) * width);
  }
  for (float& v : out.pixels) v = std::clamp(v, 0.0f, 1.0f);
  return out;
}

}  // namespace domainbridge
