#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace domainbridge {

/// Integer pixels exactly as stored on disk (single channel).
struct RawImage {
  int width = 0;
  int height = 0;
  int bit_depth = 8;
  std::vector<std::uint16_t> values;  // row-major
};

/// Single-channel image with real intensities, row-major.
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<float> pixels;

  GrayImage() = default;
  GrayImage(int w, int h, float fill = 0.0f)
      : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, fill) {}

  float& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  float at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
  std::size_t size() const { return pixels.size(); }
  bool same_shape(const GrayImage& other) const {
    return width == other.width && height == other.height;
  }

  friend bool operator==(const GrayImage&, const GrayImage&) = default;
};

/// Divides every value by 2^bit_depth - 1. Throws RangeError for values
/// above the declared depth and SpecError for unsupported depths (1..16).
GrayImage normalize(const RawImage& image);
GrayImage normalize(std::span<const std::uint16_t> values, int width, int height, int bit_depth);

/// Real-valued input already in [0,1] passes through unchanged; anything
/// outside the unit interval (or non-finite) is a RangeError.
GrayImage normalize(const GrayImage& image);

/// Reads a lossless image file; colour input is converted to grayscale.
RawImage read_raw_image(const std::filesystem::path& path);

/// Loads and normalizes in one step. `bit_depth` overrides the depth
/// inferred from the file's storage type when > 0.
GrayImage load_image(const std::filesystem::path& path, int bit_depth = 0);

/// Writes a PNG quantized to the given bit depth (8 or 16).
void save_image(const std::filesystem::path& path, const GrayImage& image, int bit_depth = 8);

/// Bilinear resize; returns the input when the size already matches.
GrayImage resize_bilinear(const GrayImage& image, int width, int height);

}  // namespace domainbridge
