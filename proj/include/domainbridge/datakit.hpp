#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "domainbridge/image.hpp"
#include "domainbridge/manifest.hpp"

namespace domainbridge {

inline constexpr double kDefaultDedupThreshold = 3e-4;

/// Decodes every frame of `video`, converts it to grayscale and writes one
/// lossless PNG per frame into `out_dir` together with `manifest.csv` and
/// the `dataset.json` sidecar. frame_index is the decode order.
DatasetManifest extract_frames(const std::filesystem::path& video,
                               const std::filesystem::path& out_dir,
                               const std::string& domain_id);

/// Imports a directory of image files (sorted by file name) as a manifest.
DatasetManifest import_image_directory(const std::filesystem::path& dir,
                                       const std::string& domain_id);

/// Indices kept by consecutive-frame deduplication: the first frame is always
/// kept, and a frame is dropped when 1 - SSIM(last kept, frame) < threshold.
std::vector<std::size_t> dedup_keep_indices(std::span<const GrayImage> frames,
                                            double threshold = kDefaultDedupThreshold);

DatasetManifest dedup_consecutive(const DatasetManifest& manifest,
                                  double threshold = kDefaultDedupThreshold);

/// Downsamples every class to the minority count, uniformly without
/// replacement. Retained samples keep their original relative order.
DatasetManifest balance_undersample(const DatasetManifest& manifest, std::uint64_t seed);

struct SplitSpec {
  std::array<double, 3> fractions{0.8, 0.1, 0.1};  // train, val, test
  std::uint64_t seed = 0;
  bool stratified = false;

  void validate() const;
};

struct SplitCounts {
  std::size_t train = 0;
  std::size_t val = 0;
  std::size_t test = 0;
};

/// val = floor(n * f_val), test = floor(n * f_test), train takes the rest.
SplitCounts split_counts(std::size_t n, const SplitSpec& spec);

/// Tags every sample with exactly one split. The unstratified path never
/// reads labels.
DatasetManifest split(const DatasetManifest& manifest, const SplitSpec& spec);

}  // namespace domainbridge
