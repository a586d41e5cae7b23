#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <random>
#include <optional>
#include <string>
#include <vector>
#include <unistd.h>

#include "domainbridge/image.hpp"
#include "domainbridge/manifest.hpp"
#include "domainbridge/metrics.hpp"

namespace testsupport {

namespace fs = std::filesystem;

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            ("domainbridge_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

// Smooth random texture; consecutive seeds give visibly different frames.
inline domainbridge::GrayImage random_frame(int w, int h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double fx = 0.2 + u(rng), fy = 0.2 + u(rng), phase = 6.28 * u(rng);
  domainbridge::GrayImage img(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double v = 0.5 + 0.3 * std::sin(fx * x + fy * y + phase) + 0.2 * (u(rng) - 0.5);
      img.at(x, y) = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
  return img;
}

// Writes images as 16-bit PNGs plus a manifest with the given labels.
inline domainbridge::DatasetManifest write_dataset(const fs::path& dir, const std::string& domain,
                                                   const std::vector<domainbridge::GrayImage>& images,
                                                   const std::vector<domainbridge::Regime>& labels = {}) {
  fs::create_directories(dir);
  domainbridge::DatasetManifest m{domain, dir, {}};
  for (std::size_t i = 0; i < images.size(); ++i) {
    const std::string name = "img_" + std::to_string(i) + ".png";
    domainbridge::save_image(dir / name, images[i], 16);
    std::optional<domainbridge::Regime> label;
    if (!labels.empty()) label = labels[i];
    domainbridge::ImageSample s(name, domain, static_cast<std::int64_t>(i), label);
    s.width = images[i].width;
    s.height = images[i].height;
    m.samples.push_back(std::move(s));
  }
  domainbridge::save_metadata({16, images.empty() ? 0 : images[0].width, images.empty() ? 0 : images[0].height},
                              dir);
  domainbridge::save_manifest(m, dir / "manifest.csv");
  return m;
}

// Embeds an image as (mean, mean of top half, mean of left half).
class MeansExtractor : public domainbridge::FeatureExtractor {
 public:
  std::string extractor_id() const override { return "means"; }
  std::size_t embedding_dim() const override { return 3; }
  Eigen::MatrixXd embed(std::span<const domainbridge::GrayImage> images) const override {
    Eigen::MatrixXd e(static_cast<Eigen::Index>(images.size()), 3);
    for (std::size_t i = 0; i < images.size(); ++i) {
      const auto& img = images[i];
      double all = 0, top = 0, left = 0;
      for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
          all += img.at(x, y);
          if (y < img.height / 2) top += img.at(x, y);
          if (x < img.width / 2) left += img.at(x, y);
        }
      }
      const double n = img.width * img.height;
      e.row(static_cast<Eigen::Index>(i)) << all / n, 2 * top / n, 2 * left / n;
    }
    return e;
  }
};

}  // namespace testsupport
