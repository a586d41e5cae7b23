#include "domainbridge/datakit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <opencv2/videoio.hpp>
#include <random>

#include "domainbridge/error.hpp"
#include "domainbridge/metrics.hpp"

namespace domainbridge {

namespace fs = std::filesystem;

namespace {

std::string frame_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%06zu.png", index);
  return buf;
}

bool is_image_file(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".tif" || ext == ".tiff" || ext == ".bmp" || ext == ".pgm";
}

}  // namespace

DatasetManifest extract_frames(const fs::path& video, const fs::path& out_dir,
                               const std::string& domain_id) {
  if (!fs::is_regular_file(video)) throw IngestError("video not found: " + video.string());
  cv::VideoCapture capture(video.string());
  if (!capture.isOpened()) throw IngestError("cannot decode video " + video.string());

  fs::create_directories(out_dir);
  DatasetManifest manifest{domain_id, out_dir, {}};
  DatasetMetadata meta;
  cv::Mat frame;
  cv::Mat gray;
  while (capture.read(frame)) {
    if (frame.empty()) break;
    if (frame.channels() == 3) {
      cv::cvtColor(frame, gray, cv::COLOR_BGR2GRAY);
    } else if (frame.channels() == 4) {
      cv::cvtColor(frame, gray, cv::COLOR_BGRA2GRAY);
    } else {
      gray = frame;
    }
    const std::size_t index = manifest.samples.size();
    if (index == 0) {
      meta = {gray.depth() == CV_16U ? 16 : 8, gray.cols, gray.rows};
    } else if (gray.cols != meta.width || gray.rows != meta.height) {
      throw IngestError("frame size changes mid-stream in " + video.string());
    }
    const std::string name = frame_name(index);
    if (!cv::imwrite((out_dir / name).string(), gray)) {
      throw IoError("cannot write frame " + (out_dir / name).string());
    }
    ImageSample sample(name, domain_id, static_cast<std::int64_t>(index));
    sample.width = gray.cols;
    sample.height = gray.rows;
    manifest.samples.push_back(std::move(sample));
  }
  if (manifest.empty()) throw IngestError("no decodable frames in " + video.string());
  save_metadata(meta, out_dir);
  save_manifest(manifest, out_dir / "manifest.csv");
  return manifest;
}

DatasetManifest import_image_directory(const fs::path& dir, const std::string& domain_id) {
  if (!fs::is_directory(dir)) throw IngestError("not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && is_image_file(entry.path())) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw IngestError("no image files in " + dir.string());

  DatasetManifest manifest{domain_id, dir, {}};
  for (std::size_t i = 0; i < files.size(); ++i) {
    ImageSample s(files[i].filename(), domain_id, static_cast<std::int64_t>(i));
    manifest.samples.push_back(std::move(s));
  }
  if (!fs::exists(dir / "dataset.json")) {
    const RawImage first = read_raw_image(files.front());
    save_metadata({first.bit_depth, first.width, first.height}, dir);
  }
  return manifest;
}

std::vector<std::size_t> dedup_keep_indices(std::span<const GrayImage> frames, double threshold) {
  std::vector<std::size_t> kept;
  if (frames.empty()) return kept;
  kept.push_back(0);
  for (std::size_t i = 1; i < frames.size(); ++i) {
    const GrayImage& last = frames[kept.back()];
    if (!frames[i].same_shape(last)) {
      throw ShapeError("frame " + std::to_string(i) + " is " + std::to_string(frames[i].width) +
                       "x" + std::to_string(frames[i].height) + ", expected " +
                       std::to_string(last.width) + "x" + std::to_string(last.height));
    }
    const double difference = 1.0 - ssim(last, frames[i]);
    if (difference >= threshold) kept.push_back(i);
  }
  return kept;
}

DatasetManifest dedup_consecutive(const DatasetManifest& manifest, double threshold) {
  const auto frames = load_images(manifest);
  const auto kept = dedup_keep_indices(frames, threshold);
  return manifest.subset(kept);
}

DatasetManifest balance_undersample(const DatasetManifest& manifest, std::uint64_t seed) {
  std::array<std::vector<std::size_t>, 2> by_class;
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    const auto label = manifest.samples[i].label();
    if (!label) throw LabelingError("cannot balance: unlabeled sample " + manifest.samples[i].path.string());
    by_class[static_cast<int>(*label)].push_back(i);
  }
  std::size_t minority = std::numeric_limits<std::size_t>::max();
  for (const auto& members : by_class) {
    if (!members.empty()) minority = std::min(minority, members.size());
  }
  if (minority == std::numeric_limits<std::size_t>::max()) return manifest;

  std::mt19937_64 rng(seed);
  std::vector<std::size_t> kept;
  for (auto& members : by_class) {
    if (members.size() > minority) {
      std::shuffle(members.begin(), members.end(), rng);
      members.resize(minority);
    }
    kept.insert(kept.end(), members.begin(), members.end());
  }
  std::sort(kept.begin(), kept.end());
  return manifest.subset(kept);
}

void SplitSpec::validate() const {
  double sum = 0.0;
  for (double f : fractions) {
    if (!std::isfinite(f) || f < 0.0) throw SpecError("split fractions must be nonnegative");
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw SpecError("split fractions sum to " + std::to_string(sum) + ", expected 1");
  }
}

namespace {
// n * f rounded down, tolerant to representation error such as 10 * 0.3.
std::size_t floor_share(std::size_t n, double f) {
  return static_cast<std::size_t>(std::floor(static_cast<double>(n) * f + 1e-9));
}

// Distributes `total` over groups proportionally to their sizes, flooring
// first and handing leftovers to the largest remainders (earlier group wins
// ties).
std::vector<std::size_t> apportion(std::size_t total, const std::vector<std::size_t>& sizes) {
  const double n = static_cast<double>(std::accumulate(sizes.begin(), sizes.end(), std::size_t{0}));
  std::vector<std::size_t> out(sizes.size(), 0);
  if (n == 0.0) return out;
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t k = 0; k < sizes.size(); ++k) {
    const double ideal = static_cast<double>(total) * static_cast<double>(sizes[k]) / n;
    out[k] = std::min(sizes[k], static_cast<std::size_t>(std::floor(ideal + 1e-9)));
    assigned += out[k];
    remainders.emplace_back(ideal - static_cast<double>(out[k]), k);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; assigned < total && i < remainders.size(); ++i) {
    const std::size_t k = remainders[i].second;
    if (out[k] < sizes[k]) {
      ++out[k];
      ++assigned;
    }
  }
  return out;
}
}  // namespace

SplitCounts split_counts(std::size_t n, const SplitSpec& spec) {
  spec.validate();
  SplitCounts c;
  c.val = floor_share(n, spec.fractions[1]);
  c.test = floor_share(n, spec.fractions[2]);
  if (c.val + c.test > n) c.test = n - c.val;
  c.train = n - c.val - c.test;
  return c;
}

DatasetManifest split(const DatasetManifest& manifest, const SplitSpec& spec) {
  const SplitCounts counts = split_counts(manifest.size(), spec);
  DatasetManifest out = manifest;
  std::mt19937_64 rng(spec.seed);

  auto assign = [&](std::vector<std::size_t>& members, std::size_t n_val, std::size_t n_test) {
    std::shuffle(members.begin(), members.end(), rng);
    for (std::size_t i = 0; i < members.size(); ++i) {
      Split tag = Split::TRAIN;
      if (i < n_val) {
        tag = Split::VAL;
      } else if (i < n_val + n_test) {
        tag = Split::TEST;
      }
      out.samples[members[i]].split = tag;
    }
  };

  if (!spec.stratified) {
    std::vector<std::size_t> all(manifest.size());
    std::iota(all.begin(), all.end(), 0);
    assign(all, counts.val, counts.test);
    return out;
  }

  std::vector<std::vector<std::size_t>> groups(2);
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    const auto label = manifest.samples[i].label();
    if (!label) throw LabelingError("stratified split needs labels: " + manifest.samples[i].path.string());
    groups[static_cast<int>(*label)].push_back(i);
  }
  const std::vector<std::size_t> sizes{groups[0].size(), groups[1].size()};
  const auto val = apportion(counts.val, sizes);
  const std::vector<std::size_t> remaining{sizes[0] - val[0], sizes[1] - val[1]};
  const auto test = apportion(counts.test, remaining);
  for (std::size_t k = 0; k < groups.size(); ++k) assign(groups[k], val[k], test[k]);
  return out;
}

}  // namespace domainbridge
