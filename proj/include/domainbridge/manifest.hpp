#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "domainbridge/image.hpp"

namespace domainbridge {

/// Boiling regime. CHF is the positive class and always comes first.
enum class Regime : int { CHF = 0, PRE_CHF = 1 };
inline constexpr std::array<Regime, 2> kClassOrder{Regime::CHF, Regime::PRE_CHF};

std::string_view to_string(Regime r);
Regime regime_from_string(std::string_view s);

enum class Split : int { TRAIN = 0, VAL = 1, TEST = 2 };
std::string_view to_string(Split s);
Split split_from_string(std::string_view s);

// Process-wide count of label reads. The unsupervised code paths are
// required to leave this counter untouched; tests and the pipeline take
// snapshots around them.
namespace audit {
std::uint64_t label_reads();

class LabelReadScope {
 public:
  LabelReadScope() : start_(label_reads()) {}
  std::uint64_t reads() const { return label_reads() - start_; }

 private:
  std::uint64_t start_;
};

// Manifest files loaded from disk, tagged with the stage that was active.
struct LoadEvent {
  std::string stage;
  std::filesystem::path path;
};
std::vector<LoadEvent> manifest_loads();
void clear_manifest_loads();

class StageScope {
 public:
  explicit StageScope(std::string stage);
  ~StageScope();
  StageScope(const StageScope&) = delete;
  StageScope& operator=(const StageScope&) = delete;

 private:
  std::string previous_;
};
}  // namespace audit

class DatasetManifest;
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& csv);

class ImageSample {
 public:
  std::filesystem::path path;  // relative to the manifest root
  std::string domain_id;
  std::int64_t frame_index = 0;
  std::optional<Split> split;
  int width = 0;
  int height = 0;
  int channels = 1;

  ImageSample() = default;
  ImageSample(std::filesystem::path p, std::string domain, std::int64_t index,
              std::optional<Regime> label = std::nullopt)
      : path(std::move(p)), domain_id(std::move(domain)), frame_index(index), label_(label) {}

  // Label accessors are audited; copying a sample carries the label along
  // without counting as a read.
  std::optional<Regime> label() const;
  bool has_label() const { return label().has_value(); }
  void set_label(std::optional<Regime> label) { label_ = label; }

 private:
  friend void save_manifest(const DatasetManifest&, const std::filesystem::path&);
  std::optional<Regime> label_;
};

/// Sidecar stored next to a dataset's images.
struct DatasetMetadata {
  int bit_depth = 8;
  int width = 0;
  int height = 0;
};

class DatasetManifest {
 public:
  std::string domain_id;
  std::filesystem::path root;  // directory that sample paths are relative to
  std::vector<ImageSample> samples;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  std::filesystem::path resolve(std::size_t i) const { return root / samples[i].path; }

  /// Throws SpecError when domains are mixed or split tags only partially present.
  void validate() const;
  bool has_split_tags() const;

  /// Samples tagged with `s`, in original order.
  DatasetManifest subset(Split s) const;
  DatasetManifest subset(std::span<const std::size_t> indices) const;

  /// Label histogram {CHF, PRE_CHF}. Throws LabelingError on unlabeled samples.
  std::array<std::size_t, 2> class_counts() const;

  /// Bit depth from the sidecar in `root`; 0 (infer from storage) without one.
  int bit_depth() const;
};

/// CSV with header `path,domain_id,label,frame_index,split`.
DatasetManifest load_manifest(const std::filesystem::path& csv);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& csv);

DatasetMetadata load_metadata(const std::filesystem::path& dataset_dir);
void save_metadata(const DatasetMetadata& meta, const std::filesystem::path& dataset_dir);

/// Loads every image of a manifest, normalized and resized to size×size
/// (size <= 0 keeps the native resolution).
std::vector<GrayImage> load_images(const DatasetManifest& manifest, int size = 0);

}  // namespace domainbridge
