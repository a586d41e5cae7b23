#include "domainbridge/manifest.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <mutex>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

#include "csv.hpp"
#include "domainbridge/error.hpp"

namespace domainbridge {

using json = nlohmann::json;

std::string_view to_string(Regime r) { return r == Regime::CHF ? "CHF" : "PRE_CHF"; }

Regime regime_from_string(std::string_view s) {
  if (s == "CHF") return Regime::CHF;
  if (s == "PRE_CHF") return Regime::PRE_CHF;
  throw LabelingError("unknown regime label '" + std::string(s) + "'");
}

std::string_view to_string(Split s) {
  switch (s) {
    case Split::TRAIN:
      return "TRAIN";
    case Split::VAL:
      return "VAL";
    case Split::TEST:
      return "TEST";
  }
  return "?";
}

Split split_from_string(std::string_view s) {
  if (s == "TRAIN") return Split::TRAIN;
  if (s == "VAL") return Split::VAL;
  if (s == "TEST") return Split::TEST;
  throw SpecError("unknown split tag '" + std::string(s) + "'");
}

namespace audit {
namespace {
std::atomic<std::uint64_t> g_label_reads{0};
std::mutex g_loads_mutex;
std::vector<LoadEvent> g_loads;
thread_local std::string t_stage;
}  // namespace

std::uint64_t label_reads() { return g_label_reads.load(); }

std::vector<LoadEvent> manifest_loads() {
  std::lock_guard lock(g_loads_mutex);
  return g_loads;
}

void clear_manifest_loads() {
  std::lock_guard lock(g_loads_mutex);
  g_loads.clear();
}

StageScope::StageScope(std::string stage) : previous_(std::exchange(t_stage, std::move(stage))) {}
StageScope::~StageScope() { t_stage = std::move(previous_); }

void record_load(const std::filesystem::path& path) {
  std::error_code ec;
  auto canonical = std::filesystem::weakly_canonical(path, ec);
  std::lock_guard lock(g_loads_mutex);
  g_loads.push_back({t_stage, ec ? path : canonical});
}

void count_label_read() { g_label_reads.fetch_add(1, std::memory_order_relaxed); }
}  // namespace audit

std::optional<Regime> ImageSample::label() const {
  audit::count_label_read();
  return label_;
}

void DatasetManifest::validate() const {
  std::size_t tagged = 0;
  for (const auto& s : samples) {
    if (s.domain_id != domain_id) {
      throw SpecError("sample " + s.path.string() + " has domain '" + s.domain_id +
                      "' in manifest of domain '" + domain_id + "'");
    }
    if (s.split) ++tagged;
  }
  if (tagged != 0 && tagged != samples.size()) {
    throw SpecError("split tags present on only " + std::to_string(tagged) + " of " +
                    std::to_string(samples.size()) + " samples");
  }
}

bool DatasetManifest::has_split_tags() const {
  return !samples.empty() && std::all_of(samples.begin(), samples.end(),
                                         [](const ImageSample& s) { return s.split.has_value(); });
}

DatasetManifest DatasetManifest::subset(Split s) const {
  DatasetManifest out{domain_id, root, {}};
  for (const auto& sample : samples) {
    if (sample.split == s) out.samples.push_back(sample);
  }
  return out;
}

DatasetManifest DatasetManifest::subset(std::span<const std::size_t> indices) const {
  DatasetManifest out{domain_id, root, {}};
  out.samples.reserve(indices.size());
  for (std::size_t i : indices) out.samples.push_back(samples.at(i));
  return out;
}

std::array<std::size_t, 2> DatasetManifest::class_counts() const {
  std::array<std::size_t, 2> counts{0, 0};
  for (const auto& s : samples) {
    const auto label = s.label();
    if (!label) throw LabelingError("unlabeled sample " + s.path.string());
    ++counts[static_cast<int>(*label)];
  }
  return counts;
}

int DatasetManifest::bit_depth() const {
  if (std::filesystem::exists(root / "dataset.json")) return load_metadata(root).bit_depth;
  return 0;
}

namespace {
constexpr std::string_view kHeader = "path,domain_id,label,frame_index,split";
}

DatasetManifest load_manifest(const std::filesystem::path& csv_path) {
  std::ifstream in(csv_path);
  if (!in) throw IoError("cannot open manifest " + csv_path.string());
  audit::record_load(csv_path);

  std::string line;
  if (!std::getline(in, line)) throw IoError("empty manifest " + csv_path.string());
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
  if (line != kHeader) throw IoError("unexpected manifest header in " + csv_path.string());

  DatasetManifest m;
  m.root = csv_path.has_parent_path() ? csv_path.parent_path() : std::filesystem::path(".");
  std::optional<DatasetMetadata> meta;
  if (std::filesystem::exists(m.root / "dataset.json")) meta = load_metadata(m.root);

  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto f = csv::split_line(line);
    if (f.size() != 5) {
      throw IoError(csv_path.string() + ":" + std::to_string(line_no) + ": expected 5 fields");
    }
    ImageSample s(f[0], f[1], std::stoll(f[3]));
    if (!f[2].empty()) s.set_label(regime_from_string(f[2]));
    if (!f[4].empty()) s.split = split_from_string(f[4]);
    if (meta) {
      s.width = meta->width;
      s.height = meta->height;
    }
    if (m.samples.empty()) m.domain_id = s.domain_id;
    m.samples.push_back(std::move(s));
  }
  m.validate();
  return m;
}

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& csv_path) {
  manifest.validate();
  namespace fs = std::filesystem;
  const fs::path dir = fs::absolute(csv_path.has_parent_path() ? csv_path.parent_path() : ".");
  fs::create_directories(dir);
  const fs::path source_root = fs::absolute(manifest.root.empty() ? "." : manifest.root);
  const bool rebase = source_root.lexically_normal() != dir.lexically_normal();
  // Sample paths stay relative to the file being written; the sidecar follows.
  if (rebase && fs::exists(source_root / "dataset.json") && !fs::exists(dir / "dataset.json")) {
    fs::copy_file(source_root / "dataset.json", dir / "dataset.json");
  }
  std::ostringstream out;
  out << kHeader << '\n';
  for (const auto& s : manifest.samples) {
    const fs::path rel =
        rebase ? (source_root / s.path).lexically_normal().lexically_relative(dir) : s.path;
    out << csv::escape(rel.generic_string()) << ',' << csv::escape(s.domain_id) << ','
        << (s.label_ ? to_string(*s.label_) : "") << ',' << s.frame_index << ','
        << (s.split ? to_string(*s.split) : "") << '\n';
  }
  std::ofstream file(csv_path, std::ios::binary);
  if (!file) throw IoError("cannot write manifest " + csv_path.string());
  file << out.str();
}

DatasetMetadata load_metadata(const std::filesystem::path& dataset_dir) {
  std::ifstream in(dataset_dir / "dataset.json");
  if (!in) throw IoError("missing dataset.json in " + dataset_dir.string());
  try {
    const json j = json::parse(in);
    return {j.at("bit_depth").get<int>(), j.value("width", 0), j.value("height", 0)};
  } catch (const json::exception& e) {
    throw IoError("malformed dataset.json in " + dataset_dir.string() + ": " + e.what());
  }
}

void save_metadata(const DatasetMetadata& meta, const std::filesystem::path& dataset_dir) {
  std::filesystem::create_directories(dataset_dir);
  std::ofstream out(dataset_dir / "dataset.json");
  out << json{{"bit_depth", meta.bit_depth}, {"width", meta.width}, {"height", meta.height}}.dump()
      << '\n';
}

std::vector<GrayImage> load_images(const DatasetManifest& manifest, int size) {
  const int depth = manifest.bit_depth();
  std::vector<GrayImage> images;
  images.reserve(manifest.size());
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    GrayImage img = load_image(manifest.resolve(i), depth);
    if (size > 0) img = resize_bilinear(img, size, size);
    images.push_back(std::move(img));
  }
  return images;
}

}  // namespace domainbridge
