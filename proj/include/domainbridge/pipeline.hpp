#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "domainbridge/classifier.hpp"
#include "domainbridge/datakit.hpp"
#include "domainbridge/synthgen.hpp"
#include "domainbridge/ui2i.hpp"

namespace domainbridge {

struct DataPrepOptions {
  bool dedup = true;
  double dedup_threshold = kDefaultDedupThreshold;
  bool balance_source = true;
  SplitSpec source_split{{0.8, 0.1, 0.1}, 0, true};
  // Never stratified: stratifying would read target labels.
  SplitSpec target_split{{0.8, 0.1, 0.1}, 0, false};
};

struct PipelineConfig {
  // Either both manifests or a synthetic benchmark definition.
  std::filesystem::path source_manifest;
  std::filesystem::path target_manifest;
  std::optional<SynthConfig> synth;

  DataPrepOptions data;
  ClassifierConfig classifier;
  UI2IConfig ui2i;
  std::string extractor_id = "classifier_penultimate";
  std::size_t sweep_subsample = 0;  // 0 = full target validation split
  bool oracle = true;               // also run label-based selection for comparison
  std::filesystem::path output_dir;
  std::uint64_t seed = 0;

  /// ConfigError on missing dataset paths, unknown extractor or invalid
  /// stage configs. Runs before any training.
  void validate() const;
  /// Hash of everything that determines stage outputs (output_dir excluded,
  /// input manifest contents included).
  std::string hash() const;
};

/// Reads pipeline.json. Stage seeds that are not given explicitly inherit
/// the top-level seed. Relative paths resolve against the file's directory.
PipelineConfig load_pipeline_config(const std::filesystem::path& json_file);
void to_json(nlohmann::json& j, const PipelineConfig& config);

enum class StageStatus { PENDING, COMPLETE };

struct StageRecord {
  StageStatus status = StageStatus::PENDING;
  double seconds = 0.0;
  std::map<std::string, std::string> artifacts;  // name -> absolute path
  nlohmann::json results = nlohmann::json::object();
};

inline constexpr const char* kStagePrepare = "prepare";
inline constexpr const char* kStageClassifier = "classifier";
inline constexpr const char* kStageUi2i = "ui2i";
inline constexpr const char* kStageSweep = "sweep";
inline constexpr const char* kStageFinal = "final_test";
// Audit tag for report rendering, which runs after the last stage.
inline constexpr const char* kStageReport = "report";
inline constexpr std::array<const char*, 5> kStageOrder{kStagePrepare, kStageClassifier, kStageUi2i, kStageSweep,
                                                        kStageFinal};

struct RunRecord {
  std::string config_hash;
  std::filesystem::path run_dir;
  std::filesystem::path output_dir;
  std::map<std::string, StageRecord> stages;

  bool complete(const std::string& stage) const;
  void save(const std::filesystem::path& json_file) const;
  static RunRecord load(const std::filesystem::path& json_file);
};

/// `$DOMAINBRIDGE_CACHE` when set, else `<output_dir>/cache`.
std::filesystem::path cache_root(const PipelineConfig& config);

struct RunOptions {
  std::function<void(const std::string&)> log;
  /// Forwarded to train_ui2i; lets callers simulate an interruption.
  std::int64_t max_ui2i_iterations_this_call = 0;
};

/// Runs every stage not already complete in `<cache>/<config hash>`, then
/// renders the report into `<output_dir>/report`. Throws StageError naming the
/// failing stage; completed artifacts are kept.
RunRecord run_all(const PipelineConfig& config, const RunOptions& options = {});

/// Writes metrics.json, one confusion CSV per evaluated condition, the FID
/// curve and per-class real/translated sample grids into `out_dir`.
/// ReportError when no evaluation stage has completed.
void render_report(const RunRecord& run, const std::filesystem::path& out_dir);

/// Parses a confusion CSV written by render_report.
ConfusionMatrix read_confusion_csv(const std::filesystem::path& csv);

}  // namespace domainbridge
