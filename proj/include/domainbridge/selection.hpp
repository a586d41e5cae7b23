#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "domainbridge/classifier.hpp"
#include "domainbridge/metrics.hpp"
#include "domainbridge/ui2i.hpp"

namespace domainbridge {

struct SweepRow {
  std::int64_t iteration = 0;
  std::optional<FIDScore> fid;
  std::optional<double> balanced_accuracy;
  std::string error;  // non-empty when this checkpoint could not be scored

  bool failed() const { return !error.empty(); }
};

struct SweepResult {
  std::vector<SweepRow> rows;  // ascending iteration
  std::optional<std::int64_t> selected_by_fid;
  std::optional<std::int64_t> selected_by_oracle;
};

using ModelLoader = std::function<std::shared_ptr<const TranslationModel>(const CheckpointRecord&)>;

struct SweepOptions {
  ModelLoader loader = load_translation_model;
  /// Translate and score only this many validation images (0 = all). A
  /// smaller subset is faster but makes FID noisier.
  std::size_t subsample = 0;
  std::uint64_t subsample_seed = 0;
  /// Direction of translation; target images are mapped into the source domain.
  DomainCode direction = DomainCode::SOURCE;
};

/// Minimal FID among scored rows, earliest iteration on exact ties.
std::optional<std::int64_t> select_by_fid(std::span<const SweepRow> rows);
/// Maximal balanced accuracy among scored rows, earliest iteration on ties.
std::optional<std::int64_t> select_by_oracle(std::span<const SweepRow> rows);

/// Unsupervised: translates target_val with every checkpoint and scores the
/// FID against source_reference. Never reads labels. A failing checkpoint is
/// recorded as an error row; SweepError if every row fails.
SweepResult sweep(std::span<const CheckpointRecord> checkpoints, const DatasetManifest& target_val,
                  const DatasetManifest& source_reference, const FeatureExtractor& extractor,
                  const SweepOptions& options = {});

/// Label-based selection for comparison: translate, classify with the frozen
/// classifier and score balanced accuracy. LabelingError on unlabeled input.
SweepResult oracle_select(std::span<const CheckpointRecord> checkpoints, const DatasetManifest& labeled_val,
                          const TrainedClassifier& classifier, const SweepOptions& options = {});

/// Row-wise union of an FID sweep and an oracle sweep over the same checkpoints.
SweepResult merge_sweeps(const SweepResult& fid, const SweepResult& oracle);

struct SelectionComparison {
  std::int64_t fid_iteration = 0;
  std::int64_t oracle_iteration = 0;
  EvalReport fid_report;
  EvalReport oracle_report;
};

/// Evaluates both selections on the translated test set.
SelectionComparison compare(const CheckpointRecord& fid_selected, const CheckpointRecord& oracle_selected,
                            const DatasetManifest& test, const TrainedClassifier& classifier,
                            const SweepOptions& options = {});

/// CSV `iteration,fid,balanced_accuracy`; missing values are left empty.
void write_sweep_csv(const SweepResult& result, const std::filesystem::path& csv);
/// Both selections plus every row, including FID components and errors.
void write_sweep_summary(const SweepResult& result, const std::filesystem::path& json_file);
SweepResult read_sweep_summary(const std::filesystem::path& json_file);
/// FID against iteration as a standalone SVG line chart.
void write_fid_plot(const SweepResult& result, const std::filesystem::path& svg);

}  // namespace domainbridge
