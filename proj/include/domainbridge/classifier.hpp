#pragma once

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "domainbridge/manifest.hpp"
#include "domainbridge/metrics.hpp"

namespace domainbridge {

struct AdamSettings {
  std::string name = "adam";
  double learning_rate = 1e-3;
  std::array<double, 2> betas{0.9, 0.999};
};

struct ClassifierConfig {
  std::string architecture_id = "custom_cnn";
  int epochs = 100;
  AdamSettings optimizer;
  int batch_size = 32;
  std::uint64_t seed = 0;
  int input_size = 128;

  void validate() const;
  std::string hash() const;
};

struct TrainingFingerprint {
  std::string config_hash;
  std::string data_hash;
};

struct EpochRecord {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_balanced_accuracy = 0.0;
};

struct TrainingLog {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
};

/// 1-based index of the smallest loss; the earliest epoch wins ties.
int select_best_epoch(std::span<const double> val_losses);

/// Frozen source-domain classifier. Copies share the same immutable weights.
class TrainedClassifier {
 public:
  struct Impl;

  TrainedClassifier() = default;
  explicit TrainedClassifier(std::shared_ptr<Impl> impl);

  const std::string& architecture_id() const;
  std::array<Regime, 2> class_order() const { return kClassOrder; }
  int input_size() const;
  const TrainingFingerprint& fingerprint() const;
  std::string weights_hash() const;
  std::size_t embedding_dim() const;

  /// Images must be input_size x input_size (ShapeError otherwise).
  std::vector<ProbabilityRow> predict(std::span<const GrayImage> images) const;
  /// Penultimate activations, one row per image.
  Eigen::MatrixXd embed(std::span<const GrayImage> images) const;

  /// Writes `weights.pt` and `model.json` into `dir`.
  void save(const std::filesystem::path& dir) const;
  static TrainedClassifier load(const std::filesystem::path& dir);

  bool valid() const { return impl_ != nullptr; }

 private:
  std::shared_ptr<Impl> impl_;
};

/// Test and instrumentation hooks. val_loss_override replaces the measured
/// validation loss of an epoch before model selection sees it.
struct ClassifierHooks {
  std::function<double(int epoch, double measured)> val_loss_override;
  std::function<void(int epoch, const std::string& weights_hash)> on_epoch_end;
};

/// Returns the snapshot with the lowest validation loss, not the last one.
std::pair<TrainedClassifier, TrainingLog> train_classifier(const DatasetManifest& train,
                                                           const DatasetManifest& val,
                                                           const ClassifierConfig& config,
                                                           const ClassifierHooks& hooks = {});

std::pair<TrainedClassifier, TrainingLog> train_classifier(std::span<const GrayImage> train_images,
                                                           std::span<const Regime> train_labels,
                                                           std::span<const GrayImage> val_images,
                                                           std::span<const Regime> val_labels,
                                                           const ClassifierConfig& config,
                                                           const ClassifierHooks& hooks = {});

/// Loads, resizes to the model input size and predicts, in manifest order.
std::vector<ProbabilityRow> predict(const TrainedClassifier& model, const DatasetManifest& images);

EvalReport evaluate(const TrainedClassifier& model, const DatasetManifest& labeled);
EvalReport evaluate(const TrainedClassifier& model, std::span<const GrayImage> images,
                    std::span<const Regime> labels);

/// Labels of a manifest in order; LabelingError if any is missing.
std::vector<Regime> labels_of(const DatasetManifest& manifest);

void save_training_log(const TrainingLog& log, const std::filesystem::path& csv);

/// Default FID embedding: the classifier's penultimate activations.
class ClassifierFeatureExtractor : public FeatureExtractor {
 public:
  explicit ClassifierFeatureExtractor(TrainedClassifier model) : model_(std::move(model)) {}
  std::string extractor_id() const override;
  std::size_t embedding_dim() const override { return model_.embedding_dim(); }
  /// Images of any size are resized to the classifier input first.
  Eigen::MatrixXd embed(std::span<const GrayImage> images) const override;

 private:
  TrainedClassifier model_;
};

}  // namespace domainbridge
