#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "domainbridge/image.hpp"
#include "domainbridge/manifest.hpp"

namespace domainbridge {

enum class DomainCode : int { SOURCE = 0, TARGET = 1 };
inline DomainCode other(DomainCode d) {
  return d == DomainCode::SOURCE ? DomainCode::TARGET : DomainCode::SOURCE;
}
std::string_view to_string(DomainCode d);
DomainCode domain_code_from_string(std::string_view s);

struct LossWeights {
  double adversarial = 1.0;
  double domain = 1.0;
  double cycle = 10.0;
  double identity = 10.0;

  /// All weights nonnegative; cycle and identity strictly positive.
  void validate() const;
};

struct Ui2iOptimizer {
  double learning_rate = 1e-4;
  std::array<double, 2> betas{0.5, 0.999};
};

/// Registered backends: "fpgan" (conditional generator, critic with a domain
/// head, gradient-penalty objective) and "cyclegan" (two unconditional
/// generators, least-squares critics per domain).
struct UI2IConfig {
  std::string backend_id = "fpgan";
  std::int64_t total_iterations = 300000;
  std::int64_t checkpoint_every = 10000;
  int batch_size = 16;
  Ui2iOptimizer generator;
  Ui2iOptimizer discriminator;
  // One critic update per iteration; the generator steps every critic_steps.
  int critic_steps = 5;
  LossWeights weights;
  double gradient_penalty = 10.0;
  std::uint64_t seed = 0;
  int input_size = 128;
  int generator_channels = 64;
  int residual_blocks = 6;
  int critic_channels = 64;
  int critic_layers = 6;

  void validate() const;
  std::string hash() const;
};

/// Iterations at which checkpoints will be written, without training.
std::vector<std::int64_t> plan_checkpoints(const UI2IConfig& config);

struct CheckpointRecord {
  std::int64_t iteration = 0;
  std::filesystem::path path;
  std::size_t creation_index = 0;
  std::string backend_id;
};

/// `ckpt_<iteration, 7 digits>.bin`
std::string checkpoint_file_name(std::int64_t iteration);

/// Checkpoints listed in `<dir>/ckpt_meta.json`, iteration order.
std::vector<CheckpointRecord> list_checkpoints(const std::filesystem::path& dir);

/// Pluggable translation backend as seen by selection and the pipeline.
class TranslationModel {
 public:
  virtual ~TranslationModel() = default;
  virtual std::string backend_id() const = 0;
  virtual int input_size() const = 0;
  /// Images must already be input_size square; output values lie in [0,1].
  virtual std::vector<GrayImage> translate(std::span<const GrayImage> images, DomainCode to) const = 0;
};

/// Reconstructs the backend recorded next to the checkpoint and loads its
/// generator weights. Missing files raise IoError.
std::shared_ptr<const TranslationModel> load_translation_model(const CheckpointRecord& checkpoint);

struct Ui2iProgress {
  std::int64_t iteration = 0;
  double critic_loss = 0.0;
  double generator_loss = 0.0;
  double cycle = 0.0;
  double identity = 0.0;
};

struct Ui2iTrainOptions {
  std::function<void(const Ui2iProgress&)> on_progress;
  std::int64_t progress_every = 100;
  /// Stop (as if interrupted) after this many iterations in this call; 0 = no limit.
  std::int64_t max_iterations_this_call = 0;
};

/// Unsupervised: only image paths are read, never labels. Uses every source
/// sample and only the TRAIN-tagged target samples (all of them when the
/// target manifest carries no split tags). Resumes from `out_dir` when a
/// matching run is found there.
std::vector<CheckpointRecord> train_ui2i(const DatasetManifest& source,
                                         const DatasetManifest& target_train,
                                         const UI2IConfig& config,
                                         const std::filesystem::path& out_dir,
                                         const Ui2iTrainOptions& options = {});

/// Writes one translated 16-bit PNG per input into `out_dir` and returns the
/// manifest describing them (order, frame indices, split tags and labels are
/// carried over from the input).
DatasetManifest translate(const CheckpointRecord& checkpoint, const DatasetManifest& images,
                          DomainCode to, const std::filesystem::path& out_dir);
DatasetManifest translate(const TranslationModel& model, const DatasetManifest& images,
                          DomainCode to, const std::filesystem::path& out_dir);

}  // namespace domainbridge
