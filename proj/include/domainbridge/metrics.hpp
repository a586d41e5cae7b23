#pragma once

#include <Eigen/Core>
#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "domainbridge/image.hpp"
#include "domainbridge/manifest.hpp"

namespace domainbridge {

// ---------------------------------------------------------------------------
// Structural similarity
// ---------------------------------------------------------------------------

inline constexpr int kSsimWindow = 7;

/// Mean SSIM over every fully contained 7x7 window, with sample (n-1)
/// variances, data range 1, C1 = 0.01^2 and C2 = 0.03^2. Both images must
/// share a shape of at least 7x7.
double ssim(const GrayImage& a, const GrayImage& b);

// ---------------------------------------------------------------------------
// Classification metrics
// ---------------------------------------------------------------------------

/// Two-class confusion counts with CHF as the positive class.
struct ConfusionMatrix {
  std::size_t tp = 0;  // CHF predicted CHF
  std::size_t fn = 0;  // CHF predicted PRE_CHF
  std::size_t fp = 0;  // PRE_CHF predicted CHF
  std::size_t tn = 0;  // PRE_CHF predicted PRE_CHF

  std::size_t total() const { return tp + fn + fp + tn; }
  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

struct EvalReport {
  ConfusionMatrix confusion;
  double balanced_accuracy = 0.0;
  double f1_weighted = 0.0;
  double precision_weighted = 0.0;
  double recall_weighted = 0.0;
  std::optional<double> roc_auc;  // undefined when only one class is present
};

/// One probability row per sample, columns in kClassOrder.
using ProbabilityRow = std::array<double, 2>;

/// Hard predictions are argmax with ties resolved towards CHF. Per-class
/// precision/recall/F1 are averaged with support weights; a class with no
/// predictions contributes zero precision.
EvalReport classification_report(std::span<const ProbabilityRow> probabilities,
                                 std::span<const Regime> labels);

/// The threshold-free metrics of a report computed from counts alone.
/// roc_auc is left empty.
EvalReport report_from_confusion(const ConfusionMatrix& cm);

/// Area under the ROC curve of the CHF score, ties ranked by average rank.
/// Empty when either class is absent.
std::optional<double> roc_auc(std::span<const double> chf_scores, std::span<const Regime> labels);

// ---------------------------------------------------------------------------
// Gaussian fitting and the Frechet distance
// ---------------------------------------------------------------------------

struct GaussianSummary {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
  std::size_t n = 0;

  Eigen::Index dim() const { return mean.size(); }
};

/// Rows are observations. Unbiased covariance (divisor n-1), symmetrized.
GaussianSummary fit_gaussian(const Eigen::MatrixXd& embeddings);

struct FIDScore {
  double value = 0.0;
  double mean_term = 0.0;
  double trace_term = 0.0;
};

struct FrechetOptions {
  double epsilon = 1e-6;            // added to both covariances on retry
  double imaginary_tolerance = 1e-3;
};

/// |m1 - m2|^2 + Tr(C1 + C2 - 2 (C1 C2)^{1/2}); the square root is taken
/// through an eigendecomposition of the product.
FIDScore frechet_distance(const GaussianSummary& g1, const GaussianSummary& g2,
                          const FrechetOptions& options = {});

/// Principal square root of a matrix with real, nonnegative spectrum via
/// eigendecomposition. Returns the real part and reports the largest
/// imaginary magnitude discarded.
Eigen::MatrixXd sqrtm_via_eigen(const Eigen::MatrixXd& m, double* max_imaginary = nullptr);

/// Maps images to fixed-length embeddings. The same instance must embed both
/// sides of any distance computation.
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual std::string extractor_id() const = 0;
  virtual std::size_t embedding_dim() const = 0;
  /// One row per image.
  virtual Eigen::MatrixXd embed(std::span<const GrayImage> images) const = 0;
};

FIDScore fid_between_sets(std::span<const GrayImage> real, std::span<const GrayImage> generated,
                          const FeatureExtractor& extractor);
FIDScore fid_between_sets(const DatasetManifest& real, const DatasetManifest& generated,
                          const FeatureExtractor& extractor);

/// n x d float32 matrix plus a `<file>.json` sidecar {extractor_id, n, d}.
void save_embedding_cache(const std::filesystem::path& file, const Eigen::MatrixXd& embeddings,
                          const std::string& extractor_id);
Eigen::MatrixXd load_embedding_cache(const std::filesystem::path& file,
                                     std::string* extractor_id = nullptr);

}  // namespace domainbridge
