#pragma once

#include <filesystem>
#include <span>
#include <utility>

#include <nlohmann/json.hpp>

#include "domainbridge/image.hpp"
#include "domainbridge/manifest.hpp"
#include "domainbridge/ui2i.hpp"

namespace domainbridge {

/// Shape distribution of one regime. Lengths are fractions of the image side;
/// y grows downward, so the heated surface is the bottom edge.
struct ClassGeometry {
  int blob_count_min = 0;
  int blob_count_max = 0;
  double radius_min = 0.0;
  double radius_max = 0.0;
  double blob_y_min = 0.0;  // blob centre range
  double blob_y_max = 0.0;
  double band_height_min = 0.0;  // 0 disables the bottom band
  double band_height_max = 0.0;
  double band_ripple_min = 0.0;  // amplitude of the band's wavy top edge
  double band_ripple_max = 0.0;
  double band_ripple_periods = 2.0;
};

ClassGeometry default_pre_chf_geometry();
ClassGeometry default_chf_geometry();

/// Pixel value = background + (foreground - background) * coverage^gamma,
/// then Gaussian blur, additive Gaussian noise and clamping to [0,1].
struct DomainStyle {
  double background = 0.1;
  double foreground = 0.9;
  double gamma = 1.0;
  double blur_sigma = 0.0;  // pixels
  double noise_sigma = 0.02;
};

DomainStyle default_source_style();
DomainStyle default_target_style();

struct SynthConfig {
  int image_size = 64;
  int n_per_class_per_domain = 300;
  ClassGeometry pre_chf = default_pre_chf_geometry();
  ClassGeometry chf = default_chf_geometry();
  DomainStyle source_style = default_source_style();
  DomainStyle target_style = default_target_style();
  std::uint64_t seed = 0;
  // Thresholds for check_synth_properties.
  double separability_margin = 0.3;
  double domain_gap_floor = 0.1;

  /// SpecError on n < 1, image_size < 8, inverted ranges or styles that
  /// differ in fewer than two parameters.
  void validate() const;
};

void to_json(nlohmann::json& j, const SynthConfig& c);
void from_json(const nlohmann::json& j, SynthConfig& c);

/// Renders one image. Deterministic in (config.seed, domain, regime, index).
GrayImage render_synthetic(const SynthConfig& config, DomainCode domain, Regime regime, std::size_t index);

/// Writes `<out>/source` (domain SYNTH-A) and `<out>/target` (domain SYNTH-B),
/// each holding n_per_class_per_domain labeled images per class.
std::pair<DatasetManifest, DatasetManifest> generate_domain_pair(const SynthConfig& config,
                                                                 const std::filesystem::path& out_dir);

/// Mean fraction of bottom-band pixels brighter than the style midpoint.
double band_occupancy(const GrayImage& img, const DomainStyle& style, double band_fraction = 0.1);

/// Symmetric chi-square distance between the pooled intensity histograms of
/// two image sets, in [0, 2].
double histogram_chi_square(std::span<const GrayImage> a, std::span<const GrayImage> b, int bins = 32);

struct SynthProperties {
  double source_occupancy_gap = 0.0;  // mean CHF occupancy minus mean PRE_CHF occupancy
  double target_occupancy_gap = 0.0;
  double domain_chi_square = 0.0;
  bool separable = false;
  bool domains_differ = false;
};

SynthProperties check_synth_properties(const SynthConfig& config, const DatasetManifest& source,
                                       const DatasetManifest& target);

}  // namespace domainbridge
