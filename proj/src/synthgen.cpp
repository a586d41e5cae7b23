#include "domainbridge/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <opencv2/imgproc.hpp>
#include <random>

#include "domainbridge/error.hpp"
#include "domainbridge/serialization.hpp"

namespace domainbridge {

using nlohmann::json;

ClassGeometry default_pre_chf_geometry() {
  ClassGeometry g;
  g.blob_count_min = 4;
  g.blob_count_max = 9;
  g.radius_min = 0.03;
  g.radius_max = 0.08;
  g.blob_y_min = 0.45;
  g.blob_y_max = 0.95;
  return g;
}

ClassGeometry default_chf_geometry() {
  ClassGeometry g;
  g.blob_count_min = 2;
  g.blob_count_max = 4;
  g.radius_min = 0.10;
  g.radius_max = 0.18;
  g.blob_y_min = 0.55;
  g.blob_y_max = 0.85;
  g.band_height_min = 0.12;
  g.band_height_max = 0.22;
  g.band_ripple_min = 0.01;
  g.band_ripple_max = 0.04;
  g.band_ripple_periods = 2.0;
  return g;
}

DomainStyle default_source_style() { return {0.1, 0.9, 1.0, 0.0, 0.02}; }
DomainStyle default_target_style() { return {0.6, 1.0, 0.6, 1.2, 0.05}; }

namespace {

void check_range(double lo, double hi, double min_allowed, double max_allowed, const char* what) {
  if (!(lo >= min_allowed && hi <= max_allowed && lo <= hi)) {
    throw SpecError(std::string("invalid range for ") + what);
  }
}

void validate_geometry(const ClassGeometry& g) {
  if (g.blob_count_min < 0 || g.blob_count_min > g.blob_count_max) throw SpecError("invalid blob count range");
  check_range(g.radius_min, g.radius_max, 0.0, 1.0, "blob radius");
  check_range(g.blob_y_min, g.blob_y_max, 0.0, 1.0, "blob centre height");
  check_range(g.band_height_min, g.band_height_max, 0.0, 1.0, "band height");
  check_range(g.band_ripple_min, g.band_ripple_max, 0.0, 1.0, "band ripple");
  if (g.band_ripple_periods < 0.0) throw SpecError("band_ripple_periods must be >= 0");
}

void validate_style(const DomainStyle& s) {
  if (!(s.background >= 0.0 && s.background <= 1.0 && s.foreground >= 0.0 && s.foreground <= 1.0)) {
    throw SpecError("style intensities must lie in [0,1]");
  }
  if (s.background == s.foreground) throw SpecError("style background and foreground must differ");
  if (!(s.gamma > 0.0)) throw SpecError("style gamma must be > 0");
  if (s.blur_sigma < 0.0 || s.noise_sigma < 0.0) throw SpecError("style blur and noise must be >= 0");
}

int differing_style_parameters(const DomainStyle& a, const DomainStyle& b) {
  return (a.background != b.background) + (a.foreground != b.foreground) + (a.gamma != b.gamma) +
         (a.blur_sigma != b.blur_sigma) + (a.noise_sigma != b.noise_sigma);
}

}  // namespace

void SynthConfig::validate() const {
  if (n_per_class_per_domain < 1) throw SpecError("n_per_class_per_domain must be >= 1");
  if (image_size < 8) throw SpecError("image_size must be >= 8");
  validate_geometry(pre_chf);
  validate_geometry(chf);
  validate_style(source_style);
  validate_style(target_style);
  if (differing_style_parameters(source_style, target_style) < 2) {
    throw SpecError("domain styles must differ in at least two parameters");
  }
}

GrayImage render_synthetic(const SynthConfig& config, DomainCode domain, Regime regime, std::size_t index) {
  const ClassGeometry& g = regime == Regime::CHF ? config.chf : config.pre_chf;
  const DomainStyle& style = domain == DomainCode::SOURCE ? config.source_style : config.target_style;
  const int n = config.image_size;
  const double side = n;

  std::seed_seq seq{static_cast<std::uint32_t>(config.seed), static_cast<std::uint32_t>(config.seed >> 32),
                    static_cast<std::uint32_t>(domain), static_cast<std::uint32_t>(regime),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(std::uint64_t(index) >> 32)};
  std::mt19937_64 rng(seq);
  auto uniform = [&rng](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };

  std::vector<float> coverage(static_cast<std::size_t>(n) * n, 0.0f);
  auto cover = [&](int x, int y, double c) {
    float& v = coverage[static_cast<std::size_t>(y) * n + x];
    v = std::max(v, static_cast<float>(std::clamp(c, 0.0, 1.0)));
  };

  if (g.band_height_max > 0.0) {
    const double height = uniform(g.band_height_min, g.band_height_max) * side;
    const double ripple = uniform(g.band_ripple_min, g.band_ripple_max) * side;
    const double phase = uniform(0.0, 2.0 * std::numbers::pi);
    for (int x = 0; x < n; ++x) {
      const double top = side - height +
                         ripple * std::sin(2.0 * std::numbers::pi * g.band_ripple_periods * (x + 0.5) / side + phase);
      for (int y = 0; y < n; ++y) cover(x, y, y + 1.0 - top);
    }
  }

  const int blobs = std::uniform_int_distribution<int>(g.blob_count_min, g.blob_count_max)(rng);
  for (int b = 0; b < blobs; ++b) {
    const double cx = uniform(0.0, 1.0) * side;
    const double cy = uniform(g.blob_y_min, g.blob_y_max) * side;
    const double r = uniform(g.radius_min, g.radius_max) * side;
    const int x0 = std::max(0, static_cast<int>(std::floor(cx - r - 1)));
    const int x1 = std::min(n - 1, static_cast<int>(std::ceil(cx + r + 1)));
    const int y0 = std::max(0, static_cast<int>(std::floor(cy - r - 1)));
    const int y1 = std::min(n - 1, static_cast<int>(std::ceil(cy + r + 1)));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        cover(x, y, r + 0.5 - std::hypot(x + 0.5 - cx, y + 0.5 - cy));
      }
    }
  }

  cv::Mat img(n, n, CV_32F);
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      const double c = coverage[static_cast<std::size_t>(y) * n + x];
      img.at<float>(y, x) =
          static_cast<float>(style.background + (style.foreground - style.background) * std::pow(c, style.gamma));
    }
  }
  if (style.blur_sigma > 0.0) {
    cv::GaussianBlur(img, img, cv::Size(0, 0), style.blur_sigma, style.blur_sigma, cv::BORDER_REFLECT);
  }

  GrayImage out(n, n);
  std::normal_distribution<double> noise(0.0, style.noise_sigma > 0.0 ? style.noise_sigma : 1.0);
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      double v = img.at<float>(y, x);
      if (style.noise_sigma > 0.0) v += noise(rng);
      out.pixels[static_cast<std::size_t>(y) * n + x] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
  return out;
}

namespace {

DatasetManifest write_domain(const SynthConfig& config, DomainCode domain, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  DatasetManifest m{domain == DomainCode::SOURCE ? "SYNTH-A" : "SYNTH-B", dir, {}};
  std::int64_t frame = 0;
  for (Regime regime : kClassOrder) {
    const char* prefix = regime == Regime::CHF ? "chf" : "prechf";
    for (int i = 0; i < config.n_per_class_per_domain; ++i) {
      char name[40];
      std::snprintf(name, sizeof name, "%s_%06d.png", prefix, i);
      save_image(dir / name, render_synthetic(config, domain, regime, static_cast<std::size_t>(i)), 8);
      ImageSample s(name, m.domain_id, frame++, regime);
      s.width = s.height = config.image_size;
      m.samples.push_back(std::move(s));
    }
  }
  save_metadata({8, config.image_size, config.image_size}, dir);
  save_manifest(m, dir / "manifest.csv");
  return m;
}

}  // namespace

std::pair<DatasetManifest, DatasetManifest> generate_domain_pair(const SynthConfig& config,
                                                                 const std::filesystem::path& out_dir) {
  config.validate();
  auto source = write_domain(config, DomainCode::SOURCE, out_dir / "source");
  auto target = write_domain(config, DomainCode::TARGET, out_dir / "target");
  write_json_file(out_dir / "synth_config.json", json(config));
  return {std::move(source), std::move(target)};
}

double band_occupancy(const GrayImage& img, const DomainStyle& style, double band_fraction) {
  const int rows = std::max(1, static_cast<int>(std::lround(img.height * band_fraction)));
  const double mid = 0.5 * (style.background + style.foreground);
  const bool bright_fg = style.foreground > style.background;
  std::size_t hits = 0;
  for (int y = img.height - rows; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const float v = img.at(x, y);
      hits += bright_fg ? v > mid : v < mid;
    }
  }
  return static_cast<double>(hits) / (static_cast<double>(rows) * img.width);
}

double histogram_chi_square(std::span<const GrayImage> a, std::span<const GrayImage> b, int bins) {
  if (bins < 1) throw SpecError("histogram needs at least one bin");
  auto histogram = [bins](std::span<const GrayImage> set) {
    std::vector<double> h(static_cast<std::size_t>(bins), 0.0);
    double total = 0.0;
    for (const auto& img : set) {
      for (float v : img.pixels) {
        const int bin = std::clamp(static_cast<int>(v * bins), 0, bins - 1);
        h[static_cast<std::size_t>(bin)] += 1.0;
        total += 1.0;
      }
    }
    if (total == 0.0) throw DataError("histogram of an empty image set");
    for (double& x : h) x /= total;
    return h;
  };
  const auto ha = histogram(a);
  const auto hb = histogram(b);
  double chi = 0.0;
  for (int i = 0; i < bins; ++i) {
    const double s = ha[static_cast<std::size_t>(i)] + hb[static_cast<std::size_t>(i)];
    if (s > 0.0) {
      const double d = ha[static_cast<std::size_t>(i)] - hb[static_cast<std::size_t>(i)];
      chi += d * d / s;
    }
  }
  return chi;
}

SynthProperties check_synth_properties(const SynthConfig& config, const DatasetManifest& source,
                                       const DatasetManifest& target) {
  auto occupancy_gap = [](const DatasetManifest& m, const std::vector<GrayImage>& images, const DomainStyle& s) {
    double sum[2] = {0.0, 0.0};
    std::size_t count[2] = {0, 0};
    for (std::size_t i = 0; i < images.size(); ++i) {
      const auto label = m.samples[i].label();
      if (!label) throw LabelingError("synthetic property check needs labeled samples");
      const int k = static_cast<int>(*label);
      sum[k] += band_occupancy(images[i], s);
      ++count[k];
    }
    if (count[0] == 0 || count[1] == 0) throw DataError("both classes are required");
    return sum[static_cast<int>(Regime::CHF)] / count[static_cast<int>(Regime::CHF)] -
           sum[static_cast<int>(Regime::PRE_CHF)] / count[static_cast<int>(Regime::PRE_CHF)];
  };
  const auto src = load_images(source);
  const auto tgt = load_images(target);
  SynthProperties p;
  p.source_occupancy_gap = occupancy_gap(source, src, config.source_style);
  p.target_occupancy_gap = occupancy_gap(target, tgt, config.target_style);
  p.domain_chi_square = histogram_chi_square(src, tgt);
  p.separable = p.source_occupancy_gap > config.separability_margin &&
                p.target_occupancy_gap > config.separability_margin;
  p.domains_differ = p.domain_chi_square > config.domain_gap_floor;
  return p;
}

namespace {

void to_json(json& j, const ClassGeometry& g) {
  j = json{{"blob_count_min", g.blob_count_min},   {"blob_count_max", g.blob_count_max},
           {"radius_min", g.radius_min},           {"radius_max", g.radius_max},
           {"blob_y_min", g.blob_y_min},           {"blob_y_max", g.blob_y_max},
           {"band_height_min", g.band_height_min}, {"band_height_max", g.band_height_max},
           {"band_ripple_min", g.band_ripple_min}, {"band_ripple_max", g.band_ripple_max},
           {"band_ripple_periods", g.band_ripple_periods}};
}

template <typename T>
void read_opt(const json& j, const char* key, T& field) {
  if (auto it = j.find(key); it != j.end()) it->get_to(field);
}

void from_json(const json& j, ClassGeometry& g) {
  reject_unknown_keys(j,
                      {"blob_count_min", "blob_count_max", "radius_min", "radius_max", "blob_y_min", "blob_y_max",
                       "band_height_min", "band_height_max", "band_ripple_min", "band_ripple_max",
                       "band_ripple_periods"},
                      "class_params");
  read_opt(j, "blob_count_min", g.blob_count_min);
  read_opt(j, "blob_count_max", g.blob_count_max);
  read_opt(j, "radius_min", g.radius_min);
  read_opt(j, "radius_max", g.radius_max);
  read_opt(j, "blob_y_min", g.blob_y_min);
  read_opt(j, "blob_y_max", g.blob_y_max);
  read_opt(j, "band_height_min", g.band_height_min);
  read_opt(j, "band_height_max", g.band_height_max);
  read_opt(j, "band_ripple_min", g.band_ripple_min);
  read_opt(j, "band_ripple_max", g.band_ripple_max);
  read_opt(j, "band_ripple_periods", g.band_ripple_periods);
}

void to_json(json& j, const DomainStyle& s) {
  j = json{{"background", s.background},
           {"foreground", s.foreground},
           {"gamma", s.gamma},
           {"blur_sigma", s.blur_sigma},
           {"noise_sigma", s.noise_sigma}};
}

void from_json(const json& j, DomainStyle& s) {
  reject_unknown_keys(j, {"background", "foreground", "gamma", "blur_sigma", "noise_sigma"}, "domain_style");
  read_opt(j, "background", s.background);
  read_opt(j, "foreground", s.foreground);
  read_opt(j, "gamma", s.gamma);
  read_opt(j, "blur_sigma", s.blur_sigma);
  read_opt(j, "noise_sigma", s.noise_sigma);
}

}  // namespace

void to_json(json& j, const SynthConfig& c) {
  json pre, chf, src, tgt;
  to_json(pre, c.pre_chf);
  to_json(chf, c.chf);
  to_json(src, c.source_style);
  to_json(tgt, c.target_style);
  j = json{{"image_size", c.image_size},
           {"n_per_class_per_domain", c.n_per_class_per_domain},
           {"class_params", {{"PRE_CHF", pre}, {"CHF", chf}}},
           {"domain_style", {{"source", src}, {"target", tgt}}},
           {"seed", c.seed},
           {"separability_margin", c.separability_margin},
           {"domain_gap_floor", c.domain_gap_floor}};
}

void from_json(const json& j, SynthConfig& c) {
  reject_unknown_keys(j,
                      {"image_size", "n_per_class_per_domain", "class_params", "domain_style", "seed",
                       "separability_margin", "domain_gap_floor"},
                      "synth config");
  read_opt(j, "image_size", c.image_size);
  read_opt(j, "n_per_class_per_domain", c.n_per_class_per_domain);
  read_opt(j, "seed", c.seed);
  read_opt(j, "separability_margin", c.separability_margin);
  read_opt(j, "domain_gap_floor", c.domain_gap_floor);
  if (auto it = j.find("class_params"); it != j.end()) {
    reject_unknown_keys(*it, {"PRE_CHF", "CHF"}, "class_params");
    if (it->contains("PRE_CHF")) from_json(it->at("PRE_CHF"), c.pre_chf);
    if (it->contains("CHF")) from_json(it->at("CHF"), c.chf);
  }
  if (auto it = j.find("domain_style"); it != j.end()) {
    reject_unknown_keys(*it, {"source", "target"}, "domain_style");
    if (it->contains("source")) from_json(it->at("source"), c.source_style);
    if (it->contains("target")) from_json(it->at("target"), c.target_style);
  }
}

}  // namespace domainbridge
