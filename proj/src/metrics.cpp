#include "domainbridge/metrics.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <nlohmann/json.hpp>
#include <numeric>

#include "domainbridge/error.hpp"

namespace domainbridge {

// ---------------------------------------------------------------------------
// SSIM
// ---------------------------------------------------------------------------

namespace {

// Summed-area table with one row/column of zero padding.
class IntegralImage {
 public:
  template <typename F>
  IntegralImage(int w, int h, F&& value) : w_(w), sums_(static_cast<std::size_t>(w + 1) * (h + 1), 0.0) {
    for (int y = 0; y < h; ++y) {
      double row = 0.0;
      for (int x = 0; x < w; ++x) {
        row += value(x, y);
        at(x + 1, y + 1) = at(x + 1, y) + row;
      }
    }
  }

  double box(int x0, int y0, int size) const {
    return at(x0 + size, y0 + size) - at(x0, y0 + size) - at(x0 + size, y0) + at(x0, y0);
  }

 private:
  double& at(int x, int y) { return sums_[static_cast<std::size_t>(y) * (w_ + 1) + x]; }
  double at(int x, int y) const { return sums_[static_cast<std::size_t>(y) * (w_ + 1) + x]; }

  int w_;
  std::vector<double> sums_;
};

}  // namespace

double ssim(const GrayImage& a, const GrayImage& b) {
  if (!a.same_shape(b)) {
    throw ShapeError("ssim: shapes differ (" + std::to_string(a.width) + "x" +
                     std::to_string(a.height) + " vs " + std::to_string(b.width) + "x" +
                     std::to_string(b.height) + ")");
  }
  constexpr int win = kSsimWindow;
  if (a.width < win || a.height < win) {
    throw ShapeError("ssim: images must be at least 7x7");
  }
  constexpr double c1 = 0.01 * 0.01;
  constexpr double c2 = 0.03 * 0.03;
  constexpr double np = win * win;
  constexpr double cov_norm = np / (np - 1.0);

  const int w = a.width;
  const int h = a.height;
  auto px = [&](const GrayImage& img, int x, int y) { return static_cast<double>(img.at(x, y)); };
  const IntegralImage sa(w, h, [&](int x, int y) { return px(a, x, y); });
  const IntegralImage sb(w, h, [&](int x, int y) { return px(b, x, y); });
  const IntegralImage saa(w, h, [&](int x, int y) { return px(a, x, y) * px(a, x, y); });
  const IntegralImage sbb(w, h, [&](int x, int y) { return px(b, x, y) * px(b, x, y); });
  const IntegralImage sab(w, h, [&](int x, int y) { return px(a, x, y) * px(b, x, y); });

  double total = 0.0;
  std::size_t windows = 0;
  for (int y = 0; y + win <= h; ++y) {
    for (int x = 0; x + win <= w; ++x) {
      const double ux = sa.box(x, y, win) / np;
      const double uy = sb.box(x, y, win) / np;
      const double vx = cov_norm * (saa.box(x, y, win) / np - ux * ux);
      const double vy = cov_norm * (sbb.box(x, y, win) / np - uy * uy);
      const double vxy = cov_norm * (sab.box(x, y, win) / np - ux * uy);
      const double num = (2.0 * ux * uy + c1) * (2.0 * vxy + c2);
      const double den = (ux * ux + uy * uy + c1) * (vx + vy + c2);
      total += num / den;
      ++windows;
    }
  }
  return total / static_cast<double>(windows);
}

// ---------------------------------------------------------------------------
// Classification metrics
// ---------------------------------------------------------------------------

namespace {
double safe_div(double num, double den) { return den == 0.0 ? 0.0 : num / den; }
}  // namespace

EvalReport report_from_confusion(const ConfusionMatrix& cm) {
  EvalReport r;
  r.confusion = cm;
  const double tp = static_cast<double>(cm.tp);
  const double fn = static_cast<double>(cm.fn);
  const double fp = static_cast<double>(cm.fp);
  const double tn = static_cast<double>(cm.tn);
  const double support_chf = tp + fn;
  const double support_pre = fp + tn;
  const double total = support_chf + support_pre;
  if (total == 0.0) throw DataError("empty confusion matrix");

  const double recall_chf = safe_div(tp, support_chf);
  const double recall_pre = safe_div(tn, support_pre);
  const double precision_chf = safe_div(tp, tp + fp);
  const double precision_pre = safe_div(tn, tn + fn);
  const double f1_chf = safe_div(2.0 * precision_chf * recall_chf, precision_chf + recall_chf);
  const double f1_pre = safe_div(2.0 * precision_pre * recall_pre, precision_pre + recall_pre);

  // Mean recall over the classes that actually occur.
  if (support_chf > 0.0 && support_pre > 0.0) {
    r.balanced_accuracy = 0.5 * (recall_chf + recall_pre);
  } else {
    r.balanced_accuracy = support_chf > 0.0 ? recall_chf : recall_pre;
  }
  const double w_chf = support_chf / total;
  const double w_pre = support_pre / total;
  r.precision_weighted = w_chf * precision_chf + w_pre * precision_pre;
  r.recall_weighted = w_chf * recall_chf + w_pre * recall_pre;
  r.f1_weighted = w_chf * f1_chf + w_pre * f1_pre;
  return r;
}

std::optional<double> roc_auc(std::span<const double> chf_scores, std::span<const Regime> labels) {
  if (chf_scores.size() != labels.size()) throw ShapeError("roc_auc: length mismatch");
  const std::size_t n = chf_scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t i, std::size_t j) { return chf_scores[i] < chf_scores[j]; });

  std::vector<double> rank(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && chf_scores[order[j + 1]] == chf_scores[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = avg;
    i = j + 1;
  }

  double pos = 0.0;
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] == Regime::CHF) {
      pos += 1.0;
      rank_sum += rank[i];
    }
  }
  const double neg = static_cast<double>(n) - pos;
  if (pos == 0.0 || neg == 0.0) return std::nullopt;
  return (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg);
}

EvalReport classification_report(std::span<const ProbabilityRow> probabilities,
                                 std::span<const Regime> labels) {
  if (probabilities.size() != labels.size()) {
    throw ShapeError("classification_report: " + std::to_string(probabilities.size()) +
                     " probability rows for " + std::to_string(labels.size()) + " labels");
  }
  if (labels.empty()) throw DataError("classification_report: no samples");

  ConfusionMatrix cm;
  std::vector<double> scores(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto& p = probabilities[i];
    scores[i] = p[0];
    const bool predicted_chf = p[0] >= p[1];
    if (labels[i] == Regime::CHF) {
      predicted_chf ? ++cm.tp : ++cm.fn;
    } else {
      predicted_chf ? ++cm.fp : ++cm.tn;
    }
  }
  EvalReport r = report_from_confusion(cm);
  r.roc_auc = roc_auc(scores, labels);
  return r;
}

// ---------------------------------------------------------------------------
// Gaussians and the Frechet distance
// ---------------------------------------------------------------------------

GaussianSummary fit_gaussian(const Eigen::MatrixXd& embeddings) {
  const auto n = embeddings.rows();
  if (n < 2) {
    throw DataError("fit_gaussian needs at least 2 samples, got " + std::to_string(n));
  }
  GaussianSummary g;
  g.n = static_cast<std::size_t>(n);
  g.mean = embeddings.colwise().mean().transpose();
  const Eigen::MatrixXd centered = embeddings.rowwise() - g.mean.transpose();
  g.covariance = (centered.transpose() * centered) / static_cast<double>(n - 1);
  g.covariance = 0.5 * (g.covariance + g.covariance.transpose()).eval();
  return g;
}

namespace {

struct SqrtResult {
  Eigen::MatrixXd real;
  std::complex<double> trace;
  double max_imaginary = 0.0;
  std::complex<double> worst_eigenvalue;
  bool finite = true;
};

SqrtResult sqrtm_detail(const Eigen::MatrixXd& m) {
  Eigen::EigenSolver<Eigen::MatrixXd> solver(m, /*computeEigenvectors=*/true);
  if (solver.info() != Eigen::Success) {
    throw NumericalError("eigendecomposition did not converge");
  }
  const Eigen::VectorXcd lambda = solver.eigenvalues();
  const Eigen::MatrixXcd vectors = solver.eigenvectors();
  Eigen::VectorXcd root(lambda.size());
  SqrtResult out;
  double worst = -1.0;
  for (Eigen::Index i = 0; i < lambda.size(); ++i) {
    root[i] = std::sqrt(lambda[i]);
    out.trace += root[i];
    const double badness = std::abs(root[i].imag());
    if (badness > worst) {
      worst = badness;
      out.worst_eigenvalue = lambda[i];
    }
  }
  const Eigen::MatrixXcd s = vectors * root.asDiagonal() * vectors.inverse();
  out.real = s.real();
  out.max_imaginary = s.imag().cwiseAbs().maxCoeff();
  out.finite = s.allFinite();
  return out;
}

}  // namespace

Eigen::MatrixXd sqrtm_via_eigen(const Eigen::MatrixXd& m, double* max_imaginary) {
  if (m.rows() != m.cols()) throw ShapeError("sqrtm: matrix is not square");
  SqrtResult r = sqrtm_detail(m);
  if (max_imaginary) *max_imaginary = r.max_imaginary;
  return r.real;
}

FIDScore frechet_distance(const GaussianSummary& g1, const GaussianSummary& g2,
                          const FrechetOptions& options) {
  if (g1.dim() != g2.dim() || g1.covariance.rows() != g1.dim() ||
      g2.covariance.rows() != g2.dim()) {
    throw ShapeError("frechet_distance: dimension mismatch (" + std::to_string(g1.dim()) +
                     " vs " + std::to_string(g2.dim()) + ")");
  }
  FIDScore score;
  score.mean_term = (g1.mean - g2.mean).squaredNorm();

  SqrtResult root = sqrtm_detail(g1.covariance * g2.covariance);
  if (!root.finite || root.max_imaginary > options.imaginary_tolerance) {
    const auto eye = Eigen::MatrixXd::Identity(g1.dim(), g1.dim());
    const Eigen::MatrixXd c1 = g1.covariance + options.epsilon * eye;
    const Eigen::MatrixXd c2 = g2.covariance + options.epsilon * eye;
    root = sqrtm_detail(c1 * c2);
    if (!root.finite || root.max_imaginary > options.imaginary_tolerance) {
      throw NumericalError("matrix square root has imaginary component " +
                           std::to_string(root.max_imaginary) + " after stabilization; eigenvalue (" +
                           std::to_string(root.worst_eigenvalue.real()) + ", " +
                           std::to_string(root.worst_eigenvalue.imag()) + "i)");
    }
  }
  // trace(V sqrt(D) V^-1) = sum sqrt(lambda); the eigenvalue sum avoids the
  // conditioning of V^-1.
  const double trace_sqrt = root.trace.real();
  const double trace_term = g1.covariance.trace() + g2.covariance.trace() - 2.0 * trace_sqrt;
  score.trace_term = std::max(trace_term, 0.0);
  score.value = score.mean_term + score.trace_term;
  return score;
}

FIDScore fid_between_sets(std::span<const GrayImage> real, std::span<const GrayImage> generated,
                          const FeatureExtractor& extractor) {
  const GaussianSummary a = fit_gaussian(extractor.embed(real));
  const GaussianSummary b = fit_gaussian(extractor.embed(generated));
  return frechet_distance(a, b);
}

FIDScore fid_between_sets(const DatasetManifest& real, const DatasetManifest& generated,
                          const FeatureExtractor& extractor) {
  const auto real_images = load_images(real);
  const auto generated_images = load_images(generated);
  return fid_between_sets(real_images, generated_images, extractor);
}

// ---------------------------------------------------------------------------
// Embedding cache
// ---------------------------------------------------------------------------

namespace {
std::filesystem::path sidecar_of(const std::filesystem::path& file) {
  return std::filesystem::path(file.string() + ".json");
}
}  // namespace

void save_embedding_cache(const std::filesystem::path& file, const Eigen::MatrixXd& embeddings,
                          const std::string& extractor_id) {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary);
  if (!out) throw IoError("cannot write embedding cache " + file.string());
  for (Eigen::Index r = 0; r < embeddings.rows(); ++r) {
    for (Eigen::Index c = 0; c < embeddings.cols(); ++c) {
      const float v = static_cast<float>(embeddings(r, c));
      out.write(reinterpret_cast<const char*>(&v), sizeof v);
    }
  }
  std::ofstream meta(sidecar_of(file));
  meta << nlohmann::json{{"extractor_id", extractor_id},
                         {"n", embeddings.rows()},
                         {"d", embeddings.cols()}}
              .dump()
       << '\n';
}

Eigen::MatrixXd load_embedding_cache(const std::filesystem::path& file, std::string* extractor_id) {
  std::ifstream meta_in(sidecar_of(file));
  if (!meta_in) throw IoError("missing embedding sidecar for " + file.string());
  const auto meta = nlohmann::json::parse(meta_in);
  const auto n = meta.at("n").get<Eigen::Index>();
  const auto d = meta.at("d").get<Eigen::Index>();
  if (extractor_id) *extractor_id = meta.at("extractor_id").get<std::string>();

  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot read embedding cache " + file.string());
  in.seekg(0, std::ios::end);
  const auto bytes = static_cast<std::size_t>(in.tellg());
  if (bytes != static_cast<std::size_t>(n * d) * sizeof(float)) {
    throw IoError("embedding cache size does not match sidecar for " + file.string());
  }
  in.seekg(0);
  Eigen::MatrixXd out(n, d);
  for (Eigen::Index r = 0; r < n; ++r) {
    for (Eigen::Index c = 0; c < d; ++c) {
      float v = 0.0f;
      in.read(reinterpret_cast<char*>(&v), sizeof v);
      out(r, c) = v;
    }
  }
  return out;
}

}  // namespace domainbridge
