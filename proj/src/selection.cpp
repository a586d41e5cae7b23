#include "domainbridge/selection.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "domainbridge/error.hpp"
#include "domainbridge/serialization.hpp"

namespace domainbridge {

using nlohmann::json;

std::optional<std::int64_t> select_by_fid(std::span<const SweepRow> rows) {
  // best_FID starts at +infinity; only a strictly smaller score replaces it.
  const SweepRow* best = nullptr;
  for (const auto& r : rows) {
    if (r.failed() || !r.fid) continue;
    if (!best || r.fid->value < best->fid->value ||
        (r.fid->value == best->fid->value && r.iteration < best->iteration)) {
      best = &r;
    }
  }
  return best ? std::optional(best->iteration) : std::nullopt;
}

std::optional<std::int64_t> select_by_oracle(std::span<const SweepRow> rows) {
  const SweepRow* best = nullptr;
  for (const auto& r : rows) {
    if (r.failed() || !r.balanced_accuracy) continue;
    if (!best || *r.balanced_accuracy > *best->balanced_accuracy ||
        (*r.balanced_accuracy == *best->balanced_accuracy && r.iteration < best->iteration)) {
      best = &r;
    }
  }
  return best ? std::optional(best->iteration) : std::nullopt;
}

namespace {

std::vector<CheckpointRecord> sorted_checkpoints(std::span<const CheckpointRecord> checkpoints) {
  if (checkpoints.empty()) throw SweepError("no checkpoints to sweep");
  std::vector<CheckpointRecord> out(checkpoints.begin(), checkpoints.end());
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.iteration < b.iteration; });
  return out;
}

DatasetManifest maybe_subsample(const DatasetManifest& m, const SweepOptions& options) {
  if (options.subsample == 0 || options.subsample >= m.size()) return m;
  std::vector<std::size_t> idx(m.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(options.subsample_seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(options.subsample);
  std::sort(idx.begin(), idx.end());
  return m.subset(idx);
}

// Loads a manifest's images once per distinct model input size.
class ImageCache {
 public:
  explicit ImageCache(const DatasetManifest& m) : manifest_(m) {}
  const std::vector<GrayImage>& at(int size) {
    auto it = by_size_.find(size);
    if (it == by_size_.end()) it = by_size_.emplace(size, load_images(manifest_, size)).first;
    return it->second;
  }

 private:
  const DatasetManifest& manifest_;
  std::map<int, std::vector<GrayImage>> by_size_;
};

std::vector<GrayImage> translate_for(const TranslationModel& model, ImageCache& cache, DomainCode to) {
  auto out = model.translate(cache.at(model.input_size()), to);
  return out;
}

std::vector<GrayImage> fit_to(std::vector<GrayImage> images, int size) {
  for (auto& img : images) {
    if (img.width != size || img.height != size) img = resize_bilinear(img, size, size);
  }
  return images;
}

template <typename Score>
SweepResult run_rows(const std::vector<CheckpointRecord>& checkpoints, const SweepOptions& options, Score score) {
  SweepResult result;
  std::size_t failures = 0;
  std::string last_error;
  for (const auto& ckpt : checkpoints) {
    SweepRow row;
    row.iteration = ckpt.iteration;
    try {
      const auto model = options.loader(ckpt);
      if (!model) throw IoError("loader returned no model for " + ckpt.path.string());
      score(*model, row);
    } catch (const LabelingError&) {
      throw;
    } catch (const std::exception& e) {
      row.fid.reset();
      row.balanced_accuracy.reset();
      row.error = e.what();
      if (row.error.empty()) row.error = "unknown error";
      last_error = row.error;
      ++failures;
    }
    result.rows.push_back(std::move(row));
  }
  if (failures == result.rows.size()) {
    throw SweepError("all " + std::to_string(failures) + " checkpoints failed; last error: " + last_error);
  }
  return result;
}

}  // namespace

SweepResult sweep(std::span<const CheckpointRecord> checkpoints, const DatasetManifest& target_val,
                  const DatasetManifest& source_reference, const FeatureExtractor& extractor,
                  const SweepOptions& options) {
  const auto ordered = sorted_checkpoints(checkpoints);
  if (target_val.empty()) throw DataError("target validation set is empty");
  if (source_reference.empty()) throw DataError("source reference set is empty");

  const auto reference = fit_gaussian(extractor.embed(load_images(source_reference)));
  const auto val = maybe_subsample(target_val, options);
  ImageCache cache(val);
  auto result = run_rows(ordered, options, [&](const TranslationModel& model, SweepRow& row) {
    const auto translated = translate_for(model, cache, options.direction);
    row.fid = frechet_distance(reference, fit_gaussian(extractor.embed(translated)));
  });
  result.selected_by_fid = select_by_fid(result.rows);
  return result;
}

SweepResult oracle_select(std::span<const CheckpointRecord> checkpoints, const DatasetManifest& labeled_val,
                          const TrainedClassifier& classifier, const SweepOptions& options) {
  const auto ordered = sorted_checkpoints(checkpoints);
  if (labeled_val.empty()) throw DataError("validation set is empty");
  const auto val = maybe_subsample(labeled_val, options);
  const auto labels = labels_of(val);
  ImageCache cache(val);
  auto result = run_rows(ordered, options, [&](const TranslationModel& model, SweepRow& row) {
    const auto translated = fit_to(translate_for(model, cache, options.direction), classifier.input_size());
    row.balanced_accuracy = evaluate(classifier, translated, labels).balanced_accuracy;
  });
  result.selected_by_oracle = select_by_oracle(result.rows);
  return result;
}

SweepResult merge_sweeps(const SweepResult& fid, const SweepResult& oracle) {
  std::map<std::int64_t, SweepRow> rows;
  for (const auto& r : fid.rows) rows[r.iteration] = r;
  for (const auto& r : oracle.rows) {
    auto& row = rows[r.iteration];
    row.iteration = r.iteration;
    row.balanced_accuracy = r.balanced_accuracy;
    if (r.failed()) row.error = row.error.empty() ? r.error : row.error + "; " + r.error;
  }
  SweepResult out;
  for (auto& [_, r] : rows) out.rows.push_back(std::move(r));
  out.selected_by_fid = fid.selected_by_fid;
  out.selected_by_oracle = oracle.selected_by_oracle;
  return out;
}

SelectionComparison compare(const CheckpointRecord& fid_selected, const CheckpointRecord& oracle_selected,
                            const DatasetManifest& test, const TrainedClassifier& classifier,
                            const SweepOptions& options) {
  if (test.empty()) throw DataError("test set is empty");
  const auto labels = labels_of(test);
  ImageCache cache(test);
  auto report_for = [&](const CheckpointRecord& ckpt) {
    const auto model = options.loader(ckpt);
    if (!model) throw IoError("loader returned no model for " + ckpt.path.string());
    return evaluate(classifier, fit_to(translate_for(*model, cache, options.direction), classifier.input_size()),
                    labels);
  };
  SelectionComparison c;
  c.fid_iteration = fid_selected.iteration;
  c.oracle_iteration = oracle_selected.iteration;
  c.fid_report = report_for(fid_selected);
  c.oracle_report = fid_selected.path == oracle_selected.path ? c.fid_report : report_for(oracle_selected);
  return c;
}

namespace {
std::string format_number(double v) {
  std::ostringstream s;
  s.precision(10);
  s << v;
  return s.str();
}
}  // namespace

void write_sweep_csv(const SweepResult& result, const std::filesystem::path& csv) {
  std::ostringstream out;
  out << "iteration,fid,balanced_accuracy\n";
  for (const auto& r : result.rows) {
    out << r.iteration << ',' << (r.fid ? format_number(r.fid->value) : "") << ','
        << (r.balanced_accuracy ? format_number(*r.balanced_accuracy) : "") << '\n';
  }
  write_text_file_atomic(csv, out.str());
}

void write_sweep_summary(const SweepResult& result, const std::filesystem::path& json_file) {
  json rows = json::array();
  for (const auto& r : result.rows) {
    json row{{"iteration", r.iteration}};
    row["fid"] = r.fid ? json(r.fid->value) : json(nullptr);
    row["fid_mean_term"] = r.fid ? json(r.fid->mean_term) : json(nullptr);
    row["fid_trace_term"] = r.fid ? json(r.fid->trace_term) : json(nullptr);
    row["balanced_accuracy"] = r.balanced_accuracy ? json(*r.balanced_accuracy) : json(nullptr);
    if (r.failed()) row["error"] = r.error;
    rows.push_back(std::move(row));
  }
  auto opt = [](const std::optional<std::int64_t>& v) { return v ? json(*v) : json(nullptr); };
  write_json_file(json_file, json{{"selected_by_fid", opt(result.selected_by_fid)},
                                  {"selected_by_oracle", opt(result.selected_by_oracle)},
                                  {"rows", rows}});
}

SweepResult read_sweep_summary(const std::filesystem::path& json_file) {
  const json j = read_json_file(json_file);
  SweepResult out;
  try {
    for (const auto& row : j.at("rows")) {
      SweepRow r;
      r.iteration = row.at("iteration").get<std::int64_t>();
      if (!row.at("fid").is_null()) {
        r.fid = FIDScore{row.at("fid").get<double>(), row.at("fid_mean_term").get<double>(),
                         row.at("fid_trace_term").get<double>()};
      }
      if (!row.at("balanced_accuracy").is_null()) r.balanced_accuracy = row.at("balanced_accuracy").get<double>();
      if (row.contains("error")) r.error = row.at("error").get<std::string>();
      out.rows.push_back(std::move(r));
    }
    if (!j.at("selected_by_fid").is_null()) out.selected_by_fid = j.at("selected_by_fid").get<std::int64_t>();
    if (!j.at("selected_by_oracle").is_null()) {
      out.selected_by_oracle = j.at("selected_by_oracle").get<std::int64_t>();
    }
  } catch (const json::exception& e) {
    throw ReportError("malformed sweep summary " + json_file.string() + ": " + e.what());
  }
  return out;
}

void write_fid_plot(const SweepResult& result, const std::filesystem::path& svg) {
  std::vector<std::pair<double, double>> points;
  for (const auto& r : result.rows) {
    if (r.fid && std::isfinite(r.fid->value)) points.emplace_back(double(r.iteration), r.fid->value);
  }
  constexpr double W = 640, H = 400, L = 70, R = 20, T = 30, B = 50;
  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << W / 2 << "\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\" "
      << "font-size=\"14\">FID vs iteration</text>\n";
  if (!points.empty()) {
    double x0 = points.front().first, x1 = points.back().first;
    double y0 = points.front().second, y1 = y0;
    for (const auto& [x, y] : points) {
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
    }
    if (x1 == x0) x1 = x0 + 1;
    if (y1 == y0) y1 = y0 + 1;
    auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
    auto py = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };
    out << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
        << "\" stroke=\"black\"/>\n"
        << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
    out << "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" points=\"";
    for (const auto& [x, y] : points) out << px(x) << ',' << py(y) << ' ';
    out << "\"/>\n";
    for (const auto& [x, y] : points) {
      const bool chosen = result.selected_by_fid && double(*result.selected_by_fid) == x;
      out << "<circle cx=\"" << px(x) << "\" cy=\"" << py(y) << "\" r=\"" << (chosen ? 5 : 3) << "\" fill=\""
          << (chosen ? "crimson" : "steelblue") << "\"/>\n";
    }
    out << "<text x=\"" << L << "\" y=\"" << H - B + 20 << "\" font-family=\"sans-serif\" font-size=\"11\">"
        << format_number(x0) << "</text>\n"
        << "<text x=\"" << W - R << "\" y=\"" << H - B + 20
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << format_number(x1) << "</text>\n"
        << "<text x=\"" << L - 5 << "\" y=\"" << H - B << "\" text-anchor=\"end\" font-family=\"sans-serif\" "
        << "font-size=\"11\">" << format_number(y0) << "</text>\n"
        << "<text x=\"" << L - 5 << "\" y=\"" << T + 10 << "\" text-anchor=\"end\" font-family=\"sans-serif\" "
        << "font-size=\"11\">" << format_number(y1) << "</text>\n"
        << "<text x=\"" << W / 2 << "\" y=\"" << H - 10
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">iteration</text>\n";
  }
  out << "</svg>\n";
  write_text_file_atomic(svg, out.str());
}

}  // namespace domainbridge
