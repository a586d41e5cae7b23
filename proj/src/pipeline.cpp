#include "domainbridge/pipeline.hpp"

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "csv.hpp"
#include "domainbridge/error.hpp"
#include "domainbridge/hashing.hpp"
#include "domainbridge/selection.hpp"
#include "domainbridge/serialization.hpp"

namespace domainbridge {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json split_to_json(const SplitSpec& s) {
  return json{{"fractions", s.fractions}, {"seed", s.seed}, {"stratified", s.stratified}};
}

SplitSpec split_from_json(const json& j, std::uint64_t default_seed) {
  reject_unknown_keys(j, {"fractions", "seed", "stratified"}, "split");
  SplitSpec s;
  s.seed = default_seed;
  if (j.contains("fractions")) j.at("fractions").get_to(s.fractions);
  if (j.contains("seed")) j.at("seed").get_to(s.seed);
  if (j.contains("stratified")) j.at("stratified").get_to(s.stratified);
  return s;
}

json with_default_seed(json j, std::uint64_t seed) {
  if (j.is_object() && !j.contains("seed")) j["seed"] = seed;
  return j;
}

fs::path resolve_against(const fs::path& base, const fs::path& p) {
  if (p.empty() || p.is_absolute()) return p;
  return fs::absolute(base / p).lexically_normal();
}

std::string file_digest(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + p.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return fnv1a_hex(buf.str());
}

}  // namespace

void to_json(json& j, const PipelineConfig& c) {
  j = json{{"data",
            {{"dedup", c.data.dedup},
             {"dedup_threshold", c.data.dedup_threshold},
             {"balance_source", c.data.balance_source},
             {"source_split", split_to_json(c.data.source_split)},
             {"target_split", split_to_json(c.data.target_split)}}},
           {"classifier", c.classifier},
           {"ui2i", c.ui2i},
           {"extractor_id", c.extractor_id},
           {"sweep_subsample", c.sweep_subsample},
           {"oracle", c.oracle},
           {"output_dir", c.output_dir.string()},
           {"seed", c.seed}};
  if (c.synth) {
    j["synth"] = *c.synth;
  } else {
    j["source_manifest"] = c.source_manifest.string();
    j["target_manifest"] = c.target_manifest.string();
  }
}

PipelineConfig load_pipeline_config(const fs::path& json_file) {
  const json j = read_json_file(json_file);
  reject_unknown_keys(j,
                      {"source_manifest", "target_manifest", "synth", "data", "classifier", "ui2i", "extractor_id",
                       "sweep_subsample", "oracle", "output_dir", "seed"},
                      "pipeline config");
  const fs::path base = fs::absolute(json_file).parent_path();
  PipelineConfig c;
  try {
    if (j.contains("seed")) j.at("seed").get_to(c.seed);
    if (j.contains("source_manifest")) {
      c.source_manifest = resolve_against(base, j.at("source_manifest").get<std::string>());
    }
    if (j.contains("target_manifest")) {
      c.target_manifest = resolve_against(base, j.at("target_manifest").get<std::string>());
    }
    if (j.contains("synth")) c.synth = with_default_seed(j.at("synth"), c.seed).get<SynthConfig>();
    c.data.source_split.seed = c.data.target_split.seed = c.seed;
    if (j.contains("data")) {
      const auto& d = j.at("data");
      reject_unknown_keys(d, {"dedup", "dedup_threshold", "balance_source", "source_split", "target_split"}, "data");
      if (d.contains("dedup")) d.at("dedup").get_to(c.data.dedup);
      if (d.contains("dedup_threshold")) d.at("dedup_threshold").get_to(c.data.dedup_threshold);
      if (d.contains("balance_source")) d.at("balance_source").get_to(c.data.balance_source);
      if (d.contains("source_split")) c.data.source_split = split_from_json(d.at("source_split"), c.seed);
      if (d.contains("target_split")) c.data.target_split = split_from_json(d.at("target_split"), c.seed);
    }
    c.classifier.seed = c.ui2i.seed = c.seed;
    if (j.contains("classifier")) c.classifier = with_default_seed(j.at("classifier"), c.seed).get<ClassifierConfig>();
    if (j.contains("ui2i")) c.ui2i = with_default_seed(j.at("ui2i"), c.seed).get<UI2IConfig>();
    if (j.contains("extractor_id")) j.at("extractor_id").get_to(c.extractor_id);
    if (j.contains("sweep_subsample")) j.at("sweep_subsample").get_to(c.sweep_subsample);
    if (j.contains("oracle")) j.at("oracle").get_to(c.oracle);
    if (j.contains("output_dir")) c.output_dir = resolve_against(base, j.at("output_dir").get<std::string>());
  } catch (const json::exception& e) {
    throw ConfigError("invalid pipeline config " + json_file.string() + ": " + e.what());
  }
  return c;
}

void PipelineConfig::validate() const {
  if (synth) {
    if (!source_manifest.empty() || !target_manifest.empty()) {
      throw ConfigError("give either synth or source/target manifests, not both");
    }
    synth->validate();
  } else {
    if (source_manifest.empty() || target_manifest.empty()) {
      throw ConfigError("source_manifest and target_manifest are required without synth");
    }
    for (const auto& p : {source_manifest, target_manifest}) {
      if (!fs::is_regular_file(p)) throw ConfigError("dataset manifest not found: " + p.string());
    }
  }
  if (output_dir.empty()) throw ConfigError("output_dir is required");
  if (extractor_id != "classifier_penultimate") {
    throw ConfigError("unknown extractor '" + extractor_id + "' (available: classifier_penultimate)");
  }
  if (!(data.dedup_threshold >= 0.0)) throw ConfigError("dedup_threshold must be >= 0");
  if (data.target_split.stratified) throw ConfigError("the target split cannot be stratified (labels are unread)");
  data.source_split.validate();
  data.target_split.validate();
  classifier.validate();
  ui2i.validate();
}

std::string PipelineConfig::hash() const {
  json j;
  to_json(j, *this);
  j.erase("output_dir");
  Fnv1a h;
  h.update(j.dump());
  if (!synth) {
    h.update(file_digest(source_manifest));
    h.update(file_digest(target_manifest));
  }
  return h.hex();
}

fs::path cache_root(const PipelineConfig& config) {
  if (const char* env = std::getenv("DOMAINBRIDGE_CACHE"); env && *env) return fs::path(env);
  return config.output_dir / "cache";
}

bool RunRecord::complete(const std::string& stage) const {
  auto it = stages.find(stage);
  return it != stages.end() && it->second.status == StageStatus::COMPLETE;
}

void RunRecord::save(const fs::path& json_file) const {
  json st = json::object();
  for (const auto& [name, s] : stages) {
    st[name] = json{{"status", s.status == StageStatus::COMPLETE ? "complete" : "pending"},
                    {"seconds", s.seconds},
                    {"artifacts", s.artifacts},
                    {"results", s.results}};
  }
  write_json_file(json_file, json{{"config_hash", config_hash},
                                  {"run_dir", run_dir.string()},
                                  {"output_dir", output_dir.string()},
                                  {"stages", st}});
}

RunRecord RunRecord::load(const fs::path& json_file) {
  const json j = read_json_file(json_file);
  RunRecord r;
  try {
    r.config_hash = j.at("config_hash").get<std::string>();
    r.run_dir = j.at("run_dir").get<std::string>();
    r.output_dir = j.at("output_dir").get<std::string>();
    for (const auto& [name, s] : j.at("stages").items()) {
      StageRecord sr;
      sr.status = s.at("status") == "complete" ? StageStatus::COMPLETE : StageStatus::PENDING;
      sr.seconds = s.at("seconds").get<double>();
      sr.artifacts = s.at("artifacts").get<std::map<std::string, std::string>>();
      sr.results = s.at("results");
      r.stages[name] = std::move(sr);
    }
  } catch (const json::exception& e) {
    throw ReportError("malformed run record " + json_file.string() + ": " + e.what());
  }
  return r;
}

namespace {

class Runner {
 public:
  Runner(const PipelineConfig& config, const RunOptions& options) : config_(config), options_(options) {}

  RunRecord run() {
    config_.validate();
    const auto hash = config_.hash();
    const fs::path run_dir = fs::absolute(cache_root(config_) / hash);
    fs::create_directories(run_dir);
    fs::create_directories(config_.output_dir);
    record_path_ = run_dir / "run_record.json";
    if (fs::exists(record_path_)) {
      record_ = RunRecord::load(record_path_);
    } else {
      record_.config_hash = hash;
      write_json_file(run_dir / "pipeline.json", json(config_));
    }
    record_.run_dir = run_dir;
    record_.output_dir = fs::absolute(config_.output_dir);
    dir_ = run_dir;

    if (!stage(kStagePrepare, [this](StageRecord& s) { return prepare(s); })) return finish(false);
    if (!stage(kStageClassifier, [this](StageRecord& s) { return train_source_classifier(s); })) return finish(false);
    if (!stage(kStageUi2i, [this](StageRecord& s) { return train_translation(s); })) return finish(false);
    if (!stage(kStageSweep, [this](StageRecord& s) { return select_checkpoint(s); })) return finish(false);
    if (!stage(kStageFinal, [this](StageRecord& s) { return final_test(s); })) return finish(false);
    return finish(true);
  }

 private:
  void log(const std::string& msg) const {
    if (options_.log) options_.log(msg);
  }

  RunRecord finish(bool complete) {
    record_.save(record_path_);
    record_.save(config_.output_dir / "run_record.json");
    if (complete) {
      render_report(record_, config_.output_dir / "report");
      log("report written to " + (config_.output_dir / "report").string());
    }
    return record_;
  }

  template <typename Body>
  bool stage(const char* name, Body body) {
    if (record_.complete(name)) {
      log(std::string("stage ") + name + ": already complete, skipping");
      return true;
    }
    log(std::string("stage ") + name + ": running");
    audit::StageScope scope(name);
    const auto start = std::chrono::steady_clock::now();
    StageRecord s;
    bool done = false;
    try {
      done = body(s);
    } catch (const std::exception& e) {
      record_.save(record_path_);
      throw StageError(name, e.what());
    }
    s.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    s.status = done ? StageStatus::COMPLETE : StageStatus::PENDING;
    record_.stages[name] = std::move(s);
    record_.save(record_path_);
    log(std::string("stage ") + name + (done ? ": complete" : ": interrupted"));
    return done;
  }

  fs::path artifact(const char* stage, const char* name) const {
    return record_.stages.at(stage).artifacts.at(name);
  }

  bool prepare(StageRecord& s) {
    DatasetManifest source, target;
    if (config_.synth) {
      std::tie(source, target) = generate_domain_pair(*config_.synth, dir_ / "synth");
    } else {
      source = load_manifest(config_.source_manifest);
      target = load_manifest(config_.target_manifest);
    }
    s.results["source_raw"] = source.size();
    s.results["target_raw"] = target.size();
    if (config_.data.dedup) {
      source = dedup_consecutive(source, config_.data.dedup_threshold);
      target = dedup_consecutive(target, config_.data.dedup_threshold);
    }
    if (config_.data.balance_source) source = balance_undersample(source, config_.data.source_split.seed);
    source = split(source, config_.data.source_split);
    target = split(target, config_.data.target_split);

    // One directory per domain: each keeps its own dataset.json sidecar.
    const fs::path out = dir_ / "prepared";
    save_manifest(source, out / "source" / "manifest.csv");
    s.artifacts["source"] = (out / "source" / "manifest.csv").string();
    for (auto [tag, key] : {std::pair{Split::TRAIN, "target_train"}, std::pair{Split::VAL, "target_val"},
                            std::pair{Split::TEST, "target_test"}}) {
      const auto part = target.subset(tag);
      const fs::path csv = out / "target" / (std::string(key) + ".csv");
      save_manifest(part, csv);
      s.artifacts[key] = csv.string();
      s.results[key] = part.size();
    }
    s.results["source"] = source.size();
    return true;
  }

  bool train_source_classifier(StageRecord& s) {
    const auto source = load_manifest(artifact(kStagePrepare, "source"));
    auto [model, log_] = train_classifier(source.subset(Split::TRAIN), source.subset(Split::VAL), config_.classifier);
    const fs::path out = dir_ / "classifier";
    model.save(out);
    save_training_log(log_, out / "training_log.csv");
    const auto report = evaluate(model, source.subset(Split::TEST));
    s.artifacts["model"] = out.string();
    s.artifacts["training_log"] = (out / "training_log.csv").string();
    s.results["weights_hash"] = model.weights_hash();
    s.results["best_epoch"] = log_.best_epoch;
    s.results["source_test"] = report;
    log("source test balanced accuracy " + std::to_string(report.balanced_accuracy));
    return true;
  }

  TrainedClassifier frozen_classifier() const {
    auto model = TrainedClassifier::load(artifact(kStageClassifier, "model"));
    const auto expected = record_.stages.at(kStageClassifier).results.at("weights_hash").get<std::string>();
    if (model.weights_hash() != expected) {
      throw DataError("classifier weights changed on disk (hash " + model.weights_hash() + ", expected " +
                      expected + ")");
    }
    return model;
  }

  bool train_translation(StageRecord& s) {
    const auto source = load_manifest(artifact(kStagePrepare, "source"));
    const auto target_train = load_manifest(artifact(kStagePrepare, "target_train"));
    Ui2iTrainOptions opts;
    opts.max_iterations_this_call = options_.max_ui2i_iterations_this_call;
    opts.progress_every = std::max<std::int64_t>(1, config_.ui2i.checkpoint_every / 4);
    opts.on_progress = [this](const Ui2iProgress& p) {
      std::ostringstream msg;
      msg << "ui2i iteration " << p.iteration << " critic " << p.critic_loss << " generator " << p.generator_loss
          << " cycle " << p.cycle;
      log(msg.str());
    };
    audit::LabelReadScope reads;
    const auto checkpoints = train_ui2i(source, target_train, config_.ui2i, dir_ / "ui2i", opts);
    s.artifacts["checkpoints"] = (dir_ / "ui2i").string();
    s.results["label_reads"] = reads.reads();
    s.results["checkpoints"] = checkpoints.size();
    const bool done = !checkpoints.empty() && checkpoints.back().iteration == config_.ui2i.total_iterations;
    return done;
  }

  bool select_checkpoint(StageRecord& s) {
    const auto classifier = frozen_classifier();
    const ClassifierFeatureExtractor extractor(classifier);
    const auto checkpoints = list_checkpoints(artifact(kStageUi2i, "checkpoints"));
    const auto source = load_manifest(artifact(kStagePrepare, "source"));
    const auto target_val = load_manifest(artifact(kStagePrepare, "target_val"));
    SweepOptions opts;
    opts.subsample = config_.sweep_subsample;
    opts.subsample_seed = config_.seed;

    audit::LabelReadScope reads;
    auto result = sweep(checkpoints, target_val, source, extractor, opts);
    s.results["label_reads"] = reads.reads();
    if (config_.oracle) result = merge_sweeps(result, oracle_select(checkpoints, target_val, classifier, opts));

    const fs::path out = dir_ / "sweep";
    write_sweep_csv(result, out / "sweep.csv");
    write_sweep_summary(result, out / "sweep.json");
    write_fid_plot(result, out / "fid_curve.svg");
    s.artifacts["csv"] = (out / "sweep.csv").string();
    s.artifacts["summary"] = (out / "sweep.json").string();
    s.artifacts["fid_plot"] = (out / "fid_curve.svg").string();
    s.results["selected_by_fid"] = *result.selected_by_fid;
    s.results["selected_by_oracle"] = result.selected_by_oracle ? json(*result.selected_by_oracle) : json(nullptr);
    std::size_t failed = 0;
    for (const auto& r : result.rows) failed += r.failed();
    s.results["failed_rows"] = failed;
    log("FID selected iteration " + std::to_string(*result.selected_by_fid));
    return true;
  }

  CheckpointRecord checkpoint_at(std::int64_t iteration) const {
    for (const auto& c : list_checkpoints(artifact(kStageUi2i, "checkpoints"))) {
      if (c.iteration == iteration) return c;
    }
    throw IoError("no checkpoint at iteration " + std::to_string(iteration));
  }

  bool final_test(StageRecord& s) {
    const auto classifier = frozen_classifier();
    const fs::path test_path = artifact(kStagePrepare, "target_test");
    const auto test = load_manifest(test_path);
    const fs::path out = dir_ / "final";

    s.results["blind"] = evaluate(classifier, test);

    const auto& sweep_results = record_.stages.at(kStageSweep).results;
    const auto fid_iteration = sweep_results.at("selected_by_fid").get<std::int64_t>();
    const auto translated = translate(checkpoint_at(fid_iteration), test, DomainCode::SOURCE, out / "translated");
    s.results["translated"] = evaluate(classifier, translated);
    s.results["fid_iteration"] = fid_iteration;
    s.artifacts["translated"] = (out / "translated" / "manifest.csv").string();
    s.artifacts["target_test"] = test_path.string();

    if (!sweep_results.at("selected_by_oracle").is_null()) {
      const auto oracle_iteration = sweep_results.at("selected_by_oracle").get<std::int64_t>();
      s.results["oracle_iteration"] = oracle_iteration;
      if (oracle_iteration == fid_iteration) {
        s.results["oracle_translated"] = s.results["translated"];
      } else {
        const auto oracle_set =
            translate(checkpoint_at(oracle_iteration), test, DomainCode::SOURCE, out / "translated_oracle");
        s.results["oracle_translated"] = evaluate(classifier, oracle_set);
      }
    }

    const auto before = record_.stages.at(kStageClassifier).results.at("weights_hash").get<std::string>();
    const auto after = frozen_classifier().weights_hash();
    s.results["weights_hash_before"] = before;
    s.results["weights_hash_after"] = after;

    // Every load of the target test manifest in this process must come from this stage.
    const auto canonical_test = fs::weakly_canonical(test_path);
    std::size_t outside = 0;
    for (const auto& e : audit::manifest_loads()) {
      if (fs::weakly_canonical(e.path) == canonical_test && e.stage != kStageFinal) ++outside;
    }
    s.results["target_test_loads_outside_final"] = outside;
    if (outside > 0) throw DataError("target test split was loaded outside the final stage");
    return true;
  }

  const PipelineConfig& config_;
  const RunOptions& options_;
  RunRecord record_;
  fs::path record_path_;
  fs::path dir_;
};

void write_confusion_csv(const ConfusionMatrix& cm, const fs::path& path) {
  std::ostringstream out;
  out << "actual,predicted_CHF,predicted_PRE_CHF\n"
      << "CHF," << cm.tp << ',' << cm.fn << '\n'
      << "PRE_CHF," << cm.fp << ',' << cm.tn << '\n';
  write_text_file_atomic(path, out.str());
}

GrayImage sample_grid(const std::vector<GrayImage>& real, const std::vector<GrayImage>& translated, int size) {
  constexpr int gap = 2;
  const int rows = static_cast<int>(real.size());
  GrayImage grid(2 * size + gap, rows * size + (rows - 1) * gap, 1.0f);
  auto blit = [&](const GrayImage& img, int x0, int y0) {
    const GrayImage fitted = img.width == size && img.height == size ? img : resize_bilinear(img, size, size);
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) grid.at(x0 + x, y0 + y) = fitted.at(x, y);
    }
  };
  for (int r = 0; r < rows; ++r) {
    blit(real[static_cast<std::size_t>(r)], 0, r * (size + gap));
    blit(translated[static_cast<std::size_t>(r)], size + gap, r * (size + gap));
  }
  return grid;
}

}  // namespace

RunRecord run_all(const PipelineConfig& config, const RunOptions& options) {
  return Runner(config, options).run();
}

void render_report(const RunRecord& run, const fs::path& out_dir) {
  const bool have_source = run.complete(kStageClassifier);
  const bool have_final = run.complete(kStageFinal);
  if (!have_source && !have_final) throw ReportError("run has no completed evaluation stage");
  audit::StageScope stage(kStageReport);
  fs::create_directories(out_dir);

  json conditions = json::object();
  if (have_source) conditions["source_test"] = run.stages.at(kStageClassifier).results.at("source_test");
  if (have_final) {
    const auto& r = run.stages.at(kStageFinal).results;
    for (const char* key : {"blind", "translated", "oracle_translated"}) {
      if (r.contains(key)) conditions[key] = r.at(key);
    }
  }
  for (const auto& [name, report] : conditions.items()) {
    write_confusion_csv(report.at("confusion").get<ConfusionMatrix>(), out_dir / ("confusion_" + name + ".csv"));
  }

  json metrics{{"config_hash", run.config_hash}, {"conditions", conditions}};
  if (run.complete(kStageUi2i)) metrics["label_reads"]["ui2i"] = run.stages.at(kStageUi2i).results.at("label_reads");
  if (run.complete(kStageSweep)) {
    const auto& r = run.stages.at(kStageSweep).results;
    metrics["label_reads"]["sweep"] = r.at("label_reads");
    metrics["selection"] = {{"fid", r.at("selected_by_fid")}, {"oracle", r.at("selected_by_oracle")}};
    write_fid_plot(read_sweep_summary(run.stages.at(kStageSweep).artifacts.at("summary")), out_dir / "fid_curve.svg");
  }
  if (have_final) {
    const auto& r = run.stages.at(kStageFinal).results;
    metrics["no_retraining"] = {{"weights_hash_before", r.at("weights_hash_before")},
                                {"weights_hash_after", r.at("weights_hash_after")},
                                {"unchanged", r.at("weights_hash_before") == r.at("weights_hash_after")}};

    const auto& artifacts = run.stages.at(kStageFinal).artifacts;
    const auto real = load_manifest(artifacts.at("target_test"));
    const auto translated = load_manifest(artifacts.at("translated"));
    constexpr std::size_t per_class = 6;
    for (Regime regime : kClassOrder) {
      std::vector<std::size_t> picked;
      for (std::size_t i = 0; i < real.size() && picked.size() < per_class; ++i) {
        if (real.samples[i].label() == regime) picked.push_back(i);
      }
      if (picked.empty()) continue;
      const auto real_images = load_images(real.subset(picked));
      const auto translated_images = load_images(translated.subset(picked));
      const int size = translated_images.front().width;
      save_image(out_dir / ("samples_" + std::string(to_string(regime)) + ".png"),
                 sample_grid(real_images, translated_images, size), 8);
    }
  }
  write_json_file(out_dir / "metrics.json", metrics);
}

ConfusionMatrix read_confusion_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != "actual,predicted_CHF,predicted_PRE_CHF") throw ReportError("unexpected confusion header in " + path.string());
  ConfusionMatrix cm;
  for (const char* expected : {"CHF", "PRE_CHF"}) {
    if (!std::getline(in, line)) throw ReportError("truncated confusion matrix " + path.string());
    const auto cells = csv::split_line(line);
    if (cells.size() != 3 || cells[0] != expected) throw ReportError("malformed confusion row in " + path.string());
    const std::size_t a = std::stoull(cells[1]);
    const std::size_t b = std::stoull(cells[2]);
    if (std::string(expected) == "CHF") {
      cm.tp = a;
      cm.fn = b;
    } else {
      cm.fp = a;
      cm.tn = b;
    }
  }
  return cm;
}

}  // namespace domainbridge
