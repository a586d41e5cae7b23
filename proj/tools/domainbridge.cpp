#include <CLI11.hpp>
#include <iostream>

#include "domainbridge/classifier.hpp"
#include "domainbridge/datakit.hpp"
#include "domainbridge/error.hpp"
#include "domainbridge/pipeline.hpp"
#include "domainbridge/selection.hpp"
#include "domainbridge/serialization.hpp"
#include "domainbridge/synthgen.hpp"
#include "domainbridge/ui2i.hpp"

namespace fs = std::filesystem;
using namespace domainbridge;
using nlohmann::json;

namespace {

template <typename T>
T read_config(const std::string& path) {
  if (path.empty()) return T{};
  try {
    return read_json_file(path).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("invalid config " + path + ": " + e.what());
  }
}

void print_report(const std::string& name, const EvalReport& r) {
  std::cout << name << ": balanced_accuracy=" << r.balanced_accuracy << " f1_weighted=" << r.f1_weighted
            << " precision_weighted=" << r.precision_weighted << " recall_weighted=" << r.recall_weighted
            << " roc_auc=" << (r.roc_auc ? std::to_string(*r.roc_auc) : "undefined") << "\n";
}

DatasetManifest with_split(const DatasetManifest& m, const std::string& split_name) {
  return split_name.empty() ? m : m.subset(split_from_string(split_name));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cross-domain boiling regime classification via image translation"};
  app.require_subcommand(1);

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Extract video frames or import an image directory");
  std::string ingest_video, ingest_images, ingest_out, ingest_domain, ingest_label;
  auto* video_opt = ingest->add_option("--video", ingest_video, "Video file");
  ingest->add_option("--images", ingest_images, "Directory of images")->excludes(video_opt);
  ingest->add_option("--out", ingest_out, "Output directory (frames and manifest.csv)");
  ingest->add_option("--domain", ingest_domain, "Domain id")->required();
  ingest->add_option("--label", ingest_label, "Regime of every frame (CHF or PRE_CHF)");

  // dedup
  auto* dedup = app.add_subcommand("dedup", "Drop near-identical consecutive frames");
  std::string dedup_in, dedup_out;
  double dedup_threshold = kDefaultDedupThreshold;
  dedup->add_option("--manifest", dedup_in)->required();
  dedup->add_option("--out", dedup_out, "Output manifest CSV")->required();
  dedup->add_option("--threshold", dedup_threshold, "Keep a frame when 1 - SSIM >= threshold");

  // split
  auto* split_cmd = app.add_subcommand("split", "Assign TRAIN/VAL/TEST tags");
  std::string split_in, split_out;
  SplitSpec split_spec;
  split_cmd->add_option("--manifest", split_in)->required();
  split_cmd->add_option("--out", split_out)->required();
  split_cmd->add_option("--train", split_spec.fractions[0]);
  split_cmd->add_option("--val", split_spec.fractions[1]);
  split_cmd->add_option("--test", split_spec.fractions[2]);
  split_cmd->add_option("--seed", split_spec.seed);
  split_cmd->add_flag("--stratified", split_spec.stratified);

  // balance
  auto* balance = app.add_subcommand("balance", "Undersample the majority class");
  std::string balance_in, balance_out;
  std::uint64_t balance_seed = 0;
  balance->add_option("--manifest", balance_in)->required();
  balance->add_option("--out", balance_out)->required();
  balance->add_option("--seed", balance_seed);

  // synth
  auto* synth = app.add_subcommand("synth", "Generate the synthetic two-domain benchmark");
  std::string synth_config, synth_out;
  synth->add_option("--config", synth_config, "SynthConfig JSON (defaults when omitted)");
  synth->add_option("--out", synth_out)->required();

  // train-classifier
  auto* train_clf = app.add_subcommand("train-classifier", "Train the source-domain classifier");
  std::string clf_train, clf_val, clf_config, clf_out;
  train_clf->add_option("--train", clf_train, "Training manifest (or one with split tags)")->required();
  train_clf->add_option("--val", clf_val, "Validation manifest; VAL tags of --train when omitted");
  train_clf->add_option("--config", clf_config, "ClassifierConfig JSON");
  train_clf->add_option("--out", clf_out)->required();

  // evaluate
  auto* eval = app.add_subcommand("evaluate", "Score a classifier on a labeled manifest");
  std::string eval_model, eval_manifest, eval_split, eval_out;
  eval->add_option("--model", eval_model)->required();
  eval->add_option("--manifest", eval_manifest)->required();
  eval->add_option("--split", eval_split, "Restrict to TRAIN, VAL or TEST");
  eval->add_option("--out", eval_out, "Write the report as JSON");

  // train-ui2i
  auto* train_gan = app.add_subcommand("train-ui2i", "Train the unsupervised translation model");
  std::string gan_source, gan_target, gan_config, gan_out;
  train_gan->add_option("--source", gan_source)->required();
  train_gan->add_option("--target", gan_target, "Target manifest; only TRAIN tags are used when present")
      ->required();
  train_gan->add_option("--config", gan_config, "UI2IConfig JSON");
  train_gan->add_option("--out", gan_out, "Checkpoint directory")->required();

  // translate
  auto* trans = app.add_subcommand("translate", "Translate a manifest with a checkpoint");
  std::string trans_ckpt, trans_manifest, trans_to = "source", trans_out;
  trans->add_option("--checkpoint", trans_ckpt)->required();
  trans->add_option("--manifest", trans_manifest)->required();
  trans->add_option("--to", trans_to, "source or target");
  trans->add_option("--out", trans_out)->required();

  // sweep
  auto* sweep_cmd = app.add_subcommand("sweep", "Score every checkpoint by FID and select one");
  std::string sw_ckpts, sw_val, sw_ref, sw_out, sw_classifier;
  bool sw_oracle = false;
  std::size_t sw_subsample = 0;
  sweep_cmd->add_option("--checkpoints", sw_ckpts)->required();
  sweep_cmd->add_option("--target-val", sw_val)->required();
  sweep_cmd->add_option("--source-ref", sw_ref)->required();
  sweep_cmd->add_option("--out", sw_out)->required();
  sweep_cmd->add_option("--classifier", sw_classifier, "Classifier directory (feature extractor)")->required();
  sweep_cmd->add_flag("--oracle", sw_oracle, "Also select by labeled balanced accuracy");
  sweep_cmd->add_option("--subsample", sw_subsample, "Score only this many validation images");

  // run-all
  auto* run = app.add_subcommand("run-all", "Run the whole pipeline from a config");
  std::string run_config;
  run->add_option("--config", run_config)->required();

  // report
  auto* report = app.add_subcommand("report", "Render the report bundle of a finished run");
  std::string report_run, report_out;
  report->add_option("--run", report_run, "Output directory or cache directory of a run")->required();
  report->add_option("--out", report_out, "Report directory (default <run>/report)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*ingest) {
      if (ingest_video.empty() && ingest_images.empty()) throw ConfigError("ingest needs --video or --images");
      DatasetManifest m = ingest_video.empty() ? import_image_directory(ingest_images, ingest_domain)
                                               : extract_frames(ingest_video, ingest_out, ingest_domain);
      if (!ingest_label.empty()) {
        const auto regime = regime_from_string(ingest_label);
        for (auto& s : m.samples) s.set_label(regime);
      }
      const fs::path out_csv = (ingest_out.empty() ? m.root : fs::path(ingest_out)) / "manifest.csv";
      save_manifest(m, out_csv);
      std::cout << m.size() << " images -> " << out_csv.string() << "\n";
    } else if (*dedup) {
      const auto in = load_manifest(dedup_in);
      const auto out = dedup_consecutive(in, dedup_threshold);
      save_manifest(out, dedup_out);
      std::cout << "kept " << out.size() << " of " << in.size() << " frames\n";
    } else if (*split_cmd) {
      const auto out = split(load_manifest(split_in), split_spec);
      save_manifest(out, split_out);
      const auto counts = split_counts(out.size(), split_spec);
      std::cout << "train " << counts.train << " val " << counts.val << " test " << counts.test << "\n";
    } else if (*balance) {
      const auto out = balance_undersample(load_manifest(balance_in), balance_seed);
      save_manifest(out, balance_out);
      const auto counts = out.class_counts();
      std::cout << "CHF " << counts[0] << " PRE_CHF " << counts[1] << "\n";
    } else if (*synth) {
      const auto config = read_config<SynthConfig>(synth_config);
      const auto [a, b] = generate_domain_pair(config, synth_out);
      std::cout << "source " << a.size() << " images, target " << b.size() << " images -> " << synth_out << "\n";
    } else if (*train_clf) {
      const auto config = read_config<ClassifierConfig>(clf_config);
      const auto train_all = load_manifest(clf_train);
      DatasetManifest train = train_all, val;
      if (clf_val.empty()) {
        train = train_all.subset(Split::TRAIN);
        val = train_all.subset(Split::VAL);
      } else {
        val = load_manifest(clf_val);
      }
      auto [model, log] = train_classifier(train, val, config);
      model.save(clf_out);
      save_training_log(log, fs::path(clf_out) / "training_log.csv");
      std::cout << "best epoch " << log.best_epoch << ", weights " << model.weights_hash() << "\n";
    } else if (*eval) {
      const auto model = TrainedClassifier::load(eval_model);
      const auto r = evaluate(model, with_split(load_manifest(eval_manifest), eval_split));
      print_report("report", r);
      if (!eval_out.empty()) write_json_file(eval_out, json(r));
    } else if (*train_gan) {
      const auto config = read_config<UI2IConfig>(gan_config);
      Ui2iTrainOptions options;
      options.progress_every = std::max<std::int64_t>(1, config.checkpoint_every / 10);
      options.on_progress = [](const Ui2iProgress& p) {
        std::cerr << "iteration " << p.iteration << " critic " << p.critic_loss << " generator " << p.generator_loss
                  << "\n";
      };
      const auto ckpts = train_ui2i(load_manifest(gan_source), load_manifest(gan_target), config, gan_out, options);
      std::cout << ckpts.size() << " checkpoints in " << gan_out << "\n";
    } else if (*trans) {
      const fs::path ckpt(trans_ckpt);
      CheckpointRecord record;
      for (const auto& c : list_checkpoints(ckpt.parent_path())) {
        if (c.path.filename() == ckpt.filename()) record = c;
      }
      if (record.path.empty()) throw IoError("checkpoint not listed in " + ckpt.parent_path().string());
      const auto out = translate(record, load_manifest(trans_manifest), domain_code_from_string(trans_to), trans_out);
      std::cout << out.size() << " images -> " << trans_out << "\n";
    } else if (*sweep_cmd) {
      const auto classifier = TrainedClassifier::load(sw_classifier);
      const ClassifierFeatureExtractor extractor(classifier);
      const auto ckpts = list_checkpoints(sw_ckpts);
      const auto val = load_manifest(sw_val);
      SweepOptions options;
      options.subsample = sw_subsample;
      auto result = sweep(ckpts, val, load_manifest(sw_ref), extractor, options);
      if (sw_oracle) result = merge_sweeps(result, oracle_select(ckpts, val, classifier, options));
      const fs::path out(sw_out);
      write_sweep_csv(result, out / "sweep.csv");
      write_sweep_summary(result, out / "sweep.json");
      write_fid_plot(result, out / "fid_curve.svg");
      std::cout << "selected by FID: " << *result.selected_by_fid << "\n";
      if (result.selected_by_oracle) std::cout << "selected by oracle: " << *result.selected_by_oracle << "\n";
    } else if (*run) {
      const auto config = load_pipeline_config(run_config);
      RunOptions options;
      options.log = [](const std::string& msg) { std::cerr << msg << "\n"; };
      const auto record = run_all(config, options);
      for (const char* stage : kStageOrder) {
        if (!record.complete(stage)) {
          std::cerr << "run incomplete at stage " << stage << "\n";
          return 3;
        }
      }
      const auto& final_results = record.stages.at(kStageFinal).results;
      print_report("blind", final_results.at("blind").get<EvalReport>());
      print_report("translated", final_results.at("translated").get<EvalReport>());
    } else if (*report) {
      fs::path record_file = fs::path(report_run) / "run_record.json";
      if (!fs::exists(record_file)) throw ReportError("no run_record.json in " + report_run);
      const auto record = RunRecord::load(record_file);
      const fs::path out = report_out.empty() ? fs::path(report_run) / "report" : fs::path(report_out);
      render_report(record, out);
      std::cout << "report -> " << out.string() << "\n";
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "unexpected error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
