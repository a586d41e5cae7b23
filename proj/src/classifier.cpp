#include "domainbridge/classifier.hpp"

#include <torch/torch.h>

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "domainbridge/error.hpp"
#include "domainbridge/hashing.hpp"
#include "domainbridge/nn/networks.hpp"
#include "domainbridge/nn/tensor_image.hpp"
#include "domainbridge/serialization.hpp"

namespace domainbridge {

namespace F = torch::nn::functional;
using nlohmann::json;

void ClassifierConfig::validate() const {
  if (epochs < 1) throw ConfigError("classifier epochs must be >= 1");
  if (!(optimizer.learning_rate > 0.0)) throw ConfigError("classifier learning_rate must be > 0");
  if (optimizer.name != "adam") throw ConfigError("unsupported optimizer '" + optimizer.name + "'");
  if (batch_size < 1) throw ConfigError("classifier batch_size must be >= 1");
  if (input_size < 1) throw ConfigError("classifier input_size must be >= 1");
}

std::string ClassifierConfig::hash() const { return fnv1a_hex(json(*this).dump()); }

int select_best_epoch(std::span<const double> val_losses) {
  if (val_losses.empty()) throw DataError("no epochs to select from");
  const auto it = std::min_element(val_losses.begin(), val_losses.end());
  return static_cast<int>(std::distance(val_losses.begin(), it)) + 1;
}

struct TrainedClassifier::Impl {
  std::string architecture_id;
  int input_size = 0;
  TrainingFingerprint fingerprint;
  std::shared_ptr<nn::ClassifierNet> net;
};

TrainedClassifier::TrainedClassifier(std::shared_ptr<Impl> impl) : impl_(std::move(impl)) {
  impl_->net->eval();
}

namespace {
const TrainedClassifier::Impl& require(const std::shared_ptr<TrainedClassifier::Impl>& impl) {
  if (!impl) throw DataError("classifier is not initialized");
  return *impl;
}

constexpr int64_t kInferenceBatch = 64;

torch::Tensor checked_batch(std::span<const GrayImage> images, int size) {
  if (images.empty()) throw DataError("no images to classify");
  for (const auto& img : images) {
    if (img.width != size || img.height != size) {
      throw ShapeError("classifier expects " + std::to_string(size) + "x" + std::to_string(size) +
                       " input, got " + std::to_string(img.width) + "x" + std::to_string(img.height));
    }
  }
  return nn::to_tensor(images);
}
}  // namespace

const std::string& TrainedClassifier::architecture_id() const { return require(impl_).architecture_id; }
int TrainedClassifier::input_size() const { return require(impl_).input_size; }
const TrainingFingerprint& TrainedClassifier::fingerprint() const { return require(impl_).fingerprint; }
std::string TrainedClassifier::weights_hash() const { return nn::weights_hash(*require(impl_).net); }
std::size_t TrainedClassifier::embedding_dim() const {
  return static_cast<std::size_t>(require(impl_).net->embedding_dim());
}

std::vector<ProbabilityRow> TrainedClassifier::predict(std::span<const GrayImage> images) const {
  const auto& impl = require(impl_);
  const auto x = checked_batch(images, impl.input_size);
  torch::NoGradGuard no_grad;
  std::vector<ProbabilityRow> rows;
  rows.reserve(images.size());
  for (int64_t start = 0; start < x.size(0); start += kInferenceBatch) {
    const auto chunk = x.narrow(0, start, std::min(kInferenceBatch, x.size(0) - start));
    const auto p = torch::softmax(impl.net->forward(chunk).to(torch::kDouble), 1).contiguous();
    const double* d = p.data_ptr<double>();
    for (int64_t i = 0; i < p.size(0); ++i) rows.push_back({d[2 * i], d[2 * i + 1]});
  }
  return rows;
}

Eigen::MatrixXd TrainedClassifier::embed(std::span<const GrayImage> images) const {
  const auto& impl = require(impl_);
  const auto x = checked_batch(images, impl.input_size);
  torch::NoGradGuard no_grad;
  Eigen::MatrixXd out(x.size(0), impl.net->embedding_dim());
  for (int64_t start = 0; start < x.size(0); start += kInferenceBatch) {
    const auto n = std::min(kInferenceBatch, x.size(0) - start);
    const auto f = impl.net->features(x.narrow(0, start, n)).to(torch::kDouble).contiguous();
    const double* d = f.data_ptr<double>();
    for (int64_t i = 0; i < n; ++i) {
      for (int64_t c = 0; c < f.size(1); ++c) out(start + i, c) = d[i * f.size(1) + c];
    }
  }
  return out;
}

void TrainedClassifier::save(const std::filesystem::path& dir) const {
  const auto& impl = require(impl_);
  std::filesystem::create_directories(dir);
  const auto tmp = dir / "weights.pt.tmp";
  torch::save(impl.net, tmp.string());
  std::filesystem::rename(tmp, dir / "weights.pt");
  json meta{{"architecture_id", impl.architecture_id},
            {"class_order", {"CHF", "PRE_CHF"}},
            {"input_size", impl.input_size},
            {"training_fingerprint",
             {{"config_hash", impl.fingerprint.config_hash}, {"data_hash", impl.fingerprint.data_hash}}},
            {"weights_hash", weights_hash()}};
  write_json_file(dir / "model.json", meta);
}

TrainedClassifier TrainedClassifier::load(const std::filesystem::path& dir) {
  if (!std::filesystem::exists(dir / "model.json") || !std::filesystem::exists(dir / "weights.pt")) {
    throw IoError("no classifier bundle in " + dir.string());
  }
  const json meta = read_json_file(dir / "model.json");
  if (meta.at("class_order") != json{"CHF", "PRE_CHF"}) {
    throw ConfigError("classifier bundle has unexpected class order " + meta.at("class_order").dump());
  }
  auto impl = std::make_shared<Impl>();
  impl->architecture_id = meta.at("architecture_id").get<std::string>();
  impl->input_size = meta.at("input_size").get<int>();
  impl->fingerprint = {meta.at("training_fingerprint").at("config_hash").get<std::string>(),
                       meta.at("training_fingerprint").at("data_hash").get<std::string>()};
  impl->net = nn::make_classifier(impl->architecture_id, impl->input_size);
  torch::load(impl->net, (dir / "weights.pt").string());
  return TrainedClassifier(std::move(impl));
}

std::vector<Regime> labels_of(const DatasetManifest& manifest) {
  std::vector<Regime> labels;
  labels.reserve(manifest.size());
  for (const auto& s : manifest.samples) {
    const auto label = s.label();
    if (!label) throw LabelingError("unlabeled sample " + s.path.string());
    labels.push_back(*label);
  }
  return labels;
}

namespace {

torch::Tensor label_tensor(std::span<const Regime> labels) {
  auto t = torch::empty({static_cast<int64_t>(labels.size())}, torch::kLong);
  auto* d = t.data_ptr<int64_t>();
  for (std::size_t i = 0; i < labels.size(); ++i) d[i] = static_cast<int64_t>(labels[i]);
  return t;
}

std::string data_hash(const torch::Tensor& a, const torch::Tensor& la, const torch::Tensor& b,
                      const torch::Tensor& lb) {
  Fnv1a h;
  for (const auto* t : {&a, &la, &b, &lb}) {
    const auto c = t->contiguous();
    h.update(std::as_bytes(std::span(static_cast<const char*>(c.data_ptr()), c.nbytes())));
  }
  return h.hex();
}

std::vector<torch::Tensor> snapshot(const torch::nn::Module& m) {
  std::vector<torch::Tensor> out;
  for (const auto& p : m.parameters()) out.push_back(p.detach().clone());
  for (const auto& b : m.buffers()) out.push_back(b.detach().clone());
  return out;
}

void restore(torch::nn::Module& m, const std::vector<torch::Tensor>& state) {
  torch::NoGradGuard no_grad;
  std::size_t i = 0;
  for (auto& p : m.parameters()) p.copy_(state[i++]);
  for (auto& b : m.buffers()) b.copy_(state[i++]);
}

}  // namespace

std::pair<TrainedClassifier, TrainingLog> train_classifier(std::span<const GrayImage> train_images,
                                                           std::span<const Regime> train_labels,
                                                           std::span<const GrayImage> val_images,
                                                           std::span<const Regime> val_labels,
                                                           const ClassifierConfig& config,
                                                           const ClassifierHooks& hooks) {
  config.validate();
  if (train_images.size() != train_labels.size() || val_images.size() != val_labels.size()) {
    throw ShapeError("image and label counts differ");
  }
  if (val_images.empty()) throw DataError("validation set is empty");
  const bool has_chf = std::find(train_labels.begin(), train_labels.end(), Regime::CHF) != train_labels.end();
  const bool has_pre =
      std::find(train_labels.begin(), train_labels.end(), Regime::PRE_CHF) != train_labels.end();
  if (!has_chf || !has_pre) throw DataError("training set must contain both classes");

  torch::manual_seed(config.seed);
  auto net = nn::make_classifier(config.architecture_id, config.input_size);
  const auto x_train = checked_batch(train_images, config.input_size);
  const auto y_train = label_tensor(train_labels);
  const auto x_val = checked_batch(val_images, config.input_size);
  const auto y_val = label_tensor(val_labels);

  torch::optim::Adam optimizer(
      net->parameters(), torch::optim::AdamOptions(config.optimizer.learning_rate)
                             .betas({config.optimizer.betas[0], config.optimizer.betas[1]}));
  std::mt19937_64 rng(config.seed);
  std::vector<int64_t> order(static_cast<std::size_t>(x_train.size(0)));
  std::iota(order.begin(), order.end(), 0);

  TrainingLog log;
  std::vector<double> val_losses;
  std::vector<torch::Tensor> best_state;
  double best_loss = std::numeric_limits<double>::infinity();

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    net->train();
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const auto end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      const auto idx = torch::tensor(std::vector<int64_t>(order.begin() + static_cast<std::ptrdiff_t>(start),
                                                          order.begin() + static_cast<std::ptrdiff_t>(end)));
      const auto loss = F::cross_entropy(net->forward(x_train.index_select(0, idx)), y_train.index_select(0, idx));
      optimizer.zero_grad();
      loss.backward();
      optimizer.step();
      loss_sum += loss.item<double>() * static_cast<double>(end - start);
    }

    net->eval();
    EpochRecord record;
    record.epoch = epoch;
    record.train_loss = loss_sum / static_cast<double>(order.size());
    {
      torch::NoGradGuard no_grad;
      const auto logits = net->forward(x_val);
      record.val_loss = F::cross_entropy(logits, y_val).item<double>();
      const auto p = torch::softmax(logits.to(torch::kDouble), 1).contiguous();
      std::vector<ProbabilityRow> rows(val_labels.size());
      const double* d = p.data_ptr<double>();
      for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = {d[2 * i], d[2 * i + 1]};
      record.val_balanced_accuracy = classification_report(rows, val_labels).balanced_accuracy;
    }
    if (hooks.val_loss_override) record.val_loss = hooks.val_loss_override(epoch, record.val_loss);
    val_losses.push_back(record.val_loss);
    log.epochs.push_back(record);
    if (record.val_loss < best_loss) {
      best_loss = record.val_loss;
      best_state = snapshot(*net);
    }
    if (hooks.on_epoch_end) hooks.on_epoch_end(epoch, nn::weights_hash(*net));
  }

  log.best_epoch = select_best_epoch(val_losses);
  if (!best_state.empty()) restore(*net, best_state);

  auto impl = std::make_shared<TrainedClassifier::Impl>();
  impl->architecture_id = config.architecture_id;
  impl->input_size = config.input_size;
  impl->fingerprint = {config.hash(), data_hash(x_train, y_train, x_val, y_val)};
  impl->net = std::move(net);
  return {TrainedClassifier(std::move(impl)), std::move(log)};
}

std::pair<TrainedClassifier, TrainingLog> train_classifier(const DatasetManifest& train,
                                                           const DatasetManifest& val,
                                                           const ClassifierConfig& config,
                                                           const ClassifierHooks& hooks) {
  config.validate();
  const auto train_labels = labels_of(train);
  const auto val_labels = labels_of(val);
  const auto train_images = load_images(train, config.input_size);
  const auto val_images = load_images(val, config.input_size);
  return train_classifier(train_images, train_labels, val_images, val_labels, config, hooks);
}

std::vector<ProbabilityRow> predict(const TrainedClassifier& model, const DatasetManifest& images) {
  if (images.empty()) throw DataError("no images to classify");
  return model.predict(load_images(images, model.input_size()));
}

EvalReport evaluate(const TrainedClassifier& model, std::span<const GrayImage> images,
                    std::span<const Regime> labels) {
  const auto rows = model.predict(images);
  return classification_report(rows, labels);
}

EvalReport evaluate(const TrainedClassifier& model, const DatasetManifest& labeled) {
  const auto labels = labels_of(labeled);
  return evaluate(model, load_images(labeled, model.input_size()), labels);
}

void save_training_log(const TrainingLog& log, const std::filesystem::path& csv) {
  std::ostringstream out;
  out << "epoch,train_loss,val_loss,val_balanced_accuracy,best\n";
  out.precision(10);
  for (const auto& e : log.epochs) {
    out << e.epoch << ',' << e.train_loss << ',' << e.val_loss << ',' << e.val_balanced_accuracy
        << ',' << (e.epoch == log.best_epoch ? 1 : 0) << '\n';
  }
  write_text_file_atomic(csv, out.str());
}

std::string ClassifierFeatureExtractor::extractor_id() const {
  return "classifier_penultimate:" + model_.architecture_id() + ":" + model_.weights_hash();
}

Eigen::MatrixXd ClassifierFeatureExtractor::embed(std::span<const GrayImage> images) const {
  const int s = model_.input_size();
  const bool sized = std::all_of(images.begin(), images.end(),
                                 [s](const GrayImage& g) { return g.width == s && g.height == s; });
  if (sized) return model_.embed(images);
  std::vector<GrayImage> resized;
  resized.reserve(images.size());
  for (const auto& img : images) resized.push_back(resize_bilinear(img, s, s));
  return model_.embed(resized);
}

}  // namespace domainbridge
