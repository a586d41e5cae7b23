#include "domainbridge/nn/networks.hpp"

#include <mutex>

#include "domainbridge/error.hpp"

namespace domainbridge::nn {

namespace tnn = torch::nn;

// ---------------------------------------------------------------------------
// Classifiers
// ---------------------------------------------------------------------------

CustomCnn::CustomCnn(int input_size) {
  if (input_size < 8 || input_size % 8 != 0) {
    throw ConfigError("custom_cnn needs an input size divisible by 8, got " +
                      std::to_string(input_size));
  }
  const int reduced = input_size / 8;
  trunk_ = register_module(
      "trunk", tnn::Sequential(tnn::Conv2d(tnn::Conv2dOptions(1, 16, 3).padding(1)), tnn::ReLU(),
                               tnn::MaxPool2d(2),
                               tnn::Conv2d(tnn::Conv2dOptions(16, 32, 3).padding(1)), tnn::ReLU(),
                               tnn::MaxPool2d(2),
                               tnn::Conv2d(tnn::Conv2dOptions(32, 64, 3).padding(1)), tnn::ReLU(),
                               tnn::MaxPool2d(2), tnn::Flatten(),
                               tnn::Linear(64 * reduced * reduced, 128), tnn::ReLU()));
  dropout_ = register_module("dropout", tnn::Dropout(0.5));
  head_ = register_module("head", tnn::Linear(128, 2));
}

torch::Tensor CustomCnn::features(const torch::Tensor& x) { return trunk_->forward(x); }

torch::Tensor CustomCnn::forward(const torch::Tensor& x) {
  return head_->forward(dropout_->forward(features(x)));
}

CompactCnn::CompactCnn(int input_size) {
  if (input_size < 4 || input_size % 4 != 0) {
    throw ConfigError("compact_cnn needs an input size divisible by 4, got " +
                      std::to_string(input_size));
  }
  trunk_ = register_module(
      "trunk",
      tnn::Sequential(tnn::Conv2d(tnn::Conv2dOptions(1, 8, 3).padding(1)), tnn::ReLU(),
                      tnn::MaxPool2d(2), tnn::Conv2d(tnn::Conv2dOptions(8, 16, 3).padding(1)),
                      tnn::ReLU(), tnn::MaxPool2d(2),
                      tnn::AdaptiveAvgPool2d(tnn::AdaptiveAvgPool2dOptions({1, 1})), tnn::Flatten(),
                      tnn::Linear(16, 32), tnn::ReLU()));
  head_ = register_module("head", tnn::Linear(32, 2));
}

torch::Tensor CompactCnn::features(const torch::Tensor& x) { return trunk_->forward(x); }

torch::Tensor CompactCnn::forward(const torch::Tensor& x) { return head_->forward(features(x)); }

namespace {
std::mutex& registry_mutex() {
  static std::mutex m;
  return m;
}

std::map<std::string, ClassifierFactory>& registry() {
  static std::map<std::string, ClassifierFactory> r{
      {"custom_cnn", [](int s) { return std::make_shared<CustomCnn>(s); }},
      {"compact_cnn", [](int s) { return std::make_shared<CompactCnn>(s); }},
  };
  return r;
}
}  // namespace

std::shared_ptr<ClassifierNet> make_classifier(const std::string& architecture_id, int input_size) {
  ClassifierFactory factory;
  {
    std::lock_guard lock(registry_mutex());
    auto it = registry().find(architecture_id);
    if (it == registry().end()) throw ConfigError("unknown architecture '" + architecture_id + "'");
    factory = it->second;
  }
  return factory(input_size);
}

void register_classifier(const std::string& architecture_id, ClassifierFactory factory) {
  std::lock_guard lock(registry_mutex());
  registry()[architecture_id] = std::move(factory);
}

std::vector<std::string> classifier_architectures() {
  std::lock_guard lock(registry_mutex());
  std::vector<std::string> ids;
  for (const auto& [id, _] : registry()) ids.push_back(id);
  return ids;
}

// ---------------------------------------------------------------------------
// Translation networks
// ---------------------------------------------------------------------------

namespace {

tnn::InstanceNorm2d instance_norm(int channels) {
  return tnn::InstanceNorm2d(tnn::InstanceNorm2dOptions(channels).affine(true));
}

class ResidualBlockImpl : public tnn::Module {
 public:
  explicit ResidualBlockImpl(int channels) {
    body_ = register_module(
        "body",
        tnn::Sequential(tnn::Conv2d(tnn::Conv2dOptions(channels, channels, 3).padding(1).bias(false)),
                        instance_norm(channels), tnn::ReLU(),
                        tnn::Conv2d(tnn::Conv2dOptions(channels, channels, 3).padding(1).bias(false)),
                        instance_norm(channels)));
  }
  torch::Tensor forward(const torch::Tensor& x) { return x + body_->forward(x); }

 private:
  tnn::Sequential body_{nullptr};
};
TORCH_MODULE(ResidualBlock);

}  // namespace

TranslationGeneratorImpl::TranslationGeneratorImpl(const GeneratorShape& shape) : shape_(shape) {
  if (shape.base_channels < 1 || shape.residual_blocks < 0) {
    throw ConfigError("invalid generator shape");
  }
  tnn::Sequential body;
  int c = shape.base_channels;
  body->push_back(tnn::Conv2d(
      tnn::Conv2dOptions(shape.input_channels + shape.condition_dim, c, 7).padding(3).bias(false)));
  body->push_back(instance_norm(c));
  body->push_back(tnn::ReLU());
  for (int i = 0; i < 2; ++i) {
    body->push_back(tnn::Conv2d(tnn::Conv2dOptions(c, c * 2, 4).stride(2).padding(1).bias(false)));
    body->push_back(instance_norm(c * 2));
    body->push_back(tnn::ReLU());
    c *= 2;
  }
  for (int i = 0; i < shape.residual_blocks; ++i) body->push_back(ResidualBlock(c));
  for (int i = 0; i < 2; ++i) {
    body->push_back(tnn::ConvTranspose2d(
        tnn::ConvTranspose2dOptions(c, c / 2, 4).stride(2).padding(1).bias(false)));
    body->push_back(instance_norm(c / 2));
    body->push_back(tnn::ReLU());
    c /= 2;
  }
  body->push_back(
      tnn::Conv2d(tnn::Conv2dOptions(c, shape.input_channels, 7).padding(3).bias(false)));
  body->push_back(tnn::Tanh());
  body_ = register_module("body", body);
}

torch::Tensor TranslationGeneratorImpl::forward(const torch::Tensor& x, const torch::Tensor& condition) {
  if (shape_.condition_dim == 0) return body_->forward(x);
  TORCH_CHECK(condition.defined() && condition.size(1) == shape_.condition_dim,
              "conditional generator needs an N x ", shape_.condition_dim, " condition");
  auto tiled = condition.view({condition.size(0), condition.size(1), 1, 1})
                   .expand({condition.size(0), condition.size(1), x.size(2), x.size(3)});
  return body_->forward(torch::cat({x, tiled.to(x.dtype())}, 1));
}

PatchCriticImpl::PatchCriticImpl(const CriticShape& shape) {
  if (shape.layers < 1 || (shape.image_size >> shape.layers) < 1 ||
      (shape.image_size % (1 << shape.layers)) != 0) {
    throw ConfigError("critic with " + std::to_string(shape.layers) +
                      " stride-2 layers does not fit image size " +
                      std::to_string(shape.image_size));
  }
  tnn::Sequential trunk;
  int c = shape.base_channels;
  trunk->push_back(tnn::Conv2d(tnn::Conv2dOptions(shape.input_channels, c, 4).stride(2).padding(1)));
  trunk->push_back(tnn::LeakyReLU(tnn::LeakyReLUOptions().negative_slope(0.01)));
  for (int i = 1; i < shape.layers; ++i) {
    trunk->push_back(tnn::Conv2d(tnn::Conv2dOptions(c, c * 2, 4).stride(2).padding(1)));
    trunk->push_back(tnn::LeakyReLU(tnn::LeakyReLUOptions().negative_slope(0.01)));
    c *= 2;
  }
  trunk_ = register_module("trunk", trunk);
  source_head_ =
      register_module("source_head", tnn::Conv2d(tnn::Conv2dOptions(c, 1, 3).padding(1).bias(false)));
  if (shape.domains > 0) {
    const int k = shape.image_size >> shape.layers;
    domain_head_ = register_module("domain_head",
                                   tnn::Conv2d(tnn::Conv2dOptions(c, shape.domains, k).bias(false)));
  }
}

CriticScores PatchCriticImpl::forward(const torch::Tensor& x) {
  auto h = trunk_->forward(x);
  CriticScores out;
  out.source = source_head_->forward(h);
  if (domain_head_) out.domains = domain_head_->forward(h).flatten(1);
  return out;
}

}  // namespace domainbridge::nn
