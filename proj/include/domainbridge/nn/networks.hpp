#pragma once

#include <torch/torch.h>

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace domainbridge::nn {

// ---------------------------------------------------------------------------
// Classifiers
// ---------------------------------------------------------------------------

/// A two-way image classifier that also exposes its penultimate activations.
class ClassifierNet : public torch::nn::Module {
 public:
  /// N x 1 x S x S in [0,1] -> N x 2 logits (class order CHF, PRE_CHF).
  virtual torch::Tensor forward(const torch::Tensor& x) = 0;
  /// Penultimate-layer embedding, N x embedding_dim().
  virtual torch::Tensor features(const torch::Tensor& x) = 0;
  virtual int64_t embedding_dim() const = 0;
};

/// Three conv blocks (16, 32, 64 channels; 3x3, stride 1, ReLU, 2x max-pool),
/// a 128-unit dense layer, dropout 0.5 and a two-way head.
class CustomCnn : public ClassifierNet {
 public:
  explicit CustomCnn(int input_size);
  torch::Tensor forward(const torch::Tensor& x) override;
  torch::Tensor features(const torch::Tensor& x) override;
  int64_t embedding_dim() const override { return 128; }

 private:
  torch::nn::Sequential trunk_{nullptr};
  torch::nn::Dropout dropout_{nullptr};
  torch::nn::Linear head_{nullptr};
};

/// Two conv blocks and global average pooling; a cheap second entry that
/// shows the pipeline does not depend on one architecture.
class CompactCnn : public ClassifierNet {
 public:
  explicit CompactCnn(int input_size);
  torch::Tensor forward(const torch::Tensor& x) override;
  torch::Tensor features(const torch::Tensor& x) override;
  int64_t embedding_dim() const override { return 32; }

 private:
  torch::nn::Sequential trunk_{nullptr};
  torch::nn::Linear head_{nullptr};
};

using ClassifierFactory = std::function<std::shared_ptr<ClassifierNet>(int input_size)>;

/// Registered ids: "custom_cnn", "compact_cnn".
std::shared_ptr<ClassifierNet> make_classifier(const std::string& architecture_id, int input_size);
void register_classifier(const std::string& architecture_id, ClassifierFactory factory);
std::vector<std::string> classifier_architectures();

// ---------------------------------------------------------------------------
// Translation networks
// ---------------------------------------------------------------------------

struct GeneratorShape {
  int input_channels = 1;
  int condition_dim = 0;  // 0 for an unconditional generator
  int base_channels = 64;
  int residual_blocks = 6;
};

/// 7x7 stem, two stride-2 downsampling convs, residual blocks, two
/// transposed-conv upsamplings and a 7x7 tanh output. A condition vector, when
/// present, is tiled over the image and concatenated to the input channels.
/// Operates in the [-1,1] working range.
class TranslationGeneratorImpl : public torch::nn::Module {
 public:
  explicit TranslationGeneratorImpl(const GeneratorShape& shape);
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& condition = {});
  const GeneratorShape& shape() const { return shape_; }

 private:
  GeneratorShape shape_;
  torch::nn::Sequential body_{nullptr};
};
TORCH_MODULE(TranslationGenerator);

struct CriticShape {
  int input_channels = 1;
  int image_size = 128;
  int base_channels = 64;
  int layers = 6;
  int domains = 0;  // 0 disables the domain-classification head
};

struct CriticScores {
  torch::Tensor source;   // N x 1 x h x w patch scores
  torch::Tensor domains;  // N x domains logits, undefined without the head
};

/// Stack of 4x4 stride-2 convs with LeakyReLU(0.01); a 3x3 real/fake head and
/// an optional domain-classification head spanning the final feature map.
class PatchCriticImpl : public torch::nn::Module {
 public:
  explicit PatchCriticImpl(const CriticShape& shape);
  CriticScores forward(const torch::Tensor& x);

 private:
  torch::nn::Sequential trunk_{nullptr};
  torch::nn::Conv2d source_head_{nullptr};
  torch::nn::Conv2d domain_head_{nullptr};
};
TORCH_MODULE(PatchCritic);

}  // namespace domainbridge::nn
