#pragma once

#include <torch/torch.h>

#include <functional>

#include "domainbridge/ui2i.hpp"

namespace domainbridge::nn {

// Generators and critics here see images in the [-1,1] working range.
using GeneratorFn = std::function<torch::Tensor(const torch::Tensor& images, DomainCode to)>;

struct CriticOutput {
  torch::Tensor source;   // real/fake scores, any shape with leading batch dim
  torch::Tensor domains;  // N x 2 logits; undefined when the critic has no domain head
};

/// `claimed` is the domain the images are supposed to belong to; backends
/// with one critic per domain dispatch on it.
using CriticFn = std::function<CriticOutput(const torch::Tensor& images, DomainCode claimed)>;

enum class AdversarialForm { Wasserstein, LeastSquares };

struct LossComponents {
  torch::Tensor adversarial;
  torch::Tensor domain_classification;
  torch::Tensor cycle;
  torch::Tensor identity;
  torch::Tensor total;
};

/// Generator-side objective for one source batch and one target batch, both
/// in [0,1]. cycle and identity are mean absolute errors in working-range
/// units, each averaged over the two domains; total is the weighted sum.
LossComponents compute_losses(const GeneratorFn& generator, const CriticFn& critic,
                              const torch::Tensor& batch_source, const torch::Tensor& batch_target,
                              const LossWeights& weights,
                              AdversarialForm form = AdversarialForm::Wasserstein);

struct CriticLosses {
  torch::Tensor adversarial;
  torch::Tensor gradient_penalty;
  torch::Tensor domain_classification;
  torch::Tensor total;
};

/// Critic-side objective. Fakes are produced without generator gradients.
/// The gradient penalty (WGAN-GP, unit target norm on random interpolates) is
/// only applied when gp_weight > 0.
CriticLosses compute_critic_losses(const GeneratorFn& generator, const CriticFn& critic,
                                   const torch::Tensor& batch_source,
                                   const torch::Tensor& batch_target, const LossWeights& weights,
                                   double gp_weight,
                                   AdversarialForm form = AdversarialForm::Wasserstein);

/// Rows of one-hot domain codes, N x 2.
torch::Tensor domain_condition(DomainCode d, int64_t n, torch::TensorOptions options = {});

}  // namespace domainbridge::nn
