#include "domainbridge/nn/losses.hpp"

#include "domainbridge/error.hpp"
#include "domainbridge/nn/tensor_image.hpp"

namespace domainbridge::nn {

namespace F = torch::nn::functional;

torch::Tensor domain_condition(DomainCode d, int64_t n, torch::TensorOptions options) {
  auto c = torch::zeros({n, 2}, options);
  c.select(1, static_cast<int64_t>(d)).fill_(1.0);
  return c;
}

namespace {

void require_batches(const torch::Tensor& a, const torch::Tensor& b) {
  if (!a.defined() || !b.defined() || a.size(0) == 0 || b.size(0) == 0) {
    throw DataError("translation losses need non-empty source and target batches");
  }
}

torch::Tensor domain_targets(DomainCode d, int64_t n) {
  return torch::full({n}, static_cast<int64_t>(d), torch::kLong);
}

torch::Tensor generator_adversarial(const torch::Tensor& fake_scores, AdversarialForm form) {
  if (form == AdversarialForm::Wasserstein) return -fake_scores.mean();
  return (fake_scores - 1.0).pow(2).mean();
}

torch::Tensor gradient_penalty(const CriticFn& critic, const torch::Tensor& real,
                               const torch::Tensor& fake, DomainCode d) {
  const int64_t n = std::min(real.size(0), fake.size(0));
  const auto alpha = torch::rand({n, 1, 1, 1}, real.options());
  auto mixed = (alpha * real.narrow(0, 0, n) + (1.0 - alpha) * fake.narrow(0, 0, n))
                   .detach()
                   .requires_grad_(true);
  const auto scores = critic(mixed, d).source;
  const auto grads = torch::autograd::grad({scores.sum()}, {mixed}, /*grad_outputs=*/{},
                                           /*retain_graph=*/true, /*create_graph=*/true)[0];
  return (grads.flatten(1).norm(2, 1) - 1.0).pow(2).mean();
}

}  // namespace

LossComponents compute_losses(const GeneratorFn& generator, const CriticFn& critic,
                              const torch::Tensor& batch_source, const torch::Tensor& batch_target,
                              const LossWeights& weights, AdversarialForm form) {
  require_batches(batch_source, batch_target);
  const auto xs = to_working_range(batch_source);
  const auto xt = to_working_range(batch_target);

  const auto fake_t = generator(xs, DomainCode::TARGET);
  const auto fake_s = generator(xt, DomainCode::SOURCE);
  const auto rec_s = generator(fake_t, DomainCode::SOURCE);
  const auto rec_t = generator(fake_s, DomainCode::TARGET);
  const auto same_s = generator(xs, DomainCode::SOURCE);
  const auto same_t = generator(xt, DomainCode::TARGET);

  const CriticOutput judged_t = critic(fake_t, DomainCode::TARGET);
  const CriticOutput judged_s = critic(fake_s, DomainCode::SOURCE);

  LossComponents out;
  out.adversarial = 0.5 * (generator_adversarial(judged_t.source, form) +
                           generator_adversarial(judged_s.source, form));
  if (judged_t.domains.defined() && judged_s.domains.defined()) {
    out.domain_classification =
        0.5 * (F::cross_entropy(judged_t.domains, domain_targets(DomainCode::TARGET, xs.size(0))) +
               F::cross_entropy(judged_s.domains, domain_targets(DomainCode::SOURCE, xt.size(0))));
  } else {
    out.domain_classification = torch::zeros({}, xs.options());
  }
  out.cycle = 0.5 * ((rec_s - xs).abs().mean() + (rec_t - xt).abs().mean());
  out.identity = 0.5 * ((same_s - xs).abs().mean() + (same_t - xt).abs().mean());
  out.total = weights.adversarial * out.adversarial + weights.domain * out.domain_classification +
              weights.cycle * out.cycle + weights.identity * out.identity;
  return out;
}

CriticLosses compute_critic_losses(const GeneratorFn& generator, const CriticFn& critic,
                                   const torch::Tensor& batch_source,
                                   const torch::Tensor& batch_target, const LossWeights& weights,
                                   double gp_weight, AdversarialForm form) {
  require_batches(batch_source, batch_target);
  const auto xs = to_working_range(batch_source);
  const auto xt = to_working_range(batch_target);
  torch::Tensor fake_t;
  torch::Tensor fake_s;
  {
    torch::NoGradGuard no_grad;
    fake_t = generator(xs, DomainCode::TARGET);
    fake_s = generator(xt, DomainCode::SOURCE);
  }

  const CriticOutput real_s = critic(xs, DomainCode::SOURCE);
  const CriticOutput real_t = critic(xt, DomainCode::TARGET);
  const CriticOutput judged_t = critic(fake_t, DomainCode::TARGET);
  const CriticOutput judged_s = critic(fake_s, DomainCode::SOURCE);

  CriticLosses out;
  if (form == AdversarialForm::Wasserstein) {
    out.adversarial = 0.5 * (judged_t.source.mean() - real_t.source.mean() +
                             judged_s.source.mean() - real_s.source.mean());
  } else {
    out.adversarial = 0.25 * ((real_s.source - 1.0).pow(2).mean() + judged_s.source.pow(2).mean() +
                              (real_t.source - 1.0).pow(2).mean() + judged_t.source.pow(2).mean());
  }
  if (real_s.domains.defined() && real_t.domains.defined()) {
    out.domain_classification =
        0.5 * (F::cross_entropy(real_s.domains, domain_targets(DomainCode::SOURCE, xs.size(0))) +
               F::cross_entropy(real_t.domains, domain_targets(DomainCode::TARGET, xt.size(0))));
  } else {
    out.domain_classification = torch::zeros({}, xs.options());
  }
  if (gp_weight > 0.0) {
    out.gradient_penalty = 0.5 * (gradient_penalty(critic, xs, fake_s, DomainCode::SOURCE) +
                                  gradient_penalty(critic, xt, fake_t, DomainCode::TARGET));
  } else {
    out.gradient_penalty = torch::zeros({}, xs.options());
  }
  out.total = weights.adversarial * out.adversarial + gp_weight * out.gradient_penalty +
              weights.domain * out.domain_classification;
  return out;
}

}  // namespace domainbridge::nn
