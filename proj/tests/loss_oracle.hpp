#pragma once

#include <torch/torch.h>

#include <array>
#include <cmath>
#include <vector>

#include "domainbridge/nn/losses.hpp"

// Toy generator and critic with a plain-arithmetic reference for the
// translation losses, shared by the unit tests and the acceptance run.
namespace lossoracle {

using namespace domainbridge;
using namespace domainbridge::nn;

constexpr int kBatch = 2;
constexpr int kPixels = 16;
using Batch = std::vector<std::array<double, kPixels>>;

inline Batch frozen_source() {
  Batch b(kBatch);
  for (int i = 0; i < kBatch; ++i) {
    for (int p = 0; p < kPixels; ++p) b[i][p] = ((i * 16 + p) * 7 % 17) / 16.0;
  }
  return b;
}

inline Batch frozen_target() {
  Batch b(kBatch);
  for (int i = 0; i < kBatch; ++i) {
    for (int p = 0; p < kPixels; ++p) b[i][p] = ((i * 16 + p) * 5 % 13) / 12.0;
  }
  return b;
}

inline torch::Tensor as_tensor(const Batch& b) {
  auto t = torch::empty({kBatch, 1, 4, 4}, torch::kDouble);
  auto acc = t.accessor<double, 4>();
  for (int i = 0; i < kBatch; ++i) {
    for (int p = 0; p < kPixels; ++p) acc[i][0][p / 4][p % 4] = b[i][p];
  }
  return t;
}

// Toy networks: G(x, to) = gain[to] * x + offset[to]; the critic scores the
// per-sample mean m as scale[d] * m with domain logits (k m, -k m).
struct Toy {
  std::array<double, 2> gain{0.8, 1.1};
  std::array<double, 2> offset{0.047, -0.093};  // keeps every |.| term away from its kink
  std::array<double, 2> scale{1.5, -0.7};
  double k = 2.0;
};

inline GeneratorFn toy_generator(const Toy& toy, torch::Tensor offset_param = {}) {
  return [toy, offset_param](const torch::Tensor& x, DomainCode to) {
    const int d = static_cast<int>(to);
    if (offset_param.defined()) return toy.gain[d] * x + offset_param[d];
    return toy.gain[d] * x + toy.offset[d];
  };
}

inline CriticFn toy_critic(const Toy& toy) {
  return [toy](const torch::Tensor& x, DomainCode d) {
    const auto m = x.flatten(1).mean(1, true);
    return CriticOutput{toy.scale[static_cast<int>(d)] * m, torch::cat({toy.k * m, -toy.k * m}, 1)};
  };
}

// Plain-arithmetic reference of the generator objective.
struct Expected {
  double adversarial, domain, cycle, identity, total;
};

inline Expected reference_losses(const Toy& toy, const LossWeights& w) {
  auto working = [](Batch b) {
    for (auto& s : b) {
      for (auto& v : s) v = 2.0 * v - 1.0;
    }
    return b;
  };
  auto gen = [&](Batch b, int to) {
    for (auto& s : b) {
      for (auto& v : s) v = toy.gain[to] * v + toy.offset[to];
    }
    return b;
  };
  auto mean_of = [](const std::array<double, kPixels>& s) {
    double m = 0;
    for (double v : s) m += v;
    return m / kPixels;
  };
  auto mae = [](const Batch& a, const Batch& b) {
    double e = 0;
    for (int i = 0; i < kBatch; ++i) {
      for (int p = 0; p < kPixels; ++p) e += std::abs(a[i][p] - b[i][p]);
    }
    return e / (kBatch * kPixels);
  };
  auto critic_mean = [&](const Batch& b, int d) {
    double s = 0;
    for (const auto& x : b) s += toy.scale[d] * mean_of(x);
    return s / kBatch;
  };
  auto cross_entropy = [&](const Batch& b, int cls) {
    double s = 0;
    for (const auto& x : b) {
      const double m = mean_of(x);
      const double l0 = toy.k * m, l1 = -toy.k * m;
      s += -(cls == 0 ? l0 : l1) + std::log(std::exp(l0) + std::exp(l1));
    }
    return s / kBatch;
  };
  const Batch xs = working(frozen_source()), xt = working(frozen_target());
  const Batch fake_t = gen(xs, 1), fake_s = gen(xt, 0);
  const Batch rec_s = gen(fake_t, 0), rec_t = gen(fake_s, 1);
  Expected e{};
  e.adversarial = 0.5 * (-critic_mean(fake_t, 1) - critic_mean(fake_s, 0));
  e.domain = 0.5 * (cross_entropy(fake_t, 1) + cross_entropy(fake_s, 0));
  e.cycle = 0.5 * (mae(rec_s, xs) + mae(rec_t, xt));
  e.identity = 0.5 * (mae(gen(xs, 0), xs) + mae(gen(xt, 1), xt));
  e.total = w.adversarial * e.adversarial + w.domain * e.domain + w.cycle * e.cycle + w.identity * e.identity;
  return e;
}


// Central finite difference of the composite loss against its autograd
// gradient, per domain offset. Returns the worst relative error.
inline double offset_gradient_error(const Toy& toy) {
  const auto xs = as_tensor(frozen_source()), xt = as_tensor(frozen_target());
  const auto critic = toy_critic(toy);
  auto offset = torch::tensor({toy.offset[0], toy.offset[1]}, torch::kDouble).requires_grad_(true);
  const auto l = compute_losses(toy_generator(toy, offset), critic, xs, xt, LossWeights{});
  const auto grad = torch::autograd::grad({l.total}, {offset})[0];
  const double h = 1e-6;
  double worst = 0.0;
  for (int d = 0; d < 2; ++d) {
    auto plus = offset.detach().clone(), minus = offset.detach().clone();
    plus[d] += h;
    minus[d] -= h;
    const double fp = compute_losses(toy_generator(toy, plus), critic, xs, xt, LossWeights{}).total.item<double>();
    const double fm = compute_losses(toy_generator(toy, minus), critic, xs, xt, LossWeights{}).total.item<double>();
    const double numeric = (fp - fm) / (2 * h);
    worst = std::max(worst, std::abs(numeric - grad[d].item<double>()) / std::max(1.0, std::abs(numeric)));
  }
  return worst;
}

}  // namespace lossoracle
