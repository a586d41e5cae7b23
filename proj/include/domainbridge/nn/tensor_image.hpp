#pragma once

#include <torch/torch.h>

#include <span>
#include <vector>

#include "domainbridge/image.hpp"

namespace domainbridge::nn {

/// Stacks equally sized images into an N x 1 x H x W float tensor.
torch::Tensor to_tensor(std::span<const GrayImage> images);

/// Inverse of to_tensor; values are clamped to [0,1].
std::vector<GrayImage> from_tensor(const torch::Tensor& batch);

/// [0,1] <-> [-1,1]
inline torch::Tensor to_working_range(const torch::Tensor& x01) { return x01 * 2.0 - 1.0; }
inline torch::Tensor from_working_range(const torch::Tensor& x) { return (x + 1.0) * 0.5; }

/// Fingerprint of every parameter and buffer, in registration order.
std::string weights_hash(const torch::nn::Module& module);

}  // namespace domainbridge::nn
