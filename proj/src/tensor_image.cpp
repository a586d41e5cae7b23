#include "domainbridge/nn/tensor_image.hpp"

#include "domainbridge/error.hpp"
#include "domainbridge/hashing.hpp"

namespace domainbridge::nn {

torch::Tensor to_tensor(std::span<const GrayImage> images) {
  if (images.empty()) return torch::empty({0, 1, 0, 0});
  const int w = images.front().width;
  const int h = images.front().height;
  auto out = torch::empty({static_cast<long>(images.size()), 1, h, w});
  float* dst = out.data_ptr<float>();
  for (const auto& img : images) {
    if (img.width != w || img.height != h) {
      throw ShapeError("batch mixes " + std::to_string(w) + "x" + std::to_string(h) + " and " +
                       std::to_string(img.width) + "x" + std::to_string(img.height) + " images");
    }
    std::copy(img.pixels.begin(), img.pixels.end(), dst);
    dst += img.pixels.size();
  }
  return out;
}

std::vector<GrayImage> from_tensor(const torch::Tensor& batch) {
  TORCH_CHECK(batch.dim() == 4 && batch.size(1) == 1, "expected N x 1 x H x W");
  const auto t = batch.detach().to(torch::kFloat).clamp(0.0, 1.0).contiguous();
  const int h = static_cast<int>(t.size(2));
  const int w = static_cast<int>(t.size(3));
  std::vector<GrayImage> out;
  out.reserve(static_cast<std::size_t>(t.size(0)));
  const float* src = t.data_ptr<float>();
  for (long i = 0; i < t.size(0); ++i) {
    GrayImage img(w, h);
    std::copy(src, src + img.pixels.size(), img.pixels.begin());
    src += img.pixels.size();
    out.push_back(std::move(img));
  }
  return out;
}

std::string weights_hash(const torch::nn::Module& module) {
  Fnv1a hash;
  auto feed = [&](const std::string& name, const torch::Tensor& t) {
    hash.update(name);
    const auto c = t.detach().contiguous();
    hash.update(std::as_bytes(std::span(static_cast<const char*>(c.data_ptr()), c.nbytes())));
  };
  for (const auto& p : module.named_parameters(true)) feed(p.key(), p.value());
  for (const auto& b : module.named_buffers(true)) feed(b.key(), b.value());
  return hash.hex();
}

}  // namespace domainbridge::nn
